#include "vtg/data/manifest.hpp"

#include <json.hpp>

#include <fstream>

#include "vtg/data/png_io.hpp"

namespace vtg::data {
namespace fs = std::filesystem;
using nlohmann::json;

ImageFrame read_frame(const fs::path& path) {
  const auto r = read_png(path, 3);
  return frame_from_rgb8(r.data, r.height, r.width);
}

void write_frame(const fs::path& path, const ImageFrame& frame) {
  write_png(path, {frame.height(), frame.width(), 3, frame_to_rgb8(frame)});
}

SegMask read_mask(const fs::path& path) {
  const auto r = read_png(path, 1);
  SegMask m{Tensor<float>({r.height, r.width})};
  for (size_t i = 0; i < r.data.size(); ++i) m.mask[static_cast<int64_t>(i)] = r.data[i] >= 128 ? 1.0f : 0.0f;
  return m;
}

void write_mask(const fs::path& path, const SegMask& mask) {
  Raster8 r{mask.height(), mask.width(), 1, {}};
  for (float v : mask.mask.span()) r.data.push_back(v >= 0.5f ? 255 : 0);
  write_png(path, r);
}

ReflectanceMap read_reflectance(const fs::path& path) {
  const auto r = read_png(path, 3);
  ReflectanceMap m{Tensor<float>({3, r.height, r.width})};
  const int64_t hw = r.height * r.width;
  for (int64_t i = 0; i < hw; ++i)
    for (int c = 0; c < 3; ++c) m.pixels[c * hw + i] = r.data[static_cast<size_t>(i * 3 + c)] / 255.0f;
  return m;
}

void write_reflectance(const fs::path& path, const ReflectanceMap& map) {
  Raster8 r{map.height(), map.width(), 3, {}};
  const int64_t hw = map.height() * map.width();
  r.data.resize(static_cast<size_t>(hw * 3));
  for (int64_t i = 0; i < hw; ++i)
    for (int c = 0; c < 3; ++c) r.data[static_cast<size_t>(i * 3 + c)] = quantize_unit(map.pixels[c * hw + i]);
  write_png(path, r);
}

Tensor<float> read_gray_unit(const fs::path& path) {
  const auto r = read_png(path, 1);
  Tensor<float> t({r.height, r.width});
  for (size_t i = 0; i < r.data.size(); ++i) t[static_cast<int64_t>(i)] = r.data[i] / 255.0f;
  return t;
}

void write_gray_unit(const fs::path& path, const Tensor<float>& gray) {
  Raster8 r{gray.dim(0), gray.dim(1), 1, {}};
  for (float v : gray.span()) r.data.push_back(quantize_unit(v));
  write_png(path, r);
}

namespace {

ManifestEntry parse_entry(const json& j) {
  ManifestEntry e;
  e.id = j.at("id").get<std::string>();
  e.visual = j.at("visual").get<std::vector<std::string>>();
  e.tactile = j.at("tactile").get<std::vector<std::string>>();
  e.contact = j.value("contact", -1);
  e.label = j.value("label", 0);
  auto opt = [&](const char* key, std::optional<std::string>& dst) {
    if (j.contains(key) && !j.at(key).is_null()) dst = j.at(key).get<std::string>();
  };
  opt("mask", e.mask);
  opt("reflectance", e.reflectance);
  opt("reference", e.reference);
  opt("shading", e.shading);
  return e;
}

}  // namespace

ManifestStream::ManifestStream(const fs::path& path, int context) : context_(context) {
  require(context >= 0, "window context C must be >= 0");
  fs::path file = fs::is_directory(path) ? path / "manifest.json" : path;
  if (!fs::exists(file)) fail(ErrorCode::load, "manifest not found: " + file.string());
  root_ = file.parent_path();
  json doc;
  try {
    std::ifstream in(file);
    doc = json::parse(in, nullptr, true, true);
    for (const auto& j : doc.at("entries")) entries_.push_back(parse_entry(j));
  } catch (const json::exception& e) {
    fail(ErrorCode::load, "cannot parse manifest " + file.string() + ": " + e.what());
  }

  const int need = 2 * context + 1;
  for (auto& e : entries_) {
    if (e.visual.size() != e.tactile.size())
      fail(ErrorCode::validation, "entry " + e.id + ": visual and tactile frame counts differ");
    if (static_cast<int>(e.visual.size()) < need)
      fail(ErrorCode::validation, "entry " + e.id + ": " + std::to_string(e.visual.size()) +
                                      " frames, window needs " + std::to_string(need));
    if (e.contact < 0) e.contact = static_cast<int>(e.visual.size()) / 2;
    if (e.contact - context < 0 || e.contact + context >= static_cast<int>(e.visual.size()))
      fail(ErrorCode::validation, "entry " + e.id + ": contact frame " + std::to_string(e.contact) +
                                      " leaves no room for the window");
    std::vector<std::string> files;
    for (int k = e.contact - context; k <= e.contact + context; ++k) {
      files.push_back(e.visual[static_cast<size_t>(k)]);
      files.push_back(e.tactile[static_cast<size_t>(k)]);
    }
    for (const auto* o : {&e.mask, &e.reflectance, &e.reference, &e.shading})
      if (*o) files.push_back(**o);
    for (const auto& f : files)
      if (!fs::exists(root_ / f)) fail(ErrorCode::load, "entry " + e.id + ": missing file " + f);
  }
}

PairItem ManifestStream::load(size_t i) const {
  const auto& e = entries_.at(i);
  PairItem item;
  item.id = e.id;
  item.label = e.label;
  try {
    for (int k = e.contact - context_; k <= e.contact + context_; ++k) {
      item.visual.frames.push_back(read_frame(root_ / e.visual[static_cast<size_t>(k)]));
      item.tactile.frames.push_back(read_frame(root_ / e.tactile[static_cast<size_t>(k)]));
    }
    if (e.mask) item.mask = read_mask(root_ / *e.mask);
    if (e.reflectance) item.reflectance = read_reflectance(root_ / *e.reflectance);
    if (e.reference) item.reference = read_frame(root_ / *e.reference);
    if (e.shading) item.shading = read_gray_unit(root_ / *e.shading);
  } catch (const Error& err) {
    fail(err.code(), "entry " + e.id + ": " + err.what());
  }
  item.visual.validate();
  item.tactile.validate();
  const auto h = item.visual.center().height(), w = item.visual.center().width();
  if (item.mask) require(item.mask->height() == h && item.mask->width() == w, "entry " + e.id + ": mask size mismatch");
  if (item.reflectance)
    require(item.reflectance->height() == h && item.reflectance->width() == w,
            "entry " + e.id + ": reflectance size mismatch");
  return item;
}

std::optional<PairItem> ManifestStream::next() {
  if (cursor_ >= entries_.size()) return std::nullopt;
  return load(cursor_++);
}

std::vector<PairItem> ManifestStream::load_all() const {
  std::vector<PairItem> out;
  out.reserve(entries_.size());
  for (size_t i = 0; i < entries_.size(); ++i) out.push_back(load(i));
  return out;
}

void write_dataset(const fs::path& root, const std::vector<PairItem>& items) {
  fs::create_directories(root);
  json entries = json::array();
  for (const auto& item : items) {
    require(item.visual.window() == item.tactile.window(), "item " + item.id + ": clip lengths differ");
    const fs::path dir = item.id;
    fs::create_directories(root / dir);
    json e{{"id", item.id}, {"label", item.label}, {"contact", item.visual.window() / 2}};
    json vis = json::array(), tac = json::array();
    for (int k = 0; k < item.visual.window(); ++k) {
      const auto v = (dir / ("visual_" + std::to_string(k) + ".png")).string();
      const auto t = (dir / ("tactile_" + std::to_string(k) + ".png")).string();
      write_frame(root / v, item.visual.frames[static_cast<size_t>(k)]);
      write_frame(root / t, item.tactile.frames[static_cast<size_t>(k)]);
      vis.push_back(v);
      tac.push_back(t);
    }
    e["visual"] = vis;
    e["tactile"] = tac;
    if (item.mask) {
      e["mask"] = (dir / "mask.png").string();
      write_mask(root / dir / "mask.png", *item.mask);
    }
    if (item.reflectance) {
      e["reflectance"] = (dir / "reflectance.png").string();
      write_reflectance(root / dir / "reflectance.png", *item.reflectance);
    }
    if (item.reference) {
      e["reference"] = (dir / "reference.png").string();
      write_frame(root / dir / "reference.png", *item.reference);
    }
    if (item.shading) {
      e["shading"] = (dir / "shading.png").string();
      write_gray_unit(root / dir / "shading.png", *item.shading);
    }
    entries.push_back(e);
  }
  std::ofstream out(root / "manifest.json");
  if (!out) fail(ErrorCode::io, "cannot write " + (root / "manifest.json").string());
  out << json{{"version", 1}, {"entries", entries}}.dump(2) << "\n";
}

}  // namespace vtg::data
