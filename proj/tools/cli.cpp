#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>

#include "vtg/core/error.hpp"
#include "vtg/core/parallel.hpp"
#include "vtg/cvtp/trainer.hpp"
#include "vtg/data/manifest.hpp"
#include "vtg/data/synth.hpp"
#include "vtg/io/config.hpp"
#include "vtg/metrics/metrics.hpp"
#include "vtg/tasks/pipelines.hpp"
#include "vtg/tasks/train.hpp"

namespace vtg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kCommands = {"synth-data", "train-cvtp", "train-diffusion", "sample",
                                            "stylize",    "shade",      "evaluate"};

// Keys whose default is null accept any value.
bool same_kind(const json& def, const json& v) {
  if (def.is_null()) return true;
  if (def.is_number_float()) return v.is_number();
  if (def.is_number_integer()) return v.is_number_integer() || (v.is_number_float() && v.get<double>() == std::floor(v.get<double>()));
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) return v.is_array();
  if (def.is_object()) return v.is_object();
  return false;
}

void validate_node(const json& def, const json& v, const std::string& path) {
  if (!same_kind(def, v))
    fail(ErrorCode::configuration, "configuration key '" + path + "' has the wrong type (" + v.type_name() +
                                       ", expected " + def.type_name() + ")");
  if (def.is_object()) {
    for (auto it = v.begin(); it != v.end(); ++it) {
      const std::string p = path.empty() ? it.key() : path + "." + it.key();
      if (!def.contains(it.key())) fail(ErrorCode::configuration, "unknown configuration key '" + p + "'");
      validate_node(def.at(it.key()), it.value(), p);
    }
  } else if (def.is_array() && !def.empty()) {
    for (const auto& e : v) validate_node(def.front(), e, path + "[]");
  }
}

struct FlagSpec {
  std::string flag;
  std::string key;
  std::string help;
  bool boolean = false;
};

std::map<std::string, std::vector<FlagSpec>> command_flags() {
  return {
      {"synth-data",
       {{"--pairs", "synth.pairs", "number of pairs"},
        {"--classes", "synth.classes", "roughness classes"},
        {"--image-size", "synth.image_size", "visual frame size"},
        {"--tactile-size", "synth.tactile_size", "tactile frame size"},
        {"--context", "data.context", "clip half-width C"},
        {"--occluder", "synth.occluder", "draw a hand occluder", true}}},
      {"train-cvtp",
       {{"--data", "data.root", "dataset root"},
        {"--epochs", "cvtp.epochs", "training epochs"},
        {"--batch", "cvtp.batch_size", "batch size"},
        {"--bank", "cvtp.bank_size", "memory bank size K"},
        {"--lr", "cvtp.lr", "learning rate"},
        {"--tau", "cvtp.tau", "temperature"}}},
      {"train-diffusion",
       {{"--data", "data.root", "dataset root"},
        {"--cvtp", "diffusion.cvtp_checkpoint", "CVTP checkpoint to initialise the condition encoder"},
        {"--direction", "task.direction", "touch_to_image or image_to_touch"},
        {"--hand-free", "task.hand_free", "mask hand pixels out of the loss", true},
        {"--concat", "task.concat", "none, reflectance or reference"},
        {"--condition", "diffusion.condition", "clip or label"},
        {"--epochs", "diffusion.epochs", "training epochs"},
        {"--steps", "diffusion.max_steps", "training steps (overrides epochs)"},
        {"--batch", "diffusion.batch_size", "batch size"},
        {"--lr", "diffusion.lr", "learning rate"}}},
      {"sample",
       {{"--checkpoint", "sample.checkpoint", "model bundle directory"},
        {"--data", "data.root", "dataset supplying the conditioning"},
        {"--count", "sample.count", "samples per item"},
        {"--items", "sample.items", "items to condition on (0 = all)"},
        {"--steps", "sample.steps", "sampling steps (0 = bundle default)"},
        {"--guidance", "sample.guidance", "guidance scale (< 0 = bundle default)"}}},
      {"stylize",
       {{"--checkpoint", "stylize.checkpoint", "model bundle directory"},
        {"--data", "data.root", "dataset root"},
        {"--image", "stylize.image", "input image file (default: the source item's frame)"},
        {"--source", "stylize.source", "source item index"},
        {"--target", "stylize.target", "target touch item index"},
        {"--level", "stylize.level", "noise level N (< 0 = task default)"},
        {"--count", "stylize.count", "samples"},
        {"--steps", "stylize.steps", "sampling steps over [0, T]"},
        {"--guidance", "stylize.guidance", "guidance scale"}}},
      {"shade",
       {{"--checkpoint", "shade.checkpoint", "model bundle directory"},
        {"--data", "data.root", "dataset supplying reflectance and touch"},
        {"--count", "shade.count", "samples per item"},
        {"--items", "shade.items", "items (0 = all)"},
        {"--control", "shade.control", "zero the tactile conditioning", true},
        {"--steps", "shade.steps", "sampling steps"},
        {"--guidance", "shade.guidance", "guidance scale"}}},
      {"evaluate",
       {{"--checkpoint", "evaluate.checkpoint", "model bundle directory"},
        {"--samples", "evaluate.samples", "directory written by sample"},
        {"--data", "data.root", "dataset with the reference frames"},
        {"--cvtp", "evaluate.cvtp", "CVTP checkpoint for the feature extractor and score"}}},
  };
}

// ---- shared helpers -------------------------------------------------------

struct Run {
  std::string command;
  json config;
  fs::path out;
  uint64_t seed = 0;
  std::ostream* log = nullptr;
};

std::string require_path(const json& config, const std::string& section, const std::string& key,
                         const std::string& flag) {
  const auto v = config.at(section).at(key).get<std::string>();
  if (v.empty()) fail(ErrorCode::missing_argument, "missing " + flag + " (" + section + "." + key + ")");
  return v;
}

fs::path output_dir(const Run& run) {
  const auto o = run.config.at("output").get<std::string>();
  if (o.empty()) fail(ErrorCode::missing_argument, "missing --out (output)");
  return o;
}

void write_sidecar(const Run& run, const fs::path& dir, const json& extra = json::object()) {
  json s{{"kind", "vtg-run"},
         {"version", 1},
         {"command", run.command},
         {"seed", run.seed},
         {"config", run.config},
         {"config_hash", run_config_hash(run.config)}};
  if (!extra.empty()) s["outputs"] = extra;
  io::write_json(dir / kSidecarName, s);
}

std::vector<data::PairItem> load_items(const json& config) {
  const auto root = require_path(config, "data", "root", "--data");
  if (!fs::exists(root)) fail(ErrorCode::load, "dataset root " + root + " does not exist");
  auto items = data::load_manifest(root, config.at("data").at("context").get<int>()).load_all();
  if (items.empty()) fail(ErrorCode::validation, "dataset " + root + " has no entries");
  return items;
}

cvtp::EncoderConfig encoder_config(const json& config) {
  auto e = cvtp::EncoderConfig::from_json(config.at("cvtp").at("encoder"));
  e.window = 2 * config.at("data").at("context").get<int>() + 1;
  e.tau = config.at("cvtp").at("tau").get<double>();
  return e;
}

fs::path cvtp_file(const std::string& p) {
  fs::path path(p);
  return fs::is_directory(path) ? path / "cvtp.ckpt" : path;
}

tasks::Bundle load_bundle(const std::string& dir) { return tasks::Bundle::load(dir); }

Tensor<float> repeat_rows(const Tensor<float>& row, int64_t copies) {
  Shape s = row.shape();
  s[0] = copies;
  Tensor<float> out(s);
  const int64_t m = row.numel();
  for (int64_t n = 0; n < copies; ++n) std::copy(row.data(), row.data() + m, out.data() + n * m);
  return out;
}

std::vector<uint64_t> seed_list(uint64_t base, int64_t count) {
  std::vector<uint64_t> s;
  for (int64_t k = 0; k < count; ++k) s.push_back(base + static_cast<uint64_t>(k));
  return s;
}

std::string sample_name(const std::string& id, uint64_t seed) { return id + "_s" + std::to_string(seed) + ".png"; }

size_t item_limit(int64_t requested, size_t available) {
  if (requested < 0) fail(ErrorCode::configuration, "item count must be >= 0");
  return requested == 0 ? available : std::min(available, static_cast<size_t>(requested));
}

// ---- commands -------------------------------------------------------------

void cmd_synth(const Run& run) {
  const auto& s = run.config.at("synth");
  const int pairs = s.at("pairs").get<int>(), classes = s.at("classes").get<int>();
  if (pairs < 1) fail(ErrorCode::configuration, "synth.pairs must be positive");
  if (classes < 1) fail(ErrorCode::configuration, "synth.classes must be positive");
  const auto out = output_dir(run);
  std::vector<data::PairItem> items;
  for (int i = 0; i < pairs; ++i) {
    data::SynthParams p;
    p.num_classes = classes;
    p.roughness_class = i % classes;
    p.seed = RandomStream(run.seed, Purpose::synth, static_cast<uint64_t>(i)).next_u64();
    p.context = run.config.at("data").at("context").get<int>();
    p.image_size = s.at("image_size").get<int>();
    p.tactile_size = s.at("tactile_size").get<int>();
    p.occluder = s.at("occluder").get<bool>();
    if (!s.at("albedo").is_null()) p.albedo = s.at("albedo").get<std::array<float, 3>>();
    auto sp = data::synth_pair(p);
    data::PairItem it;
    char id[32];
    std::snprintf(id, sizeof id, "pair%05d", i);
    it.id = id;
    it.visual = std::move(sp.visual);
    it.tactile = std::move(sp.tactile);
    it.mask = std::move(sp.mask);
    it.reflectance = std::move(sp.reflectance);
    it.shading = std::move(sp.shading);
    it.label = sp.label;
    items.push_back(std::move(it));
  }
  data::write_dataset(out, items);
  write_sidecar(run, out, {{"pairs", pairs}});
  *run.log << "wrote " << pairs << " pairs to " << out.string() << "\n";
}

void cmd_train_cvtp(const Run& run) {
  const auto items = load_items(run.config);
  const auto out = output_dir(run);
  const auto& c = run.config.at("cvtp");
  cvtp::CvtpTrainOptions o;
  o.epochs = c.at("epochs").get<int>();
  o.batch_size = c.at("batch_size").get<int>();
  o.lr = c.at("lr").get<double>();
  o.momentum = c.at("momentum").get<double>();
  o.weight_decay = c.at("weight_decay").get<double>();
  o.bank_size = c.at("bank_size").get<int64_t>();
  o.seed = run.seed;
  std::vector<double> losses;
  o.on_step = [&](int64_t, double l) { losses.push_back(l); };
  const auto model = cvtp::train_cvtp(items, encoder_config(run.config), o);
  const auto r = cvtp::retrieval_top1(model, items);
  fs::create_directories(out);
  model.save(out / "cvtp.ckpt", {{"config_hash", run_config_hash(run.config)}});
  io::write_json(out / "losses.json", losses);
  const json retrieval{{"visual_to_tactile", r.visual_to_tactile}, {"tactile_to_visual", r.tactile_to_visual}};
  write_sidecar(run, out, {{"checkpoint", "cvtp.ckpt"}, {"training_retrieval", retrieval}});
  *run.log << "cvtp: " << losses.size() << " steps, retrieval v->t " << r.visual_to_tactile << " t->v "
           << r.tactile_to_visual << "\n";
}

void cmd_train_diffusion(const Run& run) {
  const auto& d = run.config.at("diffusion");
  tasks::TaskModelConfig mc;
  mc.spec = tasks::TaskSpec::from_json(run.config.at("task"));
  mc.spec.validate();
  mc.codec = codec::CodecSpec::from_json(run.config.at("codec"));
  mc.unet = diffusion::UNetConfig::from_json(d.at("unet"));
  mc.timesteps = d.at("timesteps").get<int>();
  mc.condition = tasks::parse_condition_kind(d.at("condition").get<std::string>());
  mc.encoder = encoder_config(run.config);
  if (const auto ck = d.at("cvtp_checkpoint").get<std::string>(); !ck.empty()) {
    mc.cvtp_checkpoint = cvtp_file(ck);
    if (!fs::exists(*mc.cvtp_checkpoint)) fail(ErrorCode::load, "CVTP checkpoint " + ck + " not found");
  }
  mc.num_labels = d.at("num_labels").get<int>();
  mc.sample_steps = d.at("sample_steps").get<int>();
  const auto items = load_items(run.config);
  const auto out = output_dir(run);

  tasks::DiffusionTrainOptions o;
  o.epochs = d.at("epochs").get<int>();
  o.max_steps = d.at("max_steps").get<int64_t>();
  o.batch_size = d.at("batch_size").get<int>();
  o.lr = d.at("lr").get<double>();
  o.drop_prob = d.at("drop_prob").get<double>();
  o.cosine_decay = d.at("cosine_decay").get<bool>();
  o.seed = run.seed;
  tasks::TrainReport rep;
  const auto bundle = tasks::train_task(mc, items, o, &rep);
  bundle.save(out);
  io::write_json(out / "losses.json", rep.losses);
  write_sidecar(run, out, {{"bundle", "bundle.json"}, {"steps", rep.losses.size()}, {"hand_free_probes", rep.hand_free_probes}});
  *run.log << "diffusion: " << rep.losses.size() << " steps, loss " << rep.losses.front() << " -> "
           << rep.losses.back() << "\n";
}

void cmd_sample(const Run& run) {
  const auto& s = run.config.at("sample");
  const auto ck = require_path(run.config, "sample", "checkpoint", "--checkpoint");
  const auto count = s.at("count").get<int64_t>();
  if (count < 1) fail(ErrorCode::configuration, "sample.count must be positive");
  const auto bundle = load_bundle(ck);
  const auto items = load_items(run.config);
  const auto out = output_dir(run);
  const size_t n = item_limit(s.at("items").get<int64_t>(), items.size());
  tasks::SampleOptions so{s.at("steps").get<int>(), s.at("guidance").get<double>()};
  const auto seeds = seed_list(run.seed, count);

  std::vector<std::pair<std::string, data::ImageFrame>> frames;
  json listing = json::array();
  const auto codec = bundle.codec();
  for (size_t i = 0; i < n; ++i) {
    const auto& item = items[i];
    const auto ctx = repeat_rows(bundle.condition.embed(tasks::condition_input(bundle, item)), count);
    Tensor<float> concat;
    if (bundle.spec.concat != tasks::ConcatSource::none) {
      const auto map = tasks::concat_latent(codec, bundle.spec.concat, item);
      Shape sh = map.shape();
      sh.insert(sh.begin(), 1);
      concat = repeat_rows(map.reshaped(sh), count);
    }
    auto imgs = tasks::generate(bundle, ctx, seeds, concat, so);
    for (size_t k = 0; k < imgs.size(); ++k) {
      const auto name = sample_name(item.id, seeds[k]);
      listing.push_back({{"file", name}, {"item", item.id}, {"seed", seeds[k]}});
      frames.emplace_back(name, std::move(imgs[k]));
    }
  }
  fs::create_directories(out);
  for (const auto& [name, f] : frames) data::write_frame(out / name, f);
  io::write_json(out / "samples.json",
                 {{"checkpoint", ck}, {"direction", tasks::direction_name(bundle.spec.direction)}, {"samples", listing}});
  write_sidecar(run, out, {{"samples", frames.size()}});
  *run.log << "sample: wrote " << frames.size() << " images to " << out.string() << "\n";
}

void cmd_stylize(const Run& run) {
  const auto& s = run.config.at("stylize");
  const auto ck = require_path(run.config, "stylize", "checkpoint", "--checkpoint");
  const auto bundle = load_bundle(ck);
  const auto items = load_items(run.config);
  const auto out = output_dir(run);
  const auto src = s.at("source").get<int64_t>(), tgt = s.at("target").get<int64_t>();
  const auto n_items = static_cast<int64_t>(items.size());
  if (src < 0 || src >= n_items || tgt < 0 || tgt >= n_items)
    fail(ErrorCode::validation, "source/target index outside the dataset (" + std::to_string(n_items) + " items)");
  const auto count = s.at("count").get<int64_t>();
  if (count < 1) fail(ErrorCode::configuration, "stylize.count must be positive");
  const auto image_path = s.at("image").get<std::string>();
  const data::ImageFrame image =
      image_path.empty() ? items[static_cast<size_t>(src)].visual.center() : data::read_frame(image_path);
  const int level = s.at("level").get<int>() < 0 ? bundle.spec.level(bundle.schedule.T) : s.at("level").get<int>();
  tasks::SampleOptions so{s.at("steps").get<int>(), s.at("guidance").get<double>()};
  const auto seeds = seed_list(run.seed, count);
  const auto imgs = tasks::stylize(image, items[static_cast<size_t>(tgt)].tactile, level, bundle, seeds, so);
  fs::create_directories(out);
  json listing = json::array();
  for (size_t k = 0; k < imgs.size(); ++k) {
    const auto name = "stylized_s" + std::to_string(seeds[k]) + ".png";
    data::write_frame(out / name, imgs[k]);
    listing.push_back({{"file", name}, {"seed", seeds[k]}});
  }
  write_sidecar(run, out, {{"level", level}, {"samples", listing}});
  *run.log << "stylize: N=" << level << ", wrote " << imgs.size() << " images\n";
}

void cmd_shade(const Run& run) {
  const auto& s = run.config.at("shade");
  const auto ck = require_path(run.config, "shade", "checkpoint", "--checkpoint");
  const auto bundle = load_bundle(ck);
  const auto items = load_items(run.config);
  const auto out = output_dir(run);
  const auto count = s.at("count").get<int64_t>();
  if (count < 1) fail(ErrorCode::configuration, "shade.count must be positive");
  const bool control = s.at("control").get<bool>();
  const size_t n = item_limit(s.at("items").get<int64_t>(), items.size());
  tasks::SampleOptions so{s.at("steps").get<int>(), s.at("guidance").get<double>()};
  const auto seeds = seed_list(run.seed, count);

  std::vector<std::pair<std::string, data::ImageFrame>> frames;
  json listing = json::array();
  for (size_t i = 0; i < n; ++i) {
    const auto& item = items[i];
    if (!item.reflectance) fail(ErrorCode::validation, "item '" + item.id + "' has no reflectance map");
    const auto est = tasks::shading_estimate(*item.reflectance, control ? nullptr : &item.tactile, bundle, seeds, so);
    for (size_t k = 0; k < est.size(); ++k) {
      const auto name = sample_name(item.id, seeds[k]);
      listing.push_back({{"file", name},
                         {"item", item.id},
                         {"label", item.label},
                         {"seed", seeds[k]},
                         {"shading_variance", metrics::spatial_variance(est[k].shading)}});
      frames.emplace_back(name, est[k].image);
    }
  }
  fs::create_directories(out);
  for (const auto& [name, f] : frames) data::write_frame(out / name, f);
  io::write_json(out / "shading.json", {{"control", control}, {"samples", listing}});
  write_sidecar(run, out, {{"samples", frames.size()}});
  *run.log << "shade: wrote " << frames.size() << " estimates\n";
}

void cmd_evaluate(const Run& run) {
  const auto& e = run.config.at("evaluate");
  const auto ck = require_path(run.config, "evaluate", "checkpoint", "--checkpoint");
  const auto samples_dir = fs::path(require_path(run.config, "evaluate", "samples", "--samples"));
  const auto out = output_dir(run);
  const auto bundle = load_bundle(ck);

  // The CVTP checkpoint defaults to the one the bundle was trained from.
  json bundle_run;
  if (fs::exists(fs::path(ck) / kSidecarName)) bundle_run = io::read_json(fs::path(ck) / kSidecarName);
  std::string cv = e.at("cvtp").get<std::string>();
  if (cv.empty() && bundle_run.contains("config"))
    cv = bundle_run["config"]["diffusion"].value("cvtp_checkpoint", std::string());
  if (cv.empty()) fail(ErrorCode::missing_argument, "missing --cvtp (evaluate.cvtp): needed for FID features and the CVTP score");
  const auto model = cvtp::CvtpModel::load(cvtp_file(cv));

  const auto listing = io::read_json(samples_dir / "samples.json");
  const auto items = load_items(run.config);
  std::map<std::string, const data::PairItem*> by_id;
  for (const auto& it : items) by_id[it.id] = &it;

  const bool t2i = bundle.spec.direction == tasks::Direction::touch_to_image;
  std::vector<data::ImageFrame> generated, reference, image_side;
  std::vector<data::TactileClip> touch_side;
  std::vector<int> labels;
  for (const auto& s : listing.at("samples")) {
    const auto id = s.at("item").get<std::string>();
    const auto found = by_id.find(id);
    if (found == by_id.end()) fail(ErrorCode::validation, "sample item '" + id + "' is not in the dataset");
    const auto& item = *found->second;
    auto g = data::read_frame(samples_dir / s.at("file").get<std::string>());
    const auto& ref = t2i ? item.visual.center() : item.tactile.center();
    if (g.pixels.shape() != ref.pixels.shape())
      fail(ErrorCode::validation, "sample " + s.at("file").get<std::string>() + " does not match the reference size");
    reference.push_back(ref);
    labels.push_back(item.label);
    if (t2i) {
      image_side.push_back(g);
      touch_side.push_back(item.tactile);
    } else {
      image_side.push_back(item.visual.center());
      touch_side.push_back(data::TactileClip::replicate(g, 1));
    }
    generated.push_back(std::move(g));
  }
  if (generated.size() < 2) fail(ErrorCode::validation, "evaluation needs at least two samples");

  double ssim = 0, psnr = 0;
  for (size_t i = 0; i < generated.size(); ++i) {
    ssim += metrics::ssim(generated[i], reference[i]);
    psnr += metrics::psnr(generated[i], reference[i]);
  }
  const auto n = static_cast<double>(generated.size());

  // Real-set statistics use every dataset frame of the generated modality.
  std::vector<data::ImageFrame> real;
  std::vector<int> real_labels;
  for (const auto& it : items) {
    real.push_back(t2i ? it.visual.center() : it.tactile.center());
    real_labels.push_back(it.label);
  }
  const auto fid = metrics::frechet_distance(metrics::cvtp_features(model.visual, real),
                                             metrics::cvtp_features(model.visual, generated));
  const auto oracle = metrics::OracleClassifier::fit(real, real_labels);
  const auto material = metrics::material_consistency(generated, reference, oracle.as_classifier());

  metrics::MetricReport report;
  report.values = {{"ssim", ssim / n},
                   {"psnr", psnr / n},
                   {"fid", fid},
                   {"cvtp", metrics::cvtp_score(image_side, touch_side, model)},
                   {"material", material}};
  report.counts = {{"pairs", generated.size()}, {"real", real.size()}};
  report.extractor = metrics::cvtp_features(model.visual, {real.front()}).extractor;
  report.classifier = metrics::OracleClassifier::kId;
  report.config_hash = bundle_run.value("config_hash", io::sha256_hex(io::read_json(fs::path(ck) / "bundle.json").dump()));
  io::write_json(out / "report.json", report.to_json());
  write_sidecar(run, out, {{"report", "report.json"}});
  *run.log << "evaluate: " << report.values.dump() << "\n";
}

// ---- configuration resolution ----------------------------------------------

json resolve(const std::string& command, const std::string& config_file, const std::vector<std::pair<std::string, std::string>>& sets) {
  json config = default_config();
  if (!config_file.empty()) {
    json file = io::read_config(config_file);
    // A sidecar re-runs its producing command.
    if (file.is_object() && file.value("kind", std::string()) == "vtg-run") {
      if (file.value("command", command) != command)
        fail(ErrorCode::configuration, "sidecar " + config_file + " belongs to '" + file.value("command", std::string()) + "'");
      file = file.at("config");
    }
    if (!file.is_object()) fail(ErrorCode::configuration, config_file + ": expected an object at the top level");
    validate_node(default_config(), file, "");
    io::merge_config(config, file);
  }
  for (const auto& [key, text] : sets) io::set_config_value(config, key, text);
  validate_config(config);
  return config;
}

}  // namespace

json default_config() {
  cvtp::EncoderConfig enc;
  json encoder = enc.to_json();
  encoder.erase("window");
  encoder.erase("tau");
  diffusion::UNetConfig unet;
  return {
      {"seed", 0},
      {"threads", 0},
      {"output", ""},
      {"data", {{"root", ""}, {"context", 2}}},
      {"synth",
       {{"pairs", 64}, {"classes", 3}, {"image_size", 64}, {"tactile_size", 64}, {"occluder", false}, {"albedo", nullptr}}},
      {"codec", {{"kind", "identity"}, {"factor", 1}, {"weights", ""}}},
      {"cvtp",
       {{"encoder", encoder},
        {"tau", enc.tau},
        {"bank_size", 16385},
        {"lr", 0.1},
        {"batch_size", 48},
        {"epochs", 240},
        {"momentum", 0.9},
        {"weight_decay", 1e-4}}},
      {"task", tasks::TaskSpec{}.to_json()},
      {"diffusion",
       {{"timesteps", 1000},
        {"unet", unet.to_json()},
        {"condition", "clip"},
        {"num_labels", 0},
        {"cvtp_checkpoint", ""},
        {"lr", 2e-6},
        {"batch_size", 48},
        {"epochs", 30},
        {"max_steps", 0},
        {"drop_prob", 0.1},
        {"cosine_decay", false},
        {"sample_steps", 200}}},
      {"sample", {{"checkpoint", ""}, {"count", 1}, {"items", 0}, {"steps", 0}, {"guidance", -1.0}}},
      {"stylize",
       {{"checkpoint", ""},
        {"image", ""},
        {"source", 0},
        {"target", 1},
        {"level", -1},
        {"count", 1},
        {"steps", 0},
        {"guidance", -1.0}}},
      {"shade", {{"checkpoint", ""}, {"count", 1}, {"items", 0}, {"control", false}, {"steps", 0}, {"guidance", -1.0}}},
      {"evaluate", {{"checkpoint", ""}, {"samples", ""}, {"cvtp", ""}}},
  };
}

void validate_config(const json& config) { validate_node(default_config(), config, ""); }

std::string run_config_hash(const json& config) {
  json c = config;
  c.erase("threads");
  c.erase("output");
  return io::config_hash(c);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    if (args.empty() || args.front() == "--help" || args.front() == "-h") {
      out << "usage: vtg <command> [options]\ncommands:";
      for (const auto& c : kCommands) out << " " << c;
      out << "\nrun 'vtg <command> --help' for the options of a command\n";
      if (args.empty()) fail(ErrorCode::missing_argument, "no command given");
      return 0;
    }
    const std::string command = args.front();
    if (std::find(kCommands.begin(), kCommands.end(), command) == kCommands.end())
      fail(ErrorCode::unknown_command, "unknown command '" + command + "'");

    CLI::App app{"vtg " + command, "vtg " + command};
    std::string config_file;
    std::optional<std::string> seed, threads, output;
    std::vector<std::string> sets;
    app.add_option("--config", config_file, "configuration file (JSON with comments) or a run.json sidecar");
    app.add_option("--seed", seed, "64-bit seed");
    app.add_option("--threads", threads, "worker threads (1 = fully serial)");
    app.add_option("--out", output, "output directory");
    app.add_option("--set", sets, "override any key: --set diffusion.lr=1e-3")->take_all();

    auto specs = command_flags().at(command);
    std::vector<std::optional<std::string>> values(specs.size());
    std::vector<bool> flags(specs.size(), false);
    std::vector<CLI::Option*> options;
    for (size_t i = 0; i < specs.size(); ++i) {
      if (specs[i].boolean) {
        options.push_back(app.add_flag(specs[i].flag, specs[i].help));
      } else {
        options.push_back(app.add_option(specs[i].flag, values[i], specs[i].help));
      }
    }

    std::vector<std::string> rest(args.rbegin(), args.rend() - 1);
    try {
      app.parse(rest);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return 0;
    } catch (const CLI::ParseError& e) {
      fail(ErrorCode::configuration, e.what());
    }

    // Flags win over the configuration file; --set wins over both.
    std::vector<std::pair<std::string, std::string>> overrides;
    if (seed) overrides.emplace_back("seed", *seed);
    if (threads) overrides.emplace_back("threads", *threads);
    if (output) overrides.emplace_back("output", json(*output).dump());
    for (size_t i = 0; i < specs.size(); ++i) {
      if (specs[i].boolean) {
        if (options[i]->count() > 0) overrides.emplace_back(specs[i].key, "true");
      } else if (values[i]) {
        const auto& def = default_config();
        // Strings stay strings even when they look like JSON (e.g. a path "123").
        const json* node = &def;
        size_t start = 0;
        const auto& key = specs[i].key;
        for (size_t dot; (dot = key.find('.', start)) != std::string::npos; start = dot + 1)
          node = &node->at(key.substr(start, dot - start));
        const bool is_string = node->at(key.substr(start)).is_string();
        overrides.emplace_back(key, is_string ? json(*values[i]).dump() : *values[i]);
      }
    }
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) fail(ErrorCode::configuration, "--set expects key=value, got '" + s + "'");
      overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }

    Run r;
    r.command = command;
    r.config = resolve(command, config_file, overrides);
    r.seed = r.config.at("seed").get<uint64_t>();
    r.log = &out;
    const int t = r.config.at("threads").get<int>();
    if (t < 0) fail(ErrorCode::configuration, "threads must be >= 0");
    if (t > 0) set_num_threads(t);

    if (command == "synth-data") cmd_synth(r);
    else if (command == "train-cvtp") cmd_train_cvtp(r);
    else if (command == "train-diffusion") cmd_train_diffusion(r);
    else if (command == "sample") cmd_sample(r);
    else if (command == "stylize") cmd_stylize(r);
    else if (command == "shade") cmd_shade(r);
    else cmd_evaluate(r);
    return 0;
  } catch (const Error& e) {
    err << "error: " << error_code_name(e.code()) << ": " << e.what() << "\n";
    return error_exit_code(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << error_code_name(ErrorCode::io) << ": " << e.what() << "\n";
    return error_exit_code(ErrorCode::io);
  } catch (const json::exception& e) {
    err << "error: " << error_code_name(ErrorCode::configuration) << ": " << e.what() << "\n";
    return error_exit_code(ErrorCode::configuration);
  }
}

}  // namespace vtg::cli
