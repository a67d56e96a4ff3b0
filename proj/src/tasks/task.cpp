#include "vtg/tasks/task.hpp"

#include <cstring>

#include "vtg/io/archive.hpp"
#include "vtg/io/params.hpp"
#include "vtg/nn/ops.hpp"

namespace vtg::tasks {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename E, size_t N>
E parse_enum(const std::string& s, const std::pair<E, const char*> (&table)[N], const char* what) {
  for (const auto& [value, name] : table)
    if (s == name) return value;
  fail(ErrorCode::configuration, std::string("unknown ") + what + " '" + s + "'");
}

template <typename E, size_t N>
std::string enum_name(E e, const std::pair<E, const char*> (&table)[N]) {
  for (const auto& [value, name] : table)
    if (value == e) return name;
  return "?";
}

constexpr std::pair<Direction, const char*> kDirections[] = {{Direction::touch_to_image, "touch_to_image"},
                                                             {Direction::image_to_touch, "image_to_touch"}};
constexpr std::pair<ConcatSource, const char*> kConcat[] = {
    {ConcatSource::none, "none"}, {ConcatSource::reflectance, "reflectance"}, {ConcatSource::reference, "reference"}};
constexpr std::pair<ConditionKind, const char*> kConditions[] = {{ConditionKind::clip, "clip"},
                                                                 {ConditionKind::label, "label"}};

bool bitwise_equal(const Tensor<float>& a, const Tensor<float>& b) {
  return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<size_t>(a.numel())) == 0;
}

}  // namespace

std::string direction_name(Direction d) { return enum_name(d, kDirections); }
Direction parse_direction(const std::string& s) { return parse_enum(s, kDirections, "direction"); }
std::string concat_name(ConcatSource c) { return enum_name(c, kConcat); }
ConcatSource parse_concat(const std::string& s) { return parse_enum(s, kConcat, "concat source"); }
std::string condition_kind_name(ConditionKind k) { return enum_name(k, kConditions); }
ConditionKind parse_condition_kind(const std::string& s) { return parse_enum(s, kConditions, "condition kind"); }

void TaskSpec::validate() const {
  if (concat == ConcatSource::reflectance && direction != Direction::touch_to_image)
    fail(ErrorCode::configuration, "reflectance concatenation is only defined for touch_to_image");
  if (hand_free && direction != Direction::touch_to_image)
    fail(ErrorCode::configuration, "hand-free training masks generated images and needs touch_to_image");
  if (!(guidance >= 0.0)) fail(ErrorCode::configuration, "guidance scale must be >= 0");
  if (sdedit_level < -1) fail(ErrorCode::configuration, "stylization level must be >= 0 (or -1 for T/2)");
}

json TaskSpec::to_json() const {
  return {{"direction", direction_name(direction)},
          {"hand_free", hand_free},
          {"concat", concat_name(concat)},
          {"sdedit_level", sdedit_level},
          {"guidance", guidance}};
}

TaskSpec TaskSpec::from_json(const json& j) {
  TaskSpec s;
  s.direction = parse_direction(j.value("direction", direction_name(s.direction)));
  s.hand_free = j.value("hand_free", s.hand_free);
  s.concat = parse_concat(j.value("concat", concat_name(s.concat)));
  s.sdedit_level = j.value("sdedit_level", s.sdedit_level);
  s.guidance = j.value("guidance", s.guidance);
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------

ConditionEncoder ConditionEncoder::clip(const cvtp::EncoderConfig& config, uint64_t seed) {
  ConditionEncoder c;
  c.kind_ = ConditionKind::clip;
  c.encoder_config_ = config;
  c.encoder_ = std::make_shared<cvtp::ClipEncoder<float>>(config, seed);
  c.collect();
  return c;
}

ConditionEncoder ConditionEncoder::label(int num_labels, int dim, uint64_t seed) {
  require(num_labels >= 1 && dim >= 1, "label conditioning needs at least one label and a positive width");
  ConditionEncoder c;
  c.kind_ = ConditionKind::label;
  c.num_labels_ = num_labels;
  c.encoder_config_.embed_dim = dim;
  Tensor<float> table({dim, num_labels});
  RandomStream rng(seed, Purpose::init, 0, 1);
  rng.fill_normal(table.span());
  c.table_ = nn::parameter(std::move(table));
  c.collect();
  return c;
}

void ConditionEncoder::collect() {
  params_.clear();
  if (kind_ == ConditionKind::clip) {
    params_ = encoder_->params();
  } else {
    params_.push_back({"label.table", table_});
  }
}

int ConditionEncoder::dim() const { return encoder_config_.embed_dim; }

nn::Var<float> ConditionEncoder::forward(const Tensor<float>& input) const {
  if (kind_ == ConditionKind::clip) return encoder_->forward(nn::constant(input));
  require(input.rank() == 2 && input.dim(1) == num_labels_, "label conditioning expects one-hot rows [N, L]");
  return nn::l2_normalize_rows(nn::linear<float>(nn::constant(input), table_, nullptr));
}

Tensor<float> ConditionEncoder::embed(const Tensor<float>& input) const {
  nn::NoGradGuard guard;
  return forward(input)->value;
}

void ConditionEncoder::load_weights(const cvtp::ClipEncoder<float>& source) {
  if (kind_ != ConditionKind::clip) fail(ErrorCode::configuration, "label conditioning has no clip encoder to load");
  if (source.config().to_json() != encoder_config_.to_json())
    fail(ErrorCode::configuration, "CVTP encoder configuration differs from the condition encoder");
  const auto& src = source.params();
  for (size_t i = 0; i < params_.size(); ++i) {
    require(src.at(i).name == params_[i].name && src[i].var->value.shape() == params_[i].var->value.shape(),
            "CVTP encoder parameters do not line up with the condition encoder");
    params_[i].var->value = src[i].var->value;
  }
}

json ConditionEncoder::to_json() const {
  json j{{"kind", condition_kind_name(kind_)}};
  if (kind_ == ConditionKind::clip) {
    j["encoder"] = encoder_config_.to_json();
  } else {
    j["num_labels"] = num_labels_;
    j["dim"] = dim();
  }
  return j;
}

ConditionEncoder ConditionEncoder::from_json(const json& j) {
  const auto kind = parse_condition_kind(j.at("kind").get<std::string>());
  if (kind == ConditionKind::clip) return clip(cvtp::EncoderConfig::from_json(j.at("encoder")), 0);
  return label(j.at("num_labels").get<int>(), j.at("dim").get<int>(), 0);
}

// ---------------------------------------------------------------------------

Bundle::Bundle(TaskSpec s, codec::CodecSpec cs, diffusion::NoiseSchedule sched, const diffusion::UNetConfig& unet,
               ConditionEncoder cond, uint64_t seed)
    : spec(s), codec_spec(std::move(cs)), schedule(std::move(sched)), denoiser(unet, seed), condition(std::move(cond)) {
  spec.validate();
  const int extra = spec.concat == ConcatSource::none ? 0 : 3;
  if (unet.in_channels != 3 + extra || unet.out_channels != 3)
    fail(ErrorCode::configuration, "denoiser channels do not match the task (expected " + std::to_string(3 + extra) +
                                       " in, 3 out)");
  if (unet.context_dim != condition.dim())
    fail(ErrorCode::configuration, "denoiser context width " + std::to_string(unet.context_dim) +
                                       " differs from the condition embedding width " + std::to_string(condition.dim()));
}

Shape Bundle::latent_shape() const {
  const int64_t f = codec_spec.factor;
  require(frame_height > 0 && frame_width > 0, "bundle frame size is unset");
  return {3, frame_height / f, frame_width / f};
}

diffusion::EpsFn Bundle::eps_fn() const {
  return [this](const Tensor<float>& x, const std::vector<int>& t, const Tensor<float>& context) {
    nn::NoGradGuard guard;
    return denoiser.forward(nn::constant(x), t, nn::constant(context))->value;
  };
}

Tensor<float> Bundle::sample_latents(const Tensor<float>& context, const std::vector<uint64_t>& seeds,
                                     const Tensor<float>& concat, int steps, double guidance) const {
  if ((spec.concat != ConcatSource::none) != !concat.empty())
    fail(ErrorCode::configuration, spec.concat == ConcatSource::none
                                       ? "this bundle takes no concatenated conditioning"
                                       : "this bundle needs a " + concat_name(spec.concat) + " map");
  diffusion::ChainOptions opts;
  opts.steps = steps > 0 ? steps : sample_steps;
  opts.guidance = guidance >= 0.0 ? guidance : spec.guidance;
  opts.x0_clip = x0_clip;
  return diffusion::sample(eps_fn(), latent_shape(), context, seeds, opts, schedule, concat);
}

bool Bundle::verify_fingerprint() const {
  if (!fingerprint) return false;
  const auto z = sample_latents(fingerprint->context, {fingerprint->seed}, fingerprint->concat, fingerprint->steps,
                                fingerprint->guidance);
  return bitwise_equal(z, fingerprint->latent);
}

void Bundle::save(const fs::path& dir) const {
  fs::create_directories(dir);
  json meta{{"version", 1},
            {"kind", "vtg-bundle"},
            {"task", spec.to_json()},
            {"codec", codec_spec.to_json()},
            {"schedule", schedule.to_json()},
            {"denoiser", denoiser.config().to_json()},
            {"condition", condition.to_json()},
            {"sample_steps", sample_steps},
            {"drop_prob", drop_prob},
            {"x0_clip", x0_clip},
            {"frame", {frame_height, frame_width}},
            {"training", training}};
  io::Archive weights;
  weights.metadata = {{"kind", "vtg-bundle-weights"}};
  io::store_params(weights, "denoiser.", denoiser.params());
  io::store_params(weights, "condition.", condition.params());
  weights.save(dir / "weights.ckpt");
  if (fingerprint) {
    io::Archive fp;
    fp.metadata = {{"kind", "vtg-fingerprint"}, {"seed", fingerprint->seed}, {"steps", fingerprint->steps},
                   {"guidance", fingerprint->guidance}};
    fp.put("context", fingerprint->context);
    if (!fingerprint->concat.empty()) fp.put("concat", fingerprint->concat);
    fp.put("latent", fingerprint->latent);
    fp.save(dir / "fingerprint.ckpt");
    meta["fingerprint"] = "fingerprint.ckpt";
  }
  const std::string text = meta.dump(2) + "\n";
  io::write_file(dir / "bundle.json", std::vector<uint8_t>(text.begin(), text.end()));
}

Bundle Bundle::load(const fs::path& dir) {
  const auto bytes = io::read_file(dir / "bundle.json");
  json meta;
  try {
    meta = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    fail(ErrorCode::load, (dir / "bundle.json").string() + ": " + e.what());
  }
  if (meta.value("kind", std::string()) != "vtg-bundle" || meta.value("version", 0) != 1)
    fail(ErrorCode::load, dir.string() + " is not a version-1 model bundle");
  try {
    Bundle b(TaskSpec::from_json(meta.at("task")), codec::CodecSpec::from_json(meta.at("codec")),
             diffusion::NoiseSchedule::from_json(meta.at("schedule")),
             diffusion::UNetConfig::from_json(meta.at("denoiser")), ConditionEncoder::from_json(meta.at("condition")), 0);
    b.sample_steps = meta.at("sample_steps").get<int>();
    b.drop_prob = meta.at("drop_prob").get<double>();
    b.x0_clip = meta.value("x0_clip", 0.0);
    b.frame_height = meta.at("frame").at(0).get<int64_t>();
    b.frame_width = meta.at("frame").at(1).get<int64_t>();
    b.training = meta.value("training", json::object());
    const auto weights = io::Archive::load(dir / "weights.ckpt");
    io::load_params(weights, "denoiser.", b.denoiser.params());
    io::load_params(weights, "condition.", b.condition.params());
    if (meta.contains("fingerprint")) {
      const auto fp = io::Archive::load(dir / meta.at("fingerprint").get<std::string>());
      Fingerprint f;
      f.seed = fp.metadata.at("seed").get<uint64_t>();
      f.steps = fp.metadata.at("steps").get<int>();
      f.guidance = fp.metadata.at("guidance").get<double>();
      f.context = fp.get_f32("context");
      if (fp.has("concat")) f.concat = fp.get_f32("concat");
      f.latent = fp.get_f32("latent");
      b.fingerprint = std::move(f);
    }
    return b;
  } catch (const json::exception& e) {
    fail(ErrorCode::load, (dir / "bundle.json").string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

Tensor<float> condition_input(const ConditionEncoder& condition, Direction direction, const data::PairItem& item) {
  if (condition.kind() == ConditionKind::label) {
    if (item.label < 0 || item.label >= condition.num_labels())
      fail(ErrorCode::validation, "item '" + item.id + "' has label " + std::to_string(item.label) +
                                      " outside the " + std::to_string(condition.num_labels()) + " known labels");
    Tensor<float> row({1, condition.num_labels()});
    row[item.label] = 1.0f;
    return row;
  }
  const int w = condition.encoder_config().window;
  if (direction == Direction::touch_to_image) return cvtp::batch_clips<data::TactileClip>({&item.tactile}, w);
  return cvtp::batch_clips<data::VisualClip>({&item.visual}, w);
}

Tensor<float> condition_input(const Bundle& bundle, const data::PairItem& item) {
  return condition_input(bundle.condition, bundle.spec.direction, item);
}

Tensor<float> concat_latent(const codec::Codec& codec, ConcatSource source, const data::PairItem& item) {
  switch (source) {
    case ConcatSource::none:
      return {};
    case ConcatSource::reflectance:
      if (!item.reflectance) fail(ErrorCode::validation, "item '" + item.id + "' has no reflectance map");
      return codec.encode(data::unit_to_signed(item.reflectance->pixels)).code;
    case ConcatSource::reference:
      if (!item.reference) fail(ErrorCode::validation, "item '" + item.id + "' has no reference image");
      return codec.encode(*item.reference).code;
  }
  return {};
}

}  // namespace vtg::tasks
