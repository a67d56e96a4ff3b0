#pragma once

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>

#include "vtg/codec/codec.hpp"
#include "vtg/cvtp/encoder.hpp"
#include "vtg/data/manifest.hpp"
#include "vtg/diffusion/sampler.hpp"
#include "vtg/diffusion/unet.hpp"

namespace vtg::tasks {

enum class Direction { touch_to_image, image_to_touch };
// Extra latent channels concatenated to the noisy input.
enum class ConcatSource { none, reflectance, reference };
// What the context vector is computed from: a CVTP-style clip encoder, or a
// learned per-label embedding (the material-class variant).
enum class ConditionKind { clip, label };

std::string direction_name(Direction d);
Direction parse_direction(const std::string& s);
std::string concat_name(ConcatSource c);
ConcatSource parse_concat(const std::string& s);
std::string condition_kind_name(ConditionKind k);
ConditionKind parse_condition_kind(const std::string& s);

struct TaskSpec {
  Direction direction = Direction::touch_to_image;
  bool hand_free = false;
  ConcatSource concat = ConcatSource::none;
  int sdedit_level = -1;  // stylization N; -1 means T/2
  double guidance = 7.5;

  // Configuration error for combinations that have no meaning.
  void validate() const;
  int level(int timesteps) const { return sdedit_level < 0 ? timesteps / 2 : sdedit_level; }
  nlohmann::json to_json() const;
  static TaskSpec from_json(const nlohmann::json& j);
};

class ConditionEncoder {
 public:
  static ConditionEncoder clip(const cvtp::EncoderConfig& config, uint64_t seed);
  static ConditionEncoder label(int num_labels, int dim, uint64_t seed);

  ConditionKind kind() const { return kind_; }
  int dim() const;
  int num_labels() const { return num_labels_; }
  const cvtp::EncoderConfig& encoder_config() const { return encoder_config_; }

  // clip: fused clips [N, 3w, H, W]; label: one-hot rows [N, L].
  nn::Var<float> forward(const Tensor<float>& input) const;
  Tensor<float> embed(const Tensor<float>& input) const;
  const nn::ParamList<float>& params() const { return params_; }

  // Copies the weights of a trained clip encoder with the same configuration.
  void load_weights(const cvtp::ClipEncoder<float>& source);

  nlohmann::json to_json() const;
  static ConditionEncoder from_json(const nlohmann::json& j);

 private:
  ConditionEncoder() = default;
  void collect();

  ConditionKind kind_ = ConditionKind::clip;
  cvtp::EncoderConfig encoder_config_;
  std::shared_ptr<cvtp::ClipEncoder<float>> encoder_;
  int num_labels_ = 0;
  nn::Var<float> table_;  // [dim, num_labels]
  nn::ParamList<float> params_;
};

// A reproducibility probe stored with each bundle: sampling from `context`
// (and `concat`) with `seed` must give `latent` bit for bit.
struct Fingerprint {
  uint64_t seed = 0;
  int steps = 0;
  double guidance = 0.0;
  Tensor<float> context;  // [1, D]
  Tensor<float> concat;   // [1, C', h, w] or empty
  Tensor<float> latent;   // [1, 3, h, w]
};

// Everything needed to run a trained task: spec, codec, schedule, denoiser,
// condition encoder, and sampling defaults.
struct Bundle {
  TaskSpec spec;
  codec::CodecSpec codec_spec;
  diffusion::NoiseSchedule schedule;
  diffusion::UNet<float> denoiser;
  ConditionEncoder condition;
  int sample_steps = 200;
  double drop_prob = 0.1;
  double x0_clip = 1.0;  // latent bound used by the sampler; 0 disables
  int64_t frame_height = 0;  // generated frame size
  int64_t frame_width = 0;
  nlohmann::json training = nlohmann::json::object();
  std::optional<Fingerprint> fingerprint;

  Bundle(TaskSpec spec, codec::CodecSpec codec_spec, diffusion::NoiseSchedule schedule,
         const diffusion::UNetConfig& unet, ConditionEncoder condition, uint64_t seed);

  codec::Codec codec() const { return codec::Codec(codec_spec); }
  Shape latent_shape() const;
  diffusion::EpsFn eps_fn() const;

  // Samples latents [N, 3, h, w] from contexts [N, D] with per-item seeds.
  // steps <= 0 and guidance < 0 fall back to the bundle defaults.
  Tensor<float> sample_latents(const Tensor<float>& context, const std::vector<uint64_t>& seeds,
                               const Tensor<float>& concat = {}, int steps = 0, double guidance = -1.0) const;

  // Re-samples the fingerprint and compares bitwise; false when it differs or is absent.
  bool verify_fingerprint() const;

  void save(const std::filesystem::path& dir) const;
  static Bundle load(const std::filesystem::path& dir);
};

// Condition-encoder input for one item: the fused clip of the conditioning
// modality, or a one-hot label row.
Tensor<float> condition_input(const Bundle& bundle, const data::PairItem& item);
Tensor<float> condition_input(const ConditionEncoder& condition, Direction direction, const data::PairItem& item);

// Concatenated conditioning latent for one item ([3, h, w]), or empty.
Tensor<float> concat_latent(const codec::Codec& codec, ConcatSource source, const data::PairItem& item);

}  // namespace vtg::tasks
