#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "vtg/tasks/task.hpp"

namespace vtg::tasks {

struct TaskModelConfig {
  TaskSpec spec;
  codec::CodecSpec codec;
  diffusion::UNetConfig unet;  // in_channels is set from the spec
  int timesteps = 1000;
  ConditionKind condition = ConditionKind::clip;
  cvtp::EncoderConfig encoder;  // ignored when a CVTP checkpoint is given
  std::optional<std::filesystem::path> cvtp_checkpoint;
  int num_labels = 0;
  int sample_steps = 200;
};

struct DiffusionTrainOptions {
  int epochs = 30;
  int64_t max_steps = 0;  // > 0 overrides epochs
  int batch_size = 48;
  double lr = 2e-6;
  double drop_prob = 0.1;
  bool cosine_decay = false;  // half-cosine learning-rate decay to 0
  uint64_t seed = 0;
  bool fingerprint = true;
  std::function<void(int64_t step, double loss)> on_step;
};

struct TrainReport {
  std::vector<double> losses;
  int64_t hand_free_probes = 0;  // gradient probes run (and passed)
};

// Checks that every item carries what the spec needs; validation error
// naming the first offending item otherwise.
void preflight(const TaskSpec& spec, ConditionKind condition, const std::vector<data::PairItem>& items);

// Jointly trains the denoiser and the condition encoder on eps_loss with
// condition dropping (and the hand mask or concatenated map per the spec).
Bundle train_task(const TaskModelConfig& config, const std::vector<data::PairItem>& items,
                  const DiffusionTrainOptions& options, TrainReport* report = nullptr);

}  // namespace vtg::tasks
