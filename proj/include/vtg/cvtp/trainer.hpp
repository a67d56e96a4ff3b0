#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "vtg/cvtp/contrastive.hpp"
#include "vtg/cvtp/encoder.hpp"
#include "vtg/data/manifest.hpp"

namespace vtg::cvtp {

struct CvtpModel {
  EncoderConfig config;
  ClipEncoder<float> visual;
  ClipEncoder<float> tactile;
  MemoryBank visual_bank;
  MemoryBank tactile_bank;

  CvtpModel(const EncoderConfig& config, int64_t bank_size, uint64_t seed);

  void save(const std::filesystem::path& path, const nlohmann::json& extra = {}) const;
  static CvtpModel load(const std::filesystem::path& path);
};

struct CvtpTrainOptions {
  int epochs = 240;
  int batch_size = 48;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int64_t bank_size = 16385;
  uint64_t seed = 0;
  std::function<void(int64_t step, double loss)> on_step;
};

// Per-epoch shuffled order from the data_order stream.
std::vector<size_t> epoch_order(size_t count, uint64_t seed, uint64_t epoch);

CvtpModel train_cvtp(const std::vector<data::PairItem>& items, const EncoderConfig& config,
                     const CvtpTrainOptions& options);

struct Retrieval {
  double visual_to_tactile = 0.0;
  double tactile_to_visual = 0.0;
};

// Top-1 cross-modal retrieval by cosine similarity over the given pairs.
Retrieval retrieval_top1(const CvtpModel& model, const std::vector<data::PairItem>& items);

}  // namespace vtg::cvtp
