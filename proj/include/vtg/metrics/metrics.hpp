#pragma once

#include <json.hpp>

#include <functional>
#include <string>
#include <vector>

#include "vtg/cvtp/trainer.hpp"
#include "vtg/data/image.hpp"

namespace vtg::metrics {

// Frames are in [-1, 1]; SSIM and PSNR work on the [0, 1] mapping.

// Gaussian-windowed SSIM (11x11, sigma 1.5, K1 0.01, K2 0.03, dynamic range 1)
// averaged over all valid window positions and channels.
double ssim(const data::ImageFrame& a, const data::ImageFrame& b);

// 10 log10(1 / MSE), capped at 100 dB.
double psnr(const data::ImageFrame& a, const data::ImageFrame& b);
inline constexpr double kPsnrCap = 100.0;

struct FeatureSet {
  Tensor<double> rows;  // [n, d]
  std::string extractor;

  int64_t count() const { return rows.dim(0); }
  int64_t dim() const { return rows.dim(1); }
};

// |mu_a - mu_b|^2 + tr(Sa + Sb - 2 (Sa Sb)^(1/2)) with unbiased covariances.
double frechet_distance(const FeatureSet& a, const FeatureSet& b);

// Pooled penultimate features of the CVTP visual encoder on single frames
// replicated across the fusion window.
FeatureSet cvtp_features(const cvtp::ClipEncoder<float>& visual, const std::vector<data::ImageFrame>& frames);

// Mean over rows of cosine(a_r, b_r) for [n, d] embeddings.
double mean_cosine(const Tensor<float>& a, const Tensor<float>& b);

// Mean cosine between visual embeddings of the images and tactile embeddings
// of the touches; both sides use one frame replicated across the window.
double cvtp_score(const std::vector<data::ImageFrame>& images, const std::vector<data::TactileClip>& touches,
                  const cvtp::CvtpModel& model);

struct Classifier {
  std::string id;
  std::function<int(const data::ImageFrame&)> predict;
};

// Fraction of pairs whose predicted classes agree.
double material_consistency(const std::vector<data::ImageFrame>& generated,
                            const std::vector<data::ImageFrame>& reference, const Classifier& classifier);

// Mean Sobel magnitude of the luminance over interior pixels.
double gradient_energy(const data::ImageFrame& frame);

// Nearest class centroid on log(gradient energy + floor), fitted on labelled
// frames. The floor keeps flat classes from sitting at an extreme log value.
class OracleClassifier {
 public:
  static OracleClassifier fit(const std::vector<data::ImageFrame>& frames, const std::vector<int>& labels);

  int predict(const data::ImageFrame& frame) const;
  const std::vector<double>& centroids() const { return centroids_; }
  Classifier as_classifier() const;
  static constexpr const char* kId = "oracle-gradient-energy-v1";
  static constexpr double kEnergyFloor = 1e-2;

 private:
  std::vector<double> centroids_;  // per class, log feature; NaN for absent classes
};

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// Spatial variance per channel, averaged over channels ([C, H, W] input).
double spatial_variance(const Tensor<float>& chw);

// Versioned key-value report.
struct MetricReport {
  nlohmann::json values = nlohmann::json::object();
  nlohmann::json counts = nlohmann::json::object();
  std::string extractor;
  std::string classifier;
  std::string config_hash;

  nlohmann::json to_json() const;
};

}  // namespace vtg::metrics
