#include "vtg/metrics/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "vtg/core/log.hpp"
#include "vtg/nn/ops.hpp"

namespace vtg::metrics {

namespace {

void require_same_size(const data::ImageFrame& a, const data::ImageFrame& b, const char* what) {
  if (a.pixels.shape() != b.pixels.shape())
    fail(ErrorCode::validation, std::string(what) + ": image sizes differ (" + shape_string(a.pixels.shape()) + " vs " +
                                    shape_string(b.pixels.shape()) + ")");
}

double to_unit(float v) { return (static_cast<double>(v) + 1.0) * 0.5; }

std::vector<double> gaussian_window() {
  std::vector<double> g(11);
  double total = 0;
  for (int i = 0; i < 11; ++i) total += g[static_cast<size_t>(i)] = std::exp(-((i - 5) * (i - 5)) / (2 * 1.5 * 1.5));
  for (auto& v : g) v /= total;
  return g;
}

// Separable 11-tap filter over the valid region of an H x W plane.
std::vector<double> filter_valid(const std::vector<double>& x, int64_t h, int64_t w, const std::vector<double>& g) {
  const int64_t oh = h - 10, ow = w - 10;
  std::vector<double> tmp(static_cast<size_t>(h * ow));
  for (int64_t y = 0; y < h; ++y)
    for (int64_t c = 0; c < ow; ++c) {
      double acc = 0;
      for (int k = 0; k < 11; ++k) acc += g[static_cast<size_t>(k)] * x[static_cast<size_t>(y * w + c + k)];
      tmp[static_cast<size_t>(y * ow + c)] = acc;
    }
  std::vector<double> out(static_cast<size_t>(oh * ow));
  for (int64_t r = 0; r < oh; ++r)
    for (int64_t c = 0; c < ow; ++c) {
      double acc = 0;
      for (int k = 0; k < 11; ++k) acc += g[static_cast<size_t>(k)] * tmp[static_cast<size_t>((r + k) * ow + c)];
      out[static_cast<size_t>(r * ow + c)] = acc;
    }
  return out;
}

Eigen::MatrixXd as_matrix(const Tensor<double>& rows) {
  Eigen::MatrixXd m(rows.dim(0), rows.dim(1));
  for (int64_t i = 0; i < rows.dim(0); ++i)
    for (int64_t j = 0; j < rows.dim(1); ++j) m(i, j) = rows.at(i, j);
  return m;
}

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (size_t i = 0; i < idx.size();) {
    size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) rank[idx[k]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double ssim(const data::ImageFrame& a, const data::ImageFrame& b) {
  require_same_size(a, b, "ssim");
  const int64_t c = a.pixels.dim(0), h = a.height(), w = a.width();
  if (h < 11 || w < 11) fail(ErrorCode::validation, "ssim needs images of at least 11x11");
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const auto g = gaussian_window();
  double total = 0;
  int64_t count = 0;
  for (int64_t ch = 0; ch < c; ++ch) {
    std::vector<double> x(static_cast<size_t>(h * w)), y(x.size()), xx(x.size()), yy(x.size()), xy(x.size());
    for (int64_t i = 0; i < h * w; ++i) {
      const double p = to_unit(a.pixels[ch * h * w + i]), q = to_unit(b.pixels[ch * h * w + i]);
      x[static_cast<size_t>(i)] = p;
      y[static_cast<size_t>(i)] = q;
      xx[static_cast<size_t>(i)] = p * p;
      yy[static_cast<size_t>(i)] = q * q;
      xy[static_cast<size_t>(i)] = p * q;
    }
    const auto mx = filter_valid(x, h, w, g), my = filter_valid(y, h, w, g);
    const auto sxx = filter_valid(xx, h, w, g), syy = filter_valid(yy, h, w, g), sxy = filter_valid(xy, h, w, g);
    for (size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cov = sxy[i] - mx[i] * my[i];
      total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

double psnr(const data::ImageFrame& a, const data::ImageFrame& b) {
  require_same_size(a, b, "psnr");
  double sum = 0;
  for (int64_t i = 0; i < a.pixels.numel(); ++i) {
    const double d = to_unit(a.pixels[i]) - to_unit(b.pixels[i]);
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(a.pixels.numel());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double frechet_distance(const FeatureSet& a, const FeatureSet& b) {
  if (a.rows.rank() != 2 || b.rows.rank() != 2 || a.dim() != b.dim())
    fail(ErrorCode::validation, "frechet distance: feature sets must share a width");
  if (a.count() < 2 || b.count() < 2) fail(ErrorCode::validation, "frechet distance needs at least 2 rows per set");
  for (const auto* s : {&a, &b})
    for (double v : s->rows.storage())
      if (!std::isfinite(v)) fail(ErrorCode::numeric, "frechet distance: non-finite feature");
  if (a.count() < a.dim() || b.count() < b.dim())
    warn("frechet distance: fewer rows than feature dimensions (" + std::to_string(std::min(a.count(), b.count())) +
         " < " + std::to_string(a.dim()) + "); covariances are rank-deficient");

  const Eigen::MatrixXd xa = as_matrix(a.rows), xb = as_matrix(b.rows);
  const Eigen::VectorXd mu_a = xa.colwise().mean(), mu_b = xb.colwise().mean();
  const Eigen::MatrixXd ca = xa.rowwise() - mu_a.transpose(), cb = xb.rowwise() - mu_b.transpose();
  const Eigen::MatrixXd sa = (ca.transpose() * ca) / static_cast<double>(a.count() - 1);
  const Eigen::MatrixXd sb = (cb.transpose() * cb) / static_cast<double>(b.count() - 1);

  // tr((Sa Sb)^(1/2)) = tr((Sa^(1/2) Sb Sa^(1/2))^(1/2)), which is symmetric.
  auto clamp_eigs = [](Eigen::VectorXd ev) {
    for (int i = 0; i < ev.size(); ++i) {
      if (ev(i) < -1e-8) fail(ErrorCode::numeric, "frechet distance: covariance is not positive semi-definite");
      ev(i) = std::max(0.0, ev(i));
    }
    return ev;
  };
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(sa);
  const Eigen::VectorXd ra = clamp_eigs(ea.eigenvalues()).cwiseSqrt();
  const Eigen::MatrixXd root_a = ea.eigenvectors() * ra.asDiagonal() * ea.eigenvectors().transpose();
  const Eigen::MatrixXd m = root_a * sb * root_a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  const double tr_root = clamp_eigs(em.eigenvalues()).cwiseSqrt().sum();
  const double d = (mu_a - mu_b).squaredNorm() + sa.trace() + sb.trace() - 2.0 * tr_root;
  return std::max(0.0, d);
}

FeatureSet cvtp_features(const cvtp::ClipEncoder<float>& visual, const std::vector<data::ImageFrame>& frames) {
  require(!frames.empty(), "no frames to extract features from");
  const int w = visual.config().window;
  std::vector<Tensor<float>> fused;
  for (const auto& f : frames) fused.push_back(data::VisualClip::replicate(f, w).fused());
  Tensor<float> feats;
  {
    nn::NoGradGuard guard;
    feats = visual.features(nn::constant(stack(fused)))->value;
  }
  FeatureSet out{Tensor<double>(feats.shape()), "cvtp-visual-pooled-v1"};
  for (int64_t i = 0; i < feats.numel(); ++i) out.rows[i] = feats[i];
  return out;
}

double cvtp_score(const std::vector<data::ImageFrame>& images, const std::vector<data::TactileClip>& touches,
                  const cvtp::CvtpModel& model) {
  if (images.size() != touches.size())
    fail(ErrorCode::validation, "cvtp score: " + std::to_string(images.size()) + " images but " +
                                    std::to_string(touches.size()) + " touches");
  require(!images.empty(), "cvtp score needs at least one pair");
  const int w = model.config.window;
  std::vector<Tensor<float>> vis, tac;
  for (size_t i = 0; i < images.size(); ++i) {
    vis.push_back(data::VisualClip::replicate(images[i], w).fused());
    tac.push_back(data::TactileClip::replicate(touches[i].center(), w).fused());
  }
  return mean_cosine(cvtp::embed(model.visual, stack(vis)), cvtp::embed(model.tactile, stack(tac)));
}

double mean_cosine(const Tensor<float>& a, const Tensor<float>& b) {
  require(a.rank() == 2 && a.shape() == b.shape() && a.dim(0) > 0, "mean cosine expects two equal [n, d] tensors");
  double total = 0;
  for (int64_t r = 0; r < a.dim(0); ++r) {
    double dot = 0, na = 0, nb = 0;
    for (int64_t j = 0; j < a.dim(1); ++j) {
      dot += static_cast<double>(a.at(r, j)) * b.at(r, j);
      na += static_cast<double>(a.at(r, j)) * a.at(r, j);
      nb += static_cast<double>(b.at(r, j)) * b.at(r, j);
    }
    if (na == 0.0 || nb == 0.0) fail(ErrorCode::numeric, "mean cosine: zero-length embedding");
    total += dot / std::sqrt(na * nb);
  }
  return total / static_cast<double>(a.dim(0));
}

double material_consistency(const std::vector<data::ImageFrame>& generated,
                            const std::vector<data::ImageFrame>& reference, const Classifier& classifier) {
  if (generated.size() != reference.size())
    fail(ErrorCode::validation, "material consistency: " + std::to_string(generated.size()) + " generated but " +
                                    std::to_string(reference.size()) + " reference images");
  require(!generated.empty(), "material consistency needs at least one pair");
  int64_t agree = 0;
  for (size_t i = 0; i < generated.size(); ++i)
    agree += classifier.predict(generated[i]) == classifier.predict(reference[i]);
  return static_cast<double>(agree) / static_cast<double>(generated.size());
}

double gradient_energy(const data::ImageFrame& f) {
  const int64_t h = f.height(), w = f.width();
  require(h >= 3 && w >= 3, "gradient energy needs at least 3x3 pixels");
  auto lum = [&](int64_t y, int64_t x) { return (f.at(0, y, x) + f.at(1, y, x) + f.at(2, y, x)) / 3.0; };
  double acc = 0;
  for (int64_t y = 1; y < h - 1; ++y)
    for (int64_t x = 1; x < w - 1; ++x) {
      const double gx = lum(y - 1, x + 1) + 2 * lum(y, x + 1) + lum(y + 1, x + 1) - lum(y - 1, x - 1) -
                        2 * lum(y, x - 1) - lum(y + 1, x - 1);
      const double gy = lum(y + 1, x - 1) + 2 * lum(y + 1, x) + lum(y + 1, x + 1) - lum(y - 1, x - 1) -
                        2 * lum(y - 1, x) - lum(y - 1, x + 1);
      acc += std::sqrt(gx * gx + gy * gy);
    }
  return acc / static_cast<double>((h - 2) * (w - 2));
}

OracleClassifier OracleClassifier::fit(const std::vector<data::ImageFrame>& frames, const std::vector<int>& labels) {
  if (frames.size() != labels.size() || frames.empty())
    fail(ErrorCode::validation, "oracle classifier needs one label per frame");
  const int classes = *std::max_element(labels.begin(), labels.end()) + 1;
  require(*std::min_element(labels.begin(), labels.end()) >= 0, "labels must be non-negative");
  std::vector<double> sum(static_cast<size_t>(classes), 0.0);
  std::vector<int64_t> count(static_cast<size_t>(classes), 0);
  for (size_t i = 0; i < frames.size(); ++i) {
    sum[static_cast<size_t>(labels[i])] += std::log(gradient_energy(frames[i]) + OracleClassifier::kEnergyFloor);
    ++count[static_cast<size_t>(labels[i])];
  }
  OracleClassifier c;
  for (int k = 0; k < classes; ++k)
    c.centroids_.push_back(count[static_cast<size_t>(k)] ? sum[static_cast<size_t>(k)] / count[static_cast<size_t>(k)]
                                                         : std::numeric_limits<double>::quiet_NaN());
  return c;
}

int OracleClassifier::predict(const data::ImageFrame& frame) const {
  const double f = std::log(gradient_energy(frame) + kEnergyFloor);
  int best = -1;
  double best_d = 0;
  for (size_t k = 0; k < centroids_.size(); ++k) {
    if (std::isnan(centroids_[k])) continue;
    const double d = std::fabs(f - centroids_[k]);
    if (best < 0 || d < best_d) {
      best = static_cast<int>(k);
      best_d = d;
    }
  }
  return best;
}

Classifier OracleClassifier::as_classifier() const {
  return {kId, [c = *this](const data::ImageFrame& f) { return c.predict(f); }};
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) fail(ErrorCode::validation, "spearman needs two equal-length samples (n >= 2)");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n, my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

double spatial_variance(const Tensor<float>& chw) {
  require(chw.rank() == 3, "spatial variance expects [C, H, W]");
  const int64_t c = chw.dim(0), n = chw.dim(1) * chw.dim(2);
  double total = 0;
  for (int64_t ch = 0; ch < c; ++ch) {
    double s = 0, ss = 0;
    for (int64_t i = 0; i < n; ++i) {
      const double v = chw[ch * n + i];
      s += v;
      ss += v * v;
    }
    const double mean = s / static_cast<double>(n);
    total += ss / static_cast<double>(n) - mean * mean;
  }
  return total / static_cast<double>(c);
}

nlohmann::json MetricReport::to_json() const {
  return {{"version", 1},     {"metrics", values},       {"counts", counts},
          {"extractor", extractor}, {"classifier", classifier}, {"config_hash", config_hash}};
}

}  // namespace vtg::metrics
