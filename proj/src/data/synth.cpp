#include "vtg/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vtg/core/random.hpp"

namespace vtg::data {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kAmbient = 0.2;
constexpr double kBaseDepth = 0.03;    // press depth scale, image-width units
constexpr double kTactileFov = 0.2;    // half-width of the tactile patch
constexpr double kDrift = 0.01;        // camera drift per frame
constexpr std::array<float, 3> kHandAlbedo{0.85f, 0.65f, 0.55f};

struct Grating {
  double cos_t, sin_t, freq, phase;
};

struct Surface {
  double amp = 0.0;
  std::array<Grating, 2> gratings{};

  // Height and its gradient at (u, v).
  std::array<double, 3> eval(double u, double v) const {
    std::array<double, 3> r{0.0, 0.0, 0.0};
    if (amp == 0.0) return r;
    const double a = amp / std::numbers::sqrt2;
    for (const auto& g : gratings) {
      const double w = 2.0 * kPi * g.freq;
      const double arg = w * (u * g.cos_t + v * g.sin_t) + g.phase;
      const double c = std::cos(arg);
      r[0] += a * std::sin(arg);
      r[1] += a * w * c * g.cos_t;
      r[2] += a * w * c * g.sin_t;
    }
    return r;
  }
};

std::array<double, 3> normalized(std::array<double, 3> v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  return {v[0] / n, v[1] / n, v[2] / n};
}

double lambert(double hu, double hv) {
  static const auto light = normalized({0.4, -0.3, 1.0});
  const auto n = normalized({-hu, -hv, 1.0});
  const double d = n[0] * light[0] + n[1] * light[1] + n[2] * light[2];
  return kAmbient + (1.0 - kAmbient) * std::max(0.0, d);
}

// Raised-cosine window over the gel radius.
double gel_window(double rho) {
  if (rho <= 0.6) return 1.0;
  if (rho >= 0.95) return 0.0;
  return 0.5 * (1.0 + std::cos(kPi * (rho - 0.6) / 0.35));
}

}  // namespace

double roughness_amplitude(int roughness_class) { return 0.016 * roughness_class; }
double roughness_frequency(int roughness_class) { return 2.0 + 1.5 * roughness_class; }

SynthPair synth_pair(const SynthParams& p) {
  require(p.num_classes >= 1 && p.roughness_class >= 0 && p.roughness_class < p.num_classes,
          "roughness class out of range");
  require(p.context >= 0 && p.image_size > 0 && p.tactile_size > 0, "invalid synth sizes");
  const int window = 2 * p.context + 1;
  RandomStream rng(p.seed, Purpose::synth);

  std::array<float, 3> albedo{};
  for (auto& a : albedo) a = static_cast<float>(0.35 + 0.55 * rng.uniform());
  if (p.albedo) albedo = *p.albedo;
  for (float a : albedo) require(a >= 0.0f && a <= 1.0f, "albedo outside [0, 1]");

  Surface surface;
  surface.amp = roughness_amplitude(p.roughness_class);
  for (auto& g : surface.gratings) {
    const double theta = kPi * rng.uniform();
    g.cos_t = std::cos(theta);
    g.sin_t = std::sin(theta);
    g.freq = roughness_frequency(p.roughness_class) * (0.85 + 0.3 * rng.uniform());
    g.phase = 2.0 * kPi * rng.uniform();
  }
  const double uc = 0.3 + 0.4 * rng.uniform();
  const double vc = 0.3 + 0.4 * rng.uniform();
  const double max_depth = kBaseDepth * (0.6 + 0.8 * rng.uniform());
  const double gamma = 0.6 + 1.2 * rng.uniform();
  const double approach = 2.0 * kPi * rng.uniform();

  SynthPair out;
  out.label = p.roughness_class;
  for (int k = 0; k < window; ++k) out.press_depth.push_back(max_depth * std::pow((k + 1.0) / window, gamma));

  const int64_t H = p.image_size, W = p.image_size;
  const float flat_shading = static_cast<float>(lambert(0.0, 0.0));
  for (int k = 0; k < window; ++k) {
    const double du = (k - p.context) * kDrift;
    const double lag = std::max(0, p.context - k) * 0.06;
    const double oc_u = uc + du + lag * std::cos(approach), oc_v = vc + lag * std::sin(approach);
    const double radius = 0.1 + 0.06 * out.press_depth[static_cast<size_t>(k)] / kBaseDepth;

    ReflectanceMap refl{Tensor<float>({3, H, W})};
    Tensor<float> shading({H, W});
    Tensor<float> mask({H, W}, 1.0f);
    ImageFrame frame(H, W);
    for (int64_t y = 0; y < H; ++y) {
      const double v = (y + 0.5) / H;
      for (int64_t x = 0; x < W; ++x) {
        const double u = (x + 0.5) / W + du;
        const int64_t i = y * W + x;
        const bool hand = p.occluder && std::hypot(u - oc_u, v - oc_v) < radius;
        const auto& rho = hand ? kHandAlbedo : albedo;
        float s = flat_shading;
        if (!hand) {
          const auto h = surface.eval(u, v);
          s = static_cast<float>(lambert(h[1], h[2]));
        }
        if (hand) mask[i] = 0.0f;
        shading[i] = s;
        for (int c = 0; c < 3; ++c) {
          refl.pixels[c * H * W + i] = rho[static_cast<size_t>(c)];
          frame.pixels[c * H * W + i] = 2.0f * (rho[static_cast<size_t>(c)] * s) - 1.0f;
        }
      }
    }
    out.visual.frames.push_back(std::move(frame));
    if (k == p.context) {
      out.mask = SegMask{mask};
      out.reflectance = refl;
      out.shading = shading;
    }
    out.frame_reflectance.push_back(std::move(refl));
    out.frame_shading.push_back(std::move(shading));
  }

  // Gel rendering: red, green and blue lights at 120 degree spacing, 30 degrees elevation.
  const int64_t T = p.tactile_size;
  std::array<std::array<double, 3>, 3> lights{};
  for (int c = 0; c < 3; ++c) {
    const double az = 2.0 * kPi * c / 3.0, el = kPi / 6.0;
    lights[static_cast<size_t>(c)] = {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
  }
  const double to_surface = 2.0 * kTactileFov / static_cast<double>(T);  // surface units per pixel
  for (int k = 0; k < window; ++k) {
    const double depth = out.press_depth[static_cast<size_t>(k)];
    Tensor<float> g({T, T});
    std::vector<double> gd(static_cast<size_t>(T * T));
    for (int64_t y = 0; y < T; ++y)
      for (int64_t x = 0; x < T; ++x) {
        const double s = 2.0 * (x + 0.5) / T - 1.0, t = 2.0 * (y + 0.5) / T - 1.0;
        const double h = surface.eval(uc + s * kTactileFov, vc + t * kTactileFov)[0];
        const double d = gel_window(std::hypot(s, t)) * std::max(0.0, h + depth);
        gd[static_cast<size_t>(y * T + x)] = d;
        g[y * T + x] = static_cast<float>(d);
      }
    ImageFrame frame(T, T);
    for (int64_t y = 0; y < T; ++y)
      for (int64_t x = 0; x < T; ++x) {
        auto at = [&](int64_t yy, int64_t xx) {
          return gd[static_cast<size_t>(std::clamp<int64_t>(yy, 0, T - 1) * T + std::clamp<int64_t>(xx, 0, T - 1))];
        };
        const double gx = (at(y, x + 1) - at(y, x - 1)) / (2.0 * to_surface);
        const double gy = (at(y + 1, x) - at(y - 1, x)) / (2.0 * to_surface);
        const auto n = normalized({-gx, -gy, 1.0});
        const double press = gd[static_cast<size_t>(y * T + x)] / kBaseDepth;
        for (int c = 0; c < 3; ++c) {
          const auto& l = lights[static_cast<size_t>(c)];
          const double lit = n[0] * l[0] + n[1] * l[1] + n[2] * l[2] - l[2];
          const double intensity = std::clamp(0.45 + 0.6 * lit + 0.1 * press, 0.0, 1.0);
          frame.at(c, y, x) = static_cast<float>(2.0 * intensity - 1.0);
        }
      }
    out.tactile.frames.push_back(std::move(frame));
    out.deformation.push_back(std::move(g));
  }
  return out;
}

}  // namespace vtg::data
