#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "scriptorium/core/types.hpp"

namespace scriptorium {

/// Knobs of the simulated detector. Skill is a function of the training-set size n
/// only: detect probability p(n) = 1 - exp(-n/tau), box jitter
/// max(jitter_floor, jitter0 * exp(-n/tau)), and Poisson(fp_rate0 * exp(-n/tau))
/// false positives per image.
struct SyntheticParams {
  double tau = 60.0;
  double jitter0 = 0.30;
  double jitter_floor = 0.03;
  double fp_rate0 = 3.0;
  std::uint64_t rng_seed = 0;

  double detect_probability(double n) const { return 1.0 - std::exp(-n / tau); }
  double jitter(double n) const { return std::max(jitter_floor, jitter0 * std::exp(-n / tau)); }
  double false_positive_rate(double n) const { return fp_rate0 * std::exp(-n / tau); }

  void check() const {
    if (!(tau > 0.0)) throw ValidationError("synthetic tau must be positive");
    if (!(jitter0 >= 0.0) || !(jitter_floor >= 0.0) || jitter0 >= 1.0 || jitter_floor >= 1.0)
      throw ValidationError("synthetic jitter fractions must lie in [0, 1)");
    if (!(fp_rate0 >= 0.0)) throw ValidationError("synthetic fp_rate0 must be non-negative");
  }
};

/// Counter-based uniform stream: the value for (seed, image, counter) is fixed no
/// matter how requests are batched or ordered.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, ImageId image) noexcept
      : key_(mix(seed ^ 0x5eed5eed5eed5eedULL) ^ mix(static_cast<std::uint64_t>(image) + 0x9e3779b97f4a7c15ULL)) {}

  double uniform(std::uint64_t counter) const noexcept {
    return static_cast<double>(mix(key_ + counter * 0xd1b54a32d192ed03ULL) >> 11) * 0x1.0p-53;
  }

  static std::uint64_t mix(std::uint64_t z) noexcept {  // splitmix64 finalizer
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t key_;
};

namespace detail {
inline constexpr std::uint64_t kDrawsPerTruth = 8;
inline constexpr std::uint64_t kDrawsPerFalsePositive = 6;
inline constexpr int kMaxFalsePositives = 64;

inline int poisson_by_inversion(double lambda, double u) {
  if (lambda <= 0.0) return 0;
  double p = std::exp(-lambda), cdf = p;
  int k = 0;
  while (u > cdf && k < kMaxFalsePositives) {
    ++k;
    p *= lambda / k;
    cdf += p;
  }
  return k;
}
}  // namespace detail

/// Simulated detections for one image after training on n images. `truths` must be
/// that image's ground truth; draws are consumed in a fixed layout (eight per truth
/// in ascending annotation id, then the false-positive block), so the result is a
/// pure function of its arguments.
inline std::vector<Detection> synthetic_detections(const SyntheticParams& params, std::size_t n,
                                                   const ImageRecord& image, std::vector<Annotation> truths) {
  std::sort(truths.begin(), truths.end(), [](const Annotation& a, const Annotation& b) { return a.id < b.id; });
  const CounterRng rng(params.rng_seed, image.id);
  const double nn = static_cast<double>(n);
  const double p = params.detect_probability(nn);
  const double jit = params.jitter(nn);
  const double W = image.width, H = image.height;
  std::vector<Detection> out;

  for (std::size_t t = 0; t < truths.size(); ++t) {
    const auto base = t * detail::kDrawsPerTruth;
    auto u = [&](std::uint64_t slot) { return rng.uniform(base + slot); };
    const auto& b = truths[t].bbox;
    const double detect = u(0);
    const double dx = (2 * u(1) - 1) * jit, dy = (2 * u(2) - 1) * jit;
    const double dw = (2 * u(3) - 1) * jit, dh = (2 * u(4) - 1) * jit;
    const double noise = (2 * u(5) - 1) * 0.15;
    const double class_u = u(6), wrong_u = u(7);
    if (!(detect < p)) continue;
    const double x = b.x() + dx * b.w(), y = b.y() + dy * b.h();
    const double w = b.w() * (1 + dw), h = b.h() * (1 + dh);
    auto box = BBox::from_corners(std::clamp(x, 0.0, W), std::clamp(y, 0.0, H), std::clamp(x + w, 0.0, W),
                                  std::clamp(y + h, 0.0, H));
    if (!box) continue;
    CategoryId cls = truths[t].category_id;
    if (!(class_u < p)) {
      auto k = static_cast<CategoryId>(wrong_u * (kNumCategories - 1));
      cls = k >= cls ? k + 1 : k;
    }
    out.push_back({image.id, cls, *box, std::clamp(p + noise, 0.0, 1.0)});
  }

  const auto fp_base = truths.size() * detail::kDrawsPerTruth;
  const int fps = detail::poisson_by_inversion(params.false_positive_rate(nn), rng.uniform(fp_base));
  for (int f = 0; f < fps; ++f) {
    const auto base = fp_base + 1 + static_cast<std::uint64_t>(f) * detail::kDrawsPerFalsePositive;
    auto u = [&](std::uint64_t slot) { return rng.uniform(base + slot); };
    const double w = (0.02 + 0.18 * u(2)) * W, h = (0.02 + 0.18 * u(3)) * H;
    const double x = u(0) * (W - w), y = u(1) * (H - h);
    auto box = BBox::from_corners(x, y, x + w, y + h);
    if (!box) continue;
    const auto cls = std::min<CategoryId>(static_cast<CategoryId>(u(4) * kNumCategories), kNumCategories - 1);
    out.push_back({image.id, cls, *box, 0.5 * u(5)});
  }
  return out;
}

}  // namespace scriptorium
