#pragma once

#include <array>
#include <cstdio>
#include <random>
#include <vector>

#include "scriptorium/core/types.hpp"
#include "scriptorium/split/split.hpp"

// Generators for desk-scale stand-ins of a manuscript dataset: page records, ground
// truth with a realistic class mix, and per-page embeddings grouped by "scribe".

namespace scriptorium::synth {

/// Relative class frequencies (annotation counts per class, Table order).
inline constexpr std::array<int, 9> kClassMix = {2745, 2522, 530, 301, 261, 183, 189, 172, 112};

struct DatasetParams {
  std::size_t images = 340;
  int width = 640;
  int height = 640;
  int min_objects = 10;
  int max_objects = 30;
  std::uint64_t seed = 1;
};

inline DatasetCOCO generate_dataset(const DatasetParams& p) {
  std::mt19937_64 rng(p.seed);
  std::discrete_distribution<int> cls(kClassMix.begin(), kClassMix.end());
  std::uniform_int_distribution<int> count(p.min_objects, p.max_objects);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Per class: width range then height range, as fractions of the page.
  const std::array<std::array<double, 4>, 9> shape = {{
      {0.03, 0.07, 0.03, 0.07},  // neume
      {0.45, 0.85, 0.04, 0.07},  // line
      {0.03, 0.20, 0.03, 0.10},  // discard
      {0.60, 0.90, 0.08, 0.14},  // staff
      {0.03, 0.06, 0.06, 0.10},  // clef
      {0.01, 0.02, 0.08, 0.12},  // musicDelimiter
      {0.15, 0.40, 0.04, 0.08},  // text
      {0.02, 0.03, 0.04, 0.06},  // custos
      {0.20, 0.50, 0.04, 0.07},  // musicText
  }};
  DatasetCOCO ds;
  AnnotationId next = 1;
  for (std::size_t i = 0; i < p.images; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "page_%03zu.png", i + 1);
    const ImageId id = static_cast<ImageId>(i + 1);
    ds.images.push_back({id, name, p.width, p.height, static_cast<std::int64_t>(i)});
    const int n = count(rng);
    for (int k = 0; k < n; ++k) {
      const int c = cls(rng);
      const auto& s = shape[static_cast<std::size_t>(c)];
      const double w = (s[0] + (s[1] - s[0]) * unit(rng)) * p.width;
      const double h = (s[2] + (s[3] - s[2]) * unit(rng)) * p.height;
      const double x = unit(rng) * (p.width - w);
      const double y = unit(rng) * (p.height - h);
      ds.annotations.push_back({next++, id, c, BBox(x, y, w, h), AnnotationSource::merged});
    }
  }
  return ds;
}

struct FeatureParams {
  std::size_t dimension = 32;
  std::size_t groups = 8;   // contiguous page blocks sharing a style
  double spread = 0.25;     // within-group noise relative to the group center
  std::uint64_t seed = 7;
};

/// One embedding per image: a group center chosen by page position plus noise.
inline std::vector<FeatureVector> generate_features(const DatasetCOCO& ds, const FeatureParams& p) {
  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> centers(p.groups, std::vector<double>(p.dimension));
  for (auto& c : centers)
    for (auto& v : c) v = std::abs(normal(rng)) + 0.1;
  std::vector<const ImageRecord*> pages;
  for (const auto& img : ds.images) pages.push_back(&img);
  std::sort(pages.begin(), pages.end(), [](auto* a, auto* b) { return a->page_index < b->page_index; });
  std::vector<FeatureVector> out;
  for (std::size_t i = 0; i < pages.size(); ++i) {
    const auto g = i * p.groups / std::max<std::size_t>(1, pages.size());
    FeatureVector f{pages[i]->id, centers[g]};
    for (auto& v : f.values) v += p.spread * normal(rng);
    out.push_back(std::move(f));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
  return out;
}

}  // namespace scriptorium::synth
