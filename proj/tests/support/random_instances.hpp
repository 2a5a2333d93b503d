#pragma once

#include <random>
#include <set>
#include <vector>

#include "scriptorium/core/types.hpp"

namespace testing_support {

struct EvalInstance {
  scriptorium::DatasetCOCO gt;
  std::set<scriptorium::ImageId> test_ids;
  std::vector<scriptorium::Detection> dets;
};

/// Up to 5 images, 4 classes, 20 ground-truth boxes and 20 detections. Detections are a
/// mix of jittered copies of ground truth and free-floating boxes; scores are sometimes
/// quantized so ties occur.
inline EvalInstance random_eval_instance(std::mt19937_64& rng) {
  using namespace scriptorium;
  std::uniform_int_distribution<int> n_images(1, 5), n_classes(1, 4), n_boxes(0, 20);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  EvalInstance inst;
  const int images = n_images(rng), classes = n_classes(rng);
  for (int i = 0; i < images; ++i) {
    inst.gt.images.push_back({i + 1, "img" + std::to_string(i) + ".png", 100, 100, i});
    inst.test_ids.insert(i + 1);
  }
  auto random_box = [&] {
    const double w = 5 + 30 * u(rng), h = 5 + 30 * u(rng);
    return BBox(u(rng) * (100 - w), u(rng) * (100 - h), w, h);
  };
  const int ngt = n_boxes(rng);
  for (int k = 0; k < ngt; ++k)
    inst.gt.annotations.push_back({k + 1, 1 + static_cast<ImageId>(u(rng) * images), static_cast<CategoryId>(u(rng) * classes),
                                   random_box(), AnnotationSource::merged});
  const bool quantized = u(rng) < 0.4;
  const int ndet = n_boxes(rng);
  for (int k = 0; k < ndet; ++k) {
    double score = u(rng);
    if (quantized) score = std::round(score * 5) / 5;
    if (!inst.gt.annotations.empty() && u(rng) < 0.7) {
      const auto& g = inst.gt.annotations[static_cast<std::size_t>(u(rng) * inst.gt.annotations.size())];
      const double j = 0.3 * u(rng);
      auto b = BBox::from_corners(std::max(0.0, g.bbox.x() + (u(rng) - 0.5) * j * g.bbox.w()),
                                  std::max(0.0, g.bbox.y() + (u(rng) - 0.5) * j * g.bbox.h()),
                                  g.bbox.right() + (u(rng) - 0.5) * j * g.bbox.w(),
                                  g.bbox.bottom() + (u(rng) - 0.5) * j * g.bbox.h());
      const CategoryId c = u(rng) < 0.85 ? g.category_id : static_cast<CategoryId>(u(rng) * classes);
      if (b) inst.dets.push_back({g.image_id, c, *b, score});
    } else {
      inst.dets.push_back({1 + static_cast<ImageId>(u(rng) * images), static_cast<CategoryId>(u(rng) * classes),
                           random_box(), score});
    }
  }
  return inst;
}

}  // namespace testing_support
