#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scriptorium/core/types.hpp"
#include "scriptorium/detector/detector.hpp"
#include "scriptorium/split/split.hpp"

namespace scriptorium {

enum class Strategy { sequential, uncertainty };

inline std::string_view to_string(Strategy s) noexcept { return s == Strategy::sequential ? "sl" : "al"; }

inline Strategy strategy_from_string(std::string_view s) {
  if (s == "sl" || s == "sequential") return Strategy::sequential;
  if (s == "al" || s == "uncertainty") return Strategy::uncertainty;
  throw ArgumentError("unknown strategy '" + std::string(s) + "' (expected al or sl)");
}

/// Labeled-set size at `round`: seed + round * batch, capped by the pool.
inline std::size_t schedule_size(std::size_t round, std::size_t seed_count, std::size_t batch_size, std::size_t pool) {
  return std::min(seed_count + round * batch_size, pool);
}

/// Highest detection confidence on the image; an image without detections scores 0.
/// Lower means the model is less sure of the page.
inline double image_uncertainty(const std::vector<Detection>& dets) noexcept {
  double best = 0.0;
  for (const auto& d : dets) best = std::max(best, d.score);
  return best;
}

struct SelectionEntry {
  ImageId image_id = 0;
  std::optional<double> score;  // uncertainty score; empty for sequential picks

  friend bool operator==(const SelectionEntry&, const SelectionEntry&) = default;
};

/// Picks the next min(k, |unlabeled|) images. Sequential: ascending page index.
/// Uncertainty: ascending image_uncertainty, ties by page index. `page_of` must cover
/// every unlabeled id.
inline std::vector<SelectionEntry> select_next(const std::vector<ImageId>& unlabeled,
                                               const std::map<ImageId, std::int64_t>& page_of,
                                               const PredictionMap& preds, std::size_t k, Strategy strategy) {
  if (k < 1) throw ArgumentError("selection size must be at least 1");
  struct Cand {
    ImageId id;
    std::int64_t page;
    double score;
  };
  std::vector<Cand> cands;
  for (const auto id : unlabeled) {
    auto pg = page_of.find(id);
    if (pg == page_of.end()) throw ArgumentError("image " + std::to_string(id) + " has no page index");
    double score = 0.0;
    if (strategy == Strategy::uncertainty) {
      auto p = preds.find(id);
      if (p == preds.end())
        throw ValidationError("no prediction for unlabeled image " + std::to_string(id) + "; inference step skipped?");
      score = image_uncertainty(p->second);
    }
    cands.push_back({id, pg->second, score});
  }
  std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
    if (strategy == Strategy::uncertainty && a.score != b.score) return a.score < b.score;
    return a.page < b.page;
  });
  std::vector<SelectionEntry> out;
  for (std::size_t i = 0; i < std::min(k, cands.size()); ++i)
    out.push_back({cands[i].id, strategy == Strategy::uncertainty ? std::optional(cands[i].score) : std::nullopt});
  return out;
}

/// Simulated annotation: hands back the ground truth of train-pool images. Asking for
/// a test image is a leakage error.
inline std::vector<Annotation> reveal_labels(const std::vector<ImageId>& ids, const DatasetCOCO& gt,
                                             const SplitResult& split) {
  std::vector<Annotation> out;
  for (const auto id : ids) {
    if (split.test_ids.count(id)) throw LeakageError("label request for test image " + std::to_string(id));
    if (!split.train_ids.count(id)) throw ArgumentError("image " + std::to_string(id) + " is not in the train pool");
    auto anns = gt.annotations_of(id);
    out.insert(out.end(), anns.begin(), anns.end());
  }
  return out;
}

}  // namespace scriptorium
