#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "scriptorium/core/executor.hpp"
#include "scriptorium/core/types.hpp"

namespace scriptorium {

/// Per-detection verdicts for one class, in score-descending order.
struct MatchOutcome {
  struct Entry {
    std::size_t det_index;  // position in the caller's detection list
    double score;
    bool tp;
    std::optional<AnnotationId> matched_gt_id;
  };
  std::vector<Entry> entries;
  std::size_t gt_count = 0;
  std::size_t fn_count = 0;

  std::size_t tp_count() const noexcept { return gt_count - fn_count; }
};

enum class Interpolation {
  coco101,    ///< mean of the precision envelope sampled at recall 0, 0.01, ..., 1
  all_points  ///< exact area under the precision envelope
};

enum class OperatingPoint {
  max_f1,          ///< the single confidence threshold maximizing micro-averaged F1
  fixed_confidence ///< every detection scoring >= EvalConfig::fixed_confidence
};

struct EvalConfig {
  Interpolation interpolation = Interpolation::coco101;
  OperatingPoint operating_point = OperatingPoint::max_f1;
  double fixed_confidence = 0.25;
};

struct MetricsReport {
  double map50 = 0.0;
  double map5095 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = std::numeric_limits<double>::quiet_NaN();
  double confidence_threshold = 1.0;  // operating point the P/R/F1 triple was read at
  std::map<CategoryId, double> per_class_ap50;  // classes with at least one ground-truth box
};

/// F1 from precision and recall; NaN exactly when both are zero.
inline double f1_score(double precision, double recall) noexcept {
  if (precision + recall == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return 2.0 * precision * recall / (precision + recall);
}

namespace detail {

/// Detection indices of one class ordered by score descending, input order on ties.
inline std::vector<std::size_t> ranked_indices(const std::vector<Detection>& dets, CategoryId class_id) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < dets.size(); ++i)
    if (dets[i].category_id == class_id) idx.push_back(i);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  return idx;
}

}  // namespace detail

/// Greedy matching per (image, class). Detections are visited by descending score;
/// each claims the still-unmatched ground truth of its image with the highest IoU,
/// provided that IoU reaches iou_thr. Equal IoUs go to the lower annotation id.
inline MatchOutcome match_detections(const std::vector<Detection>& dets, const std::vector<Annotation>& gts,
                                     CategoryId class_id, double iou_thr) {
  if (!(iou_thr > 0.0 && iou_thr <= 1.0)) throw ArgumentError("iou threshold must lie in (0, 1]");
  std::unordered_map<ImageId, std::vector<const Annotation*>> by_image;
  MatchOutcome out;
  for (const auto& g : gts) {
    if (g.category_id != class_id) continue;
    by_image[g.image_id].push_back(&g);
    ++out.gt_count;
  }
  for (auto& [_, v] : by_image)
    std::sort(v.begin(), v.end(), [](const Annotation* a, const Annotation* b) { return a->id < b->id; });

  std::unordered_map<ImageId, std::vector<bool>> taken;
  for (const auto& [img, v] : by_image) taken[img].assign(v.size(), false);

  std::size_t tp = 0;
  for (const auto i : detail::ranked_indices(dets, class_id)) {
    const auto& d = dets[i];
    MatchOutcome::Entry e{i, d.score, false, std::nullopt};
    if (auto it = by_image.find(d.image_id); it != by_image.end()) {
      auto& used = taken[d.image_id];
      double best = -1.0;
      std::size_t best_k = 0;
      for (std::size_t k = 0; k < it->second.size(); ++k) {
        if (used[k]) continue;
        const double v = iou(d.bbox, it->second[k]->bbox);
        if (v > best) best = v, best_k = k;
      }
      if (best >= iou_thr) {
        used[best_k] = true;
        e.tp = true;
        e.matched_gt_id = it->second[best_k]->id;
        ++tp;
      }
    }
    out.entries.push_back(e);
  }
  out.fn_count = out.gt_count - tp;
  return out;
}

/// AP from a matched, score-ordered outcome; nullopt when the class has no ground truth.
inline std::optional<double> average_precision(const MatchOutcome& m, Interpolation interp = Interpolation::coco101) {
  if (m.gt_count == 0) return std::nullopt;
  const std::size_t n = m.entries.size();
  std::vector<std::size_t> tp_cum(n);
  std::vector<double> precision(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += m.entries[i].tp ? 1 : 0;
    tp_cum[i] = tp;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  // Envelope: best precision achievable at this recall or beyond.
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);

  const auto npos = m.gt_count;
  if (interp == Interpolation::coco101) {
    double sum = 0.0;
    std::size_t j = 0;
    for (std::size_t r = 0; r <= 100; ++r) {
      // first point whose recall tp_cum/npos reaches r/100
      while (j < n && tp_cum[j] * 100 < r * npos) ++j;
      if (j < n) sum += precision[j];
    }
    return sum / 101.0;
  }
  double area = 0.0;
  std::size_t prev_tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (tp_cum[i] > prev_tp) {
      area += precision[i] * static_cast<double>(tp_cum[i] - prev_tp) / static_cast<double>(npos);
      prev_tp = tp_cum[i];
    }
  }
  return area;
}

inline std::optional<double> average_precision(const std::vector<Detection>& dets, const std::vector<Annotation>& gts,
                                               CategoryId class_id, double iou_thr,
                                               Interpolation interp = Interpolation::coco101) {
  return average_precision(match_detections(dets, gts, class_id, iou_thr), interp);
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
inline std::vector<double> coco_iou_thresholds() {
  std::vector<double> t;
  for (int k = 0; k < 10; ++k) t.push_back((50.0 + 5.0 * k) / 100.0);
  return t;
}

namespace detail {

struct OperatingPointResult {
  double precision = 0.0, recall = 0.0, threshold = 1.0;
};

inline OperatingPointResult operating_point(const std::vector<MatchOutcome>& per_class, std::size_t total_gt,
                                            const EvalConfig& cfg) {
  struct Scored {
    double score;
    bool tp;
  };
  std::vector<Scored> all;
  for (const auto& m : per_class)
    for (const auto& e : m.entries) all.push_back({e.score, e.tp});
  std::stable_sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });

  auto pr = [&](std::size_t tp, std::size_t kept) {
    const double p = kept == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(kept);
    const double r = total_gt == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(total_gt);
    return std::pair{p, r};
  };

  OperatingPointResult best;
  if (cfg.operating_point == OperatingPoint::fixed_confidence) {
    std::size_t tp = 0, kept = 0;
    for (const auto& s : all)
      if (s.score >= cfg.fixed_confidence) ++kept, tp += s.tp ? 1 : 0;
    std::tie(best.precision, best.recall) = pr(tp, kept);
    best.threshold = cfg.fixed_confidence;
    return best;
  }
  if (all.empty()) return best;

  double best_f1 = -1.0;
  bool have = false;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    tp += all[i].tp ? 1 : 0;
    if (i + 1 < all.size() && all[i + 1].score == all[i].score) continue;  // close the tie group first
    const auto [p, r] = pr(tp, i + 1);
    const double f = f1_score(p, r);
    const double key = std::isnan(f) ? -1.0 : f;
    // Strict improvement only: on ties the earlier, higher threshold stays.
    if (!have || key > best_f1) {
      best_f1 = key;
      best = {p, r, all[i].score};
      have = true;
    }
  }
  return best;
}

}  // namespace detail

/// Full evaluation over the test images. Every detection must reference a test image.
inline MetricsReport evaluate(const std::vector<Detection>& dets, const DatasetCOCO& gt,
                              const std::set<ImageId>& test_ids, const EvalConfig& cfg = {},
                              const Executor& exec = Executor::serial()) {
  for (const auto id : test_ids)
    if (!gt.find_image(id)) throw ValidationError("test image " + std::to_string(id) + " is not in the dataset");
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (!test_ids.count(dets[i].image_id))
      throw LeakageError("detection " + std::to_string(i) + " references non-test image " +
                         std::to_string(dets[i].image_id));
    validate(dets[i]);
  }
  std::vector<Annotation> gts;
  for (const auto& a : gt.annotations)
    if (test_ids.count(a.image_id)) gts.push_back(a);

  const auto thresholds = coco_iou_thresholds();
  const std::size_t nc = static_cast<std::size_t>(kNumCategories);
  std::vector<MatchOutcome> outcomes(thresholds.size() * nc);
  exec.parallel_for(outcomes.size(), [&](std::size_t k) {
    outcomes[k] = match_detections(dets, gts, static_cast<CategoryId>(k % nc), thresholds[k / nc]);
  });

  MetricsReport rep;
  double sum_over_thresholds = 0.0;
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    double sum = 0.0;
    std::size_t classes = 0;
    for (std::size_t c = 0; c < nc; ++c) {
      const auto ap = average_precision(outcomes[t * nc + c], cfg.interpolation);
      if (!ap) continue;
      sum += *ap;
      ++classes;
      if (t == 0) rep.per_class_ap50[static_cast<CategoryId>(c)] = *ap;
    }
    const double map = classes == 0 ? 0.0 : sum / static_cast<double>(classes);
    if (t == 0) rep.map50 = map;
    sum_over_thresholds += map;
  }
  rep.map5095 = sum_over_thresholds / static_cast<double>(thresholds.size());

  const std::vector<MatchOutcome> at50(outcomes.begin(), outcomes.begin() + static_cast<std::ptrdiff_t>(nc));
  const auto op = detail::operating_point(at50, gts.size(), cfg);
  rep.precision = op.precision;
  rep.recall = op.recall;
  rep.confidence_threshold = op.threshold;
  rep.f1 = f1_score(rep.precision, rep.recall);
  return rep;
}

/// Percentage rounded to one decimal (77.34% -> 77.3).
inline double percent1(double fraction) { return std::round(fraction * 1000.0) / 10.0; }

/// Table formatting: percentages at one decimal, F1 "NaN" when undefined.
inline nlohmann::ordered_json metrics_table_json(const MetricsReport& m) {
  nlohmann::ordered_json j;
  j["map50"] = percent1(m.map50);
  j["map5095"] = percent1(m.map5095);
  j["precision"] = percent1(m.precision);
  j["recall"] = percent1(m.recall);
  j["f1"] = std::isnan(m.f1) ? nlohmann::ordered_json("NaN") : nlohmann::ordered_json(percent1(m.f1));
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (const auto& [c, ap] : m.per_class_ap50) per[std::string(category_name(c))] = percent1(ap);
  j["per_class_ap50"] = per;
  return j;
}

/// Lossless form used for persisted round state; F1 is null when NaN.
inline nlohmann::ordered_json metrics_raw_json(const MetricsReport& m) {
  nlohmann::ordered_json j;
  j["map50"] = m.map50;
  j["map5095"] = m.map5095;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = std::isnan(m.f1) ? nlohmann::ordered_json() : nlohmann::ordered_json(m.f1);
  j["confidence_threshold"] = m.confidence_threshold;
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (const auto& [c, ap] : m.per_class_ap50) per[std::to_string(c)] = ap;
  j["per_class_ap50"] = per;
  return j;
}

inline MetricsReport metrics_from_raw_json(const nlohmann::json& j) {
  MetricsReport m;
  m.map50 = j.at("map50").get<double>();
  m.map5095 = j.at("map5095").get<double>();
  m.precision = j.at("precision").get<double>();
  m.recall = j.at("recall").get<double>();
  m.f1 = j.at("f1").is_null() ? std::numeric_limits<double>::quiet_NaN() : j.at("f1").get<double>();
  m.confidence_threshold = j.value("confidence_threshold", 1.0);
  for (auto it = j.at("per_class_ap50").begin(); it != j.at("per_class_ap50").end(); ++it)
    m.per_class_ap50[std::stoi(it.key())] = it.value().get<double>();
  return m;
}

}  // namespace scriptorium
