#pragma once

#include <algorithm>
#include <string>
#include <tuple>
#include <vector>

#include "scriptorium/merge/parsers.hpp"

namespace scriptorium {

struct MatchedPair {
  std::string left_id;
  std::string right_id;
  double iou = 0.0;

  friend bool operator==(const MatchedPair&, const MatchedPair&) = default;
};

struct MatchReport {
  std::vector<MatchedPair> pairs;  // in acceptance order
  std::vector<std::string> unmatched_left;
  std::vector<std::string> unmatched_right;

  friend bool operator==(const MatchReport&, const MatchReport&) = default;
};

/// Greedy one-to-one matching. All cross pairs with IoU >= min_iou are ranked by IoU
/// descending, then left native_id, then right native_id; a pair is accepted when
/// neither side is taken yet. Unmatched ids keep their input order.
inline MatchReport match_boxes(const std::vector<SourceObject>& left, const std::vector<SourceObject>& right,
                               double min_iou) {
  if (!(min_iou > 0.0 && min_iou <= 1.0)) throw ArgumentError("min_iou must lie in (0, 1]");
  struct Candidate {
    double iou;
    std::size_t l, r;
  };
  std::vector<Candidate> cands;
  for (std::size_t i = 0; i < left.size(); ++i)
    for (std::size_t j = 0; j < right.size(); ++j) {
      const double v = iou(left[i].bbox, right[j].bbox);
      if (v >= min_iou) cands.push_back({v, i, j});
    }
  std::sort(cands.begin(), cands.end(), [&](const Candidate& a, const Candidate& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    return std::tie(left[a.l].native_id, right[a.r].native_id) < std::tie(left[b.l].native_id, right[b.r].native_id);
  });

  std::vector<bool> left_taken(left.size(), false), right_taken(right.size(), false);
  MatchReport report;
  for (const auto& c : cands) {
    if (left_taken[c.l] || right_taken[c.r]) continue;
    left_taken[c.l] = right_taken[c.r] = true;
    report.pairs.push_back({left[c.l].native_id, right[c.r].native_id, c.iou});
  }
  for (std::size_t i = 0; i < left.size(); ++i)
    if (!left_taken[i]) report.unmatched_left.push_back(left[i].native_id);
  for (std::size_t j = 0; j < right.size(); ++j)
    if (!right_taken[j]) report.unmatched_right.push_back(right[j].native_id);
  return report;
}

}  // namespace scriptorium
