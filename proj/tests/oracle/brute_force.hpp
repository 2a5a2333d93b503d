#pragma once

// Slow reference implementations for box matching, clustering, and selection.

#include <algorithm>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "scriptorium/al/selection.hpp"
#include "scriptorium/merge/match.hpp"
#include "scriptorium/split/split.hpp"

namespace oracle {

/// Repeatedly accepts the best remaining admissible pair until none is left.
inline scriptorium::MatchReport greedy_match(const std::vector<scriptorium::SourceObject>& left,
                                             const std::vector<scriptorium::SourceObject>& right, double min_iou) {
  std::vector<bool> lt(left.size()), rt(right.size());
  scriptorium::MatchReport rep;
  for (;;) {
    int bl = -1, br = -1;
    double bv = -1;
    for (std::size_t i = 0; i < left.size(); ++i)
      for (std::size_t j = 0; j < right.size(); ++j) {
        if (lt[i] || rt[j]) continue;
        const double v = scriptorium::iou(left[i].bbox, right[j].bbox);
        if (v < min_iou) continue;
        const bool better = v > bv || (v == bv && std::tie(left[i].native_id, right[j].native_id) <
                                                      std::tie(left[static_cast<std::size_t>(bl)].native_id,
                                                               right[static_cast<std::size_t>(br)].native_id));
        if (better) bv = v, bl = static_cast<int>(i), br = static_cast<int>(j);
      }
    if (bl < 0) break;
    lt[static_cast<std::size_t>(bl)] = rt[static_cast<std::size_t>(br)] = true;
    rep.pairs.push_back({left[static_cast<std::size_t>(bl)].native_id, right[static_cast<std::size_t>(br)].native_id, bv});
  }
  for (std::size_t i = 0; i < left.size(); ++i)
    if (!lt[i]) rep.unmatched_left.push_back(left[i].native_id);
  for (std::size_t j = 0; j < right.size(); ++j)
    if (!rt[j]) rep.unmatched_right.push_back(right[j].native_id);
  return rep;
}

/// Agglomeration that recomputes every inter-cluster single-linkage distance from the
/// raw point distances at each step.
inline std::vector<scriptorium::MergeStep> cluster_merges(const std::vector<scriptorium::FeatureVector>& feats,
                                                          std::size_t k) {
  std::vector<std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < feats.size(); ++i) clusters.push_back({i});
  auto name = [&](const std::vector<std::size_t>& c) {
    auto m = std::numeric_limits<scriptorium::ImageId>::max();
    for (auto i : c) m = std::min(m, feats[i].image_id);
    return m;
  };
  std::vector<scriptorium::MergeStep> log;
  while (clusters.size() > k) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t ba = 0, bb = 0;
    std::pair<scriptorium::ImageId, scriptorium::ImageId> best_key{};
    for (std::size_t a = 0; a < clusters.size(); ++a)
      for (std::size_t b = 0; b < clusters.size(); ++b) {
        if (a == b) continue;
        const auto na = name(clusters[a]), nb = name(clusters[b]);
        if (na > nb) continue;
        double d = std::numeric_limits<double>::infinity();
        for (auto i : clusters[a])
          for (auto j : clusters[b]) d = std::min(d, scriptorium::cosine_distance(feats[i], feats[j]));
        const std::pair key{na, nb};
        if (d < best || (d == best && key < best_key)) best = d, ba = a, bb = b, best_key = key;
      }
    clusters[ba].insert(clusters[ba].end(), clusters[bb].begin(), clusters[bb].end());
    log.push_back({best_key.first, best_key.second, best, clusters[ba].size()});
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bb));
  }
  return log;
}

/// k smallest by (uncertainty, page), picked one at a time.
inline std::vector<scriptorium::ImageId> k_smallest(const std::vector<scriptorium::ImageId>& ids,
                                                    const std::map<scriptorium::ImageId, std::int64_t>& page,
                                                    const std::map<scriptorium::ImageId, double>& score, std::size_t k) {
  std::vector<scriptorium::ImageId> left = ids, out;
  while (out.size() < k && !left.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < left.size(); ++i) {
      const auto a = std::pair{score.at(left[i]), page.at(left[i])};
      const auto b = std::pair{score.at(left[best]), page.at(left[best])};
      if (a < b) best = i;
    }
    out.push_back(left[best]);
    left.erase(left.begin() + static_cast<std::ptrdiff_t>(best));
  }
  return out;
}

}  // namespace oracle
