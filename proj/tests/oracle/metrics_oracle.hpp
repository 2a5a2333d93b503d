#pragma once

// Brute-force detection metrics used only to cross-check scriptorium::evaluate.
// Shares nothing with the library beyond the plain data types: its own IoU, a
// selection-sort processing order, a direct 101-point sum without a precomputed
// envelope, and an operating point found by re-matching from scratch at every
// candidate confidence threshold.

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "scriptorium/core/types.hpp"

namespace oracle {

using scriptorium::Annotation;
using scriptorium::Detection;

struct Report {
  double map50 = 0, map5095 = 0, precision = 0, recall = 0, f1 = 0;
};

inline double box_iou(const scriptorium::BBox& a, const scriptorium::BBox& b) {
  const double ix0 = std::max(a.x(), b.x()), iy0 = std::max(a.y(), b.y());
  const double ix1 = std::min(a.x() + a.w(), b.x() + b.w()), iy1 = std::min(a.y() + a.h(), b.y() + b.h());
  if (ix1 <= ix0 || iy1 <= iy0) return 0.0;
  const double inter = (ix1 - ix0) * (iy1 - iy0);
  return inter / (a.w() * a.h() + b.w() * b.h() - inter);
}

/// TP flags of the class's detections with score >= min_score, in processing order.
inline std::vector<std::pair<double, bool>> match(const std::vector<Detection>& dets, const std::vector<Annotation>& gts,
                                                  int cls, double thr, double min_score = -1.0) {
  std::vector<bool> done(dets.size(), false);
  std::vector<bool> used(gts.size(), false);
  std::vector<std::pair<double, bool>> out;
  for (;;) {
    int pick = -1;
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (done[i] || dets[i].category_id != cls || dets[i].score < min_score) continue;
      if (pick < 0 || dets[i].score > dets[static_cast<std::size_t>(pick)].score) pick = static_cast<int>(i);
    }
    if (pick < 0) break;
    const auto& d = dets[static_cast<std::size_t>(pick)];
    done[static_cast<std::size_t>(pick)] = true;
    int best = -1;
    double best_iou = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].category_id != cls || gts[g].image_id != d.image_id) continue;
      const double v = box_iou(d.bbox, gts[g].bbox);
      const bool better = v > best_iou || (v == best_iou && best >= 0 && gts[g].id < gts[static_cast<std::size_t>(best)].id);
      if (better) best_iou = v, best = static_cast<int>(g);
    }
    const bool tp = best >= 0 && best_iou >= thr;
    if (tp) used[static_cast<std::size_t>(best)] = true;
    out.emplace_back(d.score, tp);
  }
  return out;
}

inline double ap101(const std::vector<std::pair<double, bool>>& seq, std::size_t npos) {
  std::vector<double> prec, rec;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    tp += seq[i].second ? 1 : 0;
    prec.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    rec.push_back(static_cast<double>(tp) / static_cast<double>(npos));
  }
  double sum = 0;
  for (int i = 0; i <= 100; ++i) {
    const double r = i / 100.0;
    double m = 0;
    for (std::size_t j = 0; j < prec.size(); ++j)
      if (rec[j] >= r) m = std::max(m, prec[j]);
    sum += m;
  }
  return sum / 101.0;
}

inline Report evaluate(const std::vector<Detection>& dets, const std::vector<Annotation>& gts) {
  Report rep;
  double total = 0;
  for (int t = 0; t < 10; ++t) {
    const double thr = (50.0 + 5.0 * t) / 100.0;
    double sum = 0;
    int n = 0;
    for (int c = 0; c < scriptorium::kNumCategories; ++c) {
      std::size_t npos = 0;
      for (const auto& g : gts) npos += g.category_id == c ? 1 : 0;
      if (npos == 0) continue;
      sum += ap101(match(dets, gts, c, thr), npos);
      ++n;
    }
    const double m = n == 0 ? 0.0 : sum / n;
    if (t == 0) rep.map50 = m;
    total += m;
  }
  rep.map5095 = total / 10.0;

  std::set<double> scores;
  for (const auto& d : dets) scores.insert(d.score);
  double best_key = -2;
  rep.precision = rep.recall = 0;
  for (auto it = scores.rbegin(); it != scores.rend(); ++it) {
    std::size_t tp = 0, kept = 0;
    for (int c = 0; c < scriptorium::kNumCategories; ++c)
      for (const auto& [s, ok] : match(dets, gts, c, 0.5, *it)) ++kept, tp += ok ? 1 : 0;
    const double p = kept ? static_cast<double>(tp) / kept : 0.0;
    const double r = gts.empty() ? 0.0 : static_cast<double>(tp) / gts.size();
    const double f = p + r == 0 ? -1.0 : 2 * p * r / (p + r);
    if (f > best_key) best_key = f, rep.precision = p, rep.recall = r;
  }
  rep.f1 = rep.precision + rep.recall == 0 ? std::numeric_limits<double>::quiet_NaN()
                                           : 2 * rep.precision * rep.recall / (rep.precision + rep.recall);
  return rep;
}

}  // namespace oracle
