#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "scriptorium/al/experiment.hpp"

namespace scriptorium {

struct StrategyRun {
  Strategy strategy;
  std::vector<RoundState> rounds;
};

struct RenderedReport {
  std::string csv;
  std::string text;
};

namespace detail {

inline std::string percent_cell(double v) {
  if (std::isnan(v)) return "NaN";
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.1f", percent1(v));
  return buf;
}

inline std::array<double, 5> metric_row(const MetricsReport& m) {
  return {m.map50, m.map5095, m.precision, m.recall, m.f1};
}

inline constexpr std::array<const char*, 5> kMetricNames = {"mAP@50", "mAP@50:95", "P", "R", "F1"};

}  // namespace detail

/// Per-round comparison table. With two runs, each metric's best value in a round
/// (compared at the printed one-decimal precision) carries a trailing '*'; ties mark
/// every holder and NaN is never best.
inline RenderedReport render_report(const std::vector<StrategyRun>& runs) {
  if (runs.empty() || runs.size() > 2) throw ArgumentError("report takes one or two strategy runs");
  const auto nrounds = runs.front().rounds.size();
  for (const auto& r : runs)
    if (r.rounds.size() != nrounds) throw ValidationError("strategy runs have different round counts");
  const bool compare = runs.size() == 2;

  std::vector<std::string> header{"Round", "#Images"};
  for (const auto& run : runs)
    for (const auto* m : detail::kMetricNames)
      header.push_back(compare ? std::string(run.strategy == Strategy::uncertainty ? "AL " : "SL ") + m : m);

  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < nrounds; ++i) {
    std::vector<std::string> row{std::to_string(runs.front().rounds[i].round),
                                 std::to_string(runs.front().rounds[i].labeled_ids.size())};
    std::vector<std::array<double, 5>> vals;
    for (const auto& run : runs) vals.push_back(detail::metric_row(run.rounds[i].metrics));
    for (std::size_t s = 0; s < runs.size(); ++s) {
      for (std::size_t k = 0; k < 5; ++k) {
        auto cell = detail::percent_cell(vals[s][k]);
        if (compare && !std::isnan(vals[s][k])) {
          bool best = true;
          for (std::size_t o = 0; o < runs.size(); ++o)
            if (!std::isnan(vals[o][k]) && percent1(vals[o][k]) > percent1(vals[s][k])) best = false;
          if (best) cell += "*";
        }
        row.push_back(std::move(cell));
      }
    }
    rows.push_back(std::move(row));
  }

  RenderedReport out;
  auto emit_csv = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) out.csv += (c ? "," : "") + cells[c];
    out.csv += "\n";
  };
  emit_csv(header);
  for (const auto& r : rows) emit_csv(r);

  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
  }
  auto emit_text = [&](const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) line += "  ";
      line += std::string(width[c] - cells[c].size(), ' ') + cells[c];
    }
    out.text += line + "\n";
  };
  emit_text(header);
  for (const auto& r : rows) emit_text(r);
  return out;
}

}  // namespace scriptorium
