#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "scriptorium/al/selection.hpp"
#include "scriptorium/core/coco_json.hpp"
#include "scriptorium/core/executor.hpp"
#include "scriptorium/detector/detector.hpp"
#include "scriptorium/eval/metrics.hpp"
#include "scriptorium/split/split.hpp"

namespace scriptorium {

struct ExperimentConfig {
  Strategy strategy = Strategy::uncertainty;
  std::size_t rounds = 20;
  std::size_t batch_size = 15;
  std::size_t seed_count = 1;
  SplitResult split;
  DetectorSpec detector;
  /// Seed handed to the synthetic detector (overrides the detector config's own seed).
  std::uint64_t rng_seed = 0;
  EvalConfig eval;

  void check() const {
    if (rounds < 1) throw ValidationError("rounds must be at least 1");
    if (batch_size < 1) throw ValidationError("batch size must be at least 1");
    if (seed_count < 1) throw ValidationError("seed count must be at least 1");
    if (split.train_ids.empty()) throw ValidationError("train pool is empty");
  }
};

struct RoundState {
  std::size_t round = 0;
  std::vector<ImageId> labeled_ids;    // in labeling order
  std::vector<ImageId> unlabeled_ids;  // ascending page index
  MetricsReport metrics;
  std::vector<SelectionEntry> selection_trace;  // chosen at the end of this round
};

/// Hooks for callers that need more control than the config offers.
struct RunOptions {
  const Executor* executor = &Executor::serial();
  /// Stop cleanly once this round has been persisted (simulates an interruption).
  std::optional<std::size_t> stop_after_round;
  /// Overrides make_detector, e.g. to inject a fake in tests.
  std::function<std::unique_ptr<Detector>(const DetectorSpec&, const DatasetCOCO&)> detector_factory;
  std::function<void(const RoundState&)> on_round;
};

inline nlohmann::ordered_json experiment_config_json(const ExperimentConfig& cfg) {
  auto spec = cfg.detector;
  if (spec.kind == DetectorKind::synthetic) spec.synthetic.rng_seed = cfg.rng_seed;
  return {{"strategy", std::string(to_string(cfg.strategy))},
          {"rounds", cfg.rounds},
          {"batch_size", cfg.batch_size},
          {"seed_count", cfg.seed_count},
          {"rng_seed", cfg.rng_seed},
          {"detector", detector_spec_to_json(spec)},
          {"eval",
           {{"interpolation", cfg.eval.interpolation == Interpolation::coco101 ? "coco101" : "all_points"},
            {"operating_point", cfg.eval.operating_point == OperatingPoint::max_f1 ? "max_f1" : "fixed_confidence"},
            {"fixed_confidence", cfg.eval.fixed_confidence}}},
          {"test_ids", cfg.split.test_ids},
          {"train_ids", cfg.split.train_ids}};
}

inline nlohmann::ordered_json round_state_json(const RoundState& s, Strategy strategy) {
  nlohmann::ordered_json trace = nlohmann::ordered_json::array();
  for (const auto& e : s.selection_trace)
    trace.push_back({{"image_id", e.image_id}, {"score", e.score ? nlohmann::ordered_json(*e.score) : nlohmann::ordered_json()}});
  return {{"round", s.round},
          {"status", "complete"},
          {"strategy", std::string(to_string(strategy))},
          {"labeled_ids", s.labeled_ids},
          {"unlabeled_ids", s.unlabeled_ids},
          {"metrics", metrics_raw_json(s.metrics)},
          {"selection_trace", trace}};
}

inline RoundState round_state_from_json(const nlohmann::json& j) {
  RoundState s;
  try {
    if (j.at("status").get<std::string>() != "complete") throw ValidationError("round state is not complete");
    s.round = j.at("round").get<std::size_t>();
    s.labeled_ids = j.at("labeled_ids").get<std::vector<ImageId>>();
    s.unlabeled_ids = j.at("unlabeled_ids").get<std::vector<ImageId>>();
    s.metrics = metrics_from_raw_json(j.at("metrics"));
    for (const auto& e : j.at("selection_trace"))
      s.selection_trace.push_back(
          {e.at("image_id").get<ImageId>(), e.at("score").is_null() ? std::nullopt : std::optional(e.at("score").get<double>())});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad round state: ") + e.what());
  }
  return s;
}

inline std::filesystem::path round_dir(const std::filesystem::path& run_dir, std::size_t r) {
  return run_dir / ("round_" + std::to_string(r));
}

inline std::string format_fraction(double v) {
  if (std::isnan(v)) return "NaN";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string metrics_csv(const std::vector<RoundState>& states) {
  std::string out = "round,images,map50,map5095,precision,recall,f1\n";
  for (const auto& s : states) {
    out += std::to_string(s.round) + "," + std::to_string(s.labeled_ids.size()) + "," + format_fraction(s.metrics.map50) +
           "," + format_fraction(s.metrics.map5095) + "," + format_fraction(s.metrics.precision) + "," +
           format_fraction(s.metrics.recall) + "," + format_fraction(s.metrics.f1) + "\n";
  }
  return out;
}

/// Completed rounds found in a run directory, in order, stopping at the first gap.
inline std::vector<RoundState> load_round_states(const std::filesystem::path& run_dir) {
  std::vector<RoundState> states;
  for (std::size_t r = 0;; ++r) {
    const auto path = round_dir(run_dir, r) / "state.json";
    if (!std::filesystem::exists(path)) break;
    auto s = round_state_from_json(parse_json_text(read_text_file(path), path.string()));
    if (s.round != r) throw ValidationError(path.string() + " records round " + std::to_string(s.round));
    states.push_back(std::move(s));
  }
  return states;
}

namespace detail {

inline nlohmann::ordered_json predictions_json(const PredictionMap& preds) {
  protocol::Predictions msg;
  for (const auto& [id, dets] : preds) msg.items.push_back({id, dets});
  return protocol::to_json(msg).at("items");
}

inline std::vector<protocol::ImageRef> refs_for(const DatasetCOCO& gt, const std::vector<ImageId>& ids) {
  std::vector<protocol::ImageRef> out;
  for (const auto id : ids) out.push_back({id, gt.find_image(id)->file_name});
  return out;
}

inline void remove_all_quiet(const std::filesystem::path& p) {
  std::error_code ec;
  std::filesystem::remove_all(p, ec);
}

}  // namespace detail

/// Runs (or resumes) an experiment in `run_dir`. Each round trains on the labeled set,
/// predicts the unlabeled pool (uncertainty strategy only) and the test set, evaluates,
/// then selects and reveals the next batch. A round is staged in `round_<r>.partial`
/// and renamed into place only when complete; a detector failure leaves it as
/// `round_<r>.failed` and rethrows. Completed rounds found on disk are reused.
inline std::vector<RoundState> run_experiment(const ExperimentConfig& cfg, const DatasetCOCO& gt,
                                              const std::filesystem::path& run_dir, const RunOptions& opts = {}) {
  cfg.check();
  const auto& split = cfg.split;
  std::map<ImageId, std::int64_t> page_of;
  for (const auto id : split.train_ids) {
    const auto* img = gt.find_image(id);
    if (!img) throw ValidationError("train image " + std::to_string(id) + " is not in the ground truth");
    page_of[id] = img->page_index;
  }
  for (const auto id : split.test_ids)
    if (!gt.find_image(id)) throw ValidationError("test image " + std::to_string(id) + " is not in the ground truth");
  const auto by_page = [&](ImageId a, ImageId b) { return page_of.at(a) < page_of.at(b); };
  std::vector<ImageId> pool(split.train_ids.begin(), split.train_ids.end());
  std::sort(pool.begin(), pool.end(), by_page);
  const std::vector<ImageId> test(split.test_ids.begin(), split.test_ids.end());

  std::filesystem::create_directories(run_dir);
  const auto cfg_text = experiment_config_json(cfg).dump(2) + "\n";
  const auto cfg_path = run_dir / "run.json";
  if (std::filesystem::exists(cfg_path)) {
    if (read_text_file(cfg_path) != cfg_text)
      throw ValidationError(run_dir.string() + " holds a run with a different configuration");
  } else {
    write_text_file(cfg_path, cfg_text);
  }

  auto states = load_round_states(run_dir);
  if (states.size() > cfg.rounds) throw ValidationError("run directory has more rounds than configured");

  std::vector<ImageId> labeled;
  if (states.empty()) {
    labeled.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(std::min(cfg.seed_count, pool.size())));
  } else {
    labeled = states.back().labeled_ids;
    for (const auto& e : states.back().selection_trace) labeled.push_back(e.image_id);
  }

  auto spec = cfg.detector;
  if (spec.kind == DetectorKind::synthetic) spec.synthetic.rng_seed = cfg.rng_seed;
  std::unique_ptr<Detector> detector;
  const auto work_dir = std::filesystem::absolute(run_dir / "work");

  for (std::size_t r = states.size(); r < cfg.rounds; ++r) {
    if (opts.stop_after_round && !states.empty() && states.back().round >= *opts.stop_after_round) break;
    const auto final_dir = round_dir(run_dir, r);
    auto staging = final_dir;
    staging += ".partial";
    auto failed = final_dir;
    failed += ".failed";
    detail::remove_all_quiet(staging);
    detail::remove_all_quiet(failed);
    if (std::filesystem::exists(final_dir)) throw ValidationError(final_dir.string() + " exists without a state file");
    std::filesystem::create_directories(staging);

    RoundState st;
    st.round = r;
    st.labeled_ids = labeled;
    const std::set<ImageId> labeled_set(labeled.begin(), labeled.end());
    for (const auto id : pool)
      if (!labeled_set.count(id)) st.unlabeled_ids.push_back(id);
    for (const auto id : labeled)
      if (split.test_ids.count(id)) throw LeakageError("test image " + std::to_string(id) + " entered the labeled set");

    PredictionMap unlabeled_preds, test_preds;
    try {
      if (!detector) detector = opts.detector_factory ? opts.detector_factory(spec, gt) : make_detector(spec, gt, *opts.executor);
      const auto labels_dir = std::filesystem::absolute(staging / "labels");
      write_labels(gt, labeled, labels_dir);
      std::filesystem::create_directories(work_dir);
      detector->train({detail::refs_for(gt, labeled), labels_dir.string(), work_dir.string(), spec.warm_start});
      if (cfg.strategy == Strategy::uncertainty && !st.unlabeled_ids.empty())
        unlabeled_preds = detector->predict(detail::refs_for(gt, st.unlabeled_ids));
      test_preds = detector->predict(detail::refs_for(gt, test));
    } catch (const Error& e) {
      write_text_file(staging / "failure.txt", std::string(e.kind()) + ": " + e.what() + "\n");
      std::filesystem::rename(staging, failed);
      detector.reset();
      throw DetectorError("round " + std::to_string(r) + " failed: " + e.what());
    }

    std::vector<Detection> flat;
    for (const auto& [_, dets] : test_preds) flat.insert(flat.end(), dets.begin(), dets.end());
    st.metrics = evaluate(flat, gt, split.test_ids, cfg.eval, *opts.executor);

    if (r + 1 < cfg.rounds && !st.unlabeled_ids.empty()) {
      st.selection_trace = select_next(st.unlabeled_ids, page_of, unlabeled_preds, cfg.batch_size, cfg.strategy);
      std::vector<ImageId> picked;
      for (const auto& e : st.selection_trace) picked.push_back(e.image_id);
      reveal_labels(picked, gt, split);
    }

    write_text_file(staging / "predictions.json",
                    nlohmann::ordered_json{{"test", detail::predictions_json(test_preds)},
                                           {"unlabeled", detail::predictions_json(unlabeled_preds)}}
                            .dump() +
                        "\n");
    write_text_file(staging / "state.json", round_state_json(st, cfg.strategy).dump(2) + "\n");
    std::filesystem::rename(staging, final_dir);

    for (const auto& e : st.selection_trace) labeled.push_back(e.image_id);
    states.push_back(std::move(st));
    write_text_file(run_dir / "metrics.csv", metrics_csv(states));
    if (opts.on_round) opts.on_round(states.back());
  }
  return states;
}

/// Reads the strategy and completed rounds of an existing run directory.
inline std::pair<Strategy, std::vector<RoundState>> load_run(const std::filesystem::path& run_dir) {
  const auto cfg_path = run_dir / "run.json";
  const auto cfg = parse_json_text(read_text_file(cfg_path), cfg_path.string());
  return {strategy_from_string(cfg.at("strategy").get<std::string>()), load_round_states(run_dir)};
}

}  // namespace scriptorium
