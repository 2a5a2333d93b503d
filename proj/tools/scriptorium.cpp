// scriptorium command-line entry point.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "scriptorium/scriptorium.hpp"

using namespace scriptorium;

namespace {

bool g_log_json = false;

std::string log_text(const std::string& msg) { return g_log_json ? nlohmann::json(msg).dump() : msg; }

template <typename... Args>
void log_info(fmt::format_string<Args...> f, Args&&... args) {
  spdlog::info(log_text(fmt::format(f, std::forward<Args>(args)...)));
}

void setup_logging(const std::string& level) {
  auto logger = spdlog::stderr_logger_st("scriptorium");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(level));
  if (g_log_json)
    spdlog::set_pattern(R"({"time":"%Y-%m-%dT%H:%M:%S.%e","level":"%l","message":%v})");
  else
    spdlog::set_pattern("[%l] %v");
}

void print_error(const std::string& kind, const std::string& message) {
  nlohmann::ordered_json rec;
  rec["level"] = "error";
  rec["kind"] = kind;
  rec["message"] = message;
  std::cerr << rec.dump() << "\n";
}

void require(const std::string& value, const std::string& flag, const std::string& what) {
  if (value.empty()) throw ValidationError("missing required input " + flag + " (" + what + ")");
}

struct EvalFlags {
  std::string interpolation = "coco101";
  std::string operating_point = "max_f1";
  double confidence = 0.25;

  void add(CLI::App* app) {
    app->add_option("--ap-interpolation", interpolation, "AP interpolation: coco101 or all_points")
        ->check(CLI::IsMember({"coco101", "all_points"}))
        ->capture_default_str();
    app->add_option("--operating-point", operating_point, "P/R/F1 operating point: max_f1 or fixed")
        ->check(CLI::IsMember({"max_f1", "fixed"}))
        ->capture_default_str();
    app->add_option("--confidence", confidence, "Confidence threshold for --operating-point fixed")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
  }

  EvalConfig config() const {
    EvalConfig c;
    c.interpolation = interpolation == "all_points" ? Interpolation::all_points : Interpolation::coco101;
    c.operating_point = operating_point == "fixed" ? OperatingPoint::fixed_confidence : OperatingPoint::max_f1;
    c.fixed_confidence = confidence;
    return c;
  }
};

// ---- merge

struct MergeArgs {
  std::string pagexml, mei, svg, images, config, out, report;
};

void cmd_merge(const MergeArgs& a, const Executor& exec) {
  require(a.images, "--images", "image manifest");
  require(a.out, "--out", "output COCO file");
  if (a.pagexml.empty() && a.mei.empty() && a.svg.empty())
    throw ValidationError("missing required input: at least one of --pagexml, --mei, --svg");
  MergeConfig cfg;
  if (!a.config.empty()) cfg = merge_config_from_json(parse_json_text(read_text_file(a.config), a.config));
  const auto images = read_image_manifest(a.images);
  const auto pages = load_page_sources(images, a.pagexml, a.mei, a.svg);
  const auto res = merge_sources(pages, cfg, exec);
  write_coco(res.dataset, a.out);
  std::size_t warnings = 0;
  for (const auto& p : res.pages) warnings += p.pagexml_warnings.size() + p.mei_warnings.size() + p.svg_warnings.size();
  if (!a.report.empty()) write_text_file(a.report, merge_report_json(res).dump(2) + "\n");
  log_info("merged {} pages into {} annotations ({} warnings)", res.pages.size(), res.dataset.annotations.size(),
           warnings);
}

// ---- split

struct SplitArgs {
  std::string features, out;
  double ratio = 0.2;
};

void cmd_split(const SplitArgs& a, const Executor& exec) {
  require(a.features, "--features", "feature vectors JSONL");
  require(a.out, "--out", "output split file");
  const auto feats = read_features(a.features);
  const auto s = make_split(feats, a.ratio, exec);
  write_text_file(a.out, split_to_json(s).dump(2) + "\n");
  log_info("split {} images into {} test / {} train", feats.size(), s.test_ids.size(), s.train_ids.size());
}

// ---- run

struct RunArgs {
  std::string strategy, gt, split, detector, out;
  std::size_t rounds = 20, batch = 15, seed_count = 1;
  std::uint64_t rng_seed = 0;
  EvalFlags eval;
};

void cmd_run(const RunArgs& a, const Executor& exec) {
  require(a.strategy, "--strategy", "al or sl");
  require(a.gt, "--gt", "ground-truth COCO file");
  require(a.split, "--split", "split file");
  require(a.detector, "--detector", "detector config");
  require(a.out, "--out", "run directory");
  ExperimentConfig cfg;
  cfg.strategy = strategy_from_string(a.strategy);
  cfg.rounds = a.rounds;
  cfg.batch_size = a.batch;
  cfg.seed_count = a.seed_count;
  cfg.rng_seed = a.rng_seed;
  cfg.eval = a.eval.config();
  cfg.detector = detector_spec_from_json(parse_json_text(read_text_file(a.detector), a.detector));
  cfg.split = read_split(a.split);
  const auto gt = read_coco(a.gt).dataset;
  RunOptions opts;
  opts.executor = &exec;
  opts.on_round = [](const RoundState& s) {
    log_info("round {}: {} labeled, mAP@50 {:.1f}, F1 {:.1f}", s.round, s.labeled_ids.size(),
             percent1(s.metrics.map50), percent1(s.metrics.f1));
  };
  const auto states = run_experiment(cfg, gt, a.out, opts);
  log_info("run complete: {} rounds in {}", states.size(), a.out);
}

// ---- eval

struct EvalArgs {
  std::string gt, dets, test_ids, out;
  EvalFlags eval;
};

std::set<ImageId> read_test_ids(const std::string& path) {
  const auto j = parse_json_text(read_text_file(path), path);
  if (j.is_object()) return read_split(path).test_ids;
  if (!j.is_array()) throw FormatError(path + ": expected an array of image ids or a split file");
  std::set<ImageId> ids;
  for (const auto& v : j) {
    if (!v.is_number_integer()) throw FormatError(path + ": image ids must be integers");
    ids.insert(v.get<ImageId>());
  }
  return ids;
}

std::vector<Detection> read_detections(const std::string& path) {
  const auto j = parse_json_text(read_text_file(path), path);
  if (!j.is_array()) throw FormatError(path + ": expected an array of detections");
  std::vector<Detection> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto where = path + "[" + std::to_string(i) + "]";
    if (!j[i].is_object() || !j[i].contains("image_id") || !j[i]["image_id"].is_number_integer())
      throw FormatError(where + ": missing integer image_id");
    out.push_back(protocol::detail::detection_from(j[i], j[i]["image_id"].get<ImageId>(), where));
  }
  return out;
}

void cmd_eval(const EvalArgs& a, const Executor& exec) {
  require(a.gt, "--gt", "ground-truth COCO file");
  require(a.dets, "--dets", "detections file");
  require(a.test_ids, "--test-ids", "test id list or split file");
  require(a.out, "--out", "output metrics file");
  const auto gt = read_coco(a.gt).dataset;
  const auto m = evaluate(read_detections(a.dets), gt, read_test_ids(a.test_ids), a.eval.config(), exec);
  write_text_file(a.out, metrics_table_json(m).dump(2) + "\n");
  log_info("mAP@50 {:.1f}, mAP@50:95 {:.1f}", percent1(m.map50), percent1(m.map5095));
}

// ---- report

struct ReportArgs {
  std::vector<std::string> runs;
  std::string out;
};

void cmd_report(const ReportArgs& a) {
  if (a.runs.empty()) throw ValidationError("missing required input --runs (run directories)");
  require(a.out, "--out", "output CSV file");
  std::vector<StrategyRun> runs;
  for (const auto& dir : a.runs) {
    auto [strategy, states] = load_run(dir);
    runs.push_back({strategy, std::move(states)});
  }
  const auto r = render_report(runs);
  write_text_file(a.out, r.csv);
  std::cout << r.text << std::flush;
}

// ---- synth

struct SynthArgs {
  std::size_t images = 340;
  std::uint64_t seed = 1;
  std::string gt, features;
};

void cmd_synth(const SynthArgs& a) {
  require(a.gt, "--gt", "output COCO file");
  synth::DatasetParams dp;
  dp.images = a.images;
  dp.seed = a.seed;
  const auto ds = synth::generate_dataset(dp);
  write_coco(ds, a.gt);
  if (!a.features.empty()) write_text_file(a.features, features_to_jsonl(synth::generate_features(ds, {})));
  log_info("wrote {} images, {} annotations", ds.images.size(), ds.annotations.size());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scriptorium: annotation fusion, dataset splitting and active-learning experiments for historical music manuscripts"};
  app.name("scriptorium");
  app.set_config("--config", "", "Config file (TOML/INI, one [section] per subcommand); env SCRIPTORIUM_CONFIG")
      ->envname("SCRIPTORIUM_CONFIG");
  std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
  std::string log_level = "info";
  app.add_option("--jobs,-j", jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--log-level", log_level, "Log level: trace, debug, info, warn, error, off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}))
      ->capture_default_str();
  app.add_flag("--log-json", g_log_json, "Emit log records as JSON lines");
  app.require_subcommand(1);

  MergeArgs merge;
  auto* m = app.add_subcommand("merge", "Fuse PageXML, MEI and SVG annotations into one COCO dataset");
  m->add_option("--pagexml", merge.pagexml, "Directory of PageXML files");
  m->add_option("--mei", merge.mei, "Directory of MEI files");
  m->add_option("--svg", merge.svg, "Directory of SVG files");
  m->add_option("--images", merge.images, "Image manifest (COCO-style JSON with an images array)");
  m->add_option("--config,--merge-config", merge.config, "Merge config JSON (min_iou, kind_map)");
  m->add_option("--out", merge.out, "Output COCO file");
  m->add_option("--report", merge.report, "Optional per-page merge report JSON");

  SplitArgs split;
  auto* s = app.add_subcommand("split", "Clustering-based test/train split");
  s->add_option("--features", split.features, "Feature vectors, one JSON object per line");
  s->add_option("--ratio", split.ratio, "Test fraction in (0, 1)")->capture_default_str();
  s->add_option("--out", split.out, "Output split file");

  RunArgs run;
  auto* r = app.add_subcommand("run", "Run or resume an AL/SL experiment");
  r->add_option("--strategy", run.strategy, "Selection strategy: al or sl")->check(CLI::IsMember({"al", "sl"}));
  r->add_option("--gt", run.gt, "Ground-truth COCO file");
  r->add_option("--split", run.split, "Split file");
  r->add_option("--detector", run.detector, "Detector config JSON");
  r->add_option("--rounds", run.rounds, "Number of rounds")->capture_default_str();
  r->add_option("--batch", run.batch, "Images revealed per round")->capture_default_str();
  r->add_option("--seed-count", run.seed_count, "Images labeled before round 0")->capture_default_str();
  r->add_option("--rng-seed", run.rng_seed, "Seed for the synthetic detector")->capture_default_str();
  r->add_option("--out", run.out, "Run directory");
  run.eval.add(r);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate detections against ground truth");
  e->add_option("--gt", ev.gt, "Ground-truth COCO file");
  e->add_option("--dets", ev.dets, "Detections JSON array");
  e->add_option("--test-ids", ev.test_ids, "JSON array of image ids, or a split file");
  e->add_option("--out", ev.out, "Output metrics JSON");
  ev.eval.add(e);

  ReportArgs rep;
  auto* p = app.add_subcommand("report", "Render per-round tables from one or two run directories");
  p->add_option("--runs", rep.runs, "Run directories (one per strategy)")->expected(1, 2);
  p->add_option("--out", rep.out, "Output CSV file");

  SynthArgs syn;
  auto* y = app.add_subcommand("synth", "Generate a synthetic dataset and features for demos");
  y->add_option("--images", syn.images, "Number of images")->capture_default_str();
  y->add_option("--seed", syn.seed, "Generator seed")->capture_default_str();
  y->add_option("--gt", syn.gt, "Output COCO file");
  y->add_option("--features", syn.features, "Optional output feature JSONL");

  if (argc <= 1) {
    std::cerr << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& ok) {
    return app.exit(ok);
  } catch (const CLI::ParseError& err) {
    print_error("usage", err.what());
    std::cerr << "run 'scriptorium --help' for usage\n";
    return 2;
  }

  setup_logging(log_level);
  const Executor exec(jobs);
  try {
    if (*m) cmd_merge(merge, exec);
    if (*s) cmd_split(split, exec);
    if (*r) cmd_run(run, exec);
    if (*e) cmd_eval(ev, exec);
    if (*p) cmd_report(rep);
    if (*y) cmd_synth(syn);
  } catch (const Error& err) {
    print_error(err.kind(), err.what());
    return 1;
  } catch (const std::exception& err) {
    print_error("internal", err.what());
    return 1;
  }
  return 0;
}
