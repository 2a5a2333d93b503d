#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "scriptorium/core/coco_json.hpp"
#include "scriptorium/core/executor.hpp"
#include "scriptorium/core/types.hpp"
#include "scriptorium/core/yolo.hpp"
#include "scriptorium/detector/protocol.hpp"
#include "scriptorium/detector/subprocess.hpp"
#include "scriptorium/detector/synthetic.hpp"

namespace scriptorium {

using PredictionMap = std::map<ImageId, std::vector<Detection>>;

enum class DetectorKind { synthetic, subprocess };

struct DetectorSpec {
  DetectorKind kind = DetectorKind::synthetic;
  std::vector<std::string> command;  // subprocess only
  SyntheticParams synthetic;         // synthetic only
  bool warm_start = false;
  std::chrono::seconds timeout{24 * 3600};
  std::size_t predict_batch = 0;  // images per predict message; 0 sends one message
};

inline DetectorSpec detector_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("detector config must be a JSON object");
  DetectorSpec s;
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "synthetic") s.kind = DetectorKind::synthetic;
    else if (kind == "subprocess") s.kind = DetectorKind::subprocess;
    else throw ValidationError("detector kind must be 'synthetic' or 'subprocess', got '" + kind + "'");
    s.warm_start = j.value("warm_start", false);
    s.timeout = std::chrono::seconds(j.value("timeout_seconds", 24 * 3600));
    s.predict_batch = j.value("predict_batch", std::size_t{0});
    const bool has_cmd = j.contains("command");
    const bool has_syn = j.contains("synthetic");
    if (s.kind == DetectorKind::subprocess) {
      if (!has_cmd || has_syn) throw ValidationError("subprocess detector needs 'command' and no 'synthetic' block");
      s.command = j.at("command").get<std::vector<std::string>>();
      if (s.command.empty()) throw ValidationError("detector command is empty");
    } else {
      if (has_cmd) throw ValidationError("synthetic detector takes no 'command'");
      const auto& p = has_syn ? j.at("synthetic") : nlohmann::json::object();
      s.synthetic.tau = p.value("tau", s.synthetic.tau);
      s.synthetic.jitter0 = p.value("jitter0", s.synthetic.jitter0);
      s.synthetic.jitter_floor = p.value("jitter_floor", s.synthetic.jitter_floor);
      s.synthetic.fp_rate0 = p.value("fp_rate0", s.synthetic.fp_rate0);
      s.synthetic.rng_seed = p.value("rng_seed", s.synthetic.rng_seed);
      s.synthetic.check();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("detector config: ") + e.what());
  }
  return s;
}

inline nlohmann::ordered_json detector_spec_to_json(const DetectorSpec& s) {
  nlohmann::ordered_json j;
  j["kind"] = s.kind == DetectorKind::synthetic ? "synthetic" : "subprocess";
  if (s.kind == DetectorKind::subprocess) {
    j["command"] = s.command;
  } else {
    j["synthetic"] = {{"tau", s.synthetic.tau},
                      {"jitter0", s.synthetic.jitter0},
                      {"jitter_floor", s.synthetic.jitter_floor},
                      {"fp_rate0", s.synthetic.fp_rate0},
                      {"rng_seed", s.synthetic.rng_seed}};
  }
  j["warm_start"] = s.warm_start;
  j["timeout_seconds"] = s.timeout.count();
  j["predict_batch"] = s.predict_batch;
  return j;
}

/// What a finished `train` call leaves behind.
struct ModelHandle {
  std::size_t trained_on = 0;
  std::size_t generation = 0;  // increments per train call
};

class Detector {
 public:
  virtual ~Detector() = default;
  virtual ModelHandle train(const protocol::Train& request) = 0;
  virtual PredictionMap predict(const std::vector<protocol::ImageRef>& images) = 0;
  virtual bool supports_batch() const { return false; }
};

/// Pure simulated detector over known ground truth; see synthetic_detections.
class SyntheticDetector final : public Detector {
 public:
  SyntheticDetector(SyntheticParams params, const DatasetCOCO& truth, const Executor& exec = Executor::serial())
      : params_(params), truth_(&truth), exec_(&exec) {
    params_.check();
    for (const auto& a : truth.annotations) by_image_[a.image_id].push_back(a);
  }

  ModelHandle train(const protocol::Train& request) override {
    handle_ = {request.images.size(), handle_.generation + 1};
    return handle_;
  }

  PredictionMap predict(const std::vector<protocol::ImageRef>& images) override {
    if (handle_.generation == 0) throw DetectorError("predict before train");
    std::vector<std::vector<Detection>> results(images.size());
    exec_->parallel_for(images.size(), [&](std::size_t i) {
      const auto* img = truth_->find_image(images[i].id);
      if (!img) throw DetectorError("unknown image " + std::to_string(images[i].id));
      auto it = by_image_.find(img->id);
      results[i] = synthetic_detections(params_, handle_.trained_on, *img,
                                        it == by_image_.end() ? std::vector<Annotation>{} : it->second);
    });
    PredictionMap out;
    for (std::size_t i = 0; i < images.size(); ++i) out[images[i].id] = std::move(results[i]);
    return out;
  }

  bool supports_batch() const override { return true; }
  const ModelHandle& handle() const noexcept { return handle_; }

 private:
  SyntheticParams params_;
  const DatasetCOCO* truth_;
  const Executor* exec_;
  std::map<ImageId, std::vector<Annotation>> by_image_;
  ModelHandle handle_;
};

/// External detector speaking the line protocol. The adapter announces itself with
/// a hello line before the first request.
class SubprocessDetector final : public Detector {
 public:
  explicit SubprocessDetector(const DetectorSpec& spec) : spec_(spec), channel_(spec.command) {
    auto hello = expect(std::chrono::seconds(std::min<long long>(spec.timeout.count(), 600)));
    if (const auto* h = std::get_if<protocol::Hello>(&hello)) batch_ = h->batch;
    else throw DetectorError("detector did not start with a hello line");
  }

  ~SubprocessDetector() override {
    try {
      channel_.send_line(protocol::serialize(protocol::Shutdown{}));
    } catch (...) {
    }
  }

  ModelHandle train(const protocol::Train& request) override {
    channel_.send_line(protocol::serialize(request));
    auto reply = expect(spec_.timeout);
    if (!std::holds_alternative<protocol::Trained>(reply)) throw DetectorError("expected a 'trained' ack");
    handle_ = {request.images.size(), handle_.generation + 1};
    return handle_;
  }

  PredictionMap predict(const std::vector<protocol::ImageRef>& images) override {
    PredictionMap out;
    const std::size_t step = spec_.predict_batch == 0 ? std::max<std::size_t>(1, images.size()) : spec_.predict_batch;
    for (std::size_t begin = 0; begin < images.size(); begin += step) {
      protocol::Predict req;
      req.images.assign(images.begin() + static_cast<std::ptrdiff_t>(begin),
                        images.begin() + static_cast<std::ptrdiff_t>(std::min(images.size(), begin + step)));
      channel_.send_line(protocol::serialize(req));
      auto reply = expect(spec_.timeout);
      const auto* preds = std::get_if<protocol::Predictions>(&reply);
      if (!preds) throw DetectorError("expected 'predictions'");
      std::set<ImageId> asked;
      for (const auto& r : req.images) asked.insert(r.id);
      for (const auto& item : preds->items) {
        if (!asked.count(item.image_id))
          throw ProtocolError("prediction for image " + std::to_string(item.image_id) + " that was not requested");
        auto& slot = out[item.image_id];
        slot.insert(slot.end(), item.detections.begin(), item.detections.end());
      }
      for (const auto id : asked) out.try_emplace(id);
    }
    return out;
  }

  bool supports_batch() const override { return batch_; }

 private:
  protocol::Message expect(std::chrono::seconds timeout) {
    auto msg = protocol::parse(channel_.read_line(std::chrono::duration_cast<std::chrono::milliseconds>(timeout)));
    if (const auto* f = std::get_if<protocol::Failure>(&msg)) throw DetectorError("adapter reported: " + f->error);
    return msg;
  }

  DetectorSpec spec_;
  LineChannel channel_;
  bool batch_ = false;
  ModelHandle handle_;
};

inline std::unique_ptr<Detector> make_detector(const DetectorSpec& spec, const DatasetCOCO& truth,
                                               const Executor& exec = Executor::serial()) {
  if (spec.kind == DetectorKind::synthetic) return std::make_unique<SyntheticDetector>(spec.synthetic, truth, exec);
  return std::make_unique<SubprocessDetector>(spec);
}

/// One `<file stem>.txt` per image, one YOLO row per annotation in ascending id. Images
/// without annotations still get an (empty) file. Returns the number of files written.
inline std::size_t write_labels(const DatasetCOCO& ds, const std::vector<ImageId>& ids, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::set<std::string> stems;
  std::size_t files = 0;
  for (const auto id : ids) {
    const auto* img = ds.find_image(id);
    if (!img) throw ArgumentError("image " + std::to_string(id) + " is not in the dataset");
    const auto stem = std::filesystem::path(img->file_name).stem().string();
    if (!stems.insert(stem).second) throw ValidationError("two images share the label stem '" + stem + "'");
    std::string body;
    for (const auto& a : ds.annotations_of(id)) body += yolo_line(a, *img) + "\n";
    const auto path = dir / (stem + ".txt");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << body;
    if (!out) throw IoError("write failed for " + path.string());
    ++files;
  }
  return files;
}

}  // namespace scriptorium
