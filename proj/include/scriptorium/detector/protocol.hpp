#pragma once

#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "scriptorium/core/types.hpp"

// Detector wire protocol: newline-delimited JSON over the adapter's stdin/stdout.
//
//   adapter -> harness  {"ok":true,"batch":<bool>}                       on startup
//   harness -> adapter  {"cmd":"train","images":[...],"labels_dir":...,"workdir":...,"warm_start":<bool>}
//   adapter -> harness  {"ok":true,"cmd":"trained"}
//   harness -> adapter  {"cmd":"predict","images":[...]}
//   adapter -> harness  {"ok":true,"cmd":"predictions","items":[{"image_id":...,"detections":[...]}]}
//   harness -> adapter  {"cmd":"shutdown"}
//   adapter -> harness  {"ok":false,"error":"..."}                        on any failure
//
// Images travel as {"id":<int>,"file_name":<string>}; detections as
// {"category_id":<int>,"bbox":[x,y,w,h],"score":<float>} in absolute pixels.

namespace scriptorium::protocol {

struct ImageRef {
  ImageId id = 0;
  std::string file_name;

  friend bool operator==(const ImageRef&, const ImageRef&) = default;
};

struct Hello {
  bool batch = false;
  friend bool operator==(const Hello&, const Hello&) = default;
};

struct Train {
  std::vector<ImageRef> images;
  std::string labels_dir;
  std::string workdir;
  bool warm_start = false;
  friend bool operator==(const Train&, const Train&) = default;
};

struct Trained {
  friend bool operator==(const Trained&, const Trained&) = default;
};

struct Predict {
  std::vector<ImageRef> images;
  friend bool operator==(const Predict&, const Predict&) = default;
};

struct PredictionItem {
  ImageId image_id = 0;
  std::vector<Detection> detections;  // image_id of each detection mirrors the item's
  friend bool operator==(const PredictionItem&, const PredictionItem&) = default;
};

struct Predictions {
  std::vector<PredictionItem> items;
  friend bool operator==(const Predictions&, const Predictions&) = default;
};

struct Shutdown {
  friend bool operator==(const Shutdown&, const Shutdown&) = default;
};

struct Failure {
  std::string error;
  friend bool operator==(const Failure&, const Failure&) = default;
};

using Message = std::variant<Hello, Train, Trained, Predict, Predictions, Shutdown, Failure>;

namespace detail {

inline nlohmann::ordered_json images_json(const std::vector<ImageRef>& images) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& i : images) arr.push_back({{"id", i.id}, {"file_name", i.file_name}});
  return arr;
}

inline std::vector<ImageRef> images_from(const nlohmann::json& j) {
  std::vector<ImageRef> out;
  if (!j.is_array()) throw ProtocolError("'images' must be an array");
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& e = j[i];
    if (!e.is_object() || !e.contains("id") || !e["id"].is_number_integer() || !e.contains("file_name") ||
        !e["file_name"].is_string())
      throw ProtocolError("images[" + std::to_string(i) + "] must be {\"id\":int,\"file_name\":string}");
    out.push_back({e["id"].get<ImageId>(), e["file_name"].get<std::string>()});
  }
  return out;
}

inline Detection detection_from(const nlohmann::json& d, ImageId image_id, const std::string& where) {
  if (!d.is_object()) throw ProtocolError(where + ": detection must be an object");
  const auto cat = d.find("category_id");
  const auto box = d.find("bbox");
  const auto score = d.find("score");
  if (cat == d.end() || !cat->is_number_integer()) throw ProtocolError(where + ": missing integer category_id");
  if (box == d.end() || !box->is_array() || box->size() != 4) throw ProtocolError(where + ": bbox must be [x,y,w,h]");
  if (score == d.end() || !score->is_number()) throw ProtocolError(where + ": missing numeric score");
  for (const auto& v : *box)
    if (!v.is_number()) throw ProtocolError(where + ": bbox entries must be numbers");
  const int c = cat->get<int>();
  if (!is_valid_category(c)) throw ProtocolError(where + ": unknown category " + std::to_string(c));
  const double s = score->get<double>();
  if (!(s >= 0.0 && s <= 1.0)) throw ProtocolError(where + ": score " + std::to_string(s) + " outside [0,1]");
  try {
    return Detection{image_id, c, BBox((*box)[0].get<double>(), (*box)[1].get<double>(), (*box)[2].get<double>(),
                                       (*box)[3].get<double>()),
                     s};
  } catch (const ValidationError& e) {
    throw ProtocolError(where + ": " + e.what());
  }
}

template <typename T>
T field(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ProtocolError(std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ProtocolError(std::string("bad type for field '") + key + "'");
  }
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const Message& msg) {
  using J = nlohmann::ordered_json;
  return std::visit(
      [](const auto& m) -> J {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Hello>) {
          return {{"ok", true}, {"batch", m.batch}};
        } else if constexpr (std::is_same_v<T, Train>) {
          return {{"cmd", "train"},
                  {"images", detail::images_json(m.images)},
                  {"labels_dir", m.labels_dir},
                  {"workdir", m.workdir},
                  {"warm_start", m.warm_start}};
        } else if constexpr (std::is_same_v<T, Trained>) {
          return {{"ok", true}, {"cmd", "trained"}};
        } else if constexpr (std::is_same_v<T, Predict>) {
          return {{"cmd", "predict"}, {"images", detail::images_json(m.images)}};
        } else if constexpr (std::is_same_v<T, Predictions>) {
          J items = J::array();
          for (const auto& it : m.items) {
            J dets = J::array();
            for (const auto& d : it.detections)
              dets.push_back({{"category_id", d.category_id},
                              {"bbox", {d.bbox.x(), d.bbox.y(), d.bbox.w(), d.bbox.h()}},
                              {"score", d.score}});
            items.push_back({{"image_id", it.image_id}, {"detections", dets}});
          }
          return {{"ok", true}, {"cmd", "predictions"}, {"items", items}};
        } else if constexpr (std::is_same_v<T, Shutdown>) {
          return {{"cmd", "shutdown"}};
        } else {
          return {{"ok", false}, {"error", m.error}};
        }
      },
      msg);
}

/// One message as a single line without the trailing newline.
inline std::string serialize(const Message& msg) { return to_json(msg).dump(); }

/// Parses and validates one protocol line. Anything that is not a well-formed message
/// raises ProtocolError naming the offending part.
inline Message parse(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ProtocolError(std::string("not JSON: ") + e.what());
  }
  if (!j.is_object()) throw ProtocolError("message must be a JSON object");

  if (auto cmd = j.find("cmd"); cmd != j.end() && !j.contains("ok")) {
    if (!cmd->is_string()) throw ProtocolError("'cmd' must be a string");
    const auto name = cmd->get<std::string>();
    if (name == "train")
      return Train{detail::images_from(j.value("images", nlohmann::json())), detail::field<std::string>(j, "labels_dir"),
                   detail::field<std::string>(j, "workdir"), detail::field<bool>(j, "warm_start")};
    if (name == "predict") return Predict{detail::images_from(j.value("images", nlohmann::json()))};
    if (name == "shutdown") return Shutdown{};
    throw ProtocolError("unknown command '" + name + "'");
  }

  const auto ok = j.find("ok");
  if (ok == j.end() || !ok->is_boolean()) throw ProtocolError("reply without boolean 'ok'");
  if (!ok->get<bool>()) return Failure{j.value("error", std::string("unspecified adapter error"))};
  const auto cmd = j.find("cmd");
  if (cmd == j.end()) return Hello{j.value("batch", false)};
  if (!cmd->is_string()) throw ProtocolError("'cmd' must be a string");
  const auto name = cmd->get<std::string>();
  if (name == "trained") return Trained{};
  if (name == "predictions") {
    const auto items = j.find("items");
    if (items == j.end() || !items->is_array()) throw ProtocolError("predictions without an 'items' array");
    Predictions out;
    for (std::size_t i = 0; i < items->size(); ++i) {
      const auto& it = (*items)[i];
      const std::string where = "items[" + std::to_string(i) + "]";
      if (!it.is_object() || !it.contains("image_id") || !it["image_id"].is_number_integer())
        throw ProtocolError(where + ": missing integer image_id");
      PredictionItem item{it["image_id"].get<ImageId>(), {}};
      const auto dets = it.find("detections");
      if (dets == it.end() || !dets->is_array()) throw ProtocolError(where + ": missing detections array");
      for (std::size_t k = 0; k < dets->size(); ++k)
        item.detections.push_back(
            detail::detection_from((*dets)[k], item.image_id, where + ".detections[" + std::to_string(k) + "]"));
      out.items.push_back(std::move(item));
    }
    return out;
  }
  throw ProtocolError("unknown reply '" + name + "'");
}

}  // namespace scriptorium::protocol
