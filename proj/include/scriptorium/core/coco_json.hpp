#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "scriptorium/core/types.hpp"

namespace scriptorium {

struct CocoLoadWarnings {
  std::size_t clamped = 0;   ///< boxes that overshot their image and were clipped
  std::size_t rejected = 0;  ///< boxes with zero area once clipped; dropped

  friend bool operator==(const CocoLoadWarnings&, const CocoLoadWarnings&) = default;
};

/// A dataset as read from disk. Keys outside the supported subset are kept here so
/// callers can inspect them; write_coco never emits them.
struct LoadedCoco {
  DatasetCOCO dataset;
  nlohmann::json extra_top = nlohmann::json::object();
  std::map<ImageId, nlohmann::json> extra_images;
  std::map<AnnotationId, nlohmann::json> extra_annotations;
  CocoLoadWarnings warnings;
};

namespace detail {

inline nlohmann::json unknown_keys(const nlohmann::json& obj, std::initializer_list<std::string_view> known) {
  nlohmann::json out = nlohmann::json::object();
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool is_known = false;
    for (auto k : known)
      if (it.key() == k) is_known = true;
    if (!is_known) out[it.key()] = it.value();
  }
  return out;
}

template <typename T>
T required(const nlohmann::json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw FormatError(where + ": missing key '" + key + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + ": bad value for '" + key + "': " + e.what());
  }
}

}  // namespace detail

inline LoadedCoco coco_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw FormatError("COCO document must be a JSON object");
  LoadedCoco out;
  out.extra_top = detail::unknown_keys(doc, {"images", "annotations", "categories"});

  if (auto it = doc.find("categories"); it != doc.end()) {
    for (const auto& c : *it) {
      const auto id = detail::required<int>(c, "id", "category");
      const auto name = detail::required<std::string>(c, "name", "category");
      if (!is_valid_category(id) || category_name(id) != name)
        throw ValidationError("category table mismatch at id " + std::to_string(id) + " ('" + name + "')");
    }
  }

  const auto& images = doc.value("images", nlohmann::json::array());
  std::int64_t position = 0;
  for (const auto& j : images) {
    ImageRecord img;
    img.id = detail::required<ImageId>(j, "id", "image");
    const std::string where = "image " + std::to_string(img.id);
    img.file_name = detail::required<std::string>(j, "file_name", where);
    img.width = detail::required<int>(j, "width", where);
    img.height = detail::required<int>(j, "height", where);
    img.page_index = j.contains("page_index") ? detail::required<std::int64_t>(j, "page_index", where) : position;
    ++position;
    auto extra = detail::unknown_keys(j, {"id", "file_name", "width", "height", "page_index"});
    if (!extra.empty()) out.extra_images[img.id] = std::move(extra);
    out.dataset.images.push_back(std::move(img));
  }

  std::unordered_map<ImageId, const ImageRecord*> by_id;
  for (const auto& img : out.dataset.images) by_id.emplace(img.id, &img);

  for (const auto& j : doc.value("annotations", nlohmann::json::array())) {
    Annotation a;
    a.id = detail::required<AnnotationId>(j, "id", "annotation");
    const std::string where = "annotation " + std::to_string(a.id);
    a.image_id = detail::required<ImageId>(j, "image_id", where);
    a.category_id = detail::required<CategoryId>(j, "category_id", where);
    const auto raw = detail::required<std::vector<double>>(j, "bbox", where);
    if (raw.size() != 4) throw FormatError(where + ": bbox must have 4 numbers");
    if (j.contains("source")) {
      auto s = source_from_string(detail::required<std::string>(j, "source", where));
      if (!s) throw FormatError(where + ": unknown source");
      a.source = *s;
    }
    auto img = by_id.find(a.image_id);
    if (img == by_id.end()) throw ValidationError(where + " references unknown image " + std::to_string(a.image_id));
    const double W = img->second->width, H = img->second->height;
    const double x0 = raw[0], y0 = raw[1], x1 = raw[0] + raw[2], y1 = raw[1] + raw[3];
    if (!(raw[2] > 0.0) || !(raw[3] > 0.0) || !std::isfinite(x1) || !std::isfinite(y1))
      throw ValidationError(where + ": bbox must have positive finite size");
    auto clipped = BBox::from_corners(std::clamp(x0, 0.0, W), std::clamp(y0, 0.0, H), std::clamp(x1, 0.0, W),
                                      std::clamp(y1, 0.0, H));
    if (!clipped) {
      ++out.warnings.rejected;
      continue;
    }
    if (x0 < 0.0 || y0 < 0.0 || x1 > W || y1 > H) ++out.warnings.clamped;
    a.bbox = *clipped;
    auto extra = detail::unknown_keys(j, {"id", "image_id", "category_id", "bbox", "source"});
    if (!extra.empty()) out.extra_annotations[a.id] = std::move(extra);
    out.dataset.annotations.push_back(a);
  }
  validate(out.dataset);
  return out;
}

inline nlohmann::ordered_json coco_to_json(const DatasetCOCO& ds) {
  nlohmann::ordered_json doc;
  auto& images = doc["images"] = nlohmann::ordered_json::array();
  for (const auto& img : ds.images) {
    images.push_back({{"id", img.id},
                      {"file_name", img.file_name},
                      {"width", img.width},
                      {"height", img.height},
                      {"page_index", img.page_index}});
  }
  auto& anns = doc["annotations"] = nlohmann::ordered_json::array();
  for (const auto& a : ds.annotations) {
    anns.push_back({{"id", a.id},
                    {"image_id", a.image_id},
                    {"category_id", a.category_id},
                    {"bbox", {a.bbox.x(), a.bbox.y(), a.bbox.w(), a.bbox.h()}},
                    {"source", std::string(to_string(a.source))}});
  }
  auto& cats = doc["categories"] = nlohmann::ordered_json::array();
  for (int i = 0; i < kNumCategories; ++i) cats.push_back({{"id", i}, {"name", std::string(kCategoryNames[i])}});
  return doc;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes via a sibling temp file and rename so readers never see a partial file.
inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

inline nlohmann::json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(what + ": " + e.what());
  }
}

inline LoadedCoco read_coco(const std::filesystem::path& path) {
  return coco_from_json(parse_json_text(read_text_file(path), path.string()));
}

inline void write_coco(const DatasetCOCO& ds, const std::filesystem::path& path) {
  write_text_file(path, coco_to_json(ds).dump(2) + "\n");
}

}  // namespace scriptorium
