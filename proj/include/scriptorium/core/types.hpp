#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "scriptorium/core/error.hpp"

namespace scriptorium {

using ImageId = std::int64_t;
using AnnotationId = std::int64_t;
using CategoryId = int;

/// Axis-aligned rectangle in absolute pixels, stored top-left + size.
class BBox {
 public:
  BBox(double x, double y, double w, double h) : x_(x), y_(y), w_(w), h_(h) {
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(w) || !std::isfinite(h))
      throw ValidationError("bbox has non-finite field");
    if (x < 0.0 || y < 0.0)
      throw ValidationError("bbox origin must be non-negative");
    if (w <= 0.0 || h <= 0.0)
      throw ValidationError("bbox must have positive width and height");
  }

  /// Builds a box from corner coordinates, nullopt when the box would be degenerate
  /// or invalid.
  static std::optional<BBox> from_corners(double x0, double y0, double x1, double y1) noexcept {
    if (!(x1 > x0) || !(y1 > y0) || !(x0 >= 0.0) || !(y0 >= 0.0)) return std::nullopt;
    if (!std::isfinite(x1) || !std::isfinite(y1)) return std::nullopt;
    return BBox(x0, y0, x1 - x0, y1 - y0);
  }

  double x() const noexcept { return x_; }
  double y() const noexcept { return y_; }
  double w() const noexcept { return w_; }
  double h() const noexcept { return h_; }
  double right() const noexcept { return x_ + w_; }
  double bottom() const noexcept { return y_ + h_; }
  double area() const noexcept { return w_ * h_; }

  /// Intersection with the image rectangle [0,width]x[0,height]; nullopt if empty.
  std::optional<BBox> clamped_to(double width, double height) const noexcept {
    return from_corners(std::clamp(x_, 0.0, width), std::clamp(y_, 0.0, height),
                        std::clamp(right(), 0.0, width), std::clamp(bottom(), 0.0, height));
  }

  bool inside(double width, double height) const noexcept {
    return right() <= width && bottom() <= height;
  }

  friend bool operator==(const BBox&, const BBox&) = default;

 private:
  double x_, y_, w_, h_;
};

inline double intersection_area(const BBox& a, const BBox& b) noexcept {
  const double iw = std::min(a.right(), b.right()) - std::max(a.x(), b.x());
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y(), b.y());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

inline double iou(const BBox& a, const BBox& b) noexcept {
  const double inter = intersection_area(a, b);
  if (inter == 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

// Category table. Ids are frozen in this order so label files stay stable.
inline constexpr std::array<std::string_view, 9> kCategoryNames = {
    "neume", "line", "discard", "staff", "clef", "musicDelimiter", "text", "custos", "musicText"};

inline constexpr int kNumCategories = static_cast<int>(kCategoryNames.size());

namespace category {
inline constexpr CategoryId neume = 0;
inline constexpr CategoryId line = 1;
inline constexpr CategoryId discard = 2;
inline constexpr CategoryId staff = 3;
inline constexpr CategoryId clef = 4;
inline constexpr CategoryId music_delimiter = 5;
inline constexpr CategoryId text = 6;
inline constexpr CategoryId custos = 7;
inline constexpr CategoryId music_text = 8;
}  // namespace category

inline constexpr bool is_valid_category(CategoryId id) noexcept {
  return id >= 0 && id < kNumCategories;
}

inline std::string_view category_name(CategoryId id) {
  if (!is_valid_category(id)) throw ValidationError("unknown category id " + std::to_string(id));
  return kCategoryNames[static_cast<std::size_t>(id)];
}

inline std::optional<CategoryId> category_by_name(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kCategoryNames.size(); ++i)
    if (kCategoryNames[i] == name) return static_cast<CategoryId>(i);
  return std::nullopt;
}

enum class AnnotationSource { pagexml, mei, svg, merged };

inline std::string_view to_string(AnnotationSource s) noexcept {
  switch (s) {
    case AnnotationSource::pagexml: return "pagexml";
    case AnnotationSource::mei: return "mei";
    case AnnotationSource::svg: return "svg";
    case AnnotationSource::merged: return "merged";
  }
  return "merged";
}

inline std::optional<AnnotationSource> source_from_string(std::string_view s) noexcept {
  if (s == "pagexml") return AnnotationSource::pagexml;
  if (s == "mei") return AnnotationSource::mei;
  if (s == "svg") return AnnotationSource::svg;
  if (s == "merged") return AnnotationSource::merged;
  return std::nullopt;
}

struct ImageRecord {
  ImageId id = 0;
  std::string file_name;
  int width = 0;
  int height = 0;
  std::int64_t page_index = 0;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct Annotation {
  AnnotationId id = 0;
  ImageId image_id = 0;
  CategoryId category_id = 0;
  BBox bbox{0, 0, 1, 1};
  AnnotationSource source = AnnotationSource::merged;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

struct Detection {
  ImageId image_id = 0;
  CategoryId category_id = 0;
  BBox bbox{0, 0, 1, 1};
  double score = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct DatasetCOCO {
  std::vector<ImageRecord> images;
  std::vector<Annotation> annotations;

  const ImageRecord* find_image(ImageId id) const noexcept {
    for (const auto& img : images)
      if (img.id == id) return &img;
    return nullptr;
  }

  std::vector<Annotation> annotations_of(ImageId id) const {
    std::vector<Annotation> out;
    for (const auto& a : annotations)
      if (a.image_id == id) out.push_back(a);
    std::sort(out.begin(), out.end(), [](const Annotation& l, const Annotation& r) { return l.id < r.id; });
    return out;
  }

  friend bool operator==(const DatasetCOCO&, const DatasetCOCO&) = default;
};

/// Checks referential integrity, id uniqueness, unique page indices, and that every
/// box lies inside its image.
inline void validate(const DatasetCOCO& ds) {
  std::unordered_map<ImageId, const ImageRecord*> by_id;
  std::unordered_set<std::int64_t> pages;
  for (const auto& img : ds.images) {
    if (img.width <= 0 || img.height <= 0)
      throw ValidationError("image " + std::to_string(img.id) + " has non-positive dimensions");
    if (img.page_index < 0)
      throw ValidationError("image " + std::to_string(img.id) + " has negative page_index");
    if (!by_id.emplace(img.id, &img).second)
      throw ValidationError("duplicate image id " + std::to_string(img.id));
    if (!pages.insert(img.page_index).second)
      throw ValidationError("duplicate page_index " + std::to_string(img.page_index));
  }
  std::unordered_set<AnnotationId> ann_ids;
  for (const auto& a : ds.annotations) {
    if (!ann_ids.insert(a.id).second)
      throw ValidationError("duplicate annotation id " + std::to_string(a.id));
    auto it = by_id.find(a.image_id);
    if (it == by_id.end())
      throw ValidationError("annotation " + std::to_string(a.id) + " references unknown image " +
                            std::to_string(a.image_id));
    if (!is_valid_category(a.category_id))
      throw ValidationError("annotation " + std::to_string(a.id) + " has unknown category " +
                            std::to_string(a.category_id));
    if (!a.bbox.inside(it->second->width, it->second->height))
      throw ValidationError("annotation " + std::to_string(a.id) + " extends past its image");
  }
}

inline void validate(const Detection& d) {
  if (!is_valid_category(d.category_id))
    throw ValidationError("detection has unknown category " + std::to_string(d.category_id));
  if (!(d.score >= 0.0 && d.score <= 1.0))
    throw ValidationError("detection score outside [0,1]");
}

}  // namespace scriptorium
