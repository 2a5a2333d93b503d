#pragma once

#include <array>
#include <cstdio>
#include <sstream>
#include <string>

#include "scriptorium/core/types.hpp"

namespace scriptorium {

/// One YOLO label row: class id followed by normalized center-x, center-y, width, height.
struct YoloLabel {
  CategoryId category_id = 0;
  double cx = 0, cy = 0, w = 0, h = 0;

  /// Back to absolute pixels in center format (cx, cy, w, h).
  std::array<double, 4> denormalized(int width, int height) const {
    return {cx * width, cy * height, w * width, h * height};
  }
};

namespace detail {
inline constexpr double kNormalizedSlack = 1e-9;

inline double checked_unit(double v, const char* what) {
  if (!std::isfinite(v) || v < -kNormalizedSlack || v > 1.0 + kNormalizedSlack)
    throw FormatError(std::string("normalized ") + what + " outside [0,1]: " + std::to_string(v));
  return std::clamp(v, 0.0, 1.0);
}
}  // namespace detail

inline std::string yolo_line(const Annotation& ann, const ImageRecord& img) {
  if (ann.image_id != img.id)
    throw ArgumentError("annotation " + std::to_string(ann.id) + " does not belong to image " +
                        std::to_string(img.id));
  if (!is_valid_category(ann.category_id))
    throw FormatError("unknown category " + std::to_string(ann.category_id));
  const double W = img.width, H = img.height;
  const auto& b = ann.bbox;
  const double cx = detail::checked_unit((b.x() + b.w() / 2.0) / W, "x center");
  const double cy = detail::checked_unit((b.y() + b.h() / 2.0) / H, "y center");
  const double w = detail::checked_unit(b.w() / W, "width");
  const double h = detail::checked_unit(b.h() / H, "height");
  std::array<char, 96> buf{};
  std::snprintf(buf.data(), buf.size(), "%d %.6f %.6f %.6f %.6f", ann.category_id, cx, cy, w, h);
  return buf.data();
}

inline YoloLabel parse_yolo_line(const std::string& line) {
  std::istringstream in(line);
  YoloLabel out;
  if (!(in >> out.category_id >> out.cx >> out.cy >> out.w >> out.h))
    throw FormatError("malformed YOLO label line: '" + line + "'");
  std::string rest;
  if (in >> rest) throw FormatError("trailing content in YOLO label line: '" + line + "'");
  if (!is_valid_category(out.category_id))
    throw FormatError("unknown category in YOLO label line: '" + line + "'");
  return out;
}

}  // namespace scriptorium
