#pragma once

#include <charconv>
#include <cstdlib>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "scriptorium/core/types.hpp"
#include "scriptorium/merge/xml_sax.hpp"

namespace scriptorium {

enum class SourceKind { pagexml, mei, svg };

inline std::string_view to_string(SourceKind s) noexcept {
  switch (s) {
    case SourceKind::pagexml: return "pagexml";
    case SourceKind::mei: return "mei";
    case SourceKind::svg: return "svg";
  }
  return "svg";
}

/// One box lifted out of a source document, still in that source's vocabulary.
struct SourceObject {
  SourceKind source = SourceKind::svg;
  std::string kind;        // "TextLine", "zone/neume", "rect", ...
  BBox bbox{0, 0, 1, 1};
  std::string native_id;
  std::string label_hint;  // may be empty

  friend bool operator==(const SourceObject&, const SourceObject&) = default;
};

/// Parsed objects plus one message per element that was skipped.
struct SourceParse {
  std::vector<SourceObject> objects;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::optional<double> parse_number(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (s.size() > 2 && s.substr(s.size() - 2) == "px") s.remove_suffix(2);
  if (s.empty()) return std::nullopt;
  const std::string buf(s);
  char* end = nullptr;
  const double v = std::strtod(buf.c_str(), &end);
  if (end != buf.c_str() + buf.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

/// "x1,y1 x2,y2 ..." -> list of points; nullopt on a malformed token.
inline std::optional<std::vector<std::pair<double, double>>> parse_points(std::string_view text) {
  std::vector<std::pair<double, double>> pts;
  std::istringstream in{std::string(text)};
  std::string tok;
  while (in >> tok) {
    const auto comma = tok.find(',');
    if (comma == std::string::npos) return std::nullopt;
    auto x = parse_number(std::string_view(tok).substr(0, comma));
    auto y = parse_number(std::string_view(tok).substr(comma + 1));
    if (!x || !y) return std::nullopt;
    pts.emplace_back(*x, *y);
  }
  return pts;
}

/// Transkribus stores region types as custom="structure {type:tetragram;}".
inline std::string structure_type(std::string_view custom) {
  const auto s = custom.find("structure");
  if (s == std::string_view::npos) return {};
  const auto t = custom.find("type:", s);
  if (t == std::string_view::npos) return {};
  const auto begin = t + 5;
  const auto end = custom.find_first_of(";}", begin);
  return std::string(custom.substr(begin, end == std::string_view::npos ? std::string_view::npos : end - begin));
}

inline std::string attr_or(const xml::Attributes& attrs, std::string_view key, std::string fallback = {}) {
  const auto* v = xml::find_attr(attrs, key);
  return v ? *v : std::move(fallback);
}

inline std::string xml_id(const xml::Attributes& attrs) {
  if (const auto* v = xml::find_attr(attrs, "xml:id")) return *v;
  if (const auto* v = xml::find_attr(attrs, "id")) return *v;
  return {};
}

}  // namespace detail

/// PAGE XML: every TextLine and *Region element under Page becomes one object whose
/// box is the min/max hull of its Coords polygon.
inline SourceParse parse_pagexml(std::string_view document) {
  struct Pending {
    std::string kind, id, hint;
    std::optional<BBox> bbox;
    bool had_coords = false;
    std::size_t line = 0;
    std::size_t depth = 0;
  };
  SourceParse out;
  std::vector<std::string> stack;
  std::vector<Pending> open;
  std::vector<std::pair<std::size_t, SourceObject>> done;  // keyed by start order
  std::size_t order = 0;
  std::vector<std::size_t> open_order;
  std::map<std::string, int> seen_ids;
  bool in_page = false;

  xml::SaxHandler h;
  h.on_start = [&](std::string_view name, const xml::Attributes& attrs, std::size_t line) {
    stack.emplace_back(name);
    if (name == "Page") in_page = true;
    if (!in_page) return;
    const bool is_object = name == "TextLine" || (name.size() > 6 && name.substr(name.size() - 6) == "Region");
    if (is_object) {
      Pending p;
      p.kind = std::string(name);
      p.id = detail::xml_id(attrs);
      p.hint = detail::attr_or(attrs, "type");
      if (p.hint.empty()) p.hint = detail::structure_type(detail::attr_or(attrs, "custom"));
      p.line = line;
      p.depth = stack.size();
      open.push_back(std::move(p));
      open_order.push_back(order++);
      return;
    }
    if (name == "Coords" && !open.empty() && open.back().depth + 1 == stack.size()) {
      auto& p = open.back();
      p.had_coords = true;
      auto pts = detail::parse_points(detail::attr_or(attrs, "points"));
      if (!pts) {
        out.warnings.push_back(p.kind + " at line " + std::to_string(line) + ": malformed points");
        return;
      }
      if (pts->size() < 3) {
        out.warnings.push_back(p.kind + " at line " + std::to_string(line) + ": polygon with fewer than 3 points");
        return;
      }
      double x0 = pts->front().first, x1 = x0, y0 = pts->front().second, y1 = y0;
      for (auto [x, y] : *pts) {
        x0 = std::min(x0, x), x1 = std::max(x1, x);
        y0 = std::min(y0, y), y1 = std::max(y1, y);
      }
      p.bbox = BBox::from_corners(std::max(0.0, x0), std::max(0.0, y0), x1, y1);
      if (!p.bbox) out.warnings.push_back(p.kind + " at line " + std::to_string(line) + ": degenerate polygon");
    }
  };
  h.on_end = [&](std::string_view name) {
    if (!open.empty() && open.back().depth == stack.size()) {
      auto p = std::move(open.back());
      open.pop_back();
      const auto ord = open_order.back();
      open_order.pop_back();
      if (!p.had_coords) {
        out.warnings.push_back(p.kind + " at line " + std::to_string(p.line) + ": missing Coords");
      } else if (p.bbox) {
        if (p.id.empty()) p.id = p.kind + "#" + std::to_string(ord);
        if (seen_ids[p.id]++ > 0) p.id += "~" + std::to_string(seen_ids[p.id] - 1);
        done.emplace_back(ord, SourceObject{SourceKind::pagexml, p.kind, *p.bbox, p.id, p.hint});
      }
    }
    if (name == "Page") in_page = false;
    stack.pop_back();
  };
  xml::parse(document, h);
  std::sort(done.begin(), done.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (auto& [_, obj] : done) out.objects.push_back(std::move(obj));
  return out;
}

/// MEI facsimile zones. Every element carrying facs="#zone" yields one object of kind
/// "zone/<element>" per referenced zone; zones nobody references become "zone/orphan".
inline SourceParse parse_mei(std::string_view document) {
  struct Zone {
    std::string id;
    std::optional<BBox> bbox;
    std::size_t line;
    bool referenced = false;
  };
  struct Ref {
    std::string element, id;
    std::vector<std::string> zones;
    std::size_t line;
  };
  SourceParse out;
  std::vector<Zone> zones;
  std::vector<Ref> refs;
  std::size_t ordinal = 0;

  xml::SaxHandler h;
  h.on_start = [&](std::string_view name, const xml::Attributes& attrs, std::size_t line) {
    ++ordinal;
    if (name == "zone") {
      Zone z{detail::xml_id(attrs), std::nullopt, line};
      if (z.id.empty()) z.id = "zone#" + std::to_string(ordinal);
      auto num = [&](const char* k) { return detail::parse_number(detail::attr_or(attrs, k)); };
      auto ulx = num("ulx"), uly = num("uly"), lrx = num("lrx"), lry = num("lry");
      if (!ulx || !uly || !lrx || !lry) {
        out.warnings.push_back("zone " + z.id + " at line " + std::to_string(line) + ": missing corner attribute");
      } else if (!(*lrx > *ulx) || !(*lry > *uly)) {
        out.warnings.push_back("zone " + z.id + " at line " + std::to_string(line) + ": degenerate extent");
      } else {
        z.bbox = BBox::from_corners(std::max(0.0, *ulx), std::max(0.0, *uly), *lrx, *lry);
        if (!z.bbox)
          out.warnings.push_back("zone " + z.id + " at line " + std::to_string(line) + ": outside the page");
      }
      zones.push_back(std::move(z));
      return;
    }
    const auto* facs = xml::find_attr(attrs, "facs");
    if (!facs) return;
    Ref r{std::string(name), detail::xml_id(attrs), {}, line};
    if (r.id.empty()) r.id = r.element + "#" + std::to_string(ordinal);
    std::istringstream in(*facs);
    std::string tok;
    while (in >> tok) r.zones.push_back(!tok.empty() && tok.front() == '#' ? tok.substr(1) : tok);
    refs.push_back(std::move(r));
  };
  xml::parse(document, h);

  std::map<std::string, std::size_t> zone_index;
  for (std::size_t i = 0; i < zones.size(); ++i) zone_index.emplace(zones[i].id, i);

  for (const auto& r : refs) {
    for (const auto& zid : r.zones) {
      auto it = zone_index.find(zid);
      if (it == zone_index.end()) {
        out.warnings.push_back(r.element + " " + r.id + " at line " + std::to_string(r.line) +
                               ": dangling facs reference #" + zid);
        continue;
      }
      auto& z = zones[it->second];
      z.referenced = true;
      if (!z.bbox) continue;  // already warned about the zone itself
      const auto nid = r.zones.size() == 1 ? r.id : r.id + "@" + zid;
      out.objects.push_back(SourceObject{SourceKind::mei, "zone/" + r.element, *z.bbox, nid, {}});
    }
  }
  for (const auto& z : zones) {
    if (!z.referenced && z.bbox)
      out.objects.push_back(SourceObject{SourceKind::mei, "zone/orphan", *z.bbox, z.id, {}});
  }
  return out;
}

/// SVG <rect> elements taken verbatim. Transforms are not interpreted: a rect that
/// carries one, or sits under a group that does, is rejected outright.
inline SourceParse parse_svg_rects(std::string_view document) {
  SourceParse out;
  std::vector<bool> transformed;  // per open element: does it or an ancestor carry a transform
  std::size_t ordinal = 0;

  xml::SaxHandler h;
  h.on_start = [&](std::string_view name, const xml::Attributes& attrs, std::size_t line) {
    const bool parent_tf = !transformed.empty() && transformed.back();
    const bool own_tf = xml::find_attr(attrs, "transform") != nullptr;
    transformed.push_back(parent_tf || own_tf);
    if (name != "rect") return;
    ++ordinal;
    std::string id = detail::xml_id(attrs);
    if (id.empty()) id = "rect#" + std::to_string(ordinal);
    if (own_tf || parent_tf)
      throw FormatError("rect " + id + " at line " + std::to_string(line) +
                        " is under a transform; flatten transforms before export");
    auto num = [&](const char* k, double fallback) -> std::optional<double> {
      const auto* v = xml::find_attr(attrs, k);
      return v ? detail::parse_number(*v) : std::optional<double>(fallback);
    };
    auto x = num("x", 0.0), y = num("y", 0.0), w = num("width", 0.0), hgt = num("height", 0.0);
    if (!x || !y || !w || !hgt) {
      out.warnings.push_back("rect " + id + " at line " + std::to_string(line) + ": unparsable geometry");
      return;
    }
    if (*w <= 0.0 || *hgt <= 0.0) {
      out.warnings.push_back("rect " + id + " at line " + std::to_string(line) + ": non-positive size");
      return;
    }
    auto box = BBox::from_corners(std::max(0.0, *x), std::max(0.0, *y), *x + *w, *y + *hgt);
    if (!box) {
      out.warnings.push_back("rect " + id + " at line " + std::to_string(line) + ": outside the canvas");
      return;
    }
    std::string hint = detail::attr_or(attrs, "class");
    if (hint.empty()) hint = detail::attr_or(attrs, "inkscape:label");
    if (hint.empty()) hint = detail::attr_or(attrs, "label");
    out.objects.push_back(SourceObject{SourceKind::svg, "rect", *box, std::move(id), std::move(hint)});
  };
  h.on_end = [&](std::string_view) { transformed.pop_back(); };
  xml::parse(document, h);
  return out;
}

}  // namespace scriptorium
