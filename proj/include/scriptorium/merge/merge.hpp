#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "scriptorium/core/coco_json.hpp"
#include "scriptorium/core/executor.hpp"
#include "scriptorium/core/types.hpp"
#include "scriptorium/merge/match.hpp"
#include "scriptorium/merge/parsers.hpp"

namespace scriptorium {

inline std::map<std::string, CategoryId> default_kind_map() {
  return {
      {"zone/neume", category::neume},
      {"TextLine", category::line},
      {"zone/clef", category::clef},
      {"zone/staff", category::staff},
      {"tetragram", category::staff},
      {"zone/divLine", category::music_delimiter},
      {"TextRegion", category::text},
      {"zone/custos", category::custos},
      {"MusicTextRegion", category::music_text},
  };
}

struct MergeConfig {
  double min_iou = 0.25;
  std::map<std::string, CategoryId> kind_map = default_kind_map();

  /// Resolution order: label hint as a mapped key, label hint naming a category
  /// directly, kind as a mapped key, then `discard`.
  CategoryId category_for(const std::string& kind, const std::string& hint) const {
    if (!hint.empty()) {
      if (auto it = kind_map.find(hint); it != kind_map.end()) return it->second;
      if (auto c = category_by_name(hint)) return *c;
    }
    if (auto it = kind_map.find(kind); it != kind_map.end()) return it->second;
    return category::discard;
  }
};

/// Reads {"min_iou": 0.25, "mapping": {"kind-or-hint": "category name" | id}}. Mapping
/// entries are layered over the default table.
inline MergeConfig merge_config_from_json(const nlohmann::json& j) {
  MergeConfig cfg;
  if (!j.is_object()) throw FormatError("merge config must be a JSON object");
  if (auto it = j.find("min_iou"); it != j.end()) {
    if (!it->is_number()) throw FormatError("merge config: min_iou must be a number");
    cfg.min_iou = it->get<double>();
  }
  if (!(cfg.min_iou > 0.0 && cfg.min_iou <= 1.0)) throw ValidationError("merge config: min_iou must lie in (0, 1]");
  if (auto it = j.find("mapping"); it != j.end()) {
    if (!it->is_object()) throw FormatError("merge config: mapping must be an object");
    for (auto m = it->begin(); m != it->end(); ++m) {
      std::optional<CategoryId> id;
      if (m->is_string()) id = category_by_name(m->get<std::string>());
      else if (m->is_number_integer() && is_valid_category(m->get<int>())) id = m->get<int>();
      if (!id) throw ValidationError("merge config: unknown category for '" + m.key() + "'");
      cfg.kind_map[m.key()] = *id;
    }
  }
  return cfg;
}

/// Everything known about one manuscript page before fusion.
struct PageSources {
  ImageRecord image;
  SourceParse pagexml;
  SourceParse mei;
  SourceParse svg;
};

struct ObjectRef {
  SourceKind source;
  std::string native_id;

  friend bool operator==(const ObjectRef&, const ObjectRef&) = default;
};

enum class Disposition { annotation, partner, skipped };

inline std::string_view to_string(Disposition d) noexcept {
  switch (d) {
    case Disposition::annotation: return "annotation";
    case Disposition::partner: return "partner";
    case Disposition::skipped: return "skipped";
  }
  return "skipped";
}

/// Where one input SourceObject ended up.
struct ObjectAccount {
  ObjectRef ref;
  Disposition disposition;
  std::optional<AnnotationId> annotation_id;  // the annotation it became or was folded into
};

struct PageMergeReport {
  ImageId image_id = 0;
  std::string file_name;
  MatchReport svg_mei;
  MatchReport pagexml_mei_staff;
  std::vector<std::string> pagexml_warnings, mei_warnings, svg_warnings;
  std::size_t clamped = 0;
  std::size_t rejected = 0;
  bool empty_page = false;
  std::vector<ObjectAccount> accounts;
};

struct MergeResult {
  DatasetCOCO dataset;
  std::vector<PageMergeReport> pages;  // in page order
};

namespace detail {

struct FusedObject {
  BBox bbox;
  std::string kind;
  std::string hint;
  AnnotationSource source;
  std::vector<ObjectRef> members;  // members.front() is the annotation's primary
  bool svg_geometry = false;
};

inline std::map<std::string, std::size_t> index_by_id(const std::vector<SourceObject>& objs) {
  std::map<std::string, std::size_t> out;
  for (std::size_t i = 0; i < objs.size(); ++i)
    if (!out.emplace(objs[i].native_id, i).second)
      throw ValidationError("duplicate native id '" + objs[i].native_id + "' within one " +
                            std::string(to_string(objs[i].source)) + " document");
  return out;
}

struct PageOutcome {
  PageMergeReport report;
  std::vector<FusedObject> objects;
};

inline PageOutcome fuse_page(const PageSources& page, const MergeConfig& cfg) {
  PageOutcome out;
  auto& rep = out.report;
  rep.image_id = page.image.id;
  rep.file_name = page.image.file_name;
  rep.pagexml_warnings = page.pagexml.warnings;
  rep.mei_warnings = page.mei.warnings;
  rep.svg_warnings = page.svg.warnings;

  const auto& svg = page.svg.objects;
  const auto& mei = page.mei.objects;
  const auto& pxml = page.pagexml.objects;
  const auto svg_idx = index_by_id(svg);
  const auto mei_idx = index_by_id(mei);
  const auto pxml_idx = index_by_id(pxml);

  // SVG rectangles correct the MEI zones: SVG geometry, MEI vocabulary.
  rep.svg_mei = match_boxes(svg, mei, cfg.min_iou);
  auto& objs = out.objects;
  for (const auto& p : rep.svg_mei.pairs) {
    const auto& s = svg[svg_idx.at(p.left_id)];
    const auto& m = mei[mei_idx.at(p.right_id)];
    objs.push_back({s.bbox, m.kind, {}, AnnotationSource::merged,
                    {{SourceKind::svg, s.native_id}, {SourceKind::mei, m.native_id}}, true});
  }
  for (const auto& id : rep.svg_mei.unmatched_left) {
    const auto& s = svg[svg_idx.at(id)];
    objs.push_back({s.bbox, s.kind, s.label_hint, AnnotationSource::svg, {{SourceKind::svg, s.native_id}}, true});
  }
  for (const auto& id : rep.svg_mei.unmatched_right) {
    const auto& m = mei[mei_idx.at(id)];
    objs.push_back({m.bbox, m.kind, m.label_hint, AnnotationSource::mei, {{SourceKind::mei, m.native_id}}, false});
  }

  // PageXML staves against MEI-derived staves, to unify the two id spaces.
  std::vector<SourceObject> pxml_staff;
  std::vector<SourceObject> mei_staff;
  std::map<std::string, std::size_t> mei_staff_obj;
  for (std::size_t k = 0; k < objs.size(); ++k) {
    const auto& o = objs[k];
    if (cfg.category_for(o.kind, o.hint) != category::staff) continue;
    for (const auto& m : o.members) {
      if (m.source != SourceKind::mei) continue;
      mei_staff.push_back({SourceKind::mei, o.kind, o.bbox, m.native_id, o.hint});
      mei_staff_obj.emplace(m.native_id, k);
    }
  }
  for (const auto& p : pxml)
    if (cfg.category_for(p.kind, p.label_hint) == category::staff) pxml_staff.push_back(p);
  rep.pagexml_mei_staff = match_boxes(pxml_staff, mei_staff, cfg.min_iou);
  std::map<std::string, std::size_t> pxml_absorbed;
  for (const auto& p : rep.pagexml_mei_staff.pairs) {
    auto& o = objs[mei_staff_obj.at(p.right_id)];
    const ObjectRef pref{SourceKind::pagexml, p.left_id};
    o.source = AnnotationSource::merged;
    if (o.svg_geometry) {
      o.members.push_back(pref);
    } else {
      o.bbox = pxml[pxml_idx.at(p.left_id)].bbox;
      o.members.insert(o.members.begin(), pref);
    }
    pxml_absorbed.emplace(p.left_id, 0);
  }
  for (const auto& p : pxml) {
    if (pxml_absorbed.count(p.native_id)) continue;
    objs.push_back({p.bbox, p.kind, p.label_hint, AnnotationSource::pagexml, {{SourceKind::pagexml, p.native_id}}, false});
  }

  rep.empty_page = svg.empty() && mei.empty() && pxml.empty();
  return out;
}

}  // namespace detail

/// Fuses per-page PAGE XML, MEI, and SVG objects into one dataset. Pages may be fused
/// concurrently; ids are assigned afterwards in ascending page_index order.
inline MergeResult merge_sources(const std::vector<PageSources>& pages, const MergeConfig& cfg,
                                 const Executor& exec = Executor::serial()) {
  if (!(cfg.min_iou > 0.0 && cfg.min_iou <= 1.0)) throw ArgumentError("min_iou must lie in (0, 1]");
  std::vector<std::size_t> order(pages.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return pages[a].image.page_index < pages[b].image.page_index;
  });

  std::vector<detail::PageOutcome> outcomes(pages.size());
  exec.parallel_for(order.size(), [&](std::size_t i) { outcomes[i] = detail::fuse_page(pages[order[i]], cfg); });

  MergeResult result;
  AnnotationId next_id = 1;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& img = pages[order[i]].image;
    auto& oc = outcomes[i];
    result.dataset.images.push_back(img);
    for (auto& o : oc.objects) {
      auto clipped = o.bbox.clamped_to(img.width, img.height);
      if (!clipped) {
        ++oc.report.rejected;
        for (auto& m : o.members) oc.report.accounts.push_back({m, Disposition::skipped, std::nullopt});
        continue;
      }
      if (!(*clipped == o.bbox)) ++oc.report.clamped;
      const AnnotationId id = next_id++;
      result.dataset.annotations.push_back({id, img.id, cfg.category_for(o.kind, o.hint), *clipped, o.source});
      for (std::size_t k = 0; k < o.members.size(); ++k)
        oc.report.accounts.push_back({o.members[k], k == 0 ? Disposition::annotation : Disposition::partner, id});
    }
    result.pages.push_back(std::move(oc.report));
  }
  validate(result.dataset);
  return result;
}

inline nlohmann::ordered_json to_json(const MatchReport& r) {
  nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
  for (const auto& p : r.pairs) pairs.push_back({{"left", p.left_id}, {"right", p.right_id}, {"iou", p.iou}});
  return {{"pairs", pairs}, {"unmatched_left", r.unmatched_left}, {"unmatched_right", r.unmatched_right}};
}

inline nlohmann::ordered_json merge_report_json(const MergeResult& res) {
  nlohmann::ordered_json pages = nlohmann::ordered_json::array();
  std::size_t warnings = 0, clamped = 0, rejected = 0, empty = 0;
  for (const auto& p : res.pages) {
    nlohmann::ordered_json accounts = nlohmann::ordered_json::array();
    for (const auto& a : p.accounts) {
      nlohmann::ordered_json j{{"source", std::string(to_string(a.ref.source))},
                               {"native_id", a.ref.native_id},
                               {"disposition", std::string(to_string(a.disposition))}};
      j["annotation_id"] = a.annotation_id ? nlohmann::ordered_json(*a.annotation_id) : nlohmann::ordered_json();
      accounts.push_back(std::move(j));
    }
    warnings += p.pagexml_warnings.size() + p.mei_warnings.size() + p.svg_warnings.size();
    clamped += p.clamped;
    rejected += p.rejected;
    empty += p.empty_page ? 1 : 0;
    pages.push_back({{"image_id", p.image_id},
                     {"file_name", p.file_name},
                     {"svg_mei", to_json(p.svg_mei)},
                     {"pagexml_mei_staff", to_json(p.pagexml_mei_staff)},
                     {"warnings",
                      {{"pagexml", p.pagexml_warnings},
                       {"mei", p.mei_warnings},
                       {"svg", p.svg_warnings},
                       {"clamped", p.clamped},
                       {"rejected", p.rejected},
                       {"empty_page", p.empty_page}}},
                     {"objects", accounts}});
  }
  return {{"pages", pages},
          {"totals",
           {{"images", res.dataset.images.size()},
            {"annotations", res.dataset.annotations.size()},
            {"parse_warnings", warnings},
            {"clamped", clamped},
            {"rejected", rejected},
            {"empty_pages", empty}}}};
}

/// Reads an image manifest: either a JSON array of image records or an object with an
/// "images" array, in the COCO image schema.
inline std::vector<ImageRecord> read_image_manifest(const std::filesystem::path& path) {
  auto doc = parse_json_text(read_text_file(path), path.string());
  nlohmann::json wrapped = doc.is_array() ? nlohmann::json{{"images", doc}} : doc;
  if (!wrapped.is_object() || !wrapped.contains("images")) throw FormatError(path.string() + ": no images array");
  nlohmann::json images_only{{"images", wrapped["images"]}};
  return coco_from_json(images_only).dataset.images;
}

namespace detail {

inline std::optional<std::filesystem::path> find_by_stem(const std::filesystem::path& dir, const std::string& stem) {
  if (dir.empty()) return std::nullopt;
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> hits;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().stem().string() == stem) hits.push_back(e.path());
  if (hits.size() > 1) throw ValidationError("ambiguous sources for page '" + stem + "' in " + dir.string());
  if (hits.empty()) return std::nullopt;
  return hits.front();
}

template <typename Parser>
SourceParse parse_file(const std::optional<std::filesystem::path>& path, Parser parser) {
  if (!path) return {};
  const auto text = read_text_file(*path);
  try {
    return parser(text);
  } catch (const ParseError& e) {
    throw ParseError(path->string() + ": " + e.what(), e.line());
  } catch (const FormatError& e) {
    throw FormatError(path->string() + ": " + e.what());
  }
}

}  // namespace detail

/// Pairs each manifest image with the source files sharing its file-name stem.
/// A directory may be empty (path {}), in which case that source contributes nothing.
inline std::vector<PageSources> load_page_sources(const std::vector<ImageRecord>& images,
                                                  const std::filesystem::path& pagexml_dir,
                                                  const std::filesystem::path& mei_dir,
                                                  const std::filesystem::path& svg_dir) {
  std::vector<PageSources> pages;
  for (const auto& img : images) {
    const auto stem = std::filesystem::path(img.file_name).stem().string();
    PageSources p;
    p.image = img;
    p.pagexml = detail::parse_file(detail::find_by_stem(pagexml_dir, stem), parse_pagexml);
    p.mei = detail::parse_file(detail::find_by_stem(mei_dir, stem), parse_mei);
    p.svg = detail::parse_file(detail::find_by_stem(svg_dir, stem), parse_svg_rects);
    pages.push_back(std::move(p));
  }
  return pages;
}

struct DatasetStats {
  std::vector<std::pair<std::string, std::size_t>> counts;  // Table order, every category present
  std::size_t total = 0;
  double mean_per_image = 0.0;

  std::size_t count(std::string_view name) const {
    for (const auto& [n, c] : counts)
      if (n == name) return c;
    throw ArgumentError("unknown category '" + std::string(name) + "'");
  }
};

inline DatasetStats dataset_stats(const DatasetCOCO& ds) {
  DatasetStats s;
  std::vector<std::size_t> per(kNumCategories, 0);
  for (const auto& a : ds.annotations) ++per.at(static_cast<std::size_t>(a.category_id));
  for (int i = 0; i < kNumCategories; ++i) {
    s.counts.emplace_back(std::string(kCategoryNames[i]), per[i]);
    s.total += per[i];
  }
  s.mean_per_image = ds.images.empty() ? 0.0 : static_cast<double>(s.total) / static_cast<double>(ds.images.size());
  return s;
}

}  // namespace scriptorium
