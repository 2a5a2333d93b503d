#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <set>

#include "oracle/brute_force.hpp"
#include "scriptorium/core/yolo.hpp"
#include "scriptorium/merge/merge.hpp"
#include "scriptorium/synth.hpp"

using namespace scriptorium;
namespace fs = std::filesystem;

namespace {

const fs::path kFixture = fs::path(SCRIPTORIUM_TEST_DATA) / "merge_fixture";

SourceObject obj(SourceKind src, std::string kind, BBox b, std::string id, std::string hint = {}) {
  return {src, std::move(kind), b, std::move(id), std::move(hint)};
}

MergeResult merge_fixture(const Executor& exec = Executor::serial()) {
  const auto images = read_image_manifest(kFixture / "images.json");
  const auto cfg = merge_config_from_json(parse_json_text(read_text_file(kFixture / "config.json"), "config"));
  return merge_sources(load_page_sources(images, kFixture / "pagexml", kFixture / "mei", kFixture / "svg"), cfg, exec);
}

}  // namespace

TEST(PageXml, HullOfCoordsPolygon) {
  const auto p = parse_pagexml(R"(<PcGts><Page>
    <TextRegion id="t1" type="paragraph"><Coords points="5,2 15,2 15,30 5,30"/></TextRegion>
    <TextLine id="l1"><Coords points="5,5 15,2 10,30"/></TextLine>
  </Page></PcGts>)");
  ASSERT_EQ(p.objects.size(), 2u);
  EXPECT_EQ(p.objects[0].bbox, BBox(5, 2, 10, 28));
  EXPECT_EQ(p.objects[0].kind, "TextRegion");
  EXPECT_EQ(p.objects[0].label_hint, "paragraph");
  EXPECT_EQ(p.objects[1].bbox, BBox(5, 2, 10, 28));
  EXPECT_TRUE(p.warnings.empty());
}

TEST(PageXml, EmptyPage) {
  const auto p = parse_pagexml("<PcGts><Page imageWidth=\"10\" imageHeight=\"10\"/></PcGts>");
  EXPECT_TRUE(p.objects.empty());
  EXPECT_TRUE(p.warnings.empty());
}

TEST(PageXml, DegenerateAndMalformedPolygonsWarn) {
  const auto p = parse_pagexml(R"(<PcGts><Page>
    <TextLine id="a"><Coords points="1,1 5,1 9,1"/></TextLine>
    <TextLine id="b"><Coords points="1,1 5,5"/></TextLine>
    <TextLine id="c"><Coords points="1,x 5,5 6,6"/></TextLine>
    <TextLine id="d"/>
  </Page></PcGts>)");
  EXPECT_TRUE(p.objects.empty());
  EXPECT_EQ(p.warnings.size(), 4u);
}

TEST(PageXml, MalformedXmlReportsLine) {
  try {
    parse_pagexml("<PcGts>\n<Page>\n<TextLine>\n</Page>");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_GE(e.line(), 3u);
  }
}

TEST(Mei, ZoneCorners) {
  const auto p = parse_mei(R"(<mei><facsimile><surface>
      <zone xml:id="z1" ulx="5" uly="5" lrx="15" lry="25"/>
    </surface></facsimile><clef xml:id="c1" facs="#z1"/></mei>)");
  ASSERT_EQ(p.objects.size(), 1u);
  EXPECT_EQ(p.objects[0].bbox, BBox(5, 5, 10, 20));
  EXPECT_EQ(p.objects[0].kind, "zone/clef");
  EXPECT_EQ(p.objects[0].native_id, "c1");
}

TEST(Mei, DegenerateZoneWarnsAndDrops) {
  const auto p = parse_mei(R"(<mei><zone xml:id="z1" ulx="10" uly="10" lrx="10" lry="20"/>
      <neume xml:id="n1" facs="#z1"/><neume xml:id="n2" facs="#missing"/></mei>)");
  EXPECT_TRUE(p.objects.empty());
  EXPECT_EQ(p.warnings.size(), 2u);
}

TEST(Mei, SharedZoneYieldsOneObjectPerReference) {
  const auto p = parse_mei(R"(<mei><zone xml:id="z1" ulx="0" uly="0" lrx="10" lry="10"/>
      <neume xml:id="n1" facs="#z1"/><custos xml:id="k1" facs="#z1"/></mei>)");
  ASSERT_EQ(p.objects.size(), 2u);
  EXPECT_EQ(p.objects[0].kind, "zone/neume");
  EXPECT_EQ(p.objects[1].kind, "zone/custos");
  EXPECT_EQ(p.objects[0].bbox, p.objects[1].bbox);
}

TEST(Svg, RectsPassThroughOthersIgnored) {
  const auto p = parse_svg_rects(R"(<svg xmlns="http://www.w3.org/2000/svg">
    <rect id="a" class="clef" x="1" y="2" width="3" height="4"/>
    <path d="M0 0 L1 1"/>
    <rect id="b" x="10px" y="10" width="5" height="5"/>
    <path d="M0 0 L2 2"/>
    <rect id="c" x="10" y="10" width="5" height="5"/>
  </svg>)");
  ASSERT_EQ(p.objects.size(), 3u);
  EXPECT_EQ(p.objects[0].bbox, BBox(1, 2, 3, 4));
  EXPECT_EQ(p.objects[0].label_hint, "clef");
  EXPECT_TRUE(p.warnings.empty());
}

TEST(Svg, ZeroWidthWarns) {
  const auto p = parse_svg_rects(R"(<svg><rect id="a" x="1" y="2" width="0" height="4"/></svg>)");
  EXPECT_TRUE(p.objects.empty());
  EXPECT_EQ(p.warnings.size(), 1u);
}

TEST(Svg, TransformsRejected) {
  EXPECT_THROW(parse_svg_rects(R"x(<svg><rect transform="rotate(5)" x="1" y="2" width="3" height="4"/></svg>)x"),
               FormatError);
  EXPECT_THROW(parse_svg_rects(R"x(<svg><g transform="translate(1,1)"><rect x="1" y="2" width="3" height="4"/></g></svg>)x"),
               FormatError);
}

TEST(MatchBoxes, GreedyByIou) {
  // A-B 0.8, A-C 0.5, D-B 8/9, D-C 45/95. Greedy takes D-B first, leaving A with C.
  const std::vector<SourceObject> left = {obj(SourceKind::svg, "rect", BBox(0, 0, 10, 10), "A"),
                                          obj(SourceKind::svg, "rect", BBox(0, 0, 9, 10), "D")};
  const std::vector<SourceObject> right = {obj(SourceKind::mei, "z", BBox(0, 0, 8, 10), "B"),
                                           obj(SourceKind::mei, "z", BBox(0, 0, 10, 5), "C")};
  const auto r = match_boxes(left, right, 0.25);
  ASSERT_EQ(r.pairs.size(), 2u);
  EXPECT_EQ(r.pairs[0].left_id, "D");
  EXPECT_EQ(r.pairs[0].right_id, "B");
  EXPECT_NEAR(r.pairs[0].iou, 8.0 / 9.0, 1e-15);
  EXPECT_EQ(r.pairs[1].left_id, "A");
  EXPECT_EQ(r.pairs[1].right_id, "C");
  EXPECT_DOUBLE_EQ(r.pairs[1].iou, 0.5);
  EXPECT_TRUE(r.unmatched_left.empty());
}

TEST(MatchBoxes, Examples) {
  using V = std::vector<SourceObject>;
  const V a{obj(SourceKind::svg, "rect", BBox(0, 0, 10, 10), "A")};
  const auto same = match_boxes(a, V{obj(SourceKind::mei, "z", BBox(0, 0, 10, 10), "B")}, 0.25);
  ASSERT_EQ(same.pairs.size(), 1u);
  EXPECT_EQ(same.pairs[0].iou, 1.0);
  const auto apart = match_boxes(a, V{obj(SourceKind::mei, "z", BBox(100, 100, 5, 5), "B")}, 0.25);
  EXPECT_TRUE(apart.pairs.empty());
  EXPECT_EQ(apart.unmatched_left.size(), 1u);
  EXPECT_EQ(apart.unmatched_right.size(), 1u);
  const auto nested = match_boxes(V{obj(SourceKind::svg, "rect", BBox(0, 0, 4, 4), "A"), obj(SourceKind::svg, "rect", BBox(0, 0, 8, 8), "C")},
                                  V{obj(SourceKind::mei, "z", BBox(0, 0, 8, 8), "B")}, 0.25);
  ASSERT_EQ(nested.pairs.size(), 1u);
  EXPECT_EQ(nested.pairs[0].left_id, "C");
  EXPECT_EQ(nested.pairs[0].right_id, "B");
  EXPECT_EQ(nested.unmatched_left, std::vector<std::string>{"A"});
  EXPECT_TRUE(match_boxes(V{}, V{}, 0.25).pairs.empty());
}

TEST(MatchBoxes, ThresholdAndTies) {
  const std::vector<SourceObject> left = {obj(SourceKind::svg, "rect", BBox(0, 0, 10, 10), "b"),
                                          obj(SourceKind::svg, "rect", BBox(0, 0, 10, 10), "a")};
  const std::vector<SourceObject> right = {obj(SourceKind::mei, "z", BBox(0, 0, 10, 10), "x"),
                                           obj(SourceKind::mei, "z", BBox(50, 50, 5, 5), "y")};
  const auto r = match_boxes(left, right, 0.25);
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.pairs[0].left_id, "a");
  EXPECT_EQ(r.unmatched_left, std::vector<std::string>{"b"});
  EXPECT_EQ(r.unmatched_right, std::vector<std::string>{"y"});
  EXPECT_THROW(match_boxes(left, right, 0.0), ArgumentError);
}

TEST(MatchBoxes, AgreesWithBruteForce) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> n(0, 8), coord(0, 20), size(1, 12);
  for (int t = 0; t < 3000; ++t) {
    std::vector<SourceObject> l, r;
    const int nl = n(rng), nr = n(rng);
    for (int i = 0; i < nl; ++i)
      l.push_back(obj(SourceKind::svg, "rect", BBox(coord(rng), coord(rng), size(rng), size(rng)), "l" + std::to_string(i)));
    for (int i = 0; i < nr; ++i)
      r.push_back(obj(SourceKind::mei, "z", BBox(coord(rng), coord(rng), size(rng), size(rng)), "r" + std::to_string(i)));
    const double thr = t % 3 == 0 ? 0.1 : 0.25;
    const auto got = match_boxes(l, r, thr);
    ASSERT_EQ(got, oracle::greedy_match(l, r, thr)) << "trial " << t;
    std::set<std::string> seen;
    for (const auto& p : got.pairs) {
      ASSERT_TRUE(seen.insert(p.left_id).second);
      ASSERT_TRUE(seen.insert(p.right_id).second);
    }
    ASSERT_EQ(got.pairs.size() * 2 + got.unmatched_left.size() + got.unmatched_right.size(),
              static_cast<std::size_t>(nl + nr));
  }
}

TEST(Merge, ClefRectOverClefZone) {
  PageSources p;
  p.image = {1, "p.png", 100, 100, 0};
  p.mei.objects = {obj(SourceKind::mei, "zone/clef", BBox(5, 6, 10, 19), "c1")};
  p.svg.objects = {obj(SourceKind::svg, "rect", BBox(5, 5, 10, 20), "r1", "clef")};
  const auto res = merge_sources({p}, MergeConfig{});
  ASSERT_EQ(res.dataset.annotations.size(), 1u);
  EXPECT_EQ(res.dataset.annotations[0].category_id, category::clef);
  EXPECT_EQ(res.dataset.annotations[0].bbox, BBox(5, 5, 10, 20));
  // the zone lies inside the rect: 190 / 200
  EXPECT_NEAR(res.pages[0].svg_mei.pairs.at(0).iou, 0.95, 1e-12);
}

TEST(Merge, SvgGeometryMeiVocabulary) {
  PageSources p;
  p.image = {1, "p.png", 100, 100, 0};
  p.mei.objects = {obj(SourceKind::mei, "zone/clef", BBox(5, 5, 10, 20), "c1")};
  p.svg.objects = {obj(SourceKind::svg, "rect", BBox(6, 5, 9.5, 20), "r1", "neume")};
  const auto res = merge_sources({p}, MergeConfig{});
  ASSERT_EQ(res.dataset.annotations.size(), 1u);
  const auto& a = res.dataset.annotations[0];
  EXPECT_EQ(a.category_id, category::clef);
  EXPECT_EQ(a.bbox, BBox(6, 5, 9.5, 20));
  EXPECT_EQ(a.source, AnnotationSource::merged);
  ASSERT_EQ(res.pages[0].svg_mei.pairs.size(), 1u);
  EXPECT_NEAR(res.pages[0].svg_mei.pairs[0].iou, 180.0 / 210.0, 1e-12);
}

TEST(Merge, HintsAndConfigMapping) {
  MergeConfig cfg;
  EXPECT_EQ(cfg.category_for("TextRegion", "tetragram"), category::staff);
  EXPECT_EQ(cfg.category_for("rect", "custos"), category::custos);
  EXPECT_EQ(cfg.category_for("rect", "scribble"), category::discard);
  EXPECT_EQ(cfg.category_for("TextRegion", "paragraph"), category::text);
  const auto custom = merge_config_from_json(nlohmann::json::parse(R"({"min_iou":0.5,"mapping":{"scribble":"neume","x":8}})"));
  EXPECT_EQ(custom.min_iou, 0.5);
  EXPECT_EQ(custom.category_for("rect", "scribble"), category::neume);
  EXPECT_EQ(custom.category_for("x", ""), category::music_text);
  EXPECT_THROW(merge_config_from_json(nlohmann::json::parse(R"({"mapping":{"a":"note"}})")), ValidationError);
  EXPECT_THROW(merge_config_from_json(nlohmann::json::parse(R"({"min_iou":0})")), ValidationError);
}

TEST(Merge, FixtureExpectedAnnotations) {
  const auto res = merge_fixture();
  struct Want {
    ImageId image;
    CategoryId cat;
    BBox box;
    AnnotationSource src;
  };
  using S = AnnotationSource;
  namespace c = category;
  const std::vector<Want> want = {
      {1, c::clef, BBox(12, 14, 6, 22), S::merged},     {1, c::neume, BBox(20, 19, 10, 11), S::merged},
      {1, c::staff, BBox(10, 11, 180, 39), S::merged},  {1, c::neume, BBox(40, 20, 10, 10), S::mei},
      {1, c::line, BBox(10, 60, 180, 20), S::pagexml},  {1, c::line, BBox(10, 85, 180, 15), S::pagexml},
      {2, c::staff, BBox(10, 9, 180, 42), S::merged},   {2, c::discard, BBox(150, 150, 20, 10), S::svg},
      {2, c::neume, BBox(60, 20, 10, 12), S::mei},      {2, c::neume, BBox(80, 22, 12, 12), S::mei},
      {2, c::line, BBox(10, 120, 170, 20), S::pagexml}, {3, c::clef, BBox(185, 30, 15, 30), S::mei},
      {3, c::neume, BBox(30, 40, 12, 12), S::mei},      {3, c::line, BBox(5, 150, 190, 20), S::pagexml},
  };
  ASSERT_EQ(res.dataset.annotations.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    const auto& a = res.dataset.annotations[i];
    SCOPED_TRACE(i);
    EXPECT_EQ(a.id, static_cast<AnnotationId>(i + 1));
    EXPECT_EQ(a.image_id, want[i].image);
    EXPECT_EQ(a.category_id, want[i].cat);
    EXPECT_EQ(a.bbox, want[i].box);
    EXPECT_EQ(a.source, want[i].src);
  }
  ASSERT_EQ(res.pages.size(), 3u);
  EXPECT_EQ(res.pages[0].pagexml_warnings.size(), 1u);
  EXPECT_EQ(res.pages[1].pagexml_warnings.size(), 1u);
  EXPECT_EQ(res.pages[1].mei_warnings.size(), 1u);
  EXPECT_EQ(res.pages[2].pagexml_warnings.size(), 2u);
  EXPECT_EQ(res.pages[2].svg_warnings.size(), 1u);
  EXPECT_EQ(res.pages[2].clamped, 1u);
  EXPECT_EQ(res.pages[0].pagexml_mei_staff.pairs.size(), 1u);
  EXPECT_EQ(res.pages[1].pagexml_mei_staff.pairs.size(), 1u);

  const auto stats = dataset_stats(res.dataset);
  EXPECT_EQ(stats.count("neume"), 5u);
  EXPECT_EQ(stats.count("line"), 4u);
  EXPECT_EQ(stats.count("clef"), 2u);
  EXPECT_EQ(stats.count("staff"), 2u);
  EXPECT_EQ(stats.count("discard"), 1u);
  EXPECT_EQ(stats.total, 14u);
  EXPECT_NEAR(stats.mean_per_image, 14.0 / 3.0, 1e-12);
}

TEST(Merge, EveryParsedObjectAccountedOnce) {
  const auto images = read_image_manifest(kFixture / "images.json");
  const auto pages = load_page_sources(images, kFixture / "pagexml", kFixture / "mei", kFixture / "svg");
  const auto res = merge_sources(pages, MergeConfig{});
  std::size_t annotations = 0;
  for (std::size_t i = 0; i < pages.size(); ++i) {
    std::multiset<std::pair<SourceKind, std::string>> parsed, accounted;
    for (const auto* sp : {&pages[i].pagexml, &pages[i].mei, &pages[i].svg})
      for (const auto& o : sp->objects) parsed.insert({o.source, o.native_id});
    for (const auto& a : res.pages[i].accounts) {
      accounted.insert({a.ref.source, a.ref.native_id});
      annotations += a.disposition == Disposition::annotation ? 1 : 0;
    }
    EXPECT_EQ(parsed, accounted) << "page " << i;
  }
  EXPECT_EQ(annotations, res.dataset.annotations.size());
}

TEST(Merge, DeterministicUnderParallelism) {
  const auto serial = merge_fixture();
  const auto parallel = merge_fixture(Executor(4));
  EXPECT_EQ(coco_to_json(serial.dataset).dump(), coco_to_json(parallel.dataset).dump());
  EXPECT_EQ(merge_report_json(serial).dump(), merge_report_json(parallel).dump());
}

TEST(Merge, EmptyPageFlagged) {
  PageSources p;
  p.image = {4, "blank.png", 50, 50, 0};
  const auto res = merge_sources({p}, MergeConfig{});
  EXPECT_TRUE(res.pages[0].empty_page);
  EXPECT_EQ(res.dataset.images.size(), 1u);
  EXPECT_EQ(merge_report_json(res)["totals"]["empty_pages"], 1);
}

TEST(Merge, GoldenCocoAndYolo) {
  const auto res = merge_fixture();
  const fs::path golden = fs::path(SCRIPTORIUM_TEST_DATA) / "golden";
  const auto coco = coco_to_json(res.dataset).dump(2) + "\n";
  EXPECT_EQ(coco, read_text_file(golden / "merge_fixture.coco.json"));
  std::string yolo;
  for (const auto& img : res.dataset.images) {
    yolo += "# " + img.file_name + "\n";
    for (const auto& a : res.dataset.annotations_of(img.id)) yolo += yolo_line(a, img) + "\n";
  }
  EXPECT_EQ(yolo, read_text_file(golden / "merge_fixture.yolo.txt"));
}

TEST(DatasetStats, ClassMixTotalsAndCounts) {
  int sum = 0;
  for (int n : synth::kClassMix) sum += n;
  EXPECT_EQ(sum, 7015);
  EXPECT_NEAR(static_cast<double>(sum) / 340.0, 20.63, 0.005);

  DatasetCOCO ds;
  ds.images = {{1, "a.png", 10, 10, 0}, {2, "b.png", 10, 10, 1}};
  ds.annotations = {{1, 1, category::neume, BBox(0, 0, 1, 1), AnnotationSource::mei},
                    {2, 1, category::neume, BBox(0, 0, 1, 1), AnnotationSource::mei},
                    {3, 2, category::custos, BBox(0, 0, 1, 1), AnnotationSource::mei}};
  const auto s = dataset_stats(ds);
  ASSERT_EQ(s.counts.size(), 9u);
  EXPECT_EQ(s.counts[0], (std::pair<std::string, std::size_t>{"neume", 2}));
  EXPECT_EQ(s.count("custos"), 1u);
  EXPECT_EQ(s.count("staff"), 0u);
  EXPECT_DOUBLE_EQ(s.mean_per_image, 1.5);
  EXPECT_THROW(s.count("tetragram"), ArgumentError);

  const auto empty = dataset_stats(DatasetCOCO{});
  EXPECT_EQ(empty.total, 0u);
  EXPECT_EQ(empty.mean_per_image, 0.0);
}
