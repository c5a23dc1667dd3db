#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>
#include <opencv2/imgcodecs.hpp>

#include "htrkit/dataprep.hpp"
#include "test_support.hpp"

namespace htrkit {
namespace {

using nlohmann::json;

cv::Mat checkerboard(int rows, int cols, int channels = 3) {
  cv::Mat m(rows, cols, CV_8UC(channels));
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < cols; ++x) {
      for (int c = 0; c < channels; ++c) {
        m.ptr<std::uint8_t>(y)[x * channels + c] = static_cast<std::uint8_t>(((x + y) % 2) * 100 + 10 * c + 1);
      }
    }
  }
  return m;
}

LineAnnotation ann(std::vector<std::vector<double>> polys, BBox box, int label = 1) {
  LineAnnotation a;
  a.id = label;
  a.image_id = 1;
  a.polygons = std::move(polys);
  a.bbox = box;
  a.label = label;
  return a;
}

// Every output pixel is either the page pixel (center inside some ring) or
// white, and nothing else.
void expect_masked(const cv::Mat& page, const LineAnnotation& a, const cv::Mat& out) {
  const PixelRect r = crop_rect(a.bbox);
  ASSERT_EQ(out.rows, r.h);
  ASSERT_EQ(out.cols, r.w);
  const int ch = page.channels();
  for (int row = 0; row < r.h; ++row) {
    for (int col = 0; col < r.w; ++col) {
      const int sx = r.x + col, sy = r.y + row;
      bool inside = false;
      for (const auto& ring : a.polygons) inside = inside || testing::oracle_inside(ring, sx + 0.5, sy + 0.5);
      const bool on_page = sx >= 0 && sy >= 0 && sx < page.cols && sy < page.rows;
      for (int c = 0; c < ch; ++c) {
        const int got = out.ptr<std::uint8_t>(row)[col * ch + c];
        const int want = inside && on_page ? page.ptr<std::uint8_t>(sy)[sx * ch + c] : 255;
        ASSERT_EQ(got, want) << "pixel (" << sx << ", " << sy << ")";
      }
    }
  }
}

json coco_doc() {
  return json::parse(R"({
    "images": [{"id": 1, "file_name": "10_2.jpg"}],
    "categories": [{"id": 4, "name": "3"}],
    "annotations": [
      {"id": 1, "image_id": 1, "segmentation": [[330, 1294, 3216, 1294, 3216, 1525, 330, 1525]],
       "bbox": [330, 1294, 2886, 231], "label": 2},
      {"id": 2, "image_id": 1, "segmentation": [[0, 0, 4, 0, 4, 4]], "bbox": [0, 0, 4, 4],
       "attributes": {"label": "1"}},
      {"id": 3, "image_id": 1, "segmentation": [0, 0, 4, 0, 4, 4], "bbox": [0, 0, 4, 4], "category_id": 4}
    ]})");
}

TEST(ParseTest, ReadsLabelsFromEverySource) {
  const auto coco = parse_annotations(coco_doc());
  ASSERT_EQ(coco.images.size(), 1u);
  EXPECT_EQ(coco.images[0].file_name, "10_2.jpg");
  const auto& anns = coco.by_image.at(1);
  ASSERT_EQ(anns.size(), 3u);
  EXPECT_EQ(anns[0].label, 2);
  EXPECT_EQ(anns[1].label, 1);
  EXPECT_EQ(anns[2].label, 3);
  EXPECT_EQ(anns[2].polygons.size(), 1u);
}

TEST(ParseTest, CropRectangleFromBbox) {
  const auto coco = parse_annotations(coco_doc());
  const PixelRect r = crop_rect(coco.by_image.at(1)[0].bbox);
  EXPECT_EQ(r.x, 330);
  EXPECT_EQ(r.x + r.w, 3216);
  EXPECT_EQ(r.y, 1294);
  EXPECT_EQ(r.y + r.h, 1525);
  const PixelRect h = crop_rect({0.5, 1.49, 2.5, 3.5});
  EXPECT_EQ(h.x, 1);
  EXPECT_EQ(h.y, 1);
  EXPECT_EQ(h.w, 3);
  EXPECT_EQ(h.h, 4);
}

TEST(ParseTest, RejectsMalformedAnnotations) {
  auto doc = coco_doc();
  doc["annotations"][0]["label"] = 0;
  EXPECT_THROW(parse_annotations(doc), Error);
  doc = coco_doc();
  doc["annotations"][0]["segmentation"] = json::array({json::array({1, 2, 3})});
  EXPECT_THROW(parse_annotations(doc), Error);
  doc = coco_doc();
  doc["annotations"][0]["bbox"] = json::array({330, 1294, 0, 231});
  EXPECT_THROW(parse_annotations(doc), Error);
  doc = coco_doc();
  doc["annotations"][0]["bbox"] = json::array({0, 0, 10, 10});
  EXPECT_THROW(parse_annotations(doc), Error);
  doc = coco_doc();
  doc["annotations"][0].erase("segmentation");
  EXPECT_THROW(parse_annotations(doc), Error);
  EXPECT_THROW(parse_annotations(json::array()), Error);
  EXPECT_THROW(parse_annotations(std::filesystem::path("/nonexistent.json")), Error);
}

TEST(CutLineTest, RectangleKeepsAllPixels) {
  const cv::Mat page = checkerboard(20, 30);
  const auto a = ann({{2, 3, 12, 3, 12, 8, 2, 8}}, {2, 3, 10, 5});
  const cv::Mat out = cut_line(page, a);
  EXPECT_EQ(cv::norm(out, page(cv::Rect(2, 3, 10, 5)), cv::NORM_INF), 0.0);
}

TEST(CutLineTest, TriangleWhitensOutside) {
  const cv::Mat page = checkerboard(10, 10, 1);
  const auto a = ann({{0, 0, 4, 0, 0, 4}}, {0, 0, 4, 4});
  const cv::Mat out = cut_line(page, a);
  expect_masked(page, a, out);
  EXPECT_EQ(out.at<std::uint8_t>(3, 3), 255);
  EXPECT_EQ(out.at<std::uint8_t>(0, 0), page.at<std::uint8_t>(0, 0));
}

TEST(CutLineTest, RandomPolygonsMatchPointInPolygonOracle) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> coord(1.0, 38.0);
  std::uniform_int_distribution<int> npts(3, 9), nrings(1, 3);
  const cv::Mat page = checkerboard(40, 40);
  for (int i = 0; i < 200; ++i) {
    std::vector<std::vector<double>> rings(static_cast<std::size_t>(nrings(rng)));
    double x0 = 1e9, y0 = 1e9, x1 = -1e9, y1 = -1e9;
    for (auto& ring : rings) {
      for (int k = npts(rng); k > 0; --k) {
        const double x = coord(rng), y = coord(rng);
        ring.push_back(x);
        ring.push_back(y);
        x0 = std::min(x0, x), y0 = std::min(y0, y), x1 = std::max(x1, x), y1 = std::max(y1, y);
      }
    }
    const auto a = ann(rings, {x0, y0, x1 - x0, y1 - y0});
    cv::Mat out;
    try {
      out = cut_line(page, a);
    } catch (const Error&) {
      continue;  // degenerate draw
    }
    expect_masked(page, a, out);
  }
}

TEST(CutLineTest, SmallOverhangIsFilledWhite) {
  const cv::Mat page = checkerboard(10, 10);
  const auto a = ann({{6, 2, 12, 2, 12, 6, 6, 6}}, {6, 2, 6, 4});
  std::vector<std::string> warnings;
  const cv::Mat out = cut_line(page, a, &warnings);
  EXPECT_EQ(out.cols, 6);
  EXPECT_EQ(out.rows, 4);
  expect_masked(page, a, out);
  EXPECT_EQ(warnings.size(), 1u);

  const auto far = ann({{6, 2, 14, 2, 14, 6, 6, 6}}, {6, 2, 8, 4});
  EXPECT_THROW(cut_line(page, far), Error);
  const auto outside = ann({{20, 20, 25, 20, 25, 25}}, {20, 20, 5, 5});
  EXPECT_THROW(cut_line(page, outside), Error);
  const auto flat = ann({{1, 1, 5, 1, 9, 1}}, {1, 1, 8, 1});
  EXPECT_THROW(cut_line(page, flat), Error);
}

TEST(OrientTest, RotatesOnlyTallLines) {
  cv::Mat tall(9, 3, CV_8UC1, cv::Scalar(0));
  tall.at<std::uint8_t>(0, 0) = 7;  // top-left
  const cv::Mat ccw = orient_line(tall);
  EXPECT_EQ(ccw.rows, 3);
  EXPECT_EQ(ccw.cols, 9);
  EXPECT_EQ(ccw.at<std::uint8_t>(2, 0), 7);  // counterclockwise: top-left goes bottom-left
  const cv::Mat cw = orient_line(tall, 2.0, Rotation::kClockwise);
  EXPECT_EQ(cw.at<std::uint8_t>(0, 8), 7);
  const cv::Mat square(6, 3, CV_8UC1, cv::Scalar(0));
  EXPECT_EQ(orient_line(square).rows, 6);  // ratio 2 is not above the threshold
  EXPECT_EQ(orient_line(tall, 5.0).rows, 9);
  EXPECT_EQ(orient_line(ccw).size(), ccw.size());  // never rotates twice
}

TEST(StemTest, RoundTrip) {
  EXPECT_EQ(line_stem(10, 2, 5), "10_2_5");
  EXPECT_EQ(parse_line_stem("10_2_5"), (std::array<int, 3>{10, 2, 5}));
  EXPECT_FALSE(parse_line_stem("10_2"));
  EXPECT_FALSE(parse_line_stem("10_2_"));
  EXPECT_FALSE(parse_line_stem("a_2_3"));
  EXPECT_EQ(parse_page_stem("10_2"), std::make_pair(10, 2));
  EXPECT_FALSE(parse_page_stem("10_2_3"));
  EXPECT_FALSE(parse_page_stem("0_2"));
}

struct ExportFixture : ::testing::Test {
  testing::TempDir dir;
  std::filesystem::path images = dir.path() / "images";
  std::filesystem::path texts = dir.path() / "texts";

  void SetUp() override {
    std::filesystem::create_directories(images);
    std::filesystem::create_directories(texts);
    cv::imwrite((images / "10_2.png").string(), checkerboard(40, 60));
    testing::write_file(texts / "10_2.txt", "line one\nline two\nline three\nline four\nline five\n");
  }

  json doc(const std::vector<int>& labels) const {
    json anns = json::array();
    int id = 1;
    for (int label : labels) {
      const double y = 2.0 * id;
      anns.push_back({{"id", id++},
                      {"image_id", 1},
                      {"segmentation", json::array({json::array({1, y, 30, y, 30, y + 3, 1, y + 3})})},
                      {"bbox", json::array({1, y, 29, 3})},
                      {"label", label}});
    }
    return {{"images", json::array({{{"id", 1}, {"file_name", "10_2.png"}}})}, {"annotations", anns}};
  }
};

TEST_F(ExportFixture, WritesNamedPairs) {
  const auto coco = parse_annotations(doc({5, 1}));
  const auto pages = assemble_pages(coco, images, texts);
  ASSERT_EQ(pages.size(), 1u);
  EXPECT_EQ(pages[0].lines.size(), 5u);
  const auto m = export_pairs(pages, coco.by_image, dir.path() / "out");
  ASSERT_EQ(m.pairs.size(), 2u);
  EXPECT_TRUE(m.failures.empty());
  EXPECT_EQ(m.pairs[0].stem, "10_2_1");
  EXPECT_EQ(m.pairs[1].stem, "10_2_5");
  EXPECT_EQ(testing::read_file(dir.path() / "out" / "10_2_5.txt"), "line five\n");
  const cv::Mat img = cv::imread((dir.path() / "out" / "10_2_5.jpg").string());
  EXPECT_EQ(img.cols, 29);
  EXPECT_EQ(img.rows, 3);
}

TEST_F(ExportFixture, LabelBeyondTranslationFails) {
  const auto coco = parse_annotations(doc({7, 2}));
  const auto m = export_pairs(assemble_pages(coco, images, texts), coco.by_image, dir.path() / "out");
  ASSERT_EQ(m.failures.size(), 1u);
  EXPECT_EQ(m.failures[0].reason, "label 7 of 5");
  EXPECT_EQ(m.pairs.size(), 1u);
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "out" / "10_2_7.jpg"));
}

TEST_F(ExportFixture, EveryAnnotationIsAccountedFor) {
  const std::vector<int> labels{1, 2, 2, 3, 9, 4, 5, 5, 5};
  const auto coco = parse_annotations(doc(labels));
  const auto m = export_pairs(assemble_pages(coco, images, texts), coco.by_image, dir.path() / "out");
  EXPECT_EQ(m.pairs.size() + m.failures.size(), labels.size());
  EXPECT_EQ(m.pairs.size(), 3u);  // 1, 3, 4
  std::set<std::string> stems;
  for (const auto& p : m.pairs) stems.insert(p.stem);
  EXPECT_EQ(stems, (std::set<std::string>{"10_2_1", "10_2_3", "10_2_4"}));
}

TEST_F(ExportFixture, MissingInputsBecomeFailures) {
  std::filesystem::remove(texts / "10_2.txt");
  const auto coco = parse_annotations(doc({1, 2}));
  const auto m = export_pairs(assemble_pages(coco, images, texts), coco.by_image, dir.path() / "out");
  EXPECT_TRUE(m.pairs.empty());
  EXPECT_EQ(m.failures.size(), 2u);

  auto bad = doc({1});
  bad["images"][0]["file_name"] = "page.png";
  bad["annotations"].push_back({{"id", 9}, {"image_id", 5}, {"segmentation", json::array({json::array({0, 0, 2, 0, 2, 2})})},
                                {"bbox", json::array({0, 0, 2, 2})}, {"label", 1}});
  const auto coco2 = parse_annotations(bad);
  const auto m2 = export_pairs(assemble_pages(coco2, images, texts), coco2.by_image, dir.path() / "out");
  EXPECT_TRUE(m2.pairs.empty());
  EXPECT_EQ(m2.failures.size(), 2u);
}

TEST_F(ExportFixture, ManifestRoundTrip) {
  const auto coco = parse_annotations(doc({1, 7}));
  const auto m = export_pairs(assemble_pages(coco, images, texts), coco.by_image, dir.path() / "out");
  save_manifest(m, dir.path() / "manifest.json");
  const auto back = load_manifest(dir.path() / "manifest.json");
  EXPECT_EQ(manifest_to_json(back), manifest_to_json(m));
  EXPECT_THROW(manifest_from_json(json::object()), Error);
}

TEST(StatsTest, CountsSymbolsAndWords) {
  testing::TempDir dir;
  testing::write_file(dir.path() / "1.txt", "ab\n");
  testing::write_file(dir.path() / "2.txt", "a b");
  const auto s = dataset_stats(dir.path());
  EXPECT_EQ(s.line_count, 2u);
  EXPECT_EQ(s.symbol_count, 5u);
  EXPECT_EQ(s.word_count, 3u);
  ASSERT_FALSE(s.char_histogram.empty());
  EXPECT_EQ(s.char_histogram[0], std::make_pair(std::string("a"), std::size_t{2}));
  EXPECT_EQ(json::parse(stats_json(s))["symbols"], 5);
  EXPECT_THROW(dataset_stats(dir.path() / "missing"), Error);
}

TEST(SplitTest, SizesFollowRoundedFractions) {
  std::vector<int> ten(10);
  std::iota(ten.begin(), ten.end(), 0);
  const auto s = split_dataset(ten, 1);
  EXPECT_EQ(s[0].size(), 6u);
  EXPECT_EQ(s[1].size(), 2u);
  EXPECT_EQ(s[2].size(), 2u);

  std::vector<int> full(9694);
  std::iota(full.begin(), full.end(), 0);
  const auto f = split_dataset(full, 42);
  EXPECT_EQ(f[0].size(), 6237u);
  EXPECT_EQ(f[1].size(), 1930u);
  EXPECT_EQ(f[2].size(), 1527u);
  std::set<int> seen;
  for (const auto& part : f) seen.insert(part.begin(), part.end());
  EXPECT_EQ(seen.size(), full.size());
}

TEST(SplitTest, SeedDeterminesPartition) {
  std::vector<int> items(100);
  std::iota(items.begin(), items.end(), 0);
  EXPECT_EQ(split_dataset(items, 7), split_dataset(items, 7));
  EXPECT_NE(split_dataset(items, 7), split_dataset(items, 8));
  EXPECT_THROW(split_dataset(std::vector<int>{1, 2}, 1), Error);
  EXPECT_THROW(split_dataset(items, 1, {0.5, 0.5, 0.5}), Error);
}

}  // namespace
}  // namespace htrkit
