#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>

#include "htrkit/error.hpp"

namespace htrkit {

/// COCO "xywh" box: upper-left corner plus extent, in (float) pixels.
struct BBox {
  double x = 0, y = 0, w = 0, h = 0;
};

struct LineAnnotation {
  long id = 0;
  long image_id = 0;
  /// One or more flat [x1, y1, ..., xN, yN] rings; their masks are united.
  std::vector<std::vector<double>> polygons;
  BBox bbox;
  int label = 0;  // 1-based line number in the page translation
};

struct CocoImage {
  long id = 0;
  std::string file_name;
};

struct CocoAnnotations {
  std::vector<CocoImage> images;
  std::map<long, std::vector<LineAnnotation>> by_image;
};

/// Reads the COCO subset used for line annotations: images[] and
/// annotations[] with segmentation, bbox and a line-number label. The label
/// is taken from "label", then "attributes.label", then the name of the
/// category referenced by category_id.
CocoAnnotations parse_annotations(const nlohmann::json& coco);
CocoAnnotations parse_annotations(const std::filesystem::path& path);

/// Integer crop rectangle: bbox values rounded half-up.
struct PixelRect {
  int x = 0, y = 0, w = 0, h = 0;
};
PixelRect crop_rect(const BBox& box);

/// Crops the bbox out of `page` and whitens (255 on every channel) each
/// pixel whose center lies outside the polygon under the even-odd rule. A
/// bbox overhanging the page by at most 2 px is accepted and the overhang is
/// filled with 255; a warning is appended to `warnings` when given.
cv::Mat cut_line(const cv::Mat& page, const LineAnnotation& ann,
                 std::vector<std::string>* warnings = nullptr);

enum class Rotation { kCounterClockwise, kClockwise };

inline constexpr double kDefaultOrientThreshold = 2.0;

/// Rotates by 90 degrees when height / width exceeds `threshold`.
cv::Mat orient_line(const cv::Mat& line, double threshold = kDefaultOrientThreshold,
                    Rotation rotation = Rotation::kCounterClockwise);

struct PageRecord {
  int document = 0;
  int page = 0;
  long image_id = 0;
  std::filesystem::path image;
  std::vector<std::string> lines;
  /// Set when the page could not be assembled; all its annotations fail.
  std::string load_error;
};

struct ManifestPair {
  int document = 0;
  int page = 0;
  int line = 0;
  std::string stem;
  std::string image;
  std::string text;
};

struct ManifestFailure {
  int document = 0;
  int page = 0;
  int line = 0;  // annotation label, 0 when unknown
  std::string reason;
};

struct Manifest {
  std::vector<ManifestPair> pairs;
  std::vector<ManifestFailure> failures;
};

nlohmann::json manifest_to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& j);
void save_manifest(const Manifest& m, const std::filesystem::path& path);
Manifest load_manifest(const std::filesystem::path& path);

/// "x_y_z" for document x, page y, line z.
std::string line_stem(int document, int page, int line);
/// Inverse of line_stem; nullopt when `stem` is not three positive integers.
std::optional<std::array<int, 3>> parse_line_stem(const std::string& stem);
/// Parses an "x_y" page stem.
std::optional<std::pair<int, int>> parse_page_stem(const std::string& stem);

struct ExportOptions {
  bool orient = true;
  double orient_threshold = kDefaultOrientThreshold;
  Rotation rotation = Rotation::kCounterClockwise;
  std::size_t workers = 1;
};

/// Writes x_y_z.jpg / x_y_z.txt for every resolvable annotation of `pages`.
/// Every annotation ends up either in pairs or in failures; both lists are
/// sorted by (document, page, line).
Manifest export_pairs(const std::vector<PageRecord>& pages,
                      const std::map<long, std::vector<LineAnnotation>>& annotations,
                      const std::filesystem::path& out_dir, const ExportOptions& options = {},
                      std::vector<std::string>* warnings = nullptr);

/// Builds page records from COCO images named "x_y.<ext>" found in
/// `images_dir` and translations "x_y.txt" in `translations_dir`.
std::vector<PageRecord> assemble_pages(const CocoAnnotations& coco,
                                       const std::filesystem::path& images_dir,
                                       const std::filesystem::path& translations_dir);

struct DatasetStats {
  std::size_t line_count = 0;
  std::size_t symbol_count = 0;
  std::size_t word_count = 0;
  /// Character -> count, by descending count then ascending character.
  std::vector<std::pair<std::string, std::size_t>> char_histogram;
};

/// Counts characters (newlines excluded) and whitespace-delimited words over
/// every *.txt file of `text_dir`.
DatasetStats dataset_stats(const std::filesystem::path& text_dir);
std::string stats_json(const DatasetStats& stats);

/// Split fractions matching 6237 / 1930 / 1527 lines out of 9694.
inline constexpr std::array<double, 3> kDefaultSplitFractions = {0.6434, 0.1991, 0.1575};

namespace detail {
// Unbiased draw from [0, bound) by rejection; stable across platforms.
inline std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % bound;
}
}  // namespace detail

/// Seeded Fisher-Yates shuffle, then cut into (train, val, test). Validation
/// and test sizes are the rounded fractions; train takes the remainder.
template <typename T>
std::array<std::vector<T>, 3> split_dataset(std::vector<T> items, std::uint64_t seed,
                                            std::array<double, 3> fractions = kDefaultSplitFractions) {
  if (items.size() < 3) throw Error("need at least 3 items to make 3 partitions");
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw Error("split fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error("split fractions must sum to 1");

  std::mt19937_64 rng(seed);
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[detail::bounded(rng, i)]);
  }
  const auto n = static_cast<double>(items.size());
  const auto val = static_cast<std::size_t>(std::floor(n * fractions[1] + 0.5));
  const auto test = static_cast<std::size_t>(std::floor(n * fractions[2] + 0.5));
  if (val + test > items.size()) throw Error("split fractions leave no room for training items");
  const std::size_t train = items.size() - val - test;

  std::array<std::vector<T>, 3> out;
  auto first = std::make_move_iterator(items.begin());
  out[0].assign(first, first + static_cast<long>(train));
  out[1].assign(first + static_cast<long>(train), first + static_cast<long>(train + val));
  out[2].assign(first + static_cast<long>(train + val), std::make_move_iterator(items.end()));
  return out;
}

}  // namespace htrkit
