#include "htrkit/dataprep.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <tuple>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "htrkit/parallel.hpp"
#include "htrkit/utf8.hpp"

namespace htrkit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Largest overhang (in pixels) of a crop past the page border that is
// tolerated.
constexpr int kMaxOverhang = 2;

std::string ann_name(const json& a) {
  return "annotation " + (a.contains("id") ? a["id"].dump() : std::string("?"));
}

std::optional<int> positive_int(const json& v) {
  if (v.is_number_integer()) {
    const auto x = v.get<long long>();
    if (x >= 1 && x <= INT32_MAX) return static_cast<int>(x);
    return std::nullopt;
  }
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d >= 1 && d == std::floor(d) && d <= INT32_MAX) return static_cast<int>(d);
    return std::nullopt;
  }
  if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    int x = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), x);
    if (res.ec == std::errc() && res.ptr == s.data() + s.size() && x >= 1) return x;
  }
  return std::nullopt;
}

double ring_area(const std::vector<double>& ring) {
  const std::size_t n = ring.size() / 2;
  double twice = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    twice += ring[2 * i] * ring[2 * j + 1] - ring[2 * j] * ring[2 * i + 1];
  }
  return std::abs(twice) / 2.0;
}

int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

std::optional<int> parse_int(const std::string& s) {
  int x = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size() || x < 1) return std::nullopt;
  return x;
}

std::vector<std::string> split_underscore(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, '_')) parts.push_back(part);
  if (!s.empty() && s.back() == '_') parts.push_back("");
  return parts;
}

}  // namespace

CocoAnnotations parse_annotations(const json& coco) {
  if (!coco.is_object()) throw Error("COCO document must be a JSON object");
  CocoAnnotations out;
  std::map<long, std::string> category_names;
  if (coco.contains("categories")) {
    for (const auto& c : coco["categories"]) {
      if (c.contains("id") && c.contains("name") && c["name"].is_string()) {
        category_names[c["id"].get<long>()] = c["name"].get<std::string>();
      }
    }
  }
  if (coco.contains("images")) {
    for (const auto& im : coco["images"]) {
      if (!im.contains("id") || !im.contains("file_name")) throw Error("COCO image without id or file_name");
      out.images.push_back({im["id"].get<long>(), im["file_name"].get<std::string>()});
    }
  }
  if (!coco.contains("annotations") || !coco["annotations"].is_array()) {
    throw Error("COCO document has no annotations array");
  }
  for (const auto& a : coco["annotations"]) {
    const std::string name = ann_name(a);
    LineAnnotation ann;
    ann.id = a.value("id", 0L);
    if (!a.contains("image_id")) throw Error(name + ": missing image_id");
    ann.image_id = a["image_id"].get<long>();

    if (!a.contains("segmentation") || !a["segmentation"].is_array() || a["segmentation"].empty()) {
      throw Error(name + ": missing segmentation");
    }
    const json& seg = a["segmentation"];
    try {
      if (seg.front().is_number()) {
        ann.polygons.push_back(seg.get<std::vector<double>>());
      } else {
        for (const auto& ring : seg) ann.polygons.push_back(ring.get<std::vector<double>>());
      }
    } catch (const json::exception&) {
      throw Error(name + ": segmentation must hold polygon coordinate lists");
    }
    for (const auto& ring : ann.polygons) {
      if (ring.size() % 2 != 0) throw Error(name + ": odd-length polygon");
      if (ring.size() < 6) throw Error(name + ": polygon needs at least 3 points");
    }

    if (!a.contains("bbox") || !a["bbox"].is_array() || a["bbox"].size() != 4) {
      throw Error(name + ": missing bbox");
    }
    const auto b = a["bbox"].get<std::vector<double>>();
    ann.bbox = {b[0], b[1], b[2], b[3]};
    if (!(ann.bbox.w > 0 && ann.bbox.h > 0)) throw Error(name + ": bbox width and height must be positive");
    for (const auto& ring : ann.polygons) {
      for (std::size_t i = 0; i < ring.size(); i += 2) {
        if (ring[i] < ann.bbox.x - 1 || ring[i] > ann.bbox.x + ann.bbox.w + 1 ||
            ring[i + 1] < ann.bbox.y - 1 || ring[i + 1] > ann.bbox.y + ann.bbox.h + 1) {
          throw Error(name + ": bbox does not enclose the polygon");
        }
      }
    }

    std::optional<int> label;
    if (a.contains("label")) {
      label = positive_int(a["label"]);
    } else if (a.contains("attributes") && a["attributes"].contains("label")) {
      label = positive_int(a["attributes"]["label"]);
    } else if (a.contains("category_id") && category_names.count(a["category_id"].get<long>()) != 0) {
      label = positive_int(json(category_names[a["category_id"].get<long>()]));
    }
    if (!label) throw Error(name + ": label is not a positive integer");
    ann.label = *label;
    out.by_image[ann.image_id].push_back(std::move(ann));
  }
  return out;
}

CocoAnnotations parse_annotations(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
  return parse_annotations(j);
}

PixelRect crop_rect(const BBox& box) {
  return {round_half_up(box.x), round_half_up(box.y), round_half_up(box.w), round_half_up(box.h)};
}

cv::Mat cut_line(const cv::Mat& page, const LineAnnotation& ann, std::vector<std::string>* warnings) {
  if (page.empty()) throw Error("empty page image");
  if (page.depth() != CV_8U) throw Error("page image must have 8-bit channels");
  const PixelRect r = crop_rect(ann.bbox);
  if (r.w <= 0 || r.h <= 0) throw Error("bbox rounds to an empty rectangle");
  if (r.x >= page.cols || r.y >= page.rows || r.x + r.w <= 0 || r.y + r.h <= 0) {
    throw Error("bbox lies outside the image");
  }
  const int overhang = std::max({-r.x, -r.y, r.x + r.w - page.cols, r.y + r.h - page.rows, 0});
  if (overhang > kMaxOverhang) {
    throw Error("bbox overhangs the image by " + std::to_string(overhang) + " px");
  }
  if (overhang > 0 && warnings != nullptr) {
    warnings->push_back("annotation " + std::to_string(ann.id) + ": bbox overhangs the image by " +
                        std::to_string(overhang) + " px; overhang filled white");
  }
  double area = 0.0;
  for (const auto& ring : ann.polygons) area += ring_area(ring);
  if (area <= 0.0) throw Error("degenerate polygon with zero area");

  const int channels = page.channels();
  cv::Mat out(r.h, r.w, page.type(), cv::Scalar::all(255));
  std::vector<double> xs;
  for (int row = 0; row < r.h; ++row) {
    const int sy = r.y + row;
    if (sy < 0 || sy >= page.rows) continue;
    const double yc = sy + 0.5;
    xs.clear();
    for (const auto& ring : ann.polygons) {
      const std::size_t n = ring.size() / 2;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = (i + 1) % n;
        const double x1 = ring[2 * i], y1 = ring[2 * i + 1];
        const double x2 = ring[2 * j], y2 = ring[2 * j + 1];
        if ((y1 <= yc && yc < y2) || (y2 <= yc && yc < y1)) {
          xs.push_back(x1 + (yc - y1) * (x2 - x1) / (y2 - y1));
        }
      }
    }
    if (xs.empty()) continue;
    std::sort(xs.begin(), xs.end());
    // Rings are tested independently so that their union is taken, not
    // their symmetric difference; with a single ring this is plain even-odd.
    for (int col = 0; col < r.w; ++col) {
      const int sx = r.x + col;
      if (sx < 0 || sx >= page.cols) continue;
      const double xc = sx + 0.5;
      bool inside = false;
      if (ann.polygons.size() == 1) {
        const auto above = xs.end() - std::upper_bound(xs.begin(), xs.end(), xc);
        inside = (above % 2) == 1;
      } else {
        for (const auto& ring : ann.polygons) {
          const std::size_t n = ring.size() / 2;
          bool odd = false;
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = (i + 1) % n;
            const double x1 = ring[2 * i], y1 = ring[2 * i + 1];
            const double x2 = ring[2 * j], y2 = ring[2 * j + 1];
            if ((y1 <= yc && yc < y2) || (y2 <= yc && yc < y1)) {
              if (x1 + (yc - y1) * (x2 - x1) / (y2 - y1) > xc) odd = !odd;
            }
          }
          if (odd) {
            inside = true;
            break;
          }
        }
      }
      if (inside) {
        std::memcpy(out.ptr<std::uint8_t>(row) + static_cast<std::size_t>(col) * channels,
                    page.ptr<std::uint8_t>(sy) + static_cast<std::size_t>(sx) * channels,
                    static_cast<std::size_t>(channels));
      }
    }
  }
  return out;
}

cv::Mat orient_line(const cv::Mat& line, double threshold, Rotation rotation) {
  if (line.empty()) throw Error("empty line image");
  if (static_cast<double>(line.rows) / static_cast<double>(line.cols) <= threshold) return line.clone();
  cv::Mat out;
  cv::rotate(line, out,
             rotation == Rotation::kCounterClockwise ? cv::ROTATE_90_COUNTERCLOCKWISE : cv::ROTATE_90_CLOCKWISE);
  return out;
}

std::string line_stem(int document, int page, int line) {
  return std::to_string(document) + "_" + std::to_string(page) + "_" + std::to_string(line);
}

std::optional<std::array<int, 3>> parse_line_stem(const std::string& stem) {
  const auto parts = split_underscore(stem);
  if (parts.size() != 3) return std::nullopt;
  std::array<int, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) {
    auto v = parse_int(parts[i]);
    if (!v) return std::nullopt;
    out[i] = *v;
  }
  return out;
}

std::optional<std::pair<int, int>> parse_page_stem(const std::string& stem) {
  const auto parts = split_underscore(stem);
  if (parts.size() != 2) return std::nullopt;
  auto x = parse_int(parts[0]);
  auto y = parse_int(parts[1]);
  if (!x || !y) return std::nullopt;
  return std::make_pair(*x, *y);
}

json manifest_to_json(const Manifest& m) {
  json pairs = json::array();
  for (const auto& p : m.pairs) {
    pairs.push_back({{"stem", p.stem}, {"document", p.document}, {"page", p.page},
                     {"line", p.line}, {"image", p.image}, {"text", p.text}});
  }
  json failures = json::array();
  for (const auto& f : m.failures) {
    failures.push_back({{"document", f.document}, {"page", f.page}, {"line", f.line}, {"reason", f.reason}});
  }
  return {{"pairs", pairs}, {"failures", failures}};
}

Manifest manifest_from_json(const json& j) {
  Manifest m;
  try {
    for (const auto& p : j.at("pairs")) {
      m.pairs.push_back({p.at("document").get<int>(), p.at("page").get<int>(), p.at("line").get<int>(),
                         p.at("stem").get<std::string>(), p.at("image").get<std::string>(),
                         p.at("text").get<std::string>()});
    }
    if (j.contains("failures")) {
      for (const auto& f : j["failures"]) {
        m.failures.push_back({f.at("document").get<int>(), f.at("page").get<int>(),
                              f.at("line").get<int>(), f.at("reason").get<std::string>()});
      }
    }
  } catch (const json::exception& e) {
    throw Error(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void save_manifest(const Manifest& m, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << manifest_to_json(m).dump(2) << '\n';
}

Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return manifest_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

Manifest export_pairs(const std::vector<PageRecord>& pages,
                      const std::map<long, std::vector<LineAnnotation>>& annotations,
                      const fs::path& out_dir, const ExportOptions& options,
                      std::vector<std::string>* warnings) {
  if (!(options.orient_threshold > 1.0)) throw Error("orientation threshold must exceed 1");
  fs::create_directories(out_dir);
  static const std::vector<LineAnnotation> kNone;

  std::vector<Manifest> per_page(pages.size());
  std::vector<std::vector<std::string>> page_warnings(pages.size());

  parallel_for(pages.size(), options.workers, [&](std::size_t pi) {
    const PageRecord& page = pages[pi];
    Manifest& m = per_page[pi];
    auto it = annotations.find(page.image_id);
    const auto& anns = it == annotations.end() ? kNone : it->second;
    auto fail = [&](int line, std::string reason) {
      m.failures.push_back({page.document, page.page, line, std::move(reason)});
    };
    if (!page.load_error.empty()) {
      for (const auto& a : anns) fail(a.label, page.load_error);
      return;
    }
    cv::Mat image;
    if (!anns.empty()) {
      image = cv::imread(page.image.string(), cv::IMREAD_COLOR);
      if (image.empty()) {
        for (const auto& a : anns) fail(a.label, "cannot read image " + page.image.string());
        return;
      }
    }
    std::map<int, int> label_uses;
    for (const auto& a : anns) ++label_uses[a.label];
    const int line_count = static_cast<int>(page.lines.size());
    for (const auto& a : anns) {
      if (a.label > line_count) {
        fail(a.label, "label " + std::to_string(a.label) + " of " + std::to_string(line_count));
        continue;
      }
      if (label_uses[a.label] > 1) {
        fail(a.label, "duplicate label " + std::to_string(a.label));
        continue;
      }
      try {
        cv::Mat line = cut_line(image, a, &page_warnings[pi]);
        if (options.orient) line = orient_line(line, options.orient_threshold, options.rotation);
        const std::string stem = line_stem(page.document, page.page, a.label);
        const fs::path img_path = out_dir / (stem + ".jpg");
        const fs::path txt_path = out_dir / (stem + ".txt");
        if (!cv::imwrite(img_path.string(), line, {cv::IMWRITE_JPEG_QUALITY, 95})) {
          throw Error("cannot write " + img_path.string());
        }
        std::ofstream txt(txt_path, std::ios::binary | std::ios::trunc);
        txt << page.lines[static_cast<std::size_t>(a.label - 1)] << '\n';
        txt.flush();
        if (!txt) throw Error("cannot write " + txt_path.string());
        m.pairs.push_back({page.document, page.page, a.label, stem, stem + ".jpg", stem + ".txt"});
      } catch (const Error& e) {
        fail(a.label, e.what());
      } catch (const cv::Exception& e) {
        fail(a.label, e.what());
      }
    }
  });

  Manifest out;
  for (std::size_t i = 0; i < pages.size(); ++i) {
    out.pairs.insert(out.pairs.end(), per_page[i].pairs.begin(), per_page[i].pairs.end());
    out.failures.insert(out.failures.end(), per_page[i].failures.begin(), per_page[i].failures.end());
    if (warnings != nullptr) warnings->insert(warnings->end(), page_warnings[i].begin(), page_warnings[i].end());
  }
  auto key = [](const auto& x) { return std::make_tuple(x.document, x.page, x.line); };
  std::stable_sort(out.pairs.begin(), out.pairs.end(), [&](auto& a, auto& b) { return key(a) < key(b); });
  std::stable_sort(out.failures.begin(), out.failures.end(),
                   [&](auto& a, auto& b) { return std::tie(a.document, a.page, a.line, a.reason) <
                                                  std::tie(b.document, b.page, b.line, b.reason); });
  return out;
}

std::vector<PageRecord> assemble_pages(const CocoAnnotations& coco, const fs::path& images_dir,
                                       const fs::path& translations_dir) {
  std::vector<PageRecord> pages;
  std::set<long> known;
  for (const auto& im : coco.images) {
    known.insert(im.id);
    PageRecord p;
    p.image_id = im.id;
    p.image = images_dir / fs::path(im.file_name).filename();
    const auto ids = parse_page_stem(fs::path(im.file_name).stem().string());
    if (!ids) {
      p.load_error = "image name " + im.file_name + " is not of the form x_y";
      pages.push_back(std::move(p));
      continue;
    }
    p.document = ids->first;
    p.page = ids->second;
    const fs::path trans = translations_dir / (fs::path(im.file_name).stem().string() + ".txt");
    std::ifstream in(trans, std::ios::binary);
    if (!in) {
      p.load_error = "missing translation " + trans.filename().string();
    } else {
      std::string line;
      while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        p.lines.push_back(line);
      }
      // A trailing empty line is only the file's final newline.
      while (!p.lines.empty() && p.lines.back().empty()) p.lines.pop_back();
    }
    pages.push_back(std::move(p));
  }
  for (const auto& [image_id, anns] : coco.by_image) {
    if (known.count(image_id) == 0) {
      PageRecord p;
      p.image_id = image_id;
      p.load_error = "annotation refers to unknown image id " + std::to_string(image_id);
      pages.push_back(std::move(p));
    }
  }
  return pages;
}

DatasetStats dataset_stats(const fs::path& text_dir) {
  if (!fs::is_directory(text_dir)) throw Error(text_dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(text_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  DatasetStats s;
  std::map<char32_t, std::size_t> hist;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw Error("cannot read " + f.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    std::u32string text;
    try {
      text = utf8::decode(ss.str());
    } catch (const Error& e) {
      throw Error(f.string() + ": " + e.what());
    }
    std::u32string line;
    auto flush = [&] {
      if (!line.empty()) ++s.line_count;
      s.word_count += utf8::words(line).size();
      line.clear();
    };
    for (char32_t c : text) {
      if (c == U'\n') {
        flush();
        continue;
      }
      if (c == U'\r') continue;
      ++hist[c];
      ++s.symbol_count;
      line.push_back(c);
    }
    flush();
  }
  for (const auto& [c, n] : hist) s.char_histogram.emplace_back(utf8::encode(c), n);
  std::stable_sort(s.char_histogram.begin(), s.char_histogram.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return s;
}

std::string stats_json(const DatasetStats& s) {
  json hist = json::array();
  for (const auto& [c, n] : s.char_histogram) hist.push_back({{"char", c}, {"count", n}});
  json j = {{"lines", s.line_count}, {"symbols", s.symbol_count}, {"words", s.word_count},
            {"histogram", hist}};
  return j.dump(2);
}

}  // namespace htrkit
