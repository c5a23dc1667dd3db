#include "htrkit/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "htrkit/error.hpp"
#include "htrkit/utf8.hpp"

namespace htrkit {

namespace fs = std::filesystem;

namespace {

double rate(std::size_t num, std::size_t den) {
  if (den == 0) return num == 0 ? 0.0 : std::numeric_limits<double>::infinity();
  return 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

std::map<std::string, fs::path> txt_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(dir.string() + " is not a directory");
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".txt") out[e.path().stem().string()] = e.path();
  }
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

EvalReport evaluate(const std::vector<EvalPair>& pairs) {
  if (pairs.empty()) throw Error("no prediction/reference pairs to evaluate");
  EvalReport r;
  r.n = pairs.size();
  std::size_t cd = 0, cl = 0, wd = 0, wl = 0, exact = 0;
  for (const auto& p : pairs) {
    if (p.id.empty()) throw Error("evaluation pair with empty id");
    const std::u32string pred = utf8::trim(utf8::decode(utf8::nfc(p.pred)));
    const std::u32string truth = utf8::trim(utf8::decode(utf8::nfc(p.truth)));
    LineScore s;
    s.id = p.id;
    s.char_dist = levenshtein(pred, truth);
    s.char_len = truth.size();
    const auto pw = utf8::words(pred);
    const auto tw = utf8::words(truth);
    s.word_dist = levenshtein(pw, tw);
    s.word_len = tw.size();
    s.exact_match = pred == truth;
    if (truth.empty()) {
      r.warnings.push_back("reference " + p.id + " is empty; it adds edits but no length to CER");
    }
    cd += s.char_dist;
    cl += s.char_len;
    wd += s.word_dist;
    wl += s.word_len;
    exact += s.exact_match ? 1 : 0;
    r.per_line.push_back(std::move(s));
  }
  std::sort(r.per_line.begin(), r.per_line.end(),
            [](const LineScore& a, const LineScore& b) { return a.id < b.id; });
  r.cer = rate(cd, cl);
  r.wer = rate(wd, wl);
  r.acc = 100.0 * static_cast<double>(exact) / static_cast<double>(r.n);
  return r;
}

EvalReport evaluate_dirs(const fs::path& pred_dir, const fs::path& ref_dir) {
  const auto preds = txt_files(pred_dir);
  const auto refs = txt_files(ref_dir);
  std::vector<std::string> missing_pred;
  std::vector<std::string> missing_ref;
  for (const auto& [stem, path] : refs) {
    if (preds.count(stem) == 0) missing_pred.push_back(stem);
  }
  for (const auto& [stem, path] : preds) {
    if (refs.count(stem) == 0) missing_ref.push_back(stem);
  }
  if (!missing_pred.empty() || !missing_ref.empty()) {
    std::string msg = "unmatched stems:";
    for (const auto& s : missing_pred) msg += " " + s + " (no prediction)";
    for (const auto& s : missing_ref) msg += " " + s + " (no reference)";
    throw Error(msg);
  }
  if (refs.empty()) throw Error("no matched prediction/reference pairs");
  std::vector<EvalPair> pairs;
  for (const auto& [stem, path] : refs) pairs.push_back({stem, slurp(preds.at(stem)), slurp(path)});
  return evaluate(pairs);
}

std::string report_json(const EvalReport& r) {
  auto num = [](double v) -> nlohmann::json {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
  };
  nlohmann::json lines = nlohmann::json::array();
  for (const auto& s : r.per_line) {
    lines.push_back({{"id", s.id},
                     {"char_dist", s.char_dist},
                     {"char_len", s.char_len},
                     {"word_dist", s.word_dist},
                     {"word_len", s.word_len},
                     {"exact_match", s.exact_match}});
  }
  nlohmann::json j = {{"n", r.n}, {"cer", num(r.cer)}, {"wer", num(r.wer)}, {"acc", num(r.acc)},
                      {"lines", lines}};
  return j.dump(2);
}

std::string report_table(const EvalReport& r, const std::string& label) {
  auto cell = [](double v) {
    if (!std::isfinite(v)) return std::string("inf");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    return std::string(buf);
  };
  const std::size_t w = std::max<std::size_t>(label.size(), 5);
  std::string name = "Model";
  name.resize(w, ' ');
  std::string row = label;
  row.resize(w, ' ');
  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "| %s | %6s | %6s | %6s |\n", name.c_str(), "CER", "WER", "ACC");
  out << buf;
  std::snprintf(buf, sizeof(buf), "| %s | %6s | %6s | %6s |\n", row.c_str(), cell(r.cer).c_str(),
                cell(r.wer).c_str(), cell(r.acc).c_str());
  out << buf;
  return out.str();
}

}  // namespace htrkit
