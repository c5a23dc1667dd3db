#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <iterator>
#include <string>
#include <vector>

namespace htrkit {

/// Unit-cost edit distance between two random-access sequences.
template <typename Seq>
std::size_t levenshtein(const Seq& a, const Seq& b) {
  const std::size_t n = std::size(a);
  const std::size_t m = std::size(b);
  std::vector<std::size_t> prev(m + 1);
  std::vector<std::size_t> cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

struct EvalPair {
  std::string id;
  std::string pred;
  std::string truth;
};

struct LineScore {
  std::string id;
  std::size_t char_dist = 0;
  std::size_t char_len = 0;
  std::size_t word_dist = 0;
  std::size_t word_len = 0;
  bool exact_match = false;
};

/// Corpus-level rates in percent. A rate whose reference total is zero is
/// 0 when nothing was inserted and +infinity otherwise.
struct EvalReport {
  std::size_t n = 0;
  double cer = 0.0;
  double wer = 0.0;
  double acc = 0.0;
  std::vector<LineScore> per_line;  // sorted by id
  std::vector<std::string> warnings;
};

/// Strings are NFC-normalized and trimmed; CER counts code points (spaces
/// included), WER counts whitespace-separated words. Distances are pooled
/// over the corpus before dividing.
EvalReport evaluate(const std::vector<EvalPair>& pairs);

/// Pairs .txt files of both directories by stem.
EvalReport evaluate_dirs(const std::filesystem::path& pred_dir,
                         const std::filesystem::path& ref_dir);

std::string report_json(const EvalReport& report);
std::string report_table(const EvalReport& report, const std::string& label = "Model");

}  // namespace htrkit
