#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "htrkit/error.hpp"
#include "htrkit/ngram.hpp"
#include "htrkit/utf8.hpp"

namespace htrkit {

namespace {

constexpr std::string_view kSpaceToken = "<space>";

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (i == line.size()) break;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

bool parse_double(std::string_view s, double& v) {
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

std::string_view strip(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

std::string section_name(int k) { return "\\" + std::to_string(k) + "-grams:"; }

}  // namespace

std::string arpa_token(std::string_view token) {
  const std::u32string cps = utf8::decode(token);
  if (cps.size() == 1 && utf8::is_space(cps.front())) {
    if (cps.front() == U' ') return std::string(kSpaceToken);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "<U+%04X>", static_cast<unsigned>(cps.front()));
    return buf;
  }
  return std::string(token);
}

std::string token_from_arpa(std::string_view field) {
  if (field == kSpaceToken) return " ";
  if (field.size() > 4 && field.substr(0, 3) == "<U+" && field.back() == '>') {
    unsigned cp = 0;
    const auto hex = field.substr(3, field.size() - 4);
    auto res = std::from_chars(hex.data(), hex.data() + hex.size(), cp, 16);
    if (res.ec == std::errc() && res.ptr == hex.data() + hex.size()) {
      return utf8::encode(static_cast<char32_t>(cp));
    }
  }
  return std::string(field);
}

NGramModel read_arpa(std::istream& in) {
  std::string raw;
  std::size_t line_no = 0;
  auto next_line = [&](std::string_view& line) {
    while (std::getline(in, raw)) {
      ++line_no;
      line = strip(raw);
      if (!line.empty()) return true;
    }
    return false;
  };
  auto fail = [&](const std::string& what) {
    throw Error("ARPA line " + std::to_string(line_no) + ": " + what);
  };

  std::string_view line;
  bool found = false;
  while (next_line(line)) {
    if (line == "\\data\\") {
      found = true;
      break;
    }
  }
  if (!found) throw Error("ARPA: missing \\data\\ header");

  std::vector<std::size_t> declared;
  while (next_line(line)) {
    if (line.substr(0, 6) != "ngram ") break;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail("malformed count line");
    std::size_t k = 0;
    std::size_t n = 0;
    const auto ks = strip(line.substr(6, eq - 6));
    const auto ns = strip(line.substr(eq + 1));
    if (std::from_chars(ks.data(), ks.data() + ks.size(), k).ec != std::errc() ||
        std::from_chars(ns.data(), ns.data() + ns.size(), n).ec != std::errc()) {
      fail("malformed count line");
    }
    if (k != declared.size() + 1) fail("ngram counts must be listed in order 1, 2, ...");
    declared.push_back(n);
  }
  if (declared.empty()) fail("no ngram counts in \\data\\ section");
  if (declared.size() > static_cast<std::size_t>(kMaxOrder)) fail("order exceeds maximum");

  NGramModel model(static_cast<int>(declared.size()));
  std::vector<TokenId> key;
  for (std::size_t k = 1; k <= declared.size(); ++k) {
    const std::string expected = section_name(static_cast<int>(k));
    if (line != expected) fail("expected section header " + expected);
    std::size_t seen = 0;
    bool more = false;
    while ((more = next_line(line))) {
      if (!line.empty() && line.front() == '\\') break;
      const auto fields = split_fields(line);
      if (fields.size() != k + 1 && fields.size() != k + 2) {
        fail(expected + " entry has " + std::to_string(fields.size()) + " fields");
      }
      NGramEntry entry;
      if (!parse_double(fields[0], entry.log10_prob)) fail("non-numeric probability field");
      if (fields.size() == k + 2 && !parse_double(fields[k + 1], entry.log10_backoff)) {
        fail("non-numeric backoff field");
      }
      key.clear();
      for (std::size_t i = 1; i <= k; ++i) {
        key.push_back(model.vocabulary().add(token_from_arpa(fields[i])));
      }
      model.set_entry(key, entry);
      ++seen;
    }
    if (seen != declared[k - 1] || model.ngram_count(static_cast<int>(k)) != declared[k - 1]) {
      throw Error("ARPA section " + expected + ": header declares " +
                  std::to_string(declared[k - 1]) + " entries, found " + std::to_string(seen));
    }
    if (!more) throw Error("ARPA: missing \\end\\ marker");
  }
  if (line != "\\end\\") fail("expected \\end\\");

  // Backoff reachability: prefixes and tokens of every n-gram must be stored.
  for (int k = 1; k <= model.order(); ++k) {
    for (const auto& ngram : model.ngrams(k)) {
      for (TokenId t : ngram) {
        const TokenId single[1] = {t};
        if (model.find(single) == nullptr) {
          throw Error("ARPA: token " + model.vocabulary().token(t) + " has no unigram entry");
        }
      }
      if (k > 1 && model.find(std::span<const TokenId>(ngram.data(), ngram.size() - 1)) == nullptr) {
        throw Error("ARPA: prefix of a " + std::to_string(k) + "-gram is not stored");
      }
    }
  }
  return model;
}

NGramModel read_arpa(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_arpa(in);
}

void write_arpa(const NGramModel& model, std::ostream& out) {
  const auto contexts = model.contexts();
  out << "\n\\data\\\n";
  for (int k = 1; k <= model.order(); ++k) {
    out << "ngram " << k << '=' << model.ngram_count(k) << '\n';
  }
  for (int k = 1; k <= model.order(); ++k) {
    out << '\n' << section_name(k) << '\n';
    for (const auto& ngram : model.ngrams(k)) {
      const NGramEntry* e = model.find(ngram);
      out << format_double(e->log10_prob) << '\t';
      for (std::size_t i = 0; i < ngram.size(); ++i) {
        if (i != 0) out << ' ';
        out << arpa_token(model.vocabulary().token(ngram[i]));
      }
      if (k < model.order() && (contexts.count(ngram) != 0 || e->log10_backoff != 0.0)) {
        out << '\t' << format_double(e->log10_backoff);
      }
      out << '\n';
    }
  }
  out << "\n\\end\\\n";
}

void write_arpa(const NGramModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  write_arpa(model, out);
  out.flush();
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace htrkit
