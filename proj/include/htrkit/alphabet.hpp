#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace htrkit {

/// Ordered character inventory of a CTC recognizer. Class 0 is always the
/// blank; every other class is a single Unicode character (space allowed).
class Alphabet {
 public:
  static constexpr std::size_t kBlank = 0;
  static constexpr std::string_view kBlankToken = "<blank>";

  /// `characters` lists the non-blank classes in order (class 1, 2, ...).
  explicit Alphabet(std::vector<std::string> characters);

  /// Builds from a header-style list whose first element is "<blank>".
  static Alphabet from_symbols(const std::vector<std::string>& symbols);

  std::size_t size() const { return symbols_.size(); }
  const std::string& symbol(std::size_t index) const { return symbols_.at(index); }
  char32_t code_point(std::size_t index) const { return code_points_.at(index); }

  /// All symbols including "<blank>" at index 0.
  const std::vector<std::string>& symbols() const { return symbols_; }

  /// Class index of a character; -1 when absent.
  long index_of(std::string_view ch) const;

  friend bool operator==(const Alphabet& a, const Alphabet& b) {
    return a.symbols_ == b.symbols_;
  }

 private:
  std::vector<std::string> symbols_;
  std::vector<char32_t> code_points_;  // blank maps to 0
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace htrkit
