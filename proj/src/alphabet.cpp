#include "htrkit/alphabet.hpp"

#include "htrkit/error.hpp"
#include "htrkit/utf8.hpp"

namespace htrkit {

Alphabet::Alphabet(std::vector<std::string> characters) {
  if (characters.empty()) throw Error("alphabet needs at least one non-blank character");
  symbols_.reserve(characters.size() + 1);
  code_points_.reserve(characters.size() + 1);
  symbols_.emplace_back(kBlankToken);
  code_points_.push_back(0);
  for (auto& ch : characters) {
    if (ch == kBlankToken) throw Error("blank token may only appear at index 0");
    const std::u32string cps = utf8::decode(ch);
    if (cps.size() != 1) {
      throw Error("alphabet entry \"" + ch + "\" is not a single character");
    }
    if (index_.count(ch) != 0) throw Error("duplicate alphabet entry \"" + ch + "\"");
    index_.emplace(ch, symbols_.size());
    symbols_.push_back(std::move(ch));
    code_points_.push_back(cps.front());
  }
}

Alphabet Alphabet::from_symbols(const std::vector<std::string>& symbols) {
  if (symbols.empty() || symbols.front() != kBlankToken) {
    throw Error("alphabet must start with \"<blank>\"");
  }
  return Alphabet(std::vector<std::string>(symbols.begin() + 1, symbols.end()));
}

long Alphabet::index_of(std::string_view ch) const {
  auto it = index_.find(std::string(ch));
  return it == index_.end() ? -1 : static_cast<long>(it->second);
}

}  // namespace htrkit
