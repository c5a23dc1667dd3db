#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace htrkit {

using TokenId = std::int32_t;

/// log10 value used for zero probabilities (ARPA convention).
inline constexpr double kLog10Zero = -99.0;
inline constexpr double kDefaultUnkFloor = 1e-7;
inline constexpr int kMaxOrder = 9;

/// Token inventory of a language model. Ids 0..2 are reserved for the
/// sentence markers and the unknown token.
class Vocabulary {
 public:
  static constexpr TokenId kBos = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kUnk = 2;
  static constexpr std::string_view kBosToken = "<s>";
  static constexpr std::string_view kEosToken = "</s>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();

  /// Returns the existing id when `token` is already present.
  TokenId add(std::string_view token);
  /// -1 when absent.
  TokenId find(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

struct NGramEntry {
  double log10_prob = 0.0;
  double log10_backoff = 0.0;
};

/// Backoff n-gram model over character tokens. Probabilities and backoff
/// weights are log10, as in ARPA files.
class NGramModel {
 public:
  explicit NGramModel(int order);

  int order() const { return order_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  Vocabulary& vocabulary() { return vocab_; }

  /// Id of `token`, or Vocabulary::kUnk when the model does not know it.
  TokenId id(std::string_view token) const;

  /// Characters of `text` as token ids (no sentence markers).
  std::vector<TokenId> tokenize(std::string_view text) const;

  /// log10 P(token | context) by the standard backoff recursion. Only the
  /// last order()-1 context tokens matter. Tokens without a unigram entry
  /// score as <unk>; a model without <unk> yields kLog10Zero for them.
  double score(std::span<const TokenId> context, TokenId token) const;
  double score(const std::vector<std::string>& context, std::string_view token) const;

  /// Sum of scores over <s> c1 ... ck </s>.
  double sequence_logprob(std::string_view text) const;

  const NGramEntry* find(std::span<const TokenId> ngram) const;
  void set_entry(std::span<const TokenId> ngram, NGramEntry entry);
  NGramEntry* find_mutable(std::span<const TokenId> ngram);

  std::size_t ngram_count(int k) const { return tables_.at(static_cast<std::size_t>(k - 1)).size(); }

  /// Stored n-grams of length k, sorted by token spelling.
  std::vector<std::vector<TokenId>> ngrams(int k) const;

  /// Every stored context with at least one explicit continuation, mapped to
  /// its continuations (sorted by id). The empty context is not included.
  std::map<std::vector<TokenId>, std::vector<TokenId>> contexts() const;

  /// Tokens carrying a unigram entry, sorted by id.
  std::vector<TokenId> unigram_tokens() const;

 private:
  struct KeyHash {
    std::size_t operator()(const std::vector<TokenId>& key) const noexcept;
  };
  using Table = std::unordered_map<std::vector<TokenId>, NGramEntry, KeyHash>;

  int order_;
  Vocabulary vocab_;
  std::vector<Table> tables_;  // tables_[k - 1] holds k-grams
};

struct TrainOptions {
  int order = 6;
  double unk_floor = kDefaultUnkFloor;
};

/// Witten-Bell backoff model. Every line is framed as <s> c1 ... ck </s>;
/// each Unicode character (space included) is one token.
NGramModel train(const std::vector<std::string>& corpus, const TrainOptions& options = {});

/// Mixture lambda * P_a + (1 - lambda) * P_b stored over the union of both
/// models' n-grams; backoff weights are renormalized afterwards.
NGramModel interpolate(const NGramModel& a, const NGramModel& b, double lambda);

/// Recomputes every backoff weight so each explicit context normalizes.
void recompute_backoffs(NGramModel& model);

/// Probability mass sum_w P(w | context) over the model's unigram tokens.
double context_mass(const NGramModel& model, std::span<const TokenId> context);

// ARPA interchange. Whitespace characters cannot appear verbatim as ARPA
// tokens: space is spelled <space>, any other whitespace <U+XXXX>.
std::string arpa_token(std::string_view token);
std::string token_from_arpa(std::string_view field);

NGramModel read_arpa(std::istream& in);
NGramModel read_arpa(const std::filesystem::path& path);
void write_arpa(const NGramModel& model, std::ostream& out);
void write_arpa(const NGramModel& model, const std::filesystem::path& path);

/// Reads every *.txt file of `dir` (sorted by name); one transcript per
/// non-empty line.
std::vector<std::string> read_corpus(const std::filesystem::path& dir);

struct VocabReport {
  std::size_t vocab_size = 0;
  std::size_t oov_tokens = 0;
  std::size_t total_tokens = 0;
  double oov_rate = 0.0;  // percent
};

/// Token-level OOV rate of eval words against the train word vocabulary.
VocabReport oov_report(const std::vector<std::string>& train_texts,
                       const std::vector<std::string>& eval_texts);

}  // namespace htrkit
