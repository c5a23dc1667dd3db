#include "htrkit/ngram.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_set>

#include "htrkit/error.hpp"
#include "htrkit/utf8.hpp"

namespace htrkit {

namespace {

// Below this the unseen-mass denominator of a backoff weight is treated as
// exhausted and the explicit continuations are rescaled instead.
constexpr double kMinBackoffDenominator = 1e-9;

double to_log10(double p) { return p > 0.0 ? std::log10(p) : kLog10Zero; }

double to_prob(double log10p) { return log10p <= kLog10Zero ? 0.0 : std::pow(10.0, log10p); }

}  // namespace

Vocabulary::Vocabulary() {
  add(kBosToken);
  add(kEosToken);
  add(kUnkToken);
}

TokenId Vocabulary::add(std::string_view token) {
  std::string key(token);
  auto it = ids_.find(key);
  if (it != ids_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(key);
  ids_.emplace(std::move(key), id);
  return id;
}

TokenId Vocabulary::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? -1 : it->second;
}

std::size_t NGramModel::KeyHash::operator()(const std::vector<TokenId>& key) const noexcept {
  std::uint64_t h = 1469598103934665603ull;
  for (TokenId t : key) {
    h ^= static_cast<std::uint32_t>(t);
    h *= 1099511628211ull;
  }
  return static_cast<std::size_t>(h);
}

NGramModel::NGramModel(int order) : order_(order) {
  if (order < 1 || order > kMaxOrder) {
    throw Error("n-gram order " + std::to_string(order) + " outside [1, " +
                std::to_string(kMaxOrder) + "]");
  }
  tables_.resize(static_cast<std::size_t>(order));
}

TokenId NGramModel::id(std::string_view token) const {
  const TokenId t = vocab_.find(token);
  return t < 0 ? Vocabulary::kUnk : t;
}

std::vector<TokenId> NGramModel::tokenize(std::string_view text) const {
  std::vector<TokenId> out;
  for (char32_t c : utf8::decode(text)) out.push_back(id(utf8::encode(c)));
  return out;
}

const NGramEntry* NGramModel::find(std::span<const TokenId> ngram) const {
  if (ngram.empty() || ngram.size() > tables_.size()) return nullptr;
  thread_local std::vector<TokenId> key;
  key.assign(ngram.begin(), ngram.end());
  const auto& table = tables_[ngram.size() - 1];
  auto it = table.find(key);
  return it == table.end() ? nullptr : &it->second;
}

NGramEntry* NGramModel::find_mutable(std::span<const TokenId> ngram) {
  return const_cast<NGramEntry*>(std::as_const(*this).find(ngram));
}

void NGramModel::set_entry(std::span<const TokenId> ngram, NGramEntry entry) {
  if (ngram.empty() || ngram.size() > tables_.size()) {
    throw Error("n-gram length " + std::to_string(ngram.size()) + " exceeds model order " +
                std::to_string(order_));
  }
  for (TokenId t : ngram) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_.size()) throw Error("token id out of range");
  }
  tables_[ngram.size() - 1][std::vector<TokenId>(ngram.begin(), ngram.end())] = entry;
}

double NGramModel::score(std::span<const TokenId> context, TokenId token) const {
  const TokenId single[1] = {token};
  if (token < 0 || find(single) == nullptr) {
    const TokenId unk[1] = {Vocabulary::kUnk};
    if (find(unk) == nullptr) return kLog10Zero;
    token = Vocabulary::kUnk;
  }
  const std::size_t n = std::min(context.size(), static_cast<std::size_t>(order_ - 1));
  const auto ctx = context.last(n);

  thread_local std::vector<TokenId> key;
  double backoff = 0.0;
  for (std::size_t k = n;; --k) {
    const auto hist = ctx.last(k);
    key.assign(hist.begin(), hist.end());
    key.push_back(token);
    const auto& table = tables_[k];
    if (auto it = table.find(key); it != table.end()) {
      return std::min(0.0, backoff + it->second.log10_prob);
    }
    if (k == 0) break;
    key.pop_back();
    const auto& ctx_table = tables_[k - 1];
    if (auto it = ctx_table.find(key); it != ctx_table.end()) backoff += it->second.log10_backoff;
  }
  return kLog10Zero;
}

double NGramModel::score(const std::vector<std::string>& context, std::string_view token) const {
  std::vector<TokenId> ids;
  ids.reserve(context.size());
  for (const auto& t : context) ids.push_back(id(t));
  return score(ids, id(token));
}

double NGramModel::sequence_logprob(std::string_view text) const {
  std::vector<TokenId> seq{Vocabulary::kBos};
  const auto body = tokenize(text);
  seq.insert(seq.end(), body.begin(), body.end());
  seq.push_back(Vocabulary::kEos);
  double total = 0.0;
  for (std::size_t i = 1; i < seq.size(); ++i) {
    total += score(std::span<const TokenId>(seq.data(), i), seq[i]);
  }
  return total;
}

std::vector<std::vector<TokenId>> NGramModel::ngrams(int k) const {
  std::vector<std::vector<TokenId>> out;
  const auto& table = tables_.at(static_cast<std::size_t>(k - 1));
  out.reserve(table.size());
  for (const auto& [key, entry] : table) out.push_back(key);
  std::sort(out.begin(), out.end(), [this](const auto& a, const auto& b) {
    return std::lexicographical_compare(
        a.begin(), a.end(), b.begin(), b.end(),
        [this](TokenId x, TokenId y) { return vocab_.token(x) < vocab_.token(y); });
  });
  return out;
}

std::map<std::vector<TokenId>, std::vector<TokenId>> NGramModel::contexts() const {
  std::map<std::vector<TokenId>, std::vector<TokenId>> out;
  for (std::size_t k = 1; k < tables_.size(); ++k) {
    for (const auto& [key, entry] : tables_[k]) {
      std::vector<TokenId> ctx(key.begin(), key.end() - 1);
      out[std::move(ctx)].push_back(key.back());
    }
  }
  for (auto& [ctx, next] : out) std::sort(next.begin(), next.end());
  return out;
}

std::vector<TokenId> NGramModel::unigram_tokens() const {
  std::vector<TokenId> out;
  for (const auto& [key, entry] : tables_[0]) out.push_back(key.front());
  std::sort(out.begin(), out.end());
  return out;
}

double context_mass(const NGramModel& model, std::span<const TokenId> context) {
  double mass = 0.0;
  for (TokenId w : model.unigram_tokens()) mass += to_prob(model.score(context, w));
  return mass;
}

void recompute_backoffs(NGramModel& model) {
  const auto contexts = model.contexts();
  // Sort contexts by length so shorter-context scores are final before use.
  std::vector<const std::pair<const std::vector<TokenId>, std::vector<TokenId>>*> order;
  order.reserve(contexts.size());
  for (const auto& item : contexts) order.push_back(&item);
  std::stable_sort(order.begin(), order.end(),
                   [](auto* a, auto* b) { return a->first.size() < b->first.size(); });

  std::vector<TokenId> ngram;
  for (const auto* item : order) {
    const auto& ctx = item->first;
    const auto& next = item->second;
    const std::span<const TokenId> shorter(ctx.data() + 1, ctx.size() - 1);
    double seen = 0.0;
    double seen_lower = 0.0;
    for (TokenId w : next) {
      ngram.assign(ctx.begin(), ctx.end());
      ngram.push_back(w);
      seen += to_prob(model.find(ngram)->log10_prob);
      seen_lower += to_prob(model.score(shorter, w));
    }
    NGramEntry* entry = model.find_mutable(ctx);
    if (entry == nullptr) throw Error("context without its own n-gram entry");
    const double numerator = 1.0 - seen;
    const double denominator = 1.0 - seen_lower;
    if (numerator <= 0.0) {
      entry->log10_backoff = kLog10Zero;
    } else if (denominator < kMinBackoffDenominator) {
      // Explicit continuations cover (almost) the whole vocabulary: give them
      // everything except the lower-order unseen mass.
      const double scale = (1.0 - std::max(denominator, 0.0)) / seen;
      for (TokenId w : next) {
        ngram.assign(ctx.begin(), ctx.end());
        ngram.push_back(w);
        NGramEntry* e = model.find_mutable(ngram);
        e->log10_prob = to_log10(to_prob(e->log10_prob) * scale);
      }
      entry->log10_backoff = 0.0;
    } else {
      entry->log10_backoff = std::log10(numerator / denominator);
    }
  }
}

NGramModel train(const std::vector<std::string>& corpus, const TrainOptions& options) {
  if (corpus.empty()) throw Error("empty training corpus");
  if (!(options.unk_floor > 0.0 && options.unk_floor < 1.0)) {
    throw Error("unknown-token floor must lie in (0, 1)");
  }
  NGramModel model(options.order);
  const auto order = static_cast<std::size_t>(options.order);

  std::vector<std::u32string> lines;
  lines.reserve(corpus.size());
  std::set<char32_t> chars;
  for (const auto& line : corpus) {
    lines.push_back(utf8::decode(line));
    chars.insert(lines.back().begin(), lines.back().end());
  }
  std::unordered_map<char32_t, TokenId> char_ids;
  for (char32_t c : chars) char_ids[c] = model.vocabulary().add(utf8::encode(c));

  std::vector<std::map<std::vector<TokenId>, std::uint64_t>> counts(order);
  std::vector<TokenId> seq;
  for (const auto& line : lines) {
    seq.assign(1, Vocabulary::kBos);
    for (char32_t c : line) seq.push_back(char_ids.at(c));
    seq.push_back(Vocabulary::kEos);
    for (std::size_t i = 1; i < seq.size(); ++i) {
      for (std::size_t k = 1; k <= order && k <= i + 1; ++k) {
        ++counts[k - 1][std::vector<TokenId>(seq.begin() + static_cast<long>(i + 1 - k),
                                             seq.begin() + static_cast<long>(i + 1))];
      }
    }
  }

  // Unigrams: maximum likelihood scaled to leave the floor for <unk>.
  std::uint64_t total = 0;
  for (const auto& [key, c] : counts[0]) total += c;
  const double kept = 1.0 - options.unk_floor;
  for (const auto& [key, c] : counts[0]) {
    model.set_entry(key, {std::log10(kept * static_cast<double>(c) / static_cast<double>(total)), 0.0});
  }
  const TokenId bos[1] = {Vocabulary::kBos};
  const TokenId unk[1] = {Vocabulary::kUnk};
  model.set_entry(bos, {kLog10Zero, 0.0});
  model.set_entry(unk, {std::log10(options.unk_floor), 0.0});

  // Higher orders: Witten-Bell, P(w|h) = c(hw) / (c(h) + T(h)). Keys sharing a
  // context are contiguous in the ordered map.
  for (std::size_t k = 2; k <= order; ++k) {
    const auto& table = counts[k - 1];
    for (auto it = table.begin(); it != table.end();) {
      auto end = it;
      std::uint64_t ctx_total = 0;
      std::uint64_t types = 0;
      while (end != table.end() &&
             std::equal(it->first.begin(), it->first.end() - 1, end->first.begin())) {
        ctx_total += end->second;
        ++types;
        ++end;
      }
      const double denom = static_cast<double>(ctx_total + types);
      for (; it != end; ++it) {
        model.set_entry(it->first, {std::log10(static_cast<double>(it->second) / denom), 0.0});
      }
    }
  }
  recompute_backoffs(model);
  return model;
}

NGramModel interpolate(const NGramModel& a, const NGramModel& b, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error("lambda must lie in [0, 1]");
  NGramModel out(std::max(a.order(), b.order()));

  std::set<std::string> tokens;
  for (const NGramModel* m : {&a, &b}) {
    for (std::size_t i = 0; i < m->vocabulary().size(); ++i) {
      tokens.insert(m->vocabulary().token(static_cast<TokenId>(i)));
    }
  }
  for (const auto& t : tokens) out.vocabulary().add(t);

  auto translate = [](const NGramModel& from, const NGramModel& to,
                      const std::vector<TokenId>& key) {
    std::vector<TokenId> r;
    r.reserve(key.size());
    for (TokenId t : key) r.push_back(to.id(from.vocabulary().token(t)));
    return r;
  };

  std::vector<TokenId> ctx_a;
  std::vector<TokenId> ctx_b;
  for (int k = 1; k <= out.order(); ++k) {
    std::set<std::vector<TokenId>> keys;
    for (const NGramModel* m : {&a, &b}) {
      if (k > m->order()) continue;
      for (const auto& key : m->ngrams(k)) keys.insert(translate(*m, out, key));
    }
    for (const auto& key : keys) {
      const auto in_a = translate(out, a, key);
      const auto in_b = translate(out, b, key);
      ctx_a.assign(in_a.begin(), in_a.end() - 1);
      ctx_b.assign(in_b.begin(), in_b.end() - 1);
      const double pa = to_prob(a.score(ctx_a, in_a.back()));
      const double pb = to_prob(b.score(ctx_b, in_b.back()));
      out.set_entry(key, {to_log10(lambda * pa + (1.0 - lambda) * pb), 0.0});
    }
  }
  recompute_backoffs(out);
  return out;
}

std::vector<std::string> read_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(dir.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<std::string> lines;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw Error("cannot read " + f.string());
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) lines.push_back(line);
    }
  }
  return lines;
}

VocabReport oov_report(const std::vector<std::string>& train_texts,
                       const std::vector<std::string>& eval_texts) {
  if (train_texts.empty() || eval_texts.empty()) throw Error("empty corpus");
  std::unordered_set<std::u32string> vocab;
  for (const auto& t : train_texts) {
    for (auto& w : utf8::words(utf8::decode(t))) vocab.insert(std::move(w));
  }
  VocabReport r;
  r.vocab_size = vocab.size();
  for (const auto& t : eval_texts) {
    for (const auto& w : utf8::words(utf8::decode(t))) {
      ++r.total_tokens;
      if (vocab.count(w) == 0) ++r.oov_tokens;
    }
  }
  if (r.total_tokens == 0) throw Error("evaluation corpus contains no words");
  r.oov_rate = 100.0 * static_cast<double>(r.oov_tokens) / static_cast<double>(r.total_tokens);
  return r;
}

}  // namespace htrkit
