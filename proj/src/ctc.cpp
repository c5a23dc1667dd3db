#include "htrkit/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_map>

#include "htrkit/error.hpp"
#include "htrkit/utf8.hpp"

namespace htrkit {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

}  // namespace

void DecodeParams::validate() const {
  if (beam_width < 1) throw Error("beam width must be at least 1");
  if (!std::isfinite(alpha) || alpha < 0.0) throw Error("alpha must be finite and >= 0");
  if (!std::isfinite(beta)) throw Error("beta must be finite");
}

std::string collapse(std::span<const std::size_t> path, const Alphabet& alphabet) {
  std::string out;
  std::size_t prev = Alphabet::kBlank;
  bool first = true;
  for (std::size_t idx : path) {
    if (idx >= alphabet.size()) throw Error("class index " + std::to_string(idx) + " out of range");
    if ((first || idx != prev) && idx != Alphabet::kBlank) out += alphabet.symbol(idx);
    prev = idx;
    first = false;
  }
  return out;
}

DecodeResult greedy_decode(const EmissionMatrix& m) {
  std::vector<std::size_t> path(m.timesteps());
  double logprob = 0.0;
  for (std::size_t t = 0; t < m.timesteps(); ++t) {
    const auto row = m.row(t);
    // max_element returns the first maximum, i.e. the lowest index on ties.
    path[t] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    logprob += std::log(row[path[t]]);
  }
  return {collapse(path, m.alphabet()), logprob, logprob};
}

double path_probability(const EmissionMatrix& m, std::span<const std::size_t> path) {
  if (path.size() != m.timesteps()) {
    throw Error("path length " + std::to_string(path.size()) + " differs from T=" +
                std::to_string(m.timesteps()));
  }
  double p = 1.0;
  for (std::size_t t = 0; t < path.size(); ++t) {
    if (path[t] >= m.classes()) throw Error("class index out of range");
    p *= m.at(t, path[t]);
  }
  return p;
}

double marginal_probability(const EmissionMatrix& m, const std::string& transcript,
                            const OracleLimits& limits) {
  const std::size_t T = m.timesteps();
  const std::size_t S = m.classes();
  if (T > limits.max_timesteps || S > limits.max_classes) {
    throw Error("instance " + std::to_string(T) + "x" + std::to_string(S) +
                " exceeds the enumeration limit");
  }
  std::vector<std::size_t> target;
  for (const auto& ch : utf8::split_chars(transcript)) {
    const long idx = m.alphabet().index_of(ch);
    if (idx < 0) return 0.0;
    target.push_back(static_cast<std::size_t>(idx));
  }
  if (target.size() > T) return 0.0;

  std::vector<std::size_t> path(T, 0);
  std::vector<std::size_t> collapsed;
  double total = 0.0;
  while (true) {
    collapsed.clear();
    for (std::size_t t = 0; t < T; ++t) {
      if (path[t] != Alphabet::kBlank && (t == 0 || path[t] != path[t - 1])) {
        collapsed.push_back(path[t]);
      }
    }
    if (collapsed == target) total += path_probability(m, path);
    std::size_t t = 0;
    while (t < T && ++path[t] == S) path[t++] = 0;
    if (t == T) break;
  }
  return total;
}

namespace {

struct Node {
  std::uint32_t parent;
  std::uint32_t cls;
  double lm_log10;
  std::vector<TokenId> lm_context;
};

constexpr std::uint32_t kNoParent = std::numeric_limits<std::uint32_t>::max();

std::uint64_t node_key(std::uint32_t parent, std::uint32_t cls) {
  return (static_cast<std::uint64_t>(parent) << 32) | cls;
}

struct Candidate {
  std::uint32_t parent;
  std::uint32_t cls;
  std::int64_t node;  // -1 until materialized
  double lm_log10;
  double log_p_blank = kNegInf;
  double log_p_nonblank = kNegInf;
  double score_q = 0.0;
};

class PrefixTrie {
 public:
  PrefixTrie(const Alphabet& alphabet, const NGramModel* lm, std::size_t lm_context_len)
      : alphabet_(alphabet), lm_(lm), lm_context_len_(lm_context_len) {
    nodes_.push_back({kNoParent, 0, 0.0, {Vocabulary::kBos}});
    if (lm_ != nullptr) {
      tokens_.resize(alphabet.size(), Vocabulary::kUnk);
      for (std::size_t s = 1; s < alphabet.size(); ++s) tokens_[s] = lm_->id(alphabet.symbol(s));
    }
  }

  const Node& node(std::size_t id) const { return nodes_[id]; }
  std::size_t depth(std::size_t id) const {
    std::size_t d = 0;
    for (auto n = static_cast<std::uint32_t>(id); nodes_[n].parent != kNoParent; n = nodes_[n].parent) ++d;
    return d;
  }

  /// Existing node id for (parent, cls), or -1.
  std::int64_t lookup(std::uint32_t parent, std::uint32_t cls) const {
    auto it = index_.find(node_key(parent, cls));
    return it == index_.end() ? -1 : static_cast<std::int64_t>(it->second);
  }

  double extension_lm(std::uint32_t parent, std::uint32_t cls) const {
    if (lm_ == nullptr) return 0.0;
    return nodes_[parent].lm_log10 + lm_->score(nodes_[parent].lm_context, tokens_[cls]);
  }

  std::uint32_t materialize(const Candidate& c) {
    if (c.node >= 0) return static_cast<std::uint32_t>(c.node);
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    Node n{c.parent, c.cls, c.lm_log10, {}};
    if (lm_ != nullptr) {
      n.lm_context = nodes_[c.parent].lm_context;
      n.lm_context.push_back(tokens_[c.cls]);
      if (n.lm_context.size() > lm_context_len_) {
        n.lm_context.erase(n.lm_context.begin(),
                           n.lm_context.end() - static_cast<long>(lm_context_len_));
      }
    }
    nodes_.push_back(std::move(n));
    index_.emplace(node_key(c.parent, c.cls), id);
    return id;
  }

  /// Code points of the prefix ending in `cls` under `parent`.
  std::u32string spelling(std::uint32_t parent, std::uint32_t cls) const {
    std::u32string out;
    if (parent != kNoParent) out.push_back(alphabet_.code_point(cls));
    for (std::uint32_t n = parent; n != kNoParent && nodes_[n].parent != kNoParent; n = nodes_[n].parent) {
      out.push_back(alphabet_.code_point(nodes_[n].cls));
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

  std::string transcript(std::uint32_t id) const {
    return utf8::encode(spelling(nodes_[id].parent, nodes_[id].cls));
  }

 private:
  const Alphabet& alphabet_;
  const NGramModel* lm_;
  std::size_t lm_context_len_;
  std::vector<TokenId> tokens_;
  std::vector<Node> nodes_;
  std::unordered_map<std::uint64_t, std::uint32_t> index_;
};

struct BeamEntry {
  std::uint32_t node;
  double log_p_blank;
  double log_p_nonblank;
  double lm_log10;
  double score_q;
};

}  // namespace

std::vector<DecodeResult> prefix_beam_search(const EmissionMatrix& m, const DecodeParams& params,
                                             std::size_t n_best, const BeamObserver& observer) {
  params.validate();
  if (n_best < 1) throw Error("n_best must be at least 1");
  const std::size_t S = m.classes();
  const double lm_weight = params.effective_alpha() * std::numbers::ln10;
  const std::size_t ctx_len = params.lm == nullptr ? 0 : static_cast<std::size_t>(params.lm->order() - 1);
  PrefixTrie trie(m.alphabet(), params.lm, std::max<std::size_t>(ctx_len, 1));

  auto fused = [&](double lpb, double lpnb, double lm_log10, std::size_t length) {
    return log_add(lpb, lpnb) + lm_weight * lm_log10 + params.beta * static_cast<double>(length);
  };

  std::vector<BeamEntry> beam{{0, 0.0, kNegInf, 0.0, 0.0}};
  std::vector<std::size_t> lengths{0};  // parallel to beam
  std::unordered_map<std::uint64_t, std::size_t> slot;
  std::vector<Candidate> cands;
  std::vector<std::size_t> cand_len;
  std::vector<double> logp(S);

  for (std::size_t t = 0; t < m.timesteps(); ++t) {
    for (std::size_t s = 0; s < S; ++s) logp[s] = safe_log(m.at(t, s));
    slot.clear();
    cands.clear();
    cand_len.clear();

    auto candidate = [&](std::uint32_t parent, std::uint32_t cls, std::int64_t node, double lm,
                         std::size_t len) -> Candidate& {
      const std::uint64_t key = node_key(parent, cls);
      auto [it, inserted] = slot.try_emplace(key, cands.size());
      if (inserted) {
        cands.push_back({parent, cls, node, lm});
        cand_len.push_back(len);
      }
      return cands[it->second];
    };

    for (std::size_t b = 0; b < beam.size(); ++b) {
      const BeamEntry& e = beam[b];
      const Node& n = trie.node(e.node);
      const double total = log_add(e.log_p_blank, e.log_p_nonblank);
      const std::size_t len = lengths[b];

      // Same prefix: blank, or a repeat of the last character.
      Candidate& same = candidate(n.parent, n.cls, e.node, e.lm_log10, len);
      same.log_p_blank = log_add(same.log_p_blank, total + logp[Alphabet::kBlank]);
      if (n.parent != kNoParent) {
        same.log_p_nonblank = log_add(same.log_p_nonblank, e.log_p_nonblank + logp[n.cls]);
      }

      for (std::uint32_t c = 1; c < S; ++c) {
        if (logp[c] == kNegInf) continue;
        std::int64_t existing = trie.lookup(e.node, c);
        double lm = existing >= 0 ? trie.node(static_cast<std::size_t>(existing)).lm_log10
                                  : (slot.count(node_key(e.node, c)) != 0
                                         ? cands[slot[node_key(e.node, c)]].lm_log10
                                         : trie.extension_lm(e.node, c));
        Candidate& ext = candidate(e.node, c, existing, lm, len + 1);
        // After a non-blank ending in c, emitting c again only extends via a blank.
        const double from = (n.parent != kNoParent && c == n.cls) ? e.log_p_blank : total;
        ext.log_p_nonblank = log_add(ext.log_p_nonblank, from + logp[c]);
      }
    }

    std::vector<std::size_t> live;
    live.reserve(cands.size());
    for (std::size_t i = 0; i < cands.size(); ++i) {
      Candidate& c = cands[i];
      if (c.log_p_blank == kNegInf && c.log_p_nonblank == kNegInf) continue;
      c.score_q = fused(c.log_p_blank, c.log_p_nonblank, c.lm_log10, cand_len[i]);
      live.push_back(i);
    }
    auto better = [&](std::size_t x, std::size_t y) {
      if (cands[x].score_q != cands[y].score_q) return cands[x].score_q > cands[y].score_q;
      return trie.spelling(cands[x].parent, cands[x].cls) < trie.spelling(cands[y].parent, cands[y].cls);
    };
    const std::size_t keep = std::min(params.beam_width, live.size());
    std::partial_sort(live.begin(), live.begin() + static_cast<long>(keep), live.end(), better);
    live.resize(keep);

    beam.clear();
    lengths.clear();
    for (std::size_t i : live) {
      const Candidate& c = cands[i];
      beam.push_back({trie.materialize(c), c.log_p_blank, c.log_p_nonblank, c.lm_log10, c.score_q});
      lengths.push_back(cand_len[i]);
    }

    if (observer) {
      std::vector<BeamHypothesis> view;
      view.reserve(beam.size());
      for (const auto& e : beam) {
        view.push_back({trie.transcript(e.node), e.log_p_blank, e.log_p_nonblank, e.lm_log10, e.score_q});
      }
      observer(t, view);
    }
  }

  std::vector<DecodeResult> out;
  for (std::size_t i = 0; i < beam.size() && i < n_best; ++i) {
    const auto& e = beam[i];
    out.push_back({trie.transcript(e.node), e.score_q, log_add(e.log_p_blank, e.log_p_nonblank)});
  }
  return out;
}

}  // namespace htrkit
