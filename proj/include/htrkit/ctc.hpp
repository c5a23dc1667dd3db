#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "htrkit/emissions.hpp"
#include "htrkit/ngram.hpp"

namespace htrkit {

/// Shallow-fusion decoding parameters. Defaults are the operating point
/// alpha = 0.8, beta = 2.0 with 100 active hypotheses.
struct DecodeParams {
  std::size_t beam_width = 100;
  double alpha = 0.8;  // LM weight; ignored without an LM
  double beta = 2.0;   // per-character insertion bonus
  const NGramModel* lm = nullptr;

  /// Throws htrkit::Error when a field violates its range.
  void validate() const;
  double effective_alpha() const { return lm == nullptr ? 0.0 : alpha; }
};

struct DecodeResult {
  std::string transcript;
  double score_q = 0.0;           // natural-log units
  double acoustic_logprob = 0.0;  // ln P(transcript | x) as tracked by the decoder
};

/// A live prefix of the beam, as reported to a BeamObserver.
struct BeamHypothesis {
  std::string prefix;
  double log_p_blank = 0.0;
  double log_p_nonblank = 0.0;
  double lm_log10 = 0.0;
  double score_q = 0.0;
};

/// Called after pruning at every timestep t with the surviving beam.
using BeamObserver = std::function<void(std::size_t t, std::span<const BeamHypothesis> beam)>;

/// Merges adjacent repeats, then removes blanks.
std::string collapse(std::span<const std::size_t> path, const Alphabet& alphabet);

/// Best path: per-row argmax (lowest index on ties) followed by collapse.
DecodeResult greedy_decode(const EmissionMatrix& m);

/// Product of m[t][path[t]].
double path_probability(const EmissionMatrix& m, std::span<const std::size_t> path);

struct OracleLimits {
  std::size_t max_timesteps = 8;
  std::size_t max_classes = 6;
};

/// Exact P(transcript | x) by enumerating all S^T alignments. Only for tiny
/// instances; throws when the matrix exceeds `limits`.
double marginal_probability(const EmissionMatrix& m, const std::string& transcript,
                            const OracleLimits& limits = {});

/// CTC prefix beam search maximizing
///   Q(c) = ln P(c|x) + alpha * ln(10) * log10 P_lm(c) + beta * |c|.
/// Returns up to n_best results sorted by descending Q, ties by transcript.
std::vector<DecodeResult> prefix_beam_search(const EmissionMatrix& m, const DecodeParams& params,
                                             std::size_t n_best = 1,
                                             const BeamObserver& observer = {});

}  // namespace htrkit
