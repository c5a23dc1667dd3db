#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "htrkit/alphabet.hpp"

namespace htrkit {

/// Row-sum tolerance applied when validating emission rows.
inline constexpr double kRowSumTolerance = 1e-4;

/// T x S grid of per-timestep class posteriors. Immutable once built; the
/// constructor enforces that every entry lies in [0, 1] and each row sums to 1
/// within kRowSumTolerance.
class EmissionMatrix {
 public:
  EmissionMatrix(Alphabet alphabet, std::size_t timesteps, std::vector<double> probs);

  std::size_t timesteps() const { return timesteps_; }
  std::size_t classes() const { return alphabet_.size(); }
  const Alphabet& alphabet() const { return alphabet_; }

  std::span<const double> row(std::size_t t) const {
    return {probs_.data() + t * classes(), classes()};
  }
  double at(std::size_t t, std::size_t s) const { return probs_[t * classes() + s]; }
  const std::vector<double>& data() const { return probs_; }

 private:
  Alphabet alphabet_;
  std::size_t timesteps_;
  std::vector<double> probs_;
};

// EMIT-v1: a one-line JSON header followed by T lines of S space-separated
// decimals.
EmissionMatrix read_emissions(std::istream& in);
void write_emissions(const EmissionMatrix& m, std::ostream& out);

EmissionMatrix load_emissions(const std::filesystem::path& path);
void save_emissions(const EmissionMatrix& m, const std::filesystem::path& path);

/// Exp-normalizes each row of a row-major T x S logit grid.
EmissionMatrix softmax_rows(Alphabet alphabet, std::size_t timesteps,
                            std::span<const double> logits);
EmissionMatrix softmax_rows(Alphabet alphabet,
                            const std::vector<std::vector<double>>& logits);

}  // namespace htrkit
