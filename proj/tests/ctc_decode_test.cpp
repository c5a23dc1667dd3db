#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "htrkit/ctc.hpp"
#include "htrkit/error.hpp"
#include "htrkit/ngram.hpp"
#include "test_support.hpp"

namespace htrkit {
namespace {

using testing::matrix;

std::size_t ipow(std::size_t b, std::size_t e) {
  std::size_t r = 1;
  while (e-- > 0) r *= b;
  return r;
}

DecodeParams plain(std::size_t beam) {
  DecodeParams p;
  p.beam_width = beam;
  p.alpha = 0.0;
  p.beta = 0.0;
  return p;
}

TEST(CollapseTest, MergesRepeatsThenDropsBlanks) {
  const Alphabet abc = testing::letters(3);
  const std::vector<std::size_t> p1{1, 1, 0, 2, 2}, p2{0, 0, 0}, p3{1, 0, 1};
  EXPECT_EQ(collapse(p1, abc), "ab");
  EXPECT_EQ(collapse(p2, abc), "");
  EXPECT_EQ(collapse(p3, abc), "aa");
  const std::vector<std::size_t> bad{1, 3};
  EXPECT_THROW(collapse(bad, abc), Error);
}

TEST(GreedyTest, WorkedExamples) {
  EXPECT_EQ(greedy_decode(matrix({{0.6, 0.4, 0.0}, {0.6, 0.4, 0.0}})).transcript, "");
  const auto r = greedy_decode(matrix({{0.1, 0.8, 0.1}, {0.9, 0.05, 0.05}, {0.1, 0.8, 0.1}}));
  EXPECT_EQ(r.transcript, "aa");
  EXPECT_NEAR(r.acoustic_logprob, std::log(0.8 * 0.9 * 0.8), 1e-12);
  EXPECT_DOUBLE_EQ(r.score_q, r.acoustic_logprob);
  EXPECT_EQ(greedy_decode(matrix({{0, 1, 0}, {0, 1, 0}, {1, 0, 0}, {0, 0, 1}})).transcript, "ab");
}

TEST(GreedyTest, TiesGoToLowestIndex) {
  EXPECT_EQ(greedy_decode(matrix({{0.5, 0.5, 0.0}})).transcript, "");
  EXPECT_EQ(greedy_decode(matrix({{0.2, 0.4, 0.4}})).transcript, "a");
}

TEST(GreedyTest, MatchesIndependentOracleOnRandomMatrices) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> tdist(1, 6), sdist(2, 4);
  for (int i = 0; i < 500; ++i) {
    const auto m = testing::random_matrix(rng, tdist(rng), sdist(rng));
    double lp = 0.0;
    const std::string expect = testing::oracle_best_path(m, &lp);
    const auto r = greedy_decode(m);
    ASSERT_EQ(r.transcript, expect);
    ASSERT_NEAR(r.acoustic_logprob, lp, 1e-9);
  }
}

TEST(PathProbabilityTest, Examples) {
  const auto uni = matrix({{0.5, 0.5}, {0.5, 0.5}});
  const std::vector<std::size_t> p{1, 0};
  EXPECT_DOUBLE_EQ(path_probability(uni, p), 0.25);
  const auto hot = matrix({{0, 1}, {1, 0}});
  EXPECT_DOUBLE_EQ(path_probability(hot, p), 1.0);
  EXPECT_NEAR(path_probability(matrix({{0.6, 0.4}, {0.3, 0.7}}), p), 0.12, 1e-15);
  const std::vector<std::size_t> short_path{1};
  EXPECT_THROW(path_probability(uni, short_path), Error);
}

TEST(MarginalTest, WorkedExample) {
  const auto m = matrix({{0.6, 0.4, 0.0}, {0.6, 0.4, 0.0}});
  EXPECT_NEAR(marginal_probability(m, ""), 0.36, 1e-12);
  EXPECT_NEAR(marginal_probability(m, "a"), 0.64, 1e-12);
  EXPECT_EQ(marginal_probability(m, "b"), 0.0);
  EXPECT_EQ(marginal_probability(m, "z"), 0.0);
}

TEST(MarginalTest, SumsToOneAndMatchesRecursiveOracle) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> tdist(1, 5), sdist(2, 4);
  for (int i = 0; i < 60; ++i) {
    const auto m = testing::random_matrix(rng, tdist(rng), sdist(rng));
    double total = 0.0;
    for (const auto& [text, p] : testing::oracle_transcript_distribution(m)) {
      const double q = marginal_probability(m, text);
      ASSERT_NEAR(q, p, 1e-12);
      total += q;
    }
    ASSERT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(MarginalTest, RefusesLargeInstances) {
  std::mt19937_64 rng(1);
  EXPECT_THROW(marginal_probability(testing::random_matrix(rng, 9, 3), "a"), Error);
  EXPECT_THROW(marginal_probability(testing::random_matrix(rng, 2, 7), "a"), Error);
}

TEST(BeamSearchTest, WorkedExamplePrefersMarginalOverBestPath) {
  const auto m = matrix({{0.6, 0.4, 0.0}, {0.6, 0.4, 0.0}});
  const auto r = prefix_beam_search(m, plain(10), 2);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].transcript, "a");
  EXPECT_NEAR(std::exp(r[0].acoustic_logprob), 0.64, 1e-12);
  EXPECT_EQ(r[1].transcript, "");
  EXPECT_NEAR(std::exp(r[1].acoustic_logprob), 0.36, 1e-12);
}

TEST(BeamSearchTest, DeterministicEmissions) {
  const auto m = matrix({{0, 1, 0}, {1, 0, 0}, {0, 0, 1}});
  for (std::size_t w : {1u, 2u, 50u}) {
    const auto r = prefix_beam_search(m, plain(w), 1);
    EXPECT_EQ(r[0].transcript, "ab");
    EXPECT_NEAR(r[0].acoustic_logprob, 0.0, 1e-12);
  }
}

TEST(BeamSearchTest, RepeatNeedsBlankInBetween) {
  const auto m = matrix({{0, 1, 0}, {0, 1, 0}, {1, 0, 0}, {0, 1, 0}});
  EXPECT_EQ(prefix_beam_search(m, plain(8), 1)[0].transcript, "aa");
}

TEST(BeamSearchTest, LanguageModelBreaksAcousticTie) {
  // Every two-frame alignment over {a, b} is equally likely, so "a", "b",
  // "ab" and "ba" all carry acoustic mass 0.25.
  const auto m = matrix({{0.0, 0.5, 0.5}, {0.0, 0.5, 0.5}});
  std::vector<std::string> corpus(50, "ab");
  corpus.push_back("ba");
  const NGramModel lm = train(corpus, {3});
  DecodeParams p;
  p.alpha = 0.8;
  p.beta = 2.0;
  p.lm = &lm;
  const auto r = prefix_beam_search(m, p, 4);
  ASSERT_EQ(r.size(), 4u);
  EXPECT_EQ(r[0].transcript, "ab");

  // Q from its definition, using the model's own conditional scores.
  const double ln10 = std::log(10.0);
  auto q = [&](const std::vector<std::string>& chars) {
    std::vector<std::string> ctx{"<s>"};
    double lm10 = 0.0;
    for (const auto& c : chars) {
      lm10 += lm.score(ctx, c);
      ctx.push_back(c);
    }
    return std::log(0.25) + 0.8 * ln10 * lm10 + 2.0 * static_cast<double>(chars.size());
  };
  EXPECT_NEAR(r[0].score_q, q({"a", "b"}), 1e-9);
  EXPECT_GT(q({"a", "b"}), q({"b", "a"}));
  for (const auto& res : r) {
    if (res.transcript == "ba") EXPECT_NEAR(res.score_q, q({"b", "a"}), 1e-9);
    if (res.transcript == "a") EXPECT_NEAR(res.score_q, q({"a"}), 1e-9);
  }
}

TEST(BeamSearchTest, ExhaustiveBeamMatchesEnumerationOracle) {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<std::size_t> tdist(1, 5), sdist(2, 4);
  for (int i = 0; i < 150; ++i) {
    const auto m = testing::random_matrix(rng, tdist(rng), sdist(rng));
    const auto dist = testing::oracle_transcript_distribution(m);
    std::string best;
    double best_p = -1.0;
    for (const auto& [text, p] : dist) {
      if (p > best_p) {  // map order gives lexicographic tie-breaking
        best = text;
        best_p = p;
      }
    }
    const auto r = prefix_beam_search(m, plain(ipow(m.classes(), m.timesteps())), 1);
    ASSERT_EQ(r[0].transcript, best);
    ASSERT_NEAR(std::exp(r[0].acoustic_logprob), best_p, 1e-6);
  }
}

TEST(BeamSearchTest, ExhaustiveBeamDominatesPrunedBeam) {
  std::mt19937_64 rng(22);
  const NGramModel lm = train({"abc", "cab", "bca", "aab"}, {3});
  for (int i = 0; i < 100; ++i) {
    const auto m = testing::random_matrix(rng, 5, 4);
    for (const NGramModel* model : {static_cast<const NGramModel*>(nullptr), &lm}) {
      DecodeParams p;
      p.lm = model;
      p.beam_width = ipow(4, 5);
      const double full = prefix_beam_search(m, p, 1)[0].score_q;
      for (std::size_t w : {1u, 2u, 3u, 5u}) {
        p.beam_width = w;
        ASSERT_GE(full + 1e-12, prefix_beam_search(m, p, 1)[0].score_q);
      }
    }
  }
}

TEST(BeamSearchTest, BeamMassNeverExceedsOne) {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 50; ++i) {
    const auto m = testing::random_matrix(rng, 5, 4);
    std::size_t steps = 0;
    prefix_beam_search(m, plain(ipow(4, 5)), 1, [&](std::size_t, std::span<const BeamHypothesis> beam) {
      double mass = 0.0;
      for (const auto& h : beam) mass += std::exp(h.log_p_blank) + std::exp(h.log_p_nonblank);
      EXPECT_LE(mass, 1.0 + 1e-6);
      EXPECT_NEAR(mass, 1.0, 1e-9);  // nothing is pruned
      ++steps;
    });
    EXPECT_EQ(steps, 5u);
  }
}

TEST(BeamSearchTest, ObservedHypothesesSatisfyScoreIdentity) {
  std::mt19937_64 rng(24);
  const NGramModel lm = train({"abc", "cab", "bca"}, {2});
  DecodeParams p;
  p.lm = &lm;
  p.beam_width = 6;
  const auto m = testing::random_matrix(rng, 6, 4);
  prefix_beam_search(m, p, 1, [&](std::size_t, std::span<const BeamHypothesis> beam) {
    for (const auto& h : beam) {
      const double lp = std::log(std::exp(h.log_p_blank) + std::exp(h.log_p_nonblank));
      const double len = static_cast<double>(h.prefix.size());
      EXPECT_NEAR(h.score_q, lp + p.alpha * std::log(10.0) * h.lm_log10 + p.beta * len, 1e-9);
      EXPECT_LE(h.log_p_blank, 0.0);
      EXPECT_LE(h.log_p_nonblank, 0.0);
    }
  });
}

TEST(BeamSearchTest, ZeroAlphaIgnoresLanguageModel) {
  std::mt19937_64 rng(25);
  const NGramModel lm = train({"aaa", "abba"}, {3});
  for (int i = 0; i < 30; ++i) {
    const auto m = testing::random_matrix(rng, 6, 3);
    DecodeParams with = plain(4);
    with.beta = 0.7;
    DecodeParams without = with;
    with.lm = &lm;
    const auto a = prefix_beam_search(m, with, 3);
    const auto b = prefix_beam_search(m, without, 3);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      EXPECT_EQ(a[k].transcript, b[k].transcript);
      EXPECT_DOUBLE_EQ(a[k].score_q, b[k].score_q);
    }
  }
}

TEST(BeamSearchTest, RepeatedRunsAreIdentical) {
  std::mt19937_64 rng(26);
  const NGramModel lm = train({"abc", "cab"}, {3});
  DecodeParams p;
  p.lm = &lm;
  p.beam_width = 5;
  const auto m = testing::random_matrix(rng, 30, 4);
  const auto first = prefix_beam_search(m, p, 5);
  for (int i = 0; i < 3; ++i) {
    const auto again = prefix_beam_search(m, p, 5);
    ASSERT_EQ(again.size(), first.size());
    for (std::size_t k = 0; k < first.size(); ++k) EXPECT_EQ(again[k].transcript, first[k].transcript);
  }
}

TEST(BeamSearchTest, LongerBetaNeverShortensTranscript) {
  std::mt19937_64 rng(27);
  const std::vector<double> betas{-3.0, -1.0, 0.0, 0.5, 1.0, 2.0, 4.0};
  for (int i = 0; i < 100; ++i) {
    const auto m = testing::random_matrix(rng, 4, 3);
    std::size_t prev = 0;
    for (double beta : betas) {
      DecodeParams p = plain(ipow(3, 4));
      p.beta = beta;
      const std::size_t len = prefix_beam_search(m, p, 1)[0].transcript.size();
      ASSERT_GE(len, prev) << "instance " << i << " beta " << beta;
      prev = len;
    }
  }
}

TEST(BeamSearchTest, NBestIsSortedByScoreThenTranscript) {
  const auto m = matrix({{0.0, 0.5, 0.5}, {0.0, 0.5, 0.5}});
  const auto r = prefix_beam_search(m, plain(16), 10);
  ASSERT_EQ(r.size(), 4u);
  EXPECT_EQ(r[0].transcript, "a");
  EXPECT_EQ(r[1].transcript, "ab");
  EXPECT_EQ(r[2].transcript, "b");
  EXPECT_EQ(r[3].transcript, "ba");
}

TEST(BeamSearchTest, RejectsInvalidParameters) {
  const auto m = matrix({{0.5, 0.5}});
  DecodeParams p = plain(0);
  EXPECT_THROW(prefix_beam_search(m, p, 1), Error);
  p = plain(1);
  p.alpha = -1.0;
  EXPECT_THROW(prefix_beam_search(m, p, 1), Error);
  p = plain(1);
  p.beta = NAN;
  EXPECT_THROW(prefix_beam_search(m, p, 1), Error);
  EXPECT_THROW(prefix_beam_search(m, plain(1), 0), Error);
}

}  // namespace
}  // namespace htrkit
