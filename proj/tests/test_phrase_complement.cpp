#include <cmath>
#include <random>

#include "cfsum/phrase_complement.hpp"
#include "cfsum/word_complement.hpp"
#include "doctest.h"
#include "grad_check.hpp"

using namespace cfsum;
using cfsum::testing::grad_max_rel_error;

TEST_CASE("phrase_truth counting") {
  // phrase of 3 tokens with 2 in the summary -> 2/3
  CHECK(phrase_truth({{0, 3}}, {4, 5, 6}, {4, 5}) == std::vector<double>{2.0 / 3.0});
  // disjoint summary -> 0, fully copied -> 1
  CHECK(phrase_truth({{0, 2}}, {4, 5}, {8, 9}) == std::vector<double>{0.0});
  CHECK(phrase_truth({{0, 2}}, {4, 5}, {5, 4, 7}) == std::vector<double>{1.0});
}

TEST_CASE("phrase_truth: reorder invariance inside a phrase") {
  auto a = phrase_truth({{0, 3}}, {4, 5, 6}, {6, 4});
  auto b = phrase_truth({{0, 3}}, {6, 4, 5}, {6, 4});
  CHECK(a == b);
}

TEST_CASE("phrase_truth: empty or out-of-range spans rejected") {
  CHECK_THROWS_AS(phrase_truth({{1, 1}}, {4, 5}, {4}), std::invalid_argument);
  CHECK_THROWS_AS(phrase_truth({{0, 5}}, {4, 5}, {4}), std::invalid_argument);
}

TEST_CASE("phrase_gain arithmetic") {
  // |0.2-0.5| - |0.4-0.5| = 0.3 - 0.1
  CHECK(phrase_gain({0.2}, {0.4}, {0.5})[0] == doctest::Approx(0.2));
  CHECK(phrase_gain({0.3}, {0.3}, {0.9})[0] == doctest::Approx(0.0));
  // maximal gain when the bi-modal stream is exact and uni-modal maximally off
  CHECK(phrase_gain({0.0}, {1.0}, {1.0})[0] == doctest::Approx(1.0));
}

TEST_CASE("phrase_gain: antisymmetric under stream swap, bounded") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double ru = u(rng), rm = u(rng), truth = u(rng);
    const double g = phrase_gain({ru}, {rm}, {truth})[0];
    const double swapped = phrase_gain({rm}, {ru}, {truth})[0];
    CHECK(g == doctest::Approx(-swapped));
    CHECK(g >= -1.0);
    CHECK(g <= 1.0);
  }
}

TEST_CASE("copys_loss values and gradient") {
  SUBCASE("perfect scorer gives zero") {
    auto r = Tensor::from({0.5, 1.0}, {2, 1});
    auto t = std::vector<double>{0.5, 1.0};
    CHECK(copys_loss(r, r, t).item() == doctest::Approx(0.0));
  }
  SUBCASE("both streams at 0.5 against truth 1 give 0.5") {
    auto r = Tensor::from({0.5}, {1, 1});
    CHECK(copys_loss(r, r, {1.0}).item() == doctest::Approx(0.5));
  }
  SUBCASE("finite-difference gradient on a 2-phrase sample") {
    auto err = grad_max_rel_error(
        {Tensor::from({0.2, -0.4}, {2, 1}, true),
         Tensor::from({0.6, 0.1}, {2, 1}, true)},
        [](const std::vector<Tensor>& in) {
          return copys_loss(sigmoid_op(in[0]), sigmoid_op(in[1]), {0.8, 0.3});
        });
    CHECK(err < 1e-4);
  }
}

TEST_CASE("project_gain: max over covering phrases") {
  // overlap permitted: token 1 sits in both phrases, takes the max
  CHECK(project_gain({0.1, 0.3}, {{0, 2}, {1, 3}}, 3) ==
        std::vector<double>{0.1, 0.3, 0.3});
  // partition spans: gain constant within each phrase
  CHECK(project_gain({0.5, -0.2}, {{0, 2}, {2, 4}}, 4) ==
        std::vector<double>{0.5, 0.5, -0.2, -0.2});
  // single covering phrase
  CHECK(project_gain({0.7}, {{0, 3}}, 3) == std::vector<double>{0.7, 0.7, 0.7});
}

TEST_CASE("project_gain: k=1 chunking degenerates to word granularity") {
  std::vector<Span> spans;
  std::vector<double> gains;
  for (int j = 0; j < 5; ++j) {
    spans.emplace_back(j, j + 1);
    gains.push_back(0.1 * j);
  }
  CHECK(project_gain(gains, spans, 5) == gains);
}

TEST_CASE("project_gain: uncovered token rejected") {
  CHECK_THROWS_WITH_AS(project_gain({0.1}, {{0, 2}}, 3), doctest::Contains("token 2"),
                       std::invalid_argument);
  CHECK_THROWS_AS(project_gain({0.1, 0.2}, {{0, 2}}, 2), std::invalid_argument);
}

TEST_CASE("phrase divergence loss via shared t2v: shift invariance and direction") {
  // identical contract to the word loss; spot-check with projected gains
  auto att = Tensor::from({0.3, 0.1, 0.2, 0.15}, {1, 4});
  auto g1 = project_gain({0.4, -0.1}, {{0, 2}, {2, 4}}, 4);
  auto g2 = g1;
  for (auto& x : g2) x += 3.0;
  CHECK(attention_divergence_loss(g1, att).item() ==
        doctest::Approx(attention_divergence_loss(g2, att).item()));

  // minimizing shifts attention toward the max-gain phrase's tokens
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    Rng rng(seed);
    const int t = 4, c = 6;
    auto logits = Tensor::rand_uniform({c, c}, 0.5, rng, true);
    auto gain = project_gain({1.0, -0.5}, {{0, 2}, {2, 4}}, t);

    auto hot_mass = [&]() {
      NoGradGuard ng;
      auto inter = t2v({softmax_rows(logits)}, t, c);
      double total = 0, hot = 0;
      for (int j = 0; j < t; ++j) total += inter.value(j);
      for (int j = 0; j < 2; ++j) hot += inter.value(j);
      return hot / total;
    };
    const double before = hot_mass();
    Adam opt({logits}, {0.05, 0.9, 0.98, 1e-8});
    for (int step = 0; step < 100; ++step) {
      logits.zero_grad();
      auto loss = attention_divergence_loss(gain, t2v({softmax_rows(logits)}, t, c));
      backward(loss);
      opt.step();
    }
    CHECK(hot_mass() > before);
  }
}
