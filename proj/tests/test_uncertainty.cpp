#include <doctest.h>

#include <algorithm>

#include "umct/uncertainty.hpp"

using namespace umct;

namespace {

// Independent two-pass variance oracle: mean first, then mean of squared
// deviations (biased, divide by K), element by element in plain loops.
double two_pass_variance_sum(const std::vector<ProbMap<double>>& samples) {
  const Index n = samples.front().data.size();
  const double k = double(samples.size());
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    double mean = 0.0;
    for (const auto& s : samples) mean += s.data[i];
    mean /= k;
    double acc = 0.0;
    for (const auto& s : samples) {
      double d = s.data[i] - mean;
      acc += d * d;
    }
    total += acc / k;
  }
  return total;
}

std::vector<ProbMap<double>> random_stack(int k, Shape3 shape, int classes,
                                          std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ProbMap<double>> out;
  for (int i = 0; i < k; ++i) {
    ProbMap<double> p(shape, classes);
    for (Index j = 0; j < p.data.size(); ++j) p.data[j] = rng.next_double();
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

TEST_CASE("epistemic: identical samples give zero") {
  ProbMap<double> p({2, 2, 2}, 2);
  Rng rng(1);
  for (Index i = 0; i < p.data.size(); ++i) p.data[i] = rng.next_double();
  std::vector<ProbMap<double>> stack(7, p);
  CHECK(epistemic(stack) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("epistemic: single differing scalar contributes 0.25") {
  ProbMap<double> a({1, 1, 1}, 1), b({1, 1, 1}, 1);
  a.data[0] = 0.0;
  b.data[0] = 1.0;
  std::vector<ProbMap<double>> stack{a, b};
  // mean of squares 0.5 minus squared mean 0.25
  CHECK(epistemic(stack) == doctest::Approx(0.25));
}

TEST_CASE("epistemic matches the two-pass variance oracle within 1e-10") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto stack = random_stack(10, {3, 4, 2}, 3, seed);
    CHECK(std::abs(epistemic(stack) - two_pass_variance_sum(stack)) < 1e-10);
  }
}

TEST_CASE("epistemic rejects K < 2 and mismatched shapes") {
  auto stack = random_stack(1, {2, 2, 2}, 2, 0);
  CHECK_THROWS_AS(epistemic(stack), ValidationError);
  stack = random_stack(3, {2, 2, 2}, 2, 1);
  stack[1] = random_stack(1, {2, 2, 1}, 2, 2)[0];
  CHECK_THROWS_AS(epistemic(stack), ValidationError);
}

TEST_CASE("epistemic is invariant to sample order") {
  auto stack = random_stack(8, {2, 3, 2}, 2, 5);
  double base = epistemic(stack);
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    auto shuffled = stack;
    for (std::size_t i = shuffled.size(); i > 1; --i)
      std::swap(shuffled[i - 1], shuffled[rng.next_below(i)]);
    CHECK(epistemic(shuffled) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("epistemic scales quadratically with a common factor") {
  auto stack = random_stack(6, {2, 2, 3}, 2, 13);
  double base = epistemic(stack);
  for (double a : {0.5, 2.0, 3.0}) {
    auto scaled = stack;
    for (auto& s : scaled) s.data *= a;
    CHECK(epistemic(scaled) == doctest::Approx(a * a * base).epsilon(1e-10));
  }
}

TEST_CASE("epistemic is zero iff the samples are identical") {
  auto stack = random_stack(5, {2, 2, 2}, 2, 21);
  CHECK(epistemic(stack) > 0.0);
  std::vector<ProbMap<double>> same(5, stack[0]);
  CHECK(epistemic(same) <= 1e-15);
}

TEST_CASE("confidence: reciprocal with eps guard") {
  CHECK(confidence(0.0, 1e-8) == doctest::Approx(1e8));
  CHECK(std::abs(confidence(1.0, 1e-8) - 1.0) < 1e-7);
  CHECK_THROWS_AS(confidence(-0.5), ValidationError);
  CHECK_THROWS_AS(confidence(1.0, 0.0), ValidationError);
}

TEST_CASE("confidence is strictly decreasing in uncertainty") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    double u1 = rng.next_double() * 10.0;
    double u2 = u1 + 1e-6 + rng.next_double() * 5.0;
    CHECK(confidence(u1) > confidence(u2));
  }
}
