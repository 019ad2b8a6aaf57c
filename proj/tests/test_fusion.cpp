#include <doctest.h>

#include "umct/fusion.hpp"

using namespace umct;

namespace {

ProbMap<double> random_simplex_map(Shape3 shape, int classes, std::uint64_t seed) {
  ProbMap<double> p(shape, classes);
  Rng rng(seed);
  const Index v = p.num_voxels();
  for (Index i = 0; i < v; ++i) {
    double total = 0.0;
    for (int c = 0; c < classes; ++c) {
      double x = rng.next_double() + 1e-6;
      p.at(c, i) = x;
      total += x;
    }
    for (int c = 0; c < classes; ++c) p.at(c, i) /= total;
  }
  return p;
}

std::vector<ProbMap<double>> random_preds(int n, Shape3 shape, int classes,
                                          std::uint64_t seed) {
  std::vector<ProbMap<double>> out;
  for (int i = 0; i < n; ++i)
    out.push_back(random_simplex_map(shape, classes, seed + std::uint64_t(i)));
  return out;
}

}  // namespace

TEST_CASE("fuse with two views degenerates to the single other view") {
  auto preds = random_preds(2, {2, 2, 2}, 2, 0);
  auto pl = fuse(preds, {0.7, 0.2}, 0);
  CHECK(pl.source_views == std::vector<int>{1});
  CHECK(pl.weights.size() == 1);
  CHECK(pl.weights[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK((pl.target.data - preds[1].data).abs().maxCoeff() < 1e-15);
}

TEST_CASE("fuse with equal confidences is the arithmetic mean of the others") {
  auto preds = random_preds(3, {2, 2, 2}, 3, 1);
  auto pl = fuse(preds, {5.0, 5.0, 5.0}, 0);
  ArrayX<double> mean = (preds[1].data + preds[2].data) / 2.0;
  CHECK((pl.target.data - mean).abs().maxCoeff() < 1e-12);
}

TEST_CASE("fuse normalizes confidences (1,3) to weights (0.25, 0.75)") {
  auto preds = random_preds(3, {1, 1, 2}, 2, 2);
  auto pl = fuse(preds, {9.0, 1.0, 3.0}, 0);
  REQUIRE(pl.weights.size() == 2);
  CHECK(pl.weights[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(pl.weights[1] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(pl.source_views == std::vector<int>{1, 2});
}

TEST_CASE("fuse weights sum to one within 1e-12 and exclude the target view") {
  Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    int n = 2 + int(rng.next_below(4));
    auto preds = random_preds(n, {2, 2, 2}, 2, 100 + trial);
    std::vector<double> conf;
    for (int i = 0; i < n; ++i) conf.push_back(rng.next_double() * 10 + 1e-3);
    int exclude = int(rng.next_below(std::uint64_t(n)));
    auto pl = fuse(preds, conf, exclude);
    double sum = 0;
    for (double w : pl.weights) sum += w;
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    for (int sv : pl.source_views) CHECK(sv != exclude);
    CHECK_NOTHROW(validate_prob(pl.target));
  }
}

TEST_CASE("fuse is invariant to a common positive scaling of confidences") {
  auto preds = random_preds(4, {2, 2, 2}, 3, 7);
  std::vector<double> conf{0.3, 2.0, 5.5, 0.9};
  auto base = fuse(preds, conf, 1);
  for (double scale : {1e-6, 3.0, 1e9}) {
    auto scaled_conf = conf;
    for (double& c : scaled_conf) c *= scale;
    auto pl = fuse(preds, scaled_conf, 1);
    CHECK((pl.target.data - base.target.data).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("fuse is invariant to permuting included views with their confidences") {
  auto preds = random_preds(3, {2, 2, 2}, 2, 11);
  auto base = fuse(preds, {1.0, 2.0, 3.0}, 0);
  auto swapped_preds = preds;
  std::swap(swapped_preds[1], swapped_preds[2]);
  auto swapped = fuse(swapped_preds, {1.0, 3.0, 2.0}, 0);
  CHECK((swapped.target.data - base.target.data).abs().maxCoeff() < 1e-12);
}

TEST_CASE("fuse converges to the dominant view's prediction at ratio 1e9") {
  auto preds = random_preds(3, {2, 2, 2}, 2, 13);
  auto pl = fuse(preds, {1.0, 1e9, 1.0}, 0);
  CHECK((pl.target.data - preds[1].data).abs().maxCoeff() < 1e-6);
}

TEST_CASE("fuse_uniform equals fuse with all-equal confidences") {
  auto preds = random_preds(3, {2, 2, 2}, 2, 17);
  auto a = fuse_uniform(preds, 2);
  auto b = fuse(preds, {4.2, 4.2, 4.2}, 2);
  CHECK((a.target.data - b.target.data).abs().maxCoeff() < 1e-12);
  ArrayX<double> mean = (preds[0].data + preds[1].data) / 2.0;
  CHECK((a.target.data - mean).abs().maxCoeff() < 1e-12);
}

TEST_CASE("fuse_uniform preserves the simplex on random inputs") {
  Rng rng(19);
  for (int trial = 0; trial < 30; ++trial) {
    int n = 2 + int(rng.next_below(4));
    auto preds = random_preds(n, {2, 3, 2}, 2 + int(rng.next_below(3)),
                              300 + trial);
    auto pl = fuse_uniform(preds, int(rng.next_below(std::uint64_t(n))));
    CHECK_NOTHROW(validate_prob(pl.target));
  }
}

TEST_CASE("fusion rejects degenerate inputs") {
  auto one = random_preds(1, {2, 2, 2}, 2, 23);
  CHECK_THROWS_AS(fuse_uniform(one, 0), ValidationError);

  auto preds = random_preds(3, {2, 2, 2}, 2, 29);
  CHECK_THROWS_AS(fuse(preds, {1.0, -1.0, 1.0}, 0), ValidationError);
  CHECK_THROWS_AS(fuse(preds, {1.0, 1.0, 1.0}, 3), ValidationError);
  CHECK_THROWS_AS(fuse(preds, {1.0, 1.0}, 0), ValidationError);

  auto mismatched = preds;
  mismatched[2] = random_simplex_map({2, 2, 1}, 2, 31);
  CHECK_THROWS_AS(fuse_uniform(mismatched, 0), ValidationError);
}

TEST_CASE("stop_gradient_wrap marks the target constant, value unchanged") {
  auto preds = random_preds(3, {2, 2, 2}, 2, 37);
  auto pl = fuse_uniform(preds, 0);
  CHECK_FALSE(pl.constant);
  auto wrapped = stop_gradient_wrap(pl);
  CHECK(wrapped.constant);
  CHECK((wrapped.target.data == pl.target.data).all());
}
