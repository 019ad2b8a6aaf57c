#include <doctest.h>

#include "umct/losses.hpp"
#include "umct/views.hpp"

using namespace umct;

namespace {

// Brute-force Dice oracle: plain per-class loops over a grid, no Eigen.
std::vector<double> oracle_dice_terms(const ProbMap<double>& pred,
                                      const ProbMap<double>& target,
                                      double smooth) {
  const Index v = pred.num_voxels();
  std::vector<double> terms;
  for (int c = 0; c < pred.n_classes; ++c) {
    double inter = 0, pp = 0, tt = 0;
    for (Index i = 0; i < v; ++i) {
      double p = pred.at(c, i), t = target.at(c, i);
      inter += p * t;
      pp += p * p;
      tt += t * t;
    }
    terms.push_back(1.0 - 2.0 * inter / (pp + tt + smooth));
  }
  return terms;
}

double oracle_dice(const ProbMap<double>& pred, const ProbMap<double>& target,
                   double smooth) {
  auto terms = oracle_dice_terms(pred, target, smooth);
  double mean = 0;
  for (double t : terms) mean += t;
  return mean / double(terms.size());
}

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

}  // namespace

TEST_CASE("dice_loss: perfect overlap with zero smooth is zero") {
  LabelMap y({4, 4, 4}, 3);
  Rng rng(1);
  for (Index i = 0; i < y.data.size(); ++i) y.data[i] = std::int32_t(rng.next_below(3));
  auto t = one_hot<double>(y);
  CHECK(dice_loss(t, t, 0.0) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("dice_loss: disjoint one-hot masks give loss 1 per class") {
  // Two classes, prediction and target swapped everywhere: both classes have
  // zero intersection, so each class term is 1 and the mean is 1.
  LabelMap a({2, 2, 2}, 2, 0), b({2, 2, 2}, 2, 1);
  auto pa = one_hot<double>(a);
  auto pb = one_hot<double>(b);
  CHECK(dice_loss(pa, pb, 0.0) == doctest::Approx(1.0));
}

TEST_CASE("dice_loss: half-overlap binary case has foreground term 0.5") {
  // 4^3 grid, |pred fg| = |target fg| = n = 8, overlap n/2 = 4.
  LabelMap pred_lbl({4, 4, 4}, 2, 0), tgt_lbl({4, 4, 4}, 2, 0);
  for (Index i = 0; i < 8; ++i) pred_lbl.data[i] = 1;        // voxels 0..7
  for (Index i = 4; i < 12; ++i) tgt_lbl.data[i] = 1;        // voxels 4..11
  auto pred = one_hot<double>(pred_lbl);
  auto target = one_hot<double>(tgt_lbl);
  auto terms = oracle_dice_terms(pred, target, 0.0);
  CHECK(terms[1] == doctest::Approx(0.5));
  CHECK(dice_loss(pred, target, 0.0) == doctest::Approx(oracle_dice(pred, target, 0.0)));
}

TEST_CASE("dice_loss matches the brute-force oracle on random soft maps") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto p = random_simplex_map({4, 4, 4}, 3, seed);
    auto t = random_simplex_map({4, 4, 4}, 3, seed + 100);
    CHECK(dice_loss(p, t) == doctest::Approx(oracle_dice(p, t, kDiceSmooth)).epsilon(1e-12));
  }
}

TEST_CASE("dice_loss value is symmetric in its arguments") {
  auto p = random_simplex_map({3, 3, 3}, 2, 5);
  auto t = random_simplex_map({3, 3, 3}, 2, 6);
  CHECK(dice_loss(p, t) == doctest::Approx(dice_loss(t, p)).epsilon(1e-15));
}

TEST_CASE("dice_loss is invariant under a shared spatial permutation") {
  auto p = random_simplex_map({2, 3, 4}, 3, 7);
  auto t = random_simplex_map({2, 3, 4}, 3, 8);
  double base = dice_loss(p, t);
  for (const auto& tr : all_transforms()) {
    CHECK(dice_loss(apply(tr, p), apply(tr, t)) ==
          doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("dice_loss stays within [0, 1] and rejects shape mismatch") {
  auto p = random_simplex_map({3, 3, 3}, 2, 9);
  auto t = random_simplex_map({3, 3, 3}, 2, 10);
  double v = dice_loss(p, t);
  CHECK(v >= 0.0);
  CHECK(v <= 1.0);
  auto bad = random_simplex_map({3, 3, 2}, 2, 11);
  CHECK_THROWS_AS(dice_loss(p, bad), ValidationError);
}

TEST_CASE("dice gradient matches central finite differences (rel err < 1e-4)") {
  const double h = 1e-6;
  Rng rng(123);
  for (int instance = 0; instance < 20; ++instance) {
    auto p = random_simplex_map({4, 4, 4}, 3, 1000 + instance);
    auto t = random_simplex_map({4, 4, 4}, 3, 2000 + instance);
    ArrayX<double> grad;
    dice_loss_grad(p, t, grad);

    // Probe a random subset of coordinates with central differences.
    for (int probe = 0; probe < 24; ++probe) {
      Index i = Index(rng.next_below(std::uint64_t(p.data.size())));
      auto plus = p, minus = p;
      plus.data[i] += h;
      minus.data[i] -= h;
      double fd = (dice_loss(plus, t) - dice_loss(minus, t)) / (2 * h);
      double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-8});
      CHECK(std::abs(fd - grad[i]) / denom < 1e-4);
    }
  }
}

TEST_CASE("supervised_loss: single view equals dice_loss directly") {
  LabelMap y({4, 4, 4}, 2);
  Rng rng(3);
  for (Index i = 0; i < y.data.size(); ++i) y.data[i] = std::int32_t(rng.next_below(2));
  auto p = random_simplex_map({4, 4, 4}, 2, 30);
  CHECK(supervised_loss<double>({p}, y) ==
        doctest::Approx(dice_loss(p, one_hot<double>(y))).epsilon(1e-15));
}

TEST_CASE("supervised_loss: exact predictions give zero, sums per view otherwise") {
  LabelMap y({4, 4, 4}, 2);
  Rng rng(4);
  for (Index i = 0; i < y.data.size(); ++i) y.data[i] = std::int32_t(rng.next_below(2));
  auto exact = one_hot<double>(y);
  CHECK(supervised_loss<double>({exact, exact, exact}, y, 0.0) ==
        doctest::Approx(0.0).epsilon(1e-15));

  std::vector<ProbMap<double>> preds{random_simplex_map({4, 4, 4}, 2, 40),
                                     random_simplex_map({4, 4, 4}, 2, 41),
                                     random_simplex_map({4, 4, 4}, 2, 42)};
  double want = 0;
  auto target = one_hot<double>(y);
  for (const auto& p : preds) want += dice_loss(p, target);
  CHECK(supervised_loss(preds, y) == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("cotraining_loss: perfect agreement gives zero") {
  auto shared = random_simplex_map({4, 4, 4}, 2, 50);
  std::vector<ProbMap<double>> preds{shared, shared, shared};
  std::vector<PseudoLabel<double>> pseudo;
  std::vector<double> conf{1.0, 1.0, 1.0};
  for (int i = 0; i < 3; ++i)
    pseudo.push_back(stop_gradient_wrap(fuse(preds, conf, i)));
  CHECK(cotraining_loss(preds, pseudo, 0.0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("cotraining_loss: two views cross-supervise each other") {
  std::vector<ProbMap<double>> preds{random_simplex_map({3, 3, 3}, 2, 60),
                                     random_simplex_map({3, 3, 3}, 2, 61)};
  std::vector<PseudoLabel<double>> pseudo{fuse_uniform(preds, 0),
                                          fuse_uniform(preds, 1)};
  double want = dice_loss(preds[0], preds[1]) + dice_loss(preds[1], preds[0]);
  CHECK(cotraining_loss(preds, pseudo) == doctest::Approx(want).epsilon(1e-13));
}

TEST_CASE("cotraining_loss decreases as a disagreeing view moves toward the mean") {
  auto a = random_simplex_map({4, 4, 4}, 2, 70);
  auto b = a;
  // Perturb b away from a, renormalizing per voxel.
  Rng rng(71);
  const Index v = b.num_voxels();
  for (Index i = 0; i < v; ++i) {
    double d = 0.3 * rng.next_double();
    b.at(0, i) = std::min(1.0, std::max(0.0, b.at(0, i) + d));
    b.at(1, i) = 1.0 - b.at(0, i);
  }
  auto mean = fuse_uniform<double>({a, a, b}, 2);  // average of the two a's

  auto loss_at = [&](double step) {
    // Move b toward the other views' average by `step`.
    auto moved = b;
    moved.data = b.data + step * (mean.target.data - b.data);
    std::vector<ProbMap<double>> preds{a, a, moved};
    std::vector<PseudoLabel<double>> pseudo;
    std::vector<double> conf{1.0, 1.0, 1.0};
    for (int i = 0; i < 3; ++i)
      pseudo.push_back(stop_gradient_wrap(fuse(preds, conf, i)));
    return cotraining_loss(preds, pseudo);
  };

  double l0 = loss_at(0.0), l1 = loss_at(0.5), l2 = loss_at(1.0);
  CHECK(l1 < l0);
  CHECK(l2 < l1);
}

TEST_CASE("total_loss arithmetic and degenerate modes") {
  CHECK(total_loss(1.7, 0.4, 0.0) == doctest::Approx(1.7));
  CHECK(total_loss(0.0, 0.5, 0.2) == doctest::Approx(0.1));  // no labeled batch
  CHECK(total_loss(1.0, 0.5, 0.2) == doctest::Approx(1.1));
  CHECK_THROWS_AS(total_loss(std::nan(""), 0.0, 0.2), ValidationError);
}

TEST_CASE("LossReport must decompose as sup + lambda * cot") {
  LossReport r;
  r.supervised = 1.0;
  r.cotraining = 0.5;
  r.lambda_cot = 0.2;
  r.total = 1.1;
  r.per_view_supervised = {0.5, 0.5};
  r.per_view_cotraining = {0.25, 0.25};
  CHECK_NOTHROW(validate_report(r));
  r.total = 1.2;
  CHECK_THROWS_AS(validate_report(r), ComputeError);
}
