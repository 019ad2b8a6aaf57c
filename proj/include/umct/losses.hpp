// Copyright 2026 the umct authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef UMCT_LOSSES_HPP
#define UMCT_LOSSES_HPP

#include <vector>

#include "umct/core.hpp"
#include "umct/fusion.hpp"

namespace umct {

constexpr double kDiceSmooth = 1e-5;

// Soft multi-class Dice loss: mean over classes of
//   1 - 2 * sum(y*yhat) / (sum(y^2) + sum(yhat^2) + smooth).
// The smoothing term sits in the denominator only, guarding empty classes.
// Accepts one-hot or soft targets; accumulates in double.
template <typename Scalar>
double dice_loss(const ProbMap<Scalar>& pred, const ProbMap<Scalar>& target,
                 double smooth = kDiceSmooth) {
  if (pred.shape != target.shape || pred.n_classes != target.n_classes)
    throw ValidationError("shape mismatch: dice pred vs target");
  if (smooth < 0.0) throw ValidationError("dice smooth must be nonnegative");
  const Index v = pred.num_voxels();
  double loss = 0.0;
  for (int c = 0; c < pred.n_classes; ++c) {
    Eigen::Map<const ArrayX<Scalar>> p(pred.data.data() + Index(c) * v, v);
    Eigen::Map<const ArrayX<Scalar>> t(target.data.data() + Index(c) * v, v);
    const double inter = (p.template cast<double>() * t.template cast<double>()).sum();
    const double pp = p.template cast<double>().square().sum();
    const double tt = t.template cast<double>().square().sum();
    loss += 1.0 - 2.0 * inter / (pp + tt + smooth);
  }
  return loss / pred.n_classes;
}

// Value plus analytic gradient with respect to every pred entry. The target
// is treated as a constant (this is the stop-gradient contract for pseudo
// labels; for one-hot ground truth it is the only sensible reading).
template <typename Scalar>
double dice_loss_grad(const ProbMap<Scalar>& pred, const ProbMap<Scalar>& target,
                      ArrayX<Scalar>& grad, double smooth = kDiceSmooth) {
  if (pred.shape != target.shape || pred.n_classes != target.n_classes)
    throw ValidationError("shape mismatch: dice pred vs target");
  const Index v = pred.num_voxels();
  const int n_classes = pred.n_classes;
  grad.resize(pred.data.size());
  double loss = 0.0;
  for (int c = 0; c < n_classes; ++c) {
    Eigen::Map<const ArrayX<Scalar>> p(pred.data.data() + Index(c) * v, v);
    Eigen::Map<const ArrayX<Scalar>> t(target.data.data() + Index(c) * v, v);
    ArrayX<double> pd = p.template cast<double>();
    ArrayX<double> td = t.template cast<double>();
    const double inter = (pd * td).sum();
    const double denom = pd.square().sum() + td.square().sum() + smooth;
    loss += 1.0 - 2.0 * inter / denom;
    // d/dp [ -2*I/D ] = -(2*t*D - 4*I*p) / D^2, then the 1/C class mean.
    ArrayX<double> g =
        (4.0 * inter * pd - 2.0 * td * denom) / (denom * denom * n_classes);
    Eigen::Map<ArrayX<Scalar>>(grad.data() + Index(c) * v, v) =
        g.template cast<Scalar>();
  }
  return loss / n_classes;
}

// Eq-style supervised objective: sum over views of the Dice loss between the
// canonical prediction and the ground truth.
template <typename Scalar>
double supervised_loss(const std::vector<ProbMap<Scalar>>& canonical_preds,
                       const LabelMap& y, double smooth = kDiceSmooth) {
  if (canonical_preds.empty())
    throw ValidationError("supervised loss needs at least one prediction");
  ProbMap<Scalar> target = one_hot<Scalar>(y);
  double total = 0.0;
  for (const auto& p : canonical_preds) {
    if (p.shape != y.shape)
      throw ValidationError("shape mismatch: prediction vs label");
    total += dice_loss(p, target, smooth);
  }
  return total;
}

// Co-training objective: each view is pulled toward its own fused pseudo
// label, which is held constant.
template <typename Scalar>
double cotraining_loss(const std::vector<ProbMap<Scalar>>& canonical_preds,
                       const std::vector<PseudoLabel<Scalar>>& pseudo,
                       double smooth = kDiceSmooth) {
  if (pseudo.size() != canonical_preds.size())
    throw ValidationError("pseudo label count must match prediction count");
  double total = 0.0;
  for (std::size_t i = 0; i < canonical_preds.size(); ++i)
    total += dice_loss(canonical_preds[i], pseudo[i].target, smooth);
  return total;
}

inline double total_loss(double sup, double cot, double lambda_cot) {
  if (!std::isfinite(sup) || !std::isfinite(cot) || !std::isfinite(lambda_cot))
    throw ValidationError("non-finite value: loss terms");
  return sup + lambda_cot * cot;
}

struct LossReport {
  double total = 0.0;
  double supervised = 0.0;
  double cotraining = 0.0;
  double lambda_cot = 0.0;
  std::vector<double> per_view_supervised;
  std::vector<double> per_view_cotraining;
};

inline void validate_report(const LossReport& r) {
  auto finite = [](double x) { return std::isfinite(x); };
  if (!finite(r.total) || !finite(r.supervised) || !finite(r.cotraining))
    throw ComputeError("non-finite value: loss report");
  for (double x : r.per_view_supervised)
    if (!finite(x)) throw ComputeError("non-finite value: per-view supervised");
  for (double x : r.per_view_cotraining)
    if (!finite(x)) throw ComputeError("non-finite value: per-view cotraining");
  double expect = r.supervised + r.lambda_cot * r.cotraining;
  if (std::abs(r.total - expect) > 1e-9)
    throw ComputeError("loss report total does not decompose");
}

}  // namespace umct

#endif  // UMCT_LOSSES_HPP
