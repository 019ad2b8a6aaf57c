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

#ifndef UMCT_FUSION_HPP
#define UMCT_FUSION_HPP

#include <vector>

#include "umct/core.hpp"

namespace umct {

// Soft pseudo label for one view, fused from the other views' canonical
// predictions. `constant` marks the target as held fixed during
// differentiation; the co-training gradient flows only through the view's
// own prediction.
template <typename Scalar>
struct PseudoLabel {
  ProbMap<Scalar> target;
  std::vector<int> source_views;
  std::vector<double> weights;
  bool constant = false;
};

namespace detail {

template <typename Scalar>
PseudoLabel<Scalar> weighted_fuse(const std::vector<ProbMap<Scalar>>& preds,
                                  const std::vector<double>& raw_weights,
                                  int exclude) {
  const int n = static_cast<int>(preds.size());
  if (n < 2)
    throw ValidationError("label fusion needs at least 2 views");
  if (exclude < 0 || exclude >= n)
    throw ValidationError("excluded view index out of range");
  const auto& ref = preds.front();
  for (const auto& p : preds)
    if (p.shape != ref.shape || p.n_classes != ref.n_classes)
      throw ValidationError("shape mismatch: fusion inputs");

  PseudoLabel<Scalar> out;
  double total = 0.0;
  for (int j = 0; j < n; ++j) {
    if (j == exclude) continue;
    if (!(raw_weights[j] > 0.0) || !std::isfinite(raw_weights[j]))
      throw ValidationError("confidences must be positive and finite");
    out.source_views.push_back(j);
    total += raw_weights[j];
  }
  ArrayX<double> acc = ArrayX<double>::Zero(ref.data.size());
  for (int j : out.source_views) {
    double w = raw_weights[j] / total;
    out.weights.push_back(w);
    acc += w * preds[j].data.template cast<double>();
  }
  out.target.shape = ref.shape;
  out.target.n_classes = ref.n_classes;
  out.target.data = acc.template cast<Scalar>();
  return out;
}

}  // namespace detail

// Uncertainty-weighted label fusion: the pseudo label for view `exclude` is
// the confidence-weighted convex combination of all other views' predictions,
// weights normalized over the included views only.
template <typename Scalar>
PseudoLabel<Scalar> fuse(const std::vector<ProbMap<Scalar>>& preds,
                         const std::vector<double>& confidences, int exclude) {
  if (confidences.size() != preds.size())
    throw ValidationError("confidence count must match prediction count");
  return detail::weighted_fuse(preds, confidences, exclude);
}

// Ablation baseline: equal-weight average of the other views.
template <typename Scalar>
PseudoLabel<Scalar> fuse_uniform(const std::vector<ProbMap<Scalar>>& preds,
                                 int exclude) {
  std::vector<double> ones(preds.size(), 1.0);
  return detail::weighted_fuse(preds, ones, exclude);
}

template <typename Scalar>
PseudoLabel<Scalar> stop_gradient_wrap(PseudoLabel<Scalar> pl) {
  pl.constant = true;
  return pl;
}

}  // namespace umct

#endif  // UMCT_FUSION_HPP
