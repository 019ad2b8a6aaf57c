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

#ifndef UMCT_UNCERTAINTY_HPP
#define UMCT_UNCERTAINTY_HPP

#include <vector>

#include "umct/core.hpp"

namespace umct {

constexpr double kConfidenceEps = 1e-8;

// One scalar pair per (view, sample): volume-summed epistemic uncertainty and
// the confidence used as a fusion weight.
struct ConfidenceScore {
  double uncertainty = 0.0;
  double confidence = 0.0;
};

// Epistemic uncertainty of a stack of MC-dropout outputs: per-voxel
// per-channel biased variance, mean of squares minus square of mean
// (divide by K, no Bessel correction), summed over all channels and voxels.
template <typename Scalar>
double epistemic(const std::vector<ProbMap<Scalar>>& samples) {
  if (samples.size() < 2)
    throw ValidationError("epistemic uncertainty needs K >= 2 samples");
  const auto& first = samples.front();
  for (const auto& s : samples)
    if (s.shape != first.shape || s.n_classes != first.n_classes)
      throw ValidationError("shape mismatch: MC sample stack");

  const Index n = first.data.size();
  const double k = static_cast<double>(samples.size());
  ArrayX<double> sum = ArrayX<double>::Zero(n);
  ArrayX<double> sum_sq = ArrayX<double>::Zero(n);
  for (const auto& s : samples) {
    ArrayX<double> d = s.data.template cast<double>();
    sum += d;
    sum_sq += d.square();
  }
  // Per-element variance can round a few ulps negative; clamp at zero.
  ArrayX<double> var = (sum_sq / k - (sum / k).square()).max(0.0);
  return var.sum();
}

// h(U_e) = 1 / (U_e + eps); the eps keeps the score finite when the sampled
// outputs agree exactly.
inline double confidence(double uncertainty, double eps = kConfidenceEps) {
  if (!(uncertainty >= 0.0))
    throw ValidationError("uncertainty must be nonnegative");
  if (!(eps > 0.0)) throw ValidationError("confidence eps must be positive");
  return 1.0 / (uncertainty + eps);
}

template <typename Scalar>
ConfidenceScore confidence_score(const std::vector<ProbMap<Scalar>>& samples,
                                 double eps = kConfidenceEps) {
  ConfidenceScore cs;
  cs.uncertainty = epistemic(samples);
  cs.confidence = confidence(cs.uncertainty, eps);
  return cs;
}

}  // namespace umct

#endif  // UMCT_UNCERTAINTY_HPP
