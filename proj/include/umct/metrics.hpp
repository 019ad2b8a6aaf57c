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

#ifndef UMCT_METRICS_HPP
#define UMCT_METRICS_HPP

#include <string>
#include <vector>

#include "umct/core.hpp"

namespace umct {

// Dice-Sorensen coefficient 2|P&G| / (|P|+|G|) for one class.
// Both sets empty counts as 1; exactly one empty counts as 0.
inline double dsc(const LabelMap& pred, const LabelMap& gt, int cls) {
  if (pred.shape != gt.shape)
    throw ValidationError("shape mismatch: dsc prediction vs ground truth");
  if (cls < 0 || cls >= std::max(pred.n_classes, gt.n_classes))
    throw ValidationError("dsc class index out of range");
  Index p = 0, g = 0, both = 0;
  for (Index i = 0; i < pred.data.size(); ++i) {
    const bool in_p = pred.data[i] == cls;
    const bool in_g = gt.data[i] == cls;
    p += in_p;
    g += in_g;
    both += in_p && in_g;
  }
  if (p == 0 && g == 0) return 1.0;
  if (p == 0 || g == 0) return 0.0;
  return 2.0 * double(both) / double(p + g);
}

// Mean DSC over foreground classes 1..C-1.
inline double foreground_dsc(const LabelMap& pred, const LabelMap& gt) {
  const int n_classes = std::max(pred.n_classes, gt.n_classes);
  double acc = 0;
  for (int c = 1; c < n_classes; ++c) acc += dsc(pred, gt, c);
  return acc / double(n_classes - 1);
}

struct EvalResult {
  std::vector<std::string> case_ids;
  int n_classes = 0;
  // table(i, c) = DSC of case i, class c; complete by construction.
  MatrixX<double> table;

  double class_mean(int cls) const { return table.col(cls).mean(); }
  // Mean over foreground classes and cases.
  double foreground_mean() const {
    return table.rightCols(n_classes - 1).mean();
  }
  // Per-case mean over foreground classes.
  VectorX<double> per_case_foreground() const {
    return table.rightCols(n_classes - 1).rowwise().mean();
  }
};

inline EvalResult evaluate_predictions(const std::vector<LabelMap>& preds,
                                       const std::vector<LabelMap>& gts,
                                       const std::vector<std::string>& ids) {
  if (preds.size() != gts.size() || preds.size() != ids.size() || preds.empty())
    throw ValidationError("evaluation needs equal-length nonempty case lists");
  EvalResult r;
  r.case_ids = ids;
  r.n_classes = gts.front().n_classes;
  r.table.resize(Index(preds.size()), r.n_classes);
  for (std::size_t i = 0; i < preds.size(); ++i)
    for (int c = 0; c < r.n_classes; ++c)
      r.table(Index(i), c) = dsc(preds[i], gts[i], c);
  return r;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank test, two-sided. Exact enumeration of the signed-rank
// distribution for n <= 12 pairs, normal approximation with tie correction
// (and 0.5 continuity correction) above.
// ---------------------------------------------------------------------------

namespace detail {

struct SignedRanks {
  std::vector<double> ranks;  // ranks of |d|, average ranks on ties
  double w_plus = 0.0;
  double tie_correction = 0.0;  // sum over tie groups of (t^3 - t)
};

inline SignedRanks signed_ranks(const std::vector<double>& a,
                                const std::vector<double>& b) {
  if (a.size() != b.size())
    throw ValidationError("wilcoxon needs paired samples of equal length");
  std::vector<double> diff;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    if (d != 0.0) diff.push_back(d);
  }
  if (diff.size() < 5)
    throw ValidationError(
        "too-few-pairs: wilcoxon needs >= 5 nonzero differences, have " +
        std::to_string(diff.size()));

  const std::size_t n = diff.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return std::abs(diff[x]) < std::abs(diff[y]);
  });

  SignedRanks out;
  out.ranks.resize(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n &&
           std::abs(diff[order[j + 1]]) == std::abs(diff[order[i]]))
      ++j;
    const double avg_rank = 0.5 * double(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) out.ranks[order[k]] = avg_rank;
    const double t = double(j - i + 1);
    out.tie_correction += t * t * t - t;
    i = j + 1;
  }
  for (std::size_t k = 0; k < n; ++k)
    if (diff[k] > 0) out.w_plus += out.ranks[k];
  return out;
}

inline double wilcoxon_exact_p(const SignedRanks& sr) {
  const std::size_t n = sr.ranks.size();
  double total = 0;
  for (double r : sr.ranks) total += r;
  const double w_minus = total - sr.w_plus;
  const double lo = std::min(sr.w_plus, w_minus);
  const double hi = std::max(sr.w_plus, w_minus);

  const std::uint64_t patterns = std::uint64_t(1) << n;
  std::uint64_t count_lo = 0, count_hi = 0;
  for (std::uint64_t mask = 0; mask < patterns; ++mask) {
    double w = 0;
    for (std::size_t k = 0; k < n; ++k)
      if (mask & (std::uint64_t(1) << k)) w += sr.ranks[k];
    if (w <= lo + 1e-9) ++count_lo;
    if (w >= hi - 1e-9) ++count_hi;
  }
  return std::min(1.0, double(count_lo + count_hi) / double(patterns));
}

inline double wilcoxon_normal_p(const SignedRanks& sr) {
  const double n = double(sr.ranks.size());
  const double mu = n * (n + 1.0) / 4.0;
  const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - sr.tie_correction / 48.0;
  if (var <= 0.0) throw ComputeError("wilcoxon variance degenerate (all ties)");
  const double z = std::max(0.0, std::abs(sr.w_plus - mu) - 0.5) / std::sqrt(var);
  return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

}  // namespace detail

inline double wilcoxon_signed_rank(const std::vector<double>& a,
                                   const std::vector<double>& b) {
  auto sr = detail::signed_ranks(a, b);
  return sr.ranks.size() <= 12 ? detail::wilcoxon_exact_p(sr)
                               : detail::wilcoxon_normal_p(sr);
}

}  // namespace umct

#endif  // UMCT_METRICS_HPP
