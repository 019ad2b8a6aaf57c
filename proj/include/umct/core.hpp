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

#ifndef UMCT_CORE_HPP
#define UMCT_CORE_HPP

#include <optional>
#include <string>

#include "umct/common.hpp"

namespace umct {

// Simplex tolerance for probability maps: accumulation error of softmax in
// the storage precision.
template <typename Scalar>
constexpr double simplex_tolerance() {
  return sizeof(Scalar) >= 8 ? 1e-12 : 1e-6;
}

// Scalar intensity grid of shape (D, H, W), row-major, voxel (d, h, w) at
// flat index (d * H + h) * W + w. Spacing is mm per axis; origin is a
// physical offset carried as metadata only.
template <typename Scalar>
struct Volume3D {
  Shape3 shape{0, 0, 0};
  ArrayX<Scalar> data;
  Eigen::Vector3d spacing{1.0, 1.0, 1.0};
  Eigen::Vector3d origin{0.0, 0.0, 0.0};

  Volume3D() = default;
  Volume3D(Shape3 s, Scalar fill = Scalar(0)) : shape(s) {
    data = ArrayX<Scalar>::Constant(volume_of(s), fill);
  }

  Index num_voxels() const { return volume_of(shape); }
  Index flat(Index d, Index h, Index w) const {
    return (d * shape[1] + h) * shape[2] + w;
  }
  Scalar& at(Index d, Index h, Index w) { return data[flat(d, h, w)]; }
  Scalar at(Index d, Index h, Index w) const { return data[flat(d, h, w)]; }
};

// Integer class grid; values in [0, n_classes). Class 0 is background,
// foreground classes are 1..C-1.
struct LabelMap {
  Shape3 shape{0, 0, 0};
  ArrayX<std::int32_t> data;
  int n_classes = 2;

  LabelMap() = default;
  LabelMap(Shape3 s, int classes, std::int32_t fill = 0)
      : shape(s), n_classes(classes) {
    data = ArrayX<std::int32_t>::Constant(volume_of(s), fill);
  }

  Index num_voxels() const { return volume_of(shape); }
  Index flat(Index d, Index h, Index w) const {
    return (d * shape[1] + h) * shape[2] + w;
  }
  std::int32_t& at(Index d, Index h, Index w) { return data[flat(d, h, w)]; }
  std::int32_t at(Index d, Index h, Index w) const { return data[flat(d, h, w)]; }
};

// Per-voxel class probabilities, shape (C, D, H, W). Channel planes are
// contiguous, so data maps onto a column-major (num_voxels x C) matrix with
// one column per class; softmax and per-class reductions become columnwise
// Eigen expressions.
template <typename Scalar>
struct ProbMap {
  Shape3 shape{0, 0, 0};
  int n_classes = 0;
  ArrayX<Scalar> data;

  ProbMap() = default;
  ProbMap(Shape3 s, int classes, Scalar fill = Scalar(0))
      : shape(s), n_classes(classes) {
    data = ArrayX<Scalar>::Constant(volume_of(s) * classes, fill);
  }

  Index num_voxels() const { return volume_of(shape); }

  Eigen::Map<MatrixX<Scalar>> matrix() {
    return Eigen::Map<MatrixX<Scalar>>(data.data(), num_voxels(), n_classes);
  }
  Eigen::Map<const MatrixX<Scalar>> matrix() const {
    return Eigen::Map<const MatrixX<Scalar>>(data.data(), num_voxels(), n_classes);
  }

  Scalar& at(int c, Index v) { return data[Index(c) * num_voxels() + v]; }
  Scalar at(int c, Index v) const { return data[Index(c) * num_voxels() + v]; }
};

template <typename Scalar>
struct Case {
  std::string id;
  Volume3D<Scalar> volume;
  std::optional<LabelMap> label;
  std::string domain_tag;
};

enum class SplitMode { SSL, UDA, UDA_NO_SOURCE, SUPERVISED_ONLY, SELF_TRAIN };

inline const char* to_string(SplitMode m) {
  switch (m) {
    case SplitMode::SSL: return "ssl";
    case SplitMode::UDA: return "uda";
    case SplitMode::UDA_NO_SOURCE: return "uda_no_source";
    case SplitMode::SUPERVISED_ONLY: return "supervised_only";
    case SplitMode::SELF_TRAIN: return "self_train";
  }
  return "?";
}

inline SplitMode split_mode_from(const std::string& s) {
  if (s == "ssl") return SplitMode::SSL;
  if (s == "uda") return SplitMode::UDA;
  if (s == "uda_no_source") return SplitMode::UDA_NO_SOURCE;
  if (s == "supervised_only") return SplitMode::SUPERVISED_ONLY;
  if (s == "self_train") return SplitMode::SELF_TRAIN;
  throw ValidationError("unknown mode: " + s);
}

template <typename Scalar>
struct DatasetSplit {
  std::vector<Case<Scalar>> labeled;
  std::vector<Case<Scalar>> unlabeled;
  SplitMode mode = SplitMode::SSL;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

template <typename Scalar>
void validate_volume(const Volume3D<Scalar>& v) {
  for (int a = 0; a < 3; ++a) {
    if (v.shape[a] < 1)
      throw ValidationError("degenerate shape: axis " + std::to_string(a));
    if (!(v.spacing[a] > 0.0))
      throw ValidationError("non-positive spacing: axis " + std::to_string(a));
  }
  if (v.data.size() != v.num_voxels())
    throw ValidationError("shape mismatch: data size vs shape");
  if (!v.data.isFinite().all())
    throw ValidationError("non-finite value: volume data");
}

inline void validate_label(const LabelMap& m) {
  for (int a = 0; a < 3; ++a)
    if (m.shape[a] < 1)
      throw ValidationError("degenerate shape: axis " + std::to_string(a));
  if (m.n_classes < 2) throw ValidationError("n_classes must be >= 2");
  if (m.data.size() != m.num_voxels())
    throw ValidationError("shape mismatch: data size vs shape");
  if ((m.data < 0).any() || (m.data >= m.n_classes).any())
    throw ValidationError("class out of range: label value outside [0, C)");
}

template <typename Scalar>
void validate_prob(const ProbMap<Scalar>& p) {
  for (int a = 0; a < 3; ++a)
    if (p.shape[a] < 1)
      throw ValidationError("degenerate shape: axis " + std::to_string(a));
  if (p.n_classes < 1) throw ValidationError("prob map needs >= 1 class");
  if (p.data.size() != p.num_voxels() * p.n_classes)
    throw ValidationError("shape mismatch: data size vs shape");
  if (!p.data.isFinite().all())
    throw ValidationError("non-finite value: prob data");
  if ((p.data < Scalar(0)).any() || (p.data > Scalar(1)).any())
    throw ValidationError("probability outside [0, 1]");
  const double tol = simplex_tolerance<Scalar>();
  ArrayX<Scalar> sums = p.matrix().rowwise().sum().array();
  if (((sums - Scalar(1)).abs() > Scalar(tol)).any())
    throw ValidationError("per-voxel channel sum deviates from 1");
}

template <typename Scalar>
const Case<Scalar>& validate_case(const Case<Scalar>& c) {
  validate_volume(c.volume);
  if (c.label) {
    validate_label(*c.label);
    if (c.label->shape != c.volume.shape)
      throw ValidationError("shape mismatch: volume vs label for case " + c.id);
  }
  return c;
}

template <typename Scalar>
void validate_split(const DatasetSplit<Scalar>& s) {
  if (s.labeled.empty() && s.mode != SplitMode::UDA_NO_SOURCE)
    throw ValidationError("labeled set empty (only allowed in uda_no_source)");
  if (s.unlabeled.empty() && s.mode != SplitMode::SUPERVISED_ONLY)
    throw ValidationError("unlabeled set empty (only allowed in supervised_only)");
  for (const auto& c : s.labeled)
    if (!c.label) throw ValidationError("labeled case without label: " + c.id);
  for (const auto& a : s.labeled)
    for (const auto& b : s.unlabeled)
      if (a.id == b.id)
        throw ValidationError("case id in both labeled and unlabeled: " + a.id);
}

// ---------------------------------------------------------------------------
// One-hot encoding and its inverse
// ---------------------------------------------------------------------------

template <typename Scalar = float>
ProbMap<Scalar> one_hot(const LabelMap& label) {
  validate_label(label);
  ProbMap<Scalar> out(label.shape, label.n_classes, Scalar(0));
  const Index v = label.num_voxels();
  for (Index i = 0; i < v; ++i) out.data[Index(label.data[i]) * v + i] = Scalar(1);
  return out;
}

// Per-voxel argmax; ties resolved to the lowest class index.
template <typename Scalar>
LabelMap argmax_map(const ProbMap<Scalar>& p) {
  LabelMap out(p.shape, std::max(2, p.n_classes));
  const Index v = p.num_voxels();
  for (Index i = 0; i < v; ++i) {
    int best = 0;
    Scalar best_val = p.data[i];
    for (int c = 1; c < p.n_classes; ++c) {
      Scalar val = p.data[Index(c) * v + i];
      if (val > best_val) {
        best_val = val;
        best = c;
      }
    }
    out.data[i] = best;
  }
  return out;
}

}  // namespace umct

#endif  // UMCT_CORE_HPP
