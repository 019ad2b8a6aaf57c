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

#ifndef UMCT_VIEWS_HPP
#define UMCT_VIEWS_HPP

#include <string>
#include <vector>

#include "umct/core.hpp"

namespace umct {

// Signed axis permutation: output axis k takes input axis perm[k], then the
// output is flipped along every axis k with flips[k] set. The 48 (perm, flip)
// pairs form a group under composition with exact inverses, which is what
// makes voxel-wise consistency between views well-defined.
struct ViewTransform {
  std::array<int, 3> perm{0, 1, 2};
  std::array<bool, 3> flips{false, false, false};

  bool operator==(const ViewTransform& o) const {
    return perm == o.perm && flips == o.flips;
  }
  bool is_identity() const {
    return perm == std::array<int, 3>{0, 1, 2} && !flips[0] && !flips[1] && !flips[2];
  }
};

inline ViewTransform identity_transform() { return ViewTransform{}; }

inline void validate_transform(const ViewTransform& t) {
  std::array<bool, 3> seen{false, false, false};
  for (int a : t.perm) {
    if (a < 0 || a > 2 || seen[a]) throw ValidationError("perm is not a permutation");
    seen[a] = true;
  }
}

inline Shape3 apply_shape(const ViewTransform& t, const Shape3& in) {
  return Shape3{in[t.perm[0]], in[t.perm[1]], in[t.perm[2]]};
}

// Flat input index feeding each flat output voxel, row-major over the output
// shape. ProbMap channels reuse one table.
inline std::vector<Index> source_index_table(const ViewTransform& t, const Shape3& in) {
  const Shape3 out = apply_shape(t, in);
  std::vector<Index> table(static_cast<std::size_t>(volume_of(out)));
  const Index strides_in[3] = {in[1] * in[2], in[2], 1};
  Index n = 0;
  std::array<Index, 3> y{};
  for (Index x0 = 0; x0 < out[0]; ++x0) {
    y[t.perm[0]] = t.flips[0] ? out[0] - 1 - x0 : x0;
    for (Index x1 = 0; x1 < out[1]; ++x1) {
      y[t.perm[1]] = t.flips[1] ? out[1] - 1 - x1 : x1;
      for (Index x2 = 0; x2 < out[2]; ++x2) {
        y[t.perm[2]] = t.flips[2] ? out[2] - 1 - x2 : x2;
        table[n++] = y[0] * strides_in[0] + y[1] * strides_in[1] + y[2] * strides_in[2];
      }
    }
  }
  return table;
}

template <typename Scalar>
Volume3D<Scalar> apply(const ViewTransform& t, const Volume3D<Scalar>& v) {
  Volume3D<Scalar> out;
  out.shape = apply_shape(t, v.shape);
  out.data.resize(v.data.size());
  const auto table = source_index_table(t, v.shape);
  for (Index i = 0; i < out.data.size(); ++i) out.data[i] = v.data[table[i]];
  for (int k = 0; k < 3; ++k) {
    out.spacing[k] = v.spacing[t.perm[k]];
    out.origin[k] = v.origin[t.perm[k]];
  }
  return out;
}

inline LabelMap apply(const ViewTransform& t, const LabelMap& m) {
  LabelMap out;
  out.shape = apply_shape(t, m.shape);
  out.n_classes = m.n_classes;
  out.data.resize(m.data.size());
  const auto table = source_index_table(t, m.shape);
  for (Index i = 0; i < out.data.size(); ++i) out.data[i] = m.data[table[i]];
  return out;
}

template <typename Scalar>
ProbMap<Scalar> apply(const ViewTransform& t, const ProbMap<Scalar>& p) {
  ProbMap<Scalar> out;
  out.shape = apply_shape(t, p.shape);
  out.n_classes = p.n_classes;
  out.data.resize(p.data.size());
  const auto table = source_index_table(t, p.shape);
  const Index v = p.num_voxels();
  for (int c = 0; c < p.n_classes; ++c) {
    const Scalar* src = p.data.data() + Index(c) * v;
    Scalar* dst = out.data.data() + Index(c) * v;
    for (Index i = 0; i < v; ++i) dst[i] = src[table[i]];
  }
  return out;
}

inline ViewTransform inverse(const ViewTransform& t) {
  validate_transform(t);
  ViewTransform inv;
  for (int k = 0; k < 3; ++k) {
    inv.perm[t.perm[k]] = k;
    inv.flips[t.perm[k]] = t.flips[k];
  }
  return inv;
}

// apply(compose(a, b), v) == apply(a, apply(b, v)) exactly.
inline ViewTransform compose(const ViewTransform& a, const ViewTransform& b) {
  validate_transform(a);
  validate_transform(b);
  ViewTransform c;
  for (int k = 0; k < 3; ++k) {
    c.perm[k] = b.perm[a.perm[k]];
    c.flips[k] = a.flips[k] != b.flips[a.perm[k]];
  }
  return c;
}

// All 48 signed permutations, fixed enumeration order.
inline std::vector<ViewTransform> all_transforms() {
  static const std::array<std::array<int, 3>, 6> perms = {{
      {0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  std::vector<ViewTransform> out;
  out.reserve(48);
  for (const auto& p : perms)
    for (int f = 0; f < 8; ++f)
      out.push_back(ViewTransform{p, {(f & 1) != 0, (f & 2) != 0, (f & 4) != 0}});
  return out;
}

// 6-character token: perm digits then flip flags, e.g. "120TFF".
inline std::string to_token(const ViewTransform& t) {
  std::string s;
  for (int k = 0; k < 3; ++k) s += static_cast<char>('0' + t.perm[k]);
  for (int k = 0; k < 3; ++k) s += t.flips[k] ? 'T' : 'F';
  return s;
}

inline ViewTransform from_token(const std::string& s) {
  if (s.size() != 6) throw ValidationError("transform token must have 6 chars: " + s);
  ViewTransform t;
  for (int k = 0; k < 3; ++k) {
    if (s[k] < '0' || s[k] > '2') throw ValidationError("bad perm digit in token: " + s);
    t.perm[k] = s[k] - '0';
    if (s[3 + k] != 'T' && s[3 + k] != 'F')
      throw ValidationError("bad flip flag in token: " + s);
    t.flips[k] = s[3 + k] == 'T';
  }
  validate_transform(t);
  return t;
}

struct ViewSet {
  std::vector<ViewTransform> transforms;
  std::vector<std::string> names;

  std::size_t size() const { return transforms.size(); }
};

inline void validate_view_set(const ViewSet& vs) {
  if (vs.transforms.empty()) throw ValidationError("empty view set");
  if (vs.names.size() != vs.transforms.size())
    throw ValidationError("view set names/transforms size mismatch");
  if (!vs.transforms.front().is_identity())
    throw ValidationError("first view must be the identity (axial)");
  for (std::size_t i = 0; i < vs.transforms.size(); ++i)
    for (std::size_t j = i + 1; j < vs.transforms.size(); ++j)
      if (vs.transforms[i] == vs.transforms[j])
        throw ValidationError("duplicate transform in view set");
}

// The standard sets: axial is the identity, coronal and sagittal are the two
// axis-cycling permutations, so each view moves a different original axis
// into the thin (asymmetric-kernel) position. The 6-view set adds a flip
// along the canonical W axis applied before each view transform.
inline ViewSet standard_view_set(int n) {
  const ViewTransform axial = identity_transform();
  const ViewTransform coronal{{1, 2, 0}, {false, false, false}};
  const ViewTransform sagittal{{2, 0, 1}, {false, false, false}};
  const ViewTransform hflip{{0, 1, 2}, {false, false, true}};

  ViewSet vs;
  switch (n) {
    case 6:
    case 3:
      vs.transforms = {axial, coronal, sagittal};
      vs.names = {"axial", "coronal", "sagittal"};
      break;
    case 2:
      vs.transforms = {axial, coronal};
      vs.names = {"axial", "coronal"};
      break;
    default:
      throw ValidationError("unsupported view count (want 2, 3 or 6): " +
                            std::to_string(n));
  }
  if (n == 6) {
    for (int i = 0; i < 3; ++i) {
      vs.transforms.push_back(compose(vs.transforms[i], hflip));
      vs.names.push_back(vs.names[i] + "-hflip");
    }
  }
  validate_view_set(vs);
  return vs;
}

// Single identity view, used by supervised-only and self-training baselines.
inline ViewSet single_view_set() {
  ViewSet vs;
  vs.transforms = {identity_transform()};
  vs.names = {"axial"};
  return vs;
}

}  // namespace umct

#endif  // UMCT_VIEWS_HPP
