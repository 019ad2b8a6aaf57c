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

#ifndef UMCT_SYNTH_HPP
#define UMCT_SYNTH_HPP

#include <string>
#include <vector>

#include "umct/core.hpp"

namespace umct {

// Procedural 3D phantom: randomly oriented ellipsoidal organs per foreground
// class, optional distinct-intensity lesions inside organs (label keeps the
// parent class), gamma contrast knob and additive noise for domain shift.
struct PhantomRecipe {
  Shape3 shape{32, 32, 32};
  int n_classes = 2;
  int blob_count_min = 2;
  int blob_count_max = 4;
  double radius_min = 3.0;
  double radius_max = 8.0;
  std::vector<double> class_mean{0.25, 0.85};  // index 0 = background
  std::vector<double> class_std{0.03, 0.05};
  // Per-case normal jitter of each class mean: appearance varies from case
  // to case the way scanners and protocols vary, so a handful of labeled
  // cases cannot cover the intensity distribution.
  double class_mean_jitter = 0.0;
  double noise_std = 0.04;
  double contrast_gamma = 1.0;
  double lesion_prob = 0.0;
  double lesion_mean = 0.45;
  double smoothing = 0.7;
  std::uint64_t seed = 0;
};

inline void validate_recipe(const PhantomRecipe& r) {
  for (int a = 0; a < 3; ++a)
    if (r.shape[a] < 4) throw ValidationError("phantom shape too small");
  if (r.n_classes < 2) throw ValidationError("phantom needs n_classes >= 2");
  if (r.blob_count_min < 1 || r.blob_count_max < r.blob_count_min)
    throw ValidationError("bad blob count range");
  if (!(r.radius_min >= 1.0 && r.radius_max >= r.radius_min))
    throw ValidationError("bad blob radius range");
  const Index min_extent = std::min({r.shape[0], r.shape[1], r.shape[2]});
  if (2.0 * r.radius_max + 2.0 > double(min_extent))
    throw ValidationError("infeasible-recipe: blobs cannot be placed inside shape");
  if (int(r.class_mean.size()) != r.n_classes ||
      int(r.class_std.size()) != r.n_classes)
    throw ValidationError("class_mean/class_std must have n_classes entries");
  for (double m : r.class_mean)
    if (!std::isfinite(m)) throw ValidationError("non-finite class mean");
  for (double s : r.class_std)
    if (!(s >= 0.0) || !std::isfinite(s))
      throw ValidationError("class std must be nonnegative");
  if (!(r.class_mean_jitter >= 0.0) || !std::isfinite(r.class_mean_jitter))
    throw ValidationError("class_mean_jitter must be nonnegative");
  if (!(r.noise_std >= 0.0)) throw ValidationError("noise std must be nonnegative");
  if (!(r.contrast_gamma > 0.0)) throw ValidationError("gamma must be positive");
  if (!(r.lesion_prob >= 0.0 && r.lesion_prob <= 1.0))
    throw ValidationError("lesion_prob must be in [0, 1]");
  if (!(r.smoothing >= 0.0)) throw ValidationError("smoothing must be nonnegative");
  // Learnability guard: class intensities must be separable above the noise.
  for (std::size_t i = 0; i < r.class_mean.size(); ++i)
    for (std::size_t j = i + 1; j < r.class_mean.size(); ++j)
      if (std::abs(r.class_mean[i] - r.class_mean[j]) < r.noise_std)
        throw ValidationError(
            "class means must be separated by at least one noise std");
}

namespace detail {

// Random rotation from a uniformly random unit quaternion.
inline Eigen::Matrix3d random_rotation(Rng& rng) {
  double q[4];
  double norm = 0;
  for (double& x : q) {
    x = rng.next_normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : q) x /= norm;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

struct Ellipsoid {
  Eigen::Vector3d center;
  Eigen::Vector3d radii;
  Eigen::Matrix3d rot;
  int cls = 1;

  bool contains(double d, double h, double w) const {
    Eigen::Vector3d u = rot.transpose() * (Eigen::Vector3d(d, h, w) - center);
    double s = 0;
    for (int a = 0; a < 3; ++a) s += (u[a] / radii[a]) * (u[a] / radii[a]);
    return s <= 1.0;
  }
};

// Separable Gaussian blur with replicated borders; sigma <= 0 is a no-op.
template <typename Scalar>
void gaussian_blur_inplace(Volume3D<Scalar>& v, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = std::max(1, int(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(std::size_t(2 * radius + 1));
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[std::size_t(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[std::size_t(i + radius)];
  }
  for (double& k : kernel) k /= sum;

  const Shape3 s = v.shape;
  ArrayX<Scalar> tmp(v.data.size());
  const Index strides[3] = {s[1] * s[2], s[2], 1};
  for (int axis = 0; axis < 3; ++axis) {
    const Index extent = s[axis];
    const Index stride = strides[axis];
    for (Index d = 0; d < s[0]; ++d)
      for (Index h = 0; h < s[1]; ++h)
        for (Index w = 0; w < s[2]; ++w) {
          const Index idx[3] = {d, h, w};
          if (idx[axis] != 0) continue;  // walk each line once from its head
          const Index base = d * strides[0] + h * strides[1] + w * strides[2];
          for (Index i = 0; i < extent; ++i) {
            double acc = 0;
            for (int t = -radius; t <= radius; ++t) {
              Index j = std::min(extent - 1, std::max<Index>(0, i + t));
              acc += kernel[std::size_t(t + radius)] * double(v.data[base + j * stride]);
            }
            tmp[base + i * stride] = Scalar(acc);
          }
        }
    v.data = tmp;
  }
}

}  // namespace detail

// Deterministic per seed. Label map holds smooth ellipsoidal organs; the
// volume is per-class intensity plus noise, gamma-adjusted, then blurred.
// Lesion voxels keep the parent organ's class label.
template <typename Scalar = float>
Case<Scalar> generate_phantom(const PhantomRecipe& r) {
  validate_recipe(r);
  Rng geom = Rng::stream(r.seed, {0x67656f6dULL /*"geom"*/});
  Rng noise = Rng::stream(r.seed, {0x6e6f6973ULL /*"nois"*/});
  Rng jitter = Rng::stream(r.seed, {0x6a697474ULL /*"jitt"*/});

  std::vector<double> case_mean = r.class_mean;
  for (double& m : case_mean) m += r.class_mean_jitter * jitter.next_normal();

  const int count =
      r.blob_count_min + int(geom.next_below(
                             std::uint64_t(r.blob_count_max - r.blob_count_min + 1)));
  std::vector<detail::Ellipsoid> organs, lesions;
  for (int b = 0; b < count; ++b) {
    detail::Ellipsoid e;
    for (int a = 0; a < 3; ++a)
      e.radii[a] = r.radius_min + geom.next_double() * (r.radius_max - r.radius_min);
    const double margin = e.radii.maxCoeff() + 1.0;
    for (int a = 0; a < 3; ++a) {
      const double lo = margin, hi = double(r.shape[a]) - 1.0 - margin;
      if (hi < lo)
        throw ValidationError("infeasible-recipe: blob does not fit inside shape");
      e.center[a] = lo + geom.next_double() * (hi - lo);
    }
    e.rot = detail::random_rotation(geom);
    e.cls = 1 + int(geom.next_below(std::uint64_t(r.n_classes - 1)));
    organs.push_back(e);

    if (geom.next_double() < r.lesion_prob) {
      detail::Ellipsoid l = e;
      l.radii = e.radii * 0.45;
      for (int a = 0; a < 3; ++a) l.radii[a] = std::max(1.0, l.radii[a]);
      // Offset the lesion center, staying inside the parent.
      for (int a = 0; a < 3; ++a)
        l.center[a] += (geom.next_double() - 0.5) * 0.5 * e.radii[a];
      lesions.push_back(l);
    }
  }

  Case<Scalar> out;
  out.id = "phantom-" + std::to_string(r.seed);
  out.domain_tag =
      hex64(fnv1a(&r.contrast_gamma, sizeof(double),
                  fnv1a(&r.lesion_prob, sizeof(double), fnv1a(&r.noise_std, sizeof(double)))));
  out.volume = Volume3D<Scalar>(r.shape);
  LabelMap label(r.shape, r.n_classes, 0);

  for (Index d = 0; d < r.shape[0]; ++d)
    for (Index h = 0; h < r.shape[1]; ++h)
      for (Index w = 0; w < r.shape[2]; ++w) {
        int cls = 0;
        for (const auto& e : organs)
          if (e.contains(double(d), double(h), double(w))) {
            cls = e.cls;
            break;
          }
        bool in_lesion = false;
        if (cls > 0)
          for (const auto& l : lesions)
            if (l.contains(double(d), double(h), double(w))) {
              in_lesion = true;
              break;
            }
        label.at(d, h, w) = cls;
        double mean = in_lesion ? r.lesion_mean : case_mean[std::size_t(cls)];
        double value = mean + r.class_std[std::size_t(cls)] * noise.next_normal() +
                       r.noise_std * noise.next_normal();
        value = std::min(1.0, std::max(0.0, value));
        out.volume.at(d, h, w) = Scalar(std::pow(value, r.contrast_gamma));
      }

  detail::gaussian_blur_inplace(out.volume, r.smoothing);
  out.label = std::move(label);
  validate_case(out);
  return out;
}

// n cases from per-case seeds seed .. seed+n-1.
template <typename Scalar = float>
std::vector<Case<Scalar>> generate_dataset(int n, const PhantomRecipe& recipe,
                                           std::uint64_t seed) {
  if (n < 1) throw ValidationError("dataset needs n >= 1 cases");
  std::vector<Case<Scalar>> cases;
  cases.resize(std::size_t(n));
  parallel_for(n, [&](Index i) {
    PhantomRecipe r = recipe;
    r.seed = seed + std::uint64_t(i);
    cases[std::size_t(i)] = generate_phantom<Scalar>(r);
  });
  return cases;
}

// Domain-shift knobs mirroring quality/contrast changes and pathology.
struct DomainShift {
  double gamma_delta = 3.0;
  double noise_delta = 0.02;
  double lesion_prob_delta = 0.8;
};

inline PhantomRecipe shift_domain(const PhantomRecipe& recipe, const DomainShift& s) {
  PhantomRecipe out = recipe;
  out.contrast_gamma += s.gamma_delta;
  out.noise_std += s.noise_delta;
  out.lesion_prob += s.lesion_prob_delta;
  validate_recipe(out);
  return out;
}

}  // namespace umct

#endif  // UMCT_SYNTH_HPP
