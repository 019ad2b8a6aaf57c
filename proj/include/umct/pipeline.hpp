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

#ifndef UMCT_PIPELINE_HPP
#define UMCT_PIPELINE_HPP

#include <vector>

#include "umct/backbone.hpp"
#include "umct/core.hpp"
#include "umct/views.hpp"

namespace umct {

struct PatchSpec {
  Shape3 size{32, 32, 32};
  double fg_ratio = 0.5;
};

inline void validate_patch_spec(const PatchSpec& p, int model_depth) {
  const Index div = Index(1) << model_depth;
  for (int a = 0; a < 3; ++a) {
    if (p.size[a] < 1) throw ValidationError("patch size must be positive");
    if (p.size[a] % div != 0)
      throw ValidationError("patch size must be divisible by 2^depth");
  }
  if (!(p.fg_ratio >= 0.0 && p.fg_ratio <= 1.0))
    throw ValidationError("fg_ratio must be in [0, 1]");
}

enum class BlendMode { UniformAverage };

struct WindowSpec {
  Shape3 size{32, 32, 32};
  Shape3 stride{16, 16, 16};
  BlendMode blend = BlendMode::UniformAverage;
};

inline void validate_window_spec(const WindowSpec& w) {
  for (int a = 0; a < 3; ++a) {
    if (w.size[a] < 1) throw ValidationError("window size must be positive");
    if (w.stride[a] < 1 || w.stride[a] > w.size[a])
      throw ValidationError("window stride must satisfy 1 <= stride <= size");
  }
}

// ---------------------------------------------------------------------------
// Resampling and normalization
// ---------------------------------------------------------------------------

namespace detail {

// Voxel-center alignment: output index i samples input coordinate
// (i + 0.5) * (target / spacing) - 0.5, clamped at the border.
inline double resample_coord(Index i, double target_mm, double spacing) {
  return (double(i) + 0.5) * (target_mm / spacing) - 0.5;
}

}  // namespace detail

template <typename Scalar>
Case<Scalar> resample_isotropic(const Case<Scalar>& input, double target_mm) {
  if (!(target_mm > 0)) throw ValidationError("target spacing must be positive");
  validate_case(input);
  const auto& v = input.volume;

  Shape3 out_shape;
  for (int a = 0; a < 3; ++a) {
    out_shape[a] = Index(std::llround(double(v.shape[a]) * v.spacing[a] / target_mm));
    if (out_shape[a] < 1)
      throw ValidationError("degenerate-output: axis " + std::to_string(a) +
                            " resamples to zero extent");
  }

  Case<Scalar> out;
  out.id = input.id;
  out.domain_tag = input.domain_tag;
  out.volume = Volume3D<Scalar>(out_shape);
  out.volume.spacing = {target_mm, target_mm, target_mm};
  out.volume.origin = v.origin;

  auto clampi = [](Index x, Index lo, Index hi) { return std::min(std::max(x, lo), hi); };

  // Trilinear interpolation for intensities.
  for (Index d = 0; d < out_shape[0]; ++d) {
    const double fd = detail::resample_coord(d, target_mm, v.spacing[0]);
    const Index d0 = clampi(Index(std::floor(fd)), 0, v.shape[0] - 1);
    const Index d1 = clampi(d0 + 1, 0, v.shape[0] - 1);
    const double td = std::min(1.0, std::max(0.0, fd - double(d0)));
    for (Index h = 0; h < out_shape[1]; ++h) {
      const double fh = detail::resample_coord(h, target_mm, v.spacing[1]);
      const Index h0 = clampi(Index(std::floor(fh)), 0, v.shape[1] - 1);
      const Index h1 = clampi(h0 + 1, 0, v.shape[1] - 1);
      const double th = std::min(1.0, std::max(0.0, fh - double(h0)));
      for (Index w = 0; w < out_shape[2]; ++w) {
        const double fw = detail::resample_coord(w, target_mm, v.spacing[2]);
        const Index w0 = clampi(Index(std::floor(fw)), 0, v.shape[2] - 1);
        const Index w1 = clampi(w0 + 1, 0, v.shape[2] - 1);
        const double tw = std::min(1.0, std::max(0.0, fw - double(w0)));

        const double c00 = v.at(d0, h0, w0) * (1 - tw) + v.at(d0, h0, w1) * tw;
        const double c01 = v.at(d0, h1, w0) * (1 - tw) + v.at(d0, h1, w1) * tw;
        const double c10 = v.at(d1, h0, w0) * (1 - tw) + v.at(d1, h0, w1) * tw;
        const double c11 = v.at(d1, h1, w0) * (1 - tw) + v.at(d1, h1, w1) * tw;
        const double c0 = c00 * (1 - th) + c01 * th;
        const double c1 = c10 * (1 - th) + c11 * th;
        out.volume.at(d, h, w) = Scalar(c0 * (1 - td) + c1 * td);
      }
    }
  }

  // Nearest neighbor for labels.
  if (input.label) {
    const auto& lbl = *input.label;
    LabelMap lout(out_shape, lbl.n_classes);
    for (Index d = 0; d < out_shape[0]; ++d) {
      const Index sd = clampi(Index(std::floor(
          detail::resample_coord(d, target_mm, v.spacing[0]) + 0.5)), 0, v.shape[0] - 1);
      for (Index h = 0; h < out_shape[1]; ++h) {
        const Index sh = clampi(Index(std::floor(
            detail::resample_coord(h, target_mm, v.spacing[1]) + 0.5)), 0, v.shape[1] - 1);
        for (Index w = 0; w < out_shape[2]; ++w) {
          const Index sw = clampi(Index(std::floor(
              detail::resample_coord(w, target_mm, v.spacing[2]) + 0.5)), 0, v.shape[2] - 1);
          lout.at(d, h, w) = lbl.at(sd, sh, sw);
        }
      }
    }
    out.label = std::move(lout);
  }
  return out;
}

// Zero mean, unit variance (population); constant volumes map to all zeros.
template <typename Scalar>
Volume3D<Scalar> normalize_intensity(const Volume3D<Scalar>& v) {
  if (v.num_voxels() < 2)
    throw ValidationError("normalize_intensity needs more than one voxel");
  Volume3D<Scalar> out = v;
  const double mean = v.data.template cast<double>().mean();
  const double var =
      (v.data.template cast<double>() - mean).square().sum() / double(v.num_voxels());
  const double sd = std::sqrt(var);
  if (sd < 1e-12) {
    out.data.setZero();
    return out;
  }
  out.data = ((v.data.template cast<double>() - mean) / sd).template cast<Scalar>();
  return out;
}

// ---------------------------------------------------------------------------
// Patch sampling
// ---------------------------------------------------------------------------

inline std::vector<Index> foreground_voxels(const LabelMap& lbl) {
  std::vector<Index> fg;
  for (Index i = 0; i < lbl.data.size(); ++i)
    if (lbl.data[i] > 0) fg.push_back(i);
  return fg;
}

template <typename Scalar>
struct SampledPatch {
  Volume3D<Scalar> volume;
  std::optional<LabelMap> label;
  std::array<Index, 3> center{0, 0, 0};
  bool fg_centered = false;
};

// Foreground-biased patch sampling: with probability fg_ratio the center is a
// foreground voxel (uniform over them), else uniform over the volume. Cases
// without any foreground fall back to uniform sampling. Out-of-bounds regions
// are zero-padded (background label 0).
template <typename Scalar>
SampledPatch<Scalar> sample_patch(const Case<Scalar>& c, const PatchSpec& spec,
                                  Rng& rng,
                                  const std::vector<Index>* fg_cache = nullptr) {
  const auto& shape = c.volume.shape;
  SampledPatch<Scalar> out;

  std::vector<Index> fg_local;
  const std::vector<Index>* fg = fg_cache;
  if (!fg && c.label) {
    fg_local = foreground_voxels(*c.label);
    fg = &fg_local;
  }

  bool want_fg = c.label && fg && !fg->empty() && rng.next_double() < spec.fg_ratio;
  Index center_flat;
  if (want_fg) {
    center_flat = (*fg)[rng.next_below(fg->size())];
    out.fg_centered = true;
  } else {
    center_flat = Index(rng.next_below(std::uint64_t(volume_of(shape))));
    out.fg_centered = c.label && c.label->data[center_flat] > 0;
  }
  out.center = {center_flat / (shape[1] * shape[2]),
                (center_flat / shape[2]) % shape[1], center_flat % shape[2]};

  Shape3 start;
  for (int a = 0; a < 3; ++a) start[a] = out.center[a] - spec.size[a] / 2;

  out.volume = Volume3D<Scalar>(spec.size, Scalar(0));
  out.volume.spacing = c.volume.spacing;
  if (c.label) out.label = LabelMap(spec.size, c.label->n_classes, 0);
  for (Index d = 0; d < spec.size[0]; ++d) {
    const Index sd = start[0] + d;
    if (sd < 0 || sd >= shape[0]) continue;
    for (Index h = 0; h < spec.size[1]; ++h) {
      const Index sh = start[1] + h;
      if (sh < 0 || sh >= shape[1]) continue;
      const Index w_lo = std::max<Index>(0, -start[2]);
      const Index w_hi = std::min<Index>(spec.size[2], shape[2] - start[2]);
      for (Index w = w_lo; w < w_hi; ++w) {
        out.volume.at(d, h, w) = c.volume.at(sd, sh, start[2] + w);
        if (c.label) out.label->at(d, h, w) = c.label->at(sd, sh, start[2] + w);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sliding-window inference and multi-view ensembling
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<Index> window_starts(Index extent, Index size, Index stride) {
  std::vector<Index> starts;
  if (extent <= size) return {0};
  for (Index s = 0;; s += stride) {
    if (s + size >= extent) {
      starts.push_back(extent - size);  // clamp the last window flush
      break;
    }
    starts.push_back(s);
  }
  return starts;
}

}  // namespace detail

// Tiles the volume so every voxel is covered at least once, averages the
// overlapping probability contributions uniformly, and renormalizes. Volumes
// smaller than the window are zero-padded, predicted once, and cropped.
template <typename Scalar>
ProbMap<Scalar> sliding_window_predict(const ViewModel<Scalar>& m,
                                       const Case<Scalar>& c, const WindowSpec& w) {
  validate_window_spec(w);
  const auto& vol = c.volume;

  Shape3 padded_shape;
  for (int a = 0; a < 3; ++a) padded_shape[a] = std::max(vol.shape[a], w.size[a]);
  Volume3D<Scalar> padded(padded_shape, Scalar(0));
  for (Index d = 0; d < vol.shape[0]; ++d)
    for (Index h = 0; h < vol.shape[1]; ++h)
      for (Index wv = 0; wv < vol.shape[2]; ++wv)
        padded.at(d, h, wv) = vol.at(d, h, wv);

  std::vector<Index> sd = detail::window_starts(padded_shape[0], w.size[0], w.stride[0]);
  std::vector<Index> sh = detail::window_starts(padded_shape[1], w.size[1], w.stride[1]);
  std::vector<Index> sw = detail::window_starts(padded_shape[2], w.size[2], w.stride[2]);

  struct WindowJob {
    Shape3 start;
    ProbMap<Scalar> pred;
  };
  std::vector<WindowJob> jobs;
  for (Index a : sd)
    for (Index b : sh)
      for (Index cc : sw) jobs.push_back({{a, b, cc}, {}});

  parallel_for(Index(jobs.size()), [&](Index j) {
    Volume3D<Scalar> patch(w.size);
    const auto& s = jobs[j].start;
    for (Index d = 0; d < w.size[0]; ++d)
      for (Index h = 0; h < w.size[1]; ++h)
        for (Index x = 0; x < w.size[2]; ++x)
          patch.at(d, h, x) = padded.at(s[0] + d, s[1] + h, s[2] + x);
    jobs[j].pred = predict(m, patch);
  });

  const int n_classes = m.config.n_classes;
  ProbMap<double> acc(vol.shape, n_classes, 0.0);
  // Reduce in job index order for a scheduling-independent result.
  for (const auto& job : jobs) {
    for (Index d = 0; d < w.size[0]; ++d) {
      const Index vd = job.start[0] + d;
      if (vd >= vol.shape[0]) continue;
      for (Index h = 0; h < w.size[1]; ++h) {
        const Index vh = job.start[1] + h;
        if (vh >= vol.shape[1]) continue;
        for (Index x = 0; x < w.size[2]; ++x) {
          const Index vw = job.start[2] + x;
          if (vw >= vol.shape[2]) continue;
          const Index src = (d * w.size[1] + h) * w.size[2] + x;
          const Index dst = (vd * vol.shape[1] + vh) * vol.shape[2] + vw;
          for (int cl = 0; cl < n_classes; ++cl)
            acc.at(cl, dst) += double(job.pred.at(cl, src));
        }
      }
    }
  }

  ProbMap<Scalar> out(vol.shape, n_classes);
  const Index nv = out.num_voxels();
  for (Index v = 0; v < nv; ++v) {
    double total = 0.0;
    for (int cl = 0; cl < n_classes; ++cl) total += acc.at(cl, v);
    // Uniform average, then renormalize across channels.
    for (int cl = 0; cl < n_classes; ++cl)
      out.at(cl, v) = Scalar(acc.at(cl, v) / total);
  }
  return out;
}

// Per-view canonical predictions: transform the case into each view, predict
// with that view's model, and map the probabilities back through the inverse.
template <typename Scalar>
std::vector<ProbMap<Scalar>> multi_view_predict(
    const std::vector<ViewModel<Scalar>>& models, const ViewSet& views,
    const Case<Scalar>& c, const WindowSpec& w) {
  if (models.size() != views.size())
    throw ValidationError("model count must match view count");
  std::vector<ProbMap<Scalar>> out(models.size());
  for (std::size_t i = 0; i < models.size(); ++i) {
    Case<Scalar> transformed;
    transformed.id = c.id;
    transformed.volume = apply(views.transforms[i], c.volume);
    auto pred = sliding_window_predict(models[i], transformed, w);
    out[i] = apply(inverse(views.transforms[i]), pred);
  }
  return out;
}

enum class EnsembleMode { Average, Majority };

inline EnsembleMode ensemble_mode_from(const std::string& s) {
  if (s == "average") return EnsembleMode::Average;
  if (s == "majority") return EnsembleMode::Majority;
  throw ValidationError("unknown ensemble mode: " + s);
}

// Average: argmax of the voxel-wise mean probability map. Majority: modal
// class of the per-view argmaxes. Ties break toward the lowest class index.
template <typename Scalar>
LabelMap ensemble(const std::vector<ProbMap<Scalar>>& preds, EnsembleMode mode) {
  if (preds.empty()) throw ValidationError("ensemble of an empty prediction list");
  const auto& ref = preds.front();
  for (const auto& p : preds)
    if (p.shape != ref.shape || p.n_classes != ref.n_classes)
      throw ValidationError("shape mismatch: ensemble inputs");

  if (mode == EnsembleMode::Average) {
    ProbMap<double> mean(ref.shape, ref.n_classes, 0.0);
    for (const auto& p : preds) mean.data += p.data.template cast<double>();
    mean.data /= double(preds.size());
    return argmax_map(mean);
  }

  LabelMap out(ref.shape, std::max(2, ref.n_classes));
  std::vector<LabelMap> votes;
  votes.reserve(preds.size());
  for (const auto& p : preds) votes.push_back(argmax_map(p));
  std::vector<int> counts(std::size_t(ref.n_classes));
  for (Index v = 0; v < ref.num_voxels(); ++v) {
    std::fill(counts.begin(), counts.end(), 0);
    for (const auto& vote : votes) ++counts[std::size_t(vote.data[v])];
    int best = 0;
    for (int cl = 1; cl < ref.n_classes; ++cl)
      if (counts[std::size_t(cl)] > counts[std::size_t(best)]) best = cl;
    out.data[v] = best;
  }
  return out;
}

}  // namespace umct

#endif  // UMCT_PIPELINE_HPP
