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

#ifndef UMCT_TRAINER_HPP
#define UMCT_TRAINER_HPP

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "umct/backbone.hpp"
#include "umct/fusion.hpp"
#include "umct/losses.hpp"
#include "umct/metrics.hpp"
#include "umct/pipeline.hpp"
#include "umct/uncertainty.hpp"

namespace umct {

enum class FusionRule { ULF, Uniform };

inline const char* to_string(FusionRule f) {
  return f == FusionRule::ULF ? "ulf" : "uniform";
}

inline FusionRule fusion_rule_from(const std::string& s) {
  if (s == "ulf") return FusionRule::ULF;
  if (s == "uniform") return FusionRule::Uniform;
  throw ValidationError("unknown fusion rule: " + s);
}

struct TrainConfig {
  SplitMode mode = SplitMode::SSL;
  int n_views = 3;
  double lambda_cot = 0.2;
  int mc_samples = 10;  // K
  int labeled_batch = 4;
  int unlabeled_batch = 16;
  double lr_stage1 = 7e-3;
  double lr_stage2 = 1e-3;
  double momentum = 0.9;
  double weight_decay = 4e-5;
  int iters_stage1 = 2000;
  int iters_stage2 = 1000;
  int self_train_refresh = 1000;
  FusionRule fusion = FusionRule::ULF;
  int probe_interval = 100;
  double confidence_eps = kConfidenceEps;
  PatchSpec patch{{32, 32, 32}, 0.5};
  WindowSpec window{{32, 32, 32}, {16, 16, 16}};
  SegModelConfig model;
  std::uint64_t seed = 1;
};

// Returns non-fatal warnings (currently only the labeled:unlabeled ratio).
inline std::vector<std::string> validate_train_config(const TrainConfig& c) {
  validate_model_config(c.model);
  validate_patch_spec(c.patch, c.model.depth);
  validate_window_spec(c.window);
  const Index div = Index(1) << c.model.depth;
  for (int a = 0; a < 3; ++a)
    if (c.window.size[a] % div != 0)
      throw ValidationError("window size must be divisible by 2^depth");

  const bool single_view_mode =
      c.mode == SplitMode::SUPERVISED_ONLY || c.mode == SplitMode::SELF_TRAIN;
  if (c.n_views == 1) {
    if (!single_view_mode)
      throw ValidationError("n_views = 1 is only valid for supervised_only/self_train");
  } else if (c.n_views != 2 && c.n_views != 3 && c.n_views != 6) {
    throw ValidationError("n_views must be one of {1, 2, 3, 6}");
  }
  if (c.mode == SplitMode::SELF_TRAIN && c.n_views != 1)
    throw ValidationError("self_train uses a single view model");

  if (c.lambda_cot < 0) throw ValidationError("lambda_cot must be >= 0");
  if (c.mc_samples < 2) throw ValidationError("mc_samples (K) must be >= 2");
  if (c.labeled_batch < 1 && c.mode != SplitMode::UDA_NO_SOURCE)
    throw ValidationError("labeled_batch must be >= 1 outside uda_no_source");
  if (c.unlabeled_batch < 1 && c.mode != SplitMode::SUPERVISED_ONLY)
    throw ValidationError("unlabeled_batch must be >= 1 outside supervised_only");
  if (!(c.lr_stage1 > 0) || !(c.lr_stage2 > 0))
    throw ValidationError("learning rates must be positive");
  if (!(c.momentum >= 0 && c.momentum < 1))
    throw ValidationError("momentum must be in [0, 1)");
  if (c.weight_decay < 0) throw ValidationError("weight_decay must be >= 0");
  if (c.iters_stage1 < 0 || c.iters_stage2 < 0)
    throw ValidationError("iteration counts must be >= 0");
  if (c.self_train_refresh < 1)
    throw ValidationError("self_train_refresh must be >= 1");
  if (c.probe_interval < 1) throw ValidationError("probe_interval must be >= 1");
  if (!(c.confidence_eps > 0)) throw ValidationError("confidence_eps must be > 0");

  std::vector<std::string> warnings;
  if (c.labeled_batch > 0 && c.unlabeled_batch > 0 &&
      c.unlabeled_batch != 4 * c.labeled_batch)
    warnings.push_back("unlabeled:labeled batch ratio is " +
                       std::to_string(c.unlabeled_batch) + ":" +
                       std::to_string(c.labeled_batch) +
                       ", reference setting is 4:1");
  return warnings;
}

namespace stream_tag {
constexpr std::uint64_t kInit = 1;
constexpr std::uint64_t kStage1Data = 2;
constexpr std::uint64_t kStage2Data = 3;
constexpr std::uint64_t kMcDropout = 4;
constexpr std::uint64_t kSelfTrainData = 5;
}  // namespace stream_tag

template <typename Scalar>
struct TrainState {
  std::vector<ViewModel<Scalar>> models;
  std::vector<ArrayX<Scalar>> velocity;  // SGD momentum buffers
  ViewSet views;
  std::int64_t iter = 0;
  std::uint64_t seed = 0;
};

inline ViewSet make_view_set(int n_views) {
  return n_views == 1 ? single_view_set() : standard_view_set(n_views);
}

template <typename Scalar = float>
TrainState<Scalar> init_state(const TrainConfig& cfg) {
  validate_train_config(cfg);
  TrainState<Scalar> st;
  st.seed = cfg.seed;
  st.views = make_view_set(cfg.n_views);
  for (std::size_t i = 0; i < st.views.size(); ++i) {
    auto seed_i =
        Rng::stream(cfg.seed, {stream_tag::kInit, std::uint64_t(i)}).next_u64();
    st.models.push_back(build_model<Scalar>(cfg.model, seed_i, st.views.transforms[i]));
    st.velocity.push_back(ArrayX<Scalar>::Zero(st.models.back().params.size()));
  }
  return st;
}

// v <- momentum * v - lr * (g + wd * theta); theta <- theta + v
template <typename Scalar>
void sgd_update(ViewModel<Scalar>& m, ArrayX<Scalar>& velocity,
                const ArrayX<Scalar>& grad, double lr, double momentum,
                double weight_decay) {
  velocity = Scalar(momentum) * velocity -
             Scalar(lr) * (grad + Scalar(weight_decay) * m.params);
  m.params += velocity;
}

// ---------------------------------------------------------------------------
// Per-view passes. Predictions are always brought back to the canonical
// orientation before the loss; the loss gradient is a voxel permutation away
// from view space, so it transports through the forward transform.
// ---------------------------------------------------------------------------

namespace detail {

template <typename Scalar>
ProbMap<Scalar> feature_to_prob(const nn::FeatureMap<Scalar>& m, const Shape3& shape) {
  ProbMap<Scalar> p;
  p.shape = shape;
  p.n_classes = static_cast<int>(m.cols());
  p.data = Eigen::Map<const ArrayX<Scalar>>(m.data(), m.size());
  return p;
}

template <typename Scalar>
nn::FeatureMap<Scalar> prob_to_feature(const ProbMap<Scalar>& p) {
  return Eigen::Map<const MatrixX<Scalar>>(p.data.data(), p.num_voxels(),
                                           p.n_classes);
}

// Forward in view space with cache; returns the canonical-orientation map.
template <typename Scalar>
ProbMap<Scalar> forward_canonical(const ViewModel<Scalar>& model,
                                  const Volume3D<Scalar>& canonical_patch,
                                  ForwardCache<Scalar>* cache) {
  Volume3D<Scalar> vp = apply(model.view, canonical_patch);
  auto in = Eigen::Map<const MatrixX<Scalar>>(vp.data.data(), vp.data.size(), 1);
  auto prob = model.forward(MatrixX<Scalar>(in), vp.shape,
                            typename ViewModel<Scalar>::DropoutPlan{}, cache);
  return apply(inverse(model.view), feature_to_prob<Scalar>(prob, vp.shape));
}

// Backward from a canonical-space dprob, scaled.
template <typename Scalar>
void backward_canonical(const ViewModel<Scalar>& model,
                        const ForwardCache<Scalar>& cache,
                        const ProbMap<Scalar>& dprob_canonical, double scale,
                        ArrayX<Scalar>& grad) {
  ProbMap<Scalar> dview = apply(model.view, dprob_canonical);
  nn::FeatureMap<Scalar> dmat = prob_to_feature(dview) * Scalar(scale);
  model.backward(cache, dmat, grad);
}

// Interleaved forward/backward over a labeled batch for one view.
// grad += scale * d(sum_s dice)/dtheta; returns the per-sample dice values.
template <typename Scalar>
std::vector<double> supervised_view_pass(const ViewModel<Scalar>& model,
                                         const std::vector<Volume3D<Scalar>>& patches,
                                         const std::vector<ProbMap<Scalar>>& targets,
                                         double scale, ArrayX<Scalar>& grad) {
  std::vector<double> losses;
  losses.reserve(patches.size());
  ForwardCache<Scalar> cache;
  for (std::size_t s = 0; s < patches.size(); ++s) {
    auto canon = forward_canonical(model, patches[s], &cache);
    ArrayX<Scalar> dflat;
    losses.push_back(dice_loss_grad(canon, targets[s], dflat));
    ProbMap<Scalar> dprob;
    dprob.shape = canon.shape;
    dprob.n_classes = canon.n_classes;
    dprob.data = std::move(dflat);
    backward_canonical(model, cache, dprob, scale, grad);
  }
  return losses;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Batch drawing
// ---------------------------------------------------------------------------

template <typename Scalar>
struct LabeledBatch {
  std::vector<Volume3D<Scalar>> patches;
  std::vector<ProbMap<Scalar>> targets;  // one-hot, canonical
};

template <typename Scalar>
struct CaseTable {
  const std::vector<Case<Scalar>>* cases = nullptr;
  std::vector<std::vector<Index>> fg;  // per-case foreground voxels (labeled)

  explicit CaseTable(const std::vector<Case<Scalar>>& cs) : cases(&cs) {
    fg.resize(cs.size());
    for (std::size_t i = 0; i < cs.size(); ++i)
      if (cs[i].label) fg[i] = foreground_voxels(*cs[i].label);
  }
};

template <typename Scalar>
LabeledBatch<Scalar> draw_labeled_batch(const CaseTable<Scalar>& table,
                                        const PatchSpec& spec, int batch, Rng& rng) {
  LabeledBatch<Scalar> out;
  for (int b = 0; b < batch; ++b) {
    const auto idx = rng.next_below(table.cases->size());
    const auto& c = (*table.cases)[idx];
    auto patch = sample_patch(c, spec, rng, &table.fg[idx]);
    out.patches.push_back(std::move(patch.volume));
    out.targets.push_back(one_hot<Scalar>(*patch.label));
  }
  return out;
}

template <typename Scalar>
std::vector<Volume3D<Scalar>> draw_unlabeled_batch(const CaseTable<Scalar>& table,
                                                   const PatchSpec& spec, int batch,
                                                   Rng& rng) {
  std::vector<Volume3D<Scalar>> out;
  for (int b = 0; b < batch; ++b) {
    const auto idx = rng.next_below(table.cases->size());
    auto patch = sample_patch((*table.cases)[idx], spec, rng);
    out.push_back(std::move(patch.volume));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics CSV
// ---------------------------------------------------------------------------

// Schema: iter, mode, stage, total, supervised, cotraining, then per-view
// sup/cot losses, per-view U_e and confidence, and the probe inter-view DSC
// (blank between probe iterations). No timestamps: identical runs produce
// byte-identical files.
class MetricsWriter {
 public:
  MetricsWriter() = default;

  void open(const std::string& path, int n_views) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    os_.open(path, std::ios::trunc);
    if (!os_) throw ComputeError("cannot open metrics csv: " + path);
    n_views_ = n_views;
    os_ << "iter,mode,stage,total,supervised,cotraining";
    for (int i = 0; i < n_views; ++i) os_ << ",sup_view" << i;
    for (int i = 0; i < n_views; ++i) os_ << ",cot_view" << i;
    for (int i = 0; i < n_views; ++i) os_ << ",ue_view" << i;
    for (int i = 0; i < n_views; ++i) os_ << ",conf_view" << i;
    os_ << ",probe_dsc\n";
  }

  bool is_open() const { return os_.is_open(); }

  void row(std::int64_t iter, SplitMode mode, int stage, const LossReport& r,
           const std::vector<double>& ue, const std::vector<double>& conf,
           double probe_dsc = -1.0) {
    if (!os_.is_open()) return;
    os_ << iter << ',' << to_string(mode) << ',' << stage << ','
        << format_real(r.total) << ',' << format_real(r.supervised) << ','
        << format_real(r.cotraining);
    auto col = [this](const std::vector<double>& v, int i) {
      os_ << ',';
      if (i < int(v.size())) os_ << format_real(v[std::size_t(i)]);
      else os_ << format_real(0.0);
    };
    for (int i = 0; i < n_views_; ++i) col(r.per_view_supervised, i);
    for (int i = 0; i < n_views_; ++i) col(r.per_view_cotraining, i);
    for (int i = 0; i < n_views_; ++i) col(ue, i);
    for (int i = 0; i < n_views_; ++i) col(conf, i);
    os_ << ',';
    if (probe_dsc >= 0.0) os_ << format_real(probe_dsc);
    os_ << '\n';
  }

  void flush() { os_.flush(); }

 private:
  std::ofstream os_;
  int n_views_ = 0;
};

// ---------------------------------------------------------------------------
// Stage 1: per-view supervised pretraining
// ---------------------------------------------------------------------------

// One multi-view supervised step on a shared labeled batch (Eq.-1 objective;
// the summed loss separates per view, so each view updates from its own
// term). Returns the loss report.
template <typename Scalar>
LossReport supervised_step(TrainState<Scalar>& state,
                           const LabeledBatch<Scalar>& batch,
                           const TrainConfig& cfg, double lr) {
  const auto n = state.models.size();
  if (batch.patches.empty()) throw ValidationError("empty labeled batch");
  const double scale = 1.0 / double(batch.patches.size());

  std::vector<ArrayX<Scalar>> grads(n);
  std::vector<std::vector<double>> losses(n);
  parallel_for(Index(n), [&](Index i) {
    grads[i] = ArrayX<Scalar>::Zero(state.models[i].params.size());
    losses[i] = detail::supervised_view_pass(state.models[i], batch.patches,
                                             batch.targets, scale, grads[i]);
  });

  LossReport r;
  r.lambda_cot = cfg.lambda_cot;
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0;
    for (double l : losses[i]) sum += l;
    r.per_view_supervised.push_back(sum * scale);
    r.per_view_cotraining.push_back(0.0);
    r.supervised += sum * scale;
  }
  r.total = r.supervised;
  validate_report(r);
  for (std::size_t i = 0; i < n; ++i)
    sgd_update(state.models[i], state.velocity[i], grads[i], lr, cfg.momentum,
               cfg.weight_decay);
  state.iter += 1;
  return r;
}

// Stage 1 (view-wise training): each view draws its own batches from the
// labeled set and minimizes its own supervised Dice term. Per-view splits
// let callers feed a view deliberately different data (label-corruption
// experiments); by default all views share the split.
template <typename Scalar = float>
TrainState<Scalar> pretrain_views(
    const DatasetSplit<Scalar>& split, const TrainConfig& cfg,
    const std::vector<DatasetSplit<Scalar>>* per_view_splits = nullptr,
    MetricsWriter* csv = nullptr) {
  validate_train_config(cfg);
  if (cfg.mode == SplitMode::UDA_NO_SOURCE)
    throw ValidationError("pretraining is undefined for uda_no_source");
  if (split.labeled.empty()) throw ValidationError("empty labeled set");
  if (per_view_splits && int(per_view_splits->size()) != cfg.n_views)
    throw ValidationError("per-view split count must match n_views");

  auto state = init_state<Scalar>(cfg);
  const auto n = state.models.size();

  std::vector<CaseTable<Scalar>> tables;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = per_view_splits ? (*per_view_splits)[i] : split;
    if (s.labeled.empty()) throw ValidationError("empty labeled set for view");
    tables.emplace_back(s.labeled);
  }

  for (int t = 0; t < cfg.iters_stage1; ++t) {
    std::vector<ArrayX<Scalar>> grads(n);
    std::vector<double> view_loss(n, 0.0);
    parallel_for(Index(n), [&](Index i) {
      Rng rng = Rng::stream(cfg.seed, {stream_tag::kStage1Data, std::uint64_t(i),
                                       std::uint64_t(t)});
      auto batch = draw_labeled_batch(tables[std::size_t(i)], cfg.patch,
                                      cfg.labeled_batch, rng);
      const double scale = 1.0 / double(batch.patches.size());
      grads[i] = ArrayX<Scalar>::Zero(state.models[i].params.size());
      auto losses = detail::supervised_view_pass(state.models[i], batch.patches,
                                                 batch.targets, scale, grads[i]);
      for (double l : losses) view_loss[i] += l * scale;
    });

    LossReport r;
    r.lambda_cot = cfg.lambda_cot;
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(view_loss[i]))
        throw ComputeError("non-finite loss at stage 1 iter " + std::to_string(t) +
                           " view " + std::to_string(i));
      r.per_view_supervised.push_back(view_loss[i]);
      r.per_view_cotraining.push_back(0.0);
      r.supervised += view_loss[i];
    }
    r.total = r.supervised;
    for (std::size_t i = 0; i < n; ++i)
      sgd_update(state.models[i], state.velocity[i], grads[i], cfg.lr_stage1,
                 cfg.momentum, cfg.weight_decay);
    state.iter += 1;
    if (csv) csv->row(state.iter, cfg.mode, 1, r, {}, {});
  }
  return state;
}

// ---------------------------------------------------------------------------
// Stage 2: uncertainty-aware multi-view co-training
// ---------------------------------------------------------------------------

struct StepStats {
  std::vector<double> mean_uncertainty;  // per view, over the unlabeled batch
  std::vector<double> mean_confidence;
};

template <typename Scalar>
struct StepDebug {
  // pseudo[i][s]: pseudo label for view i on unlabeled sample s.
  std::vector<std::vector<PseudoLabel<Scalar>>> pseudo;
  std::vector<std::vector<double>> confidence;  // [view][sample]
};

// One co-training step, lines 2-13 of the training loop: multi-view forward
// on both batches, MC-dropout uncertainty per view per unlabeled sample,
// uncertainty-weighted fusion into per-view pseudo labels (excluding self),
// combined Dice objective, one SGD update per view.
template <typename Scalar>
LossReport cotrain_step(TrainState<Scalar>& state,
                        const LabeledBatch<Scalar>& labeled,
                        const std::vector<Volume3D<Scalar>>& unlabeled,
                        const TrainConfig& cfg,
                        StepStats* stats = nullptr,
                        StepDebug<Scalar>* debug = nullptr) {
  const auto n = state.models.size();
  if (n < 2 && !unlabeled.empty())
    throw ValidationError("co-training needs at least 2 views");
  const std::size_t n_lab = labeled.patches.size();
  const std::size_t n_unl = unlabeled.size();
  if (n_lab == 0 && cfg.mode != SplitMode::UDA_NO_SOURCE)
    throw ValidationError("labeled batch may be empty only in uda_no_source");
  if (n_unl == 0) throw ValidationError("empty unlabeled batch");

  struct PerView {
    std::vector<ForwardCache<Scalar>> lab_cache, unl_cache;
    std::vector<ProbMap<Scalar>> lab_canon, unl_canon;
    std::vector<double> uncertainty, confidence;
    ArrayX<Scalar> grad;
    std::vector<double> sup_losses, cot_losses;
  };
  std::vector<PerView> pv(n);

  // Forward passes and MC sampling (Algorithm lines 4-9).
  parallel_for(Index(n), [&](Index i) {
    auto& v = pv[std::size_t(i)];
    const auto& model = state.models[std::size_t(i)];
    v.lab_cache.resize(n_lab);
    v.lab_canon.resize(n_lab);
    for (std::size_t s = 0; s < n_lab; ++s)
      v.lab_canon[s] = detail::forward_canonical(model, labeled.patches[s],
                                                 &v.lab_cache[s]);
    v.unl_cache.resize(n_unl);
    v.unl_canon.resize(n_unl);
    v.uncertainty.resize(n_unl);
    v.confidence.resize(n_unl);
    for (std::size_t s = 0; s < n_unl; ++s) {
      v.unl_canon[s] = detail::forward_canonical(model, unlabeled[s],
                                                 &v.unl_cache[s]);
      Volume3D<Scalar> vp = apply(model.view, unlabeled[s]);
      auto mc_seed = Rng::stream(state.seed,
                                 {stream_tag::kMcDropout, std::uint64_t(state.iter),
                                  std::uint64_t(i), std::uint64_t(s)})
                         .next_u64();
      // The volume-summed variance is invariant under the inverse transform
      // (a voxel permutation), so the samples stay in view space.
      auto samples = mc_sample(model, vp, cfg.mc_samples, mc_seed);
      v.uncertainty[s] = epistemic(samples);
      v.confidence[s] = confidence(v.uncertainty[s], cfg.confidence_eps);
    }
  });

  // Pseudo labels per view per unlabeled sample, excluding the view itself.
  std::vector<std::vector<PseudoLabel<Scalar>>> pseudo(n);
  for (std::size_t s = 0; s < n_unl; ++s) {
    std::vector<ProbMap<Scalar>> preds;
    std::vector<double> confs;
    for (std::size_t i = 0; i < n; ++i) {
      preds.push_back(pv[i].unl_canon[s]);
      confs.push_back(pv[i].confidence[s]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      auto pl = cfg.fusion == FusionRule::ULF ? fuse(preds, confs, int(i))
                                              : fuse_uniform(preds, int(i));
      pseudo[i].push_back(stop_gradient_wrap(std::move(pl)));
    }
  }

  // Loss terms and gradients (lines 10-13). Pseudo labels are constants:
  // backward runs only through each view's own prediction.
  const double lab_scale = n_lab ? 1.0 / double(n_lab) : 0.0;
  const double unl_scale = 1.0 / double(n_unl);
  parallel_for(Index(n), [&](Index i) {
    auto& v = pv[std::size_t(i)];
    const auto& model = state.models[std::size_t(i)];
    v.grad = ArrayX<Scalar>::Zero(model.params.size());
    for (std::size_t s = 0; s < n_lab; ++s) {
      ArrayX<Scalar> dflat;
      v.sup_losses.push_back(
          dice_loss_grad(v.lab_canon[s], labeled.targets[s], dflat));
      ProbMap<Scalar> dprob;
      dprob.shape = v.lab_canon[s].shape;
      dprob.n_classes = v.lab_canon[s].n_classes;
      dprob.data = std::move(dflat);
      detail::backward_canonical(model, v.lab_cache[s], dprob, lab_scale, v.grad);
    }
    for (std::size_t s = 0; s < n_unl; ++s) {
      ArrayX<Scalar> dflat;
      v.cot_losses.push_back(dice_loss_grad(
          v.unl_canon[s], pseudo[std::size_t(i)][s].target, dflat));
      if (cfg.lambda_cot > 0) {
        ProbMap<Scalar> dprob;
        dprob.shape = v.unl_canon[s].shape;
        dprob.n_classes = v.unl_canon[s].n_classes;
        dprob.data = std::move(dflat);
        detail::backward_canonical(model, v.unl_cache[s], dprob,
                                   cfg.lambda_cot * unl_scale, v.grad);
      }
    }
  });

  LossReport r;
  r.lambda_cot = cfg.lambda_cot;
  for (std::size_t i = 0; i < n; ++i) {
    double sup = 0, cot = 0;
    for (double l : pv[i].sup_losses) sup += l;
    for (double l : pv[i].cot_losses) cot += l;
    r.per_view_supervised.push_back(sup * lab_scale);
    r.per_view_cotraining.push_back(cot * unl_scale);
    r.supervised += sup * lab_scale;
    r.cotraining += cot * unl_scale;
  }
  r.total = r.supervised + r.lambda_cot * r.cotraining;
  try {
    validate_report(r);
  } catch (const ComputeError&) {
    std::ostringstream dump;
    dump << "non-finite loss at iter " << state.iter << ":";
    for (std::size_t i = 0; i < n; ++i)
      dump << " view" << i << " sup=" << r.per_view_supervised[i]
           << " cot=" << r.per_view_cotraining[i]
           << " ue=" << (pv[i].uncertainty.empty() ? 0.0 : pv[i].uncertainty[0]);
    throw ComputeError(dump.str());
  }

  for (std::size_t i = 0; i < n; ++i)
    sgd_update(state.models[i], state.velocity[i], pv[i].grad, cfg.lr_stage2,
               cfg.momentum, cfg.weight_decay);
  state.iter += 1;

  if (stats) {
    stats->mean_uncertainty.assign(n, 0.0);
    stats->mean_confidence.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (double u : pv[i].uncertainty) stats->mean_uncertainty[i] += u;
      for (double cconf : pv[i].confidence) stats->mean_confidence[i] += cconf;
      stats->mean_uncertainty[i] /= double(n_unl);
      stats->mean_confidence[i] /= double(n_unl);
    }
  }
  if (debug) {
    debug->pseudo = std::move(pseudo);
    debug->confidence.clear();
    for (std::size_t i = 0; i < n; ++i) debug->confidence.push_back(pv[i].confidence);
  }
  return r;
}

// Deterministic probe patches: center crops of the first unlabeled cases.
template <typename Scalar>
std::vector<Volume3D<Scalar>> probe_patches(const std::vector<Case<Scalar>>& cases,
                                            const PatchSpec& spec, int count) {
  std::vector<Volume3D<Scalar>> out;
  for (int i = 0; i < count && i < int(cases.size()); ++i) {
    const auto& c = cases[std::size_t(i)];
    Volume3D<Scalar> patch(spec.size, Scalar(0));
    Shape3 start;
    for (int a = 0; a < 3; ++a)
      start[a] = std::max<Index>(0, (c.volume.shape[a] - spec.size[a]) / 2);
    for (Index d = 0; d < spec.size[0] && start[0] + d < c.volume.shape[0]; ++d)
      for (Index h = 0; h < spec.size[1] && start[1] + h < c.volume.shape[1]; ++h)
        for (Index w = 0; w < spec.size[2] && start[2] + w < c.volume.shape[2]; ++w)
          patch.at(d, h, w) = c.volume.at(start[0] + d, start[1] + h, start[2] + w);
    out.push_back(std::move(patch));
  }
  return out;
}

// Collapse monitor: mean pairwise foreground DSC between per-view argmax
// predictions on the probe batch. Sudden agreement paired with degraded
// held-out DSC is the collapse signature.
template <typename Scalar>
double probe_interview_dsc(const TrainState<Scalar>& state,
                           const std::vector<Volume3D<Scalar>>& probes) {
  if (state.models.size() < 2 || probes.empty()) return -1.0;
  double acc = 0;
  int count = 0;
  for (const auto& patch : probes) {
    std::vector<LabelMap> preds;
    for (const auto& m : state.models) {
      Volume3D<Scalar> vp = apply(m.view, patch);
      auto prob = predict(m, vp);
      preds.push_back(argmax_map(apply(inverse(m.view), prob)));
    }
    for (std::size_t i = 0; i < preds.size(); ++i)
      for (std::size_t j = i + 1; j < preds.size(); ++j) {
        acc += foreground_dsc(preds[i], preds[j]);
        ++count;
      }
  }
  return acc / double(count);
}

// Stage 2 driver. SSL and UDA are the same code path (the objectives are
// structurally identical); uda_no_source skips the supervised term entirely.
template <typename Scalar>
TrainState<Scalar>& cotrain(TrainState<Scalar>& state, const DatasetSplit<Scalar>& split,
                            const TrainConfig& cfg, MetricsWriter* csv = nullptr) {
  validate_train_config(cfg);
  validate_split(split);
  const bool use_labeled = cfg.mode != SplitMode::UDA_NO_SOURCE;
  if (use_labeled && split.labeled.empty())
    throw ValidationError("cotrain needs labeled cases outside uda_no_source");

  CaseTable<Scalar> labeled_table(split.labeled);
  CaseTable<Scalar> unlabeled_table(split.unlabeled);
  auto probes = probe_patches(split.unlabeled, cfg.patch, 4);

  for (int t = 0; t < cfg.iters_stage2; ++t) {
    Rng rng = Rng::stream(cfg.seed, {stream_tag::kStage2Data, std::uint64_t(t)});
    LabeledBatch<Scalar> lab;
    if (use_labeled)
      lab = draw_labeled_batch(labeled_table, cfg.patch, cfg.labeled_batch, rng);
    auto unl = draw_unlabeled_batch(unlabeled_table, cfg.patch, cfg.unlabeled_batch, rng);

    StepStats stats;
    auto report = cotrain_step(state, lab, unl, cfg, &stats);

    double probe = -1.0;
    if (csv && (t + 1) % cfg.probe_interval == 0)
      probe = probe_interview_dsc(state, probes);
    if (csv)
      csv->row(state.iter, cfg.mode, 2, report, stats.mean_uncertainty,
               stats.mean_confidence, probe);
  }
  return state;
}

// ---------------------------------------------------------------------------
// Vanilla self-training baseline: predict pseudo labels on the unlabeled set,
// train on labels + pseudo labels, refresh the pseudo labels every
// self_train_refresh iterations.
// ---------------------------------------------------------------------------

template <typename Scalar>
TrainState<Scalar>& self_train_baseline(TrainState<Scalar>& state,
                                        const DatasetSplit<Scalar>& split,
                                        const TrainConfig& cfg,
                                        MetricsWriter* csv = nullptr,
                                        std::vector<LabelMap>* last_pseudo = nullptr) {
  if (state.models.size() != 1)
    throw ValidationError("self-training drives a single view model");
  validate_split(split);
  if (split.labeled.empty())
    throw ValidationError("self-training needs a labeled (or source) set");

  std::vector<Case<Scalar>> pool = split.labeled;
  const std::size_t n_real = pool.size();
  std::optional<CaseTable<Scalar>> table;

  for (int t = 0; t < cfg.iters_stage2; ++t) {
    if (t % cfg.self_train_refresh == 0) {
      // Re-label the unlabeled set with the current model's predictions.
      pool.resize(n_real);
      if (last_pseudo) last_pseudo->clear();
      for (const auto& c : split.unlabeled) {
        auto prob = sliding_window_predict(state.models[0], c, cfg.window);
        Case<Scalar> pseudo = c;
        pseudo.label = argmax_map(prob);
        pseudo.label->n_classes = cfg.model.n_classes;
        if (last_pseudo) last_pseudo->push_back(*pseudo.label);
        pool.push_back(std::move(pseudo));
      }
      table.emplace(pool);
    }
    Rng rng = Rng::stream(cfg.seed, {stream_tag::kSelfTrainData, std::uint64_t(t)});
    auto batch = draw_labeled_batch(*table, cfg.patch,
                                    cfg.labeled_batch + cfg.unlabeled_batch, rng);

    ArrayX<Scalar> grad = ArrayX<Scalar>::Zero(state.models[0].params.size());
    const double scale = 1.0 / double(batch.patches.size());
    auto losses = detail::supervised_view_pass(state.models[0], batch.patches,
                                               batch.targets, scale, grad);
    double mean = 0;
    for (double l : losses) mean += l * scale;
    if (!std::isfinite(mean))
      throw ComputeError("non-finite loss in self-training at iter " +
                         std::to_string(t));
    sgd_update(state.models[0], state.velocity[0], grad, cfg.lr_stage2,
               cfg.momentum, cfg.weight_decay);
    state.iter += 1;

    LossReport r;
    r.lambda_cot = 0.0;
    r.supervised = mean;
    r.total = mean;
    r.per_view_supervised = {mean};
    r.per_view_cotraining = {0.0};
    if (csv) csv->row(state.iter, cfg.mode, 2, r, {}, {});
  }
  return state;
}

}  // namespace umct

#endif  // UMCT_TRAINER_HPP
