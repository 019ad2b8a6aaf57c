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

#ifndef UMCT_EXPERIMENTS_HPP
#define UMCT_EXPERIMENTS_HPP

#include "umct/experiment.hpp"
#include "umct/plot.hpp"

// Desk-scale ablation/validation matrix behind `umct ablate`: semi-supervised
// gain over the supervised baseline, uncertainty-weighted vs uniform fusion
// with a corrupted view, domain adaptation without source data, and the
// self-training baseline ordering.

namespace umct {
namespace ablate {

// Shared desk-scale setup: 32^3 two-class phantoms, miniature asymmetric
// encoder-decoder, 16^3 patches.
inline ExperimentConfig base_config(std::uint64_t seed) {
  ExperimentConfig c;
  c.recipe.shape = {32, 32, 32};
  c.recipe.n_classes = 2;
  c.recipe.blob_count_min = 1;
  c.recipe.blob_count_max = 5;
  c.recipe.radius_min = 2.5;
  c.recipe.radius_max = 9.0;
  c.recipe.class_mean = {0.3, 0.8};
  c.recipe.class_std = {0.08, 0.12};
  c.recipe.class_mean_jitter = 0.15;
  c.recipe.noise_std = 0.20;
  c.recipe.smoothing = 0.5;

  TrainConfig& t = c.train;
  t.model.n_classes = 2;
  t.model.base_width = 4;
  t.model.depth = 2;
  t.model.dropout_rate = 0.15;
  t.model.first_kernel = {7, 7, 3};
  t.model.body_kernel = {3, 3, 1};
  t.model.skip_connections = 3;
  t.patch = {{16, 16, 16}, 0.5};
  t.window = {{16, 16, 16}, {8, 8, 8}};
  t.n_views = 3;
  t.labeled_batch = 1;
  t.unlabeled_batch = 4;
  t.mc_samples = 6;
  t.lambda_cot = 1.0;
  t.iters_stage1 = 800;
  t.iters_stage2 = 600;
  t.probe_interval = 50;
  t.seed = seed;

  c.n_train = 40;
  c.n_heldout = 10;
  c.labeled_fraction = 0.1;
  c.data_seed = 9000 + seed * 1000;
  return c;
}

// ---------------------------------------------------------------------------
// Semi-supervised gain (criteria 6 and 10)
// ---------------------------------------------------------------------------

inline ExperimentConfig ssl_umct_config(std::uint64_t seed) {
  auto c = base_config(seed);
  c.train.mode = SplitMode::SSL;
  return c;
}

// Supervised baseline: one axial view, labeled cases only, trained exactly
// like each UMCT view's stage-1 (same stream, same iterations), with no
// co-training on top.
inline ExperimentConfig ssl_supervised_config(std::uint64_t seed) {
  auto c = base_config(seed);
  c.train.mode = SplitMode::SUPERVISED_ONLY;
  c.train.n_views = 1;
  c.train.iters_stage2 = 0;
  return c;
}

struct SslOutcome {
  double supervised_dsc = 0;       // single-view baseline
  double pretrain_mean_view_dsc = 0;  // UMCT views right after stage 1
  double umct_mean_view_dsc = 0;   // mean of the 3 single-view DSCs
  double umct_ensemble_dsc = 0;
  std::string metrics_csv;
};

inline SslOutcome run_ssl_pair(std::uint64_t seed, const std::string& out_root) {
  auto cfg = ssl_umct_config(seed);
  auto data = materialize_data(cfg);
  fs::path dir = fs::path(out_root) / ("ssl_seed" + std::to_string(seed));
  fs::create_directories(dir);

  SslOutcome o;
  MetricsWriter csv;
  csv.open((dir / "metrics.csv").string(), cfg.train.n_views);
  auto state = pretrain_views<float>(data.split, cfg.train, nullptr, &csv);

  // The supervised baseline is view 0's stage-1 model: same initialization,
  // same data stream, no co-training.
  {
    TrainState<float> baseline;
    baseline.seed = state.seed;
    baseline.views = single_view_set();
    baseline.models.push_back(state.models[0]);
    baseline.velocity.push_back(ArrayX<float>::Zero(state.models[0].params.size()));
    o.supervised_dsc =
        evaluate_on_cases(baseline, data.heldout, cfg.train.window).per_view_dsc[0];
  }
  o.pretrain_mean_view_dsc =
      evaluate_on_cases(state, data.heldout, cfg.train.window).mean_single_view_dsc;

  cotrain(state, data.split, cfg.train, &csv);
  csv.flush();
  auto summary = evaluate_on_cases(state, data.heldout, cfg.train.window,
                                   (dir / "per_case.csv").string());
  o.umct_mean_view_dsc = summary.mean_single_view_dsc;
  o.umct_ensemble_dsc = summary.ensemble_average_dsc;
  o.metrics_csv = (dir / "metrics.csv").string();
  return o;
}

// ---------------------------------------------------------------------------
// ULF vs uniform fusion with one corrupted view (criterion 7)
// ---------------------------------------------------------------------------

inline LabelMap corrupt_labels(const LabelMap& in, double rate, Rng& rng) {
  LabelMap out = in;
  for (Index i = 0; i < out.data.size(); ++i)
    if (rng.next_double() < rate) {
      // Reassign to a uniformly random *other* class.
      auto shift = 1 + std::int32_t(rng.next_below(std::uint64_t(in.n_classes - 1)));
      out.data[i] = (out.data[i] + shift) % in.n_classes;
    }
  return out;
}

struct UlfOutcome {
  double ulf_dsc = 0;       // ensemble DSC after co-training with ULF
  double uniform_dsc = 0;   // same but uniform fusion
  double corrupted_lowest_fraction = 0;  // stage-2 iterations where the
                                         // corrupted view's confidence is lowest
  int corrupted_view = 2;
};

// Parses conf_view{i} columns of stage-2 rows; returns the fraction of rows
// where `view` has the strictly lowest confidence.
inline double fraction_lowest_confidence(const std::string& csv_path, int n_views,
                                         int view) {
  std::ifstream is(csv_path);
  if (!is) throw ComputeError("cannot read metrics csv: " + csv_path);
  std::string header;
  std::getline(is, header);
  std::vector<std::string> cols;
  {
    std::istringstream hs(header);
    std::string c;
    while (std::getline(hs, c, ',')) cols.push_back(c);
  }
  std::vector<int> conf_idx(std::size_t(n_views), -1);
  int stage_idx = -1;
  for (int i = 0; i < int(cols.size()); ++i) {
    if (cols[std::size_t(i)] == "stage") stage_idx = i;
    for (int v = 0; v < n_views; ++v)
      if (cols[std::size_t(i)] == "conf_view" + std::to_string(v))
        conf_idx[std::size_t(v)] = i;
  }
  int total = 0, lowest = 0;
  std::string line;
  while (std::getline(is, line)) {
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) f.push_back(c);
    if (f.size() <= std::size_t(conf_idx.back()) || f[std::size_t(stage_idx)] != "2")
      continue;
    ++total;
    double target = std::stod(f[std::size_t(conf_idx[std::size_t(view)])]);
    bool is_lowest = true;
    for (int v = 0; v < n_views; ++v)
      if (v != view &&
          std::stod(f[std::size_t(conf_idx[std::size_t(v)])]) <= target)
        is_lowest = false;
    lowest += is_lowest;
  }
  return total ? double(lowest) / double(total) : 0.0;
}

inline UlfOutcome run_ulf_pair(std::uint64_t seed, const std::string& out_root) {
  auto cfg = base_config(seed);
  cfg.train.mode = SplitMode::SSL;
  cfg.train.mc_samples = 10;
  auto data = materialize_data(cfg);

  UlfOutcome o;
  // Per-view splits: the corrupted view pretrains on 30%-flipped labels.
  std::vector<DatasetSplit<float>> per_view(3, data.split);
  Rng crng = Rng::stream(seed, {0x636f7272ULL /*"corr"*/});
  for (auto& c : per_view[std::size_t(o.corrupted_view)].labeled)
    c.label = corrupt_labels(*c.label, 0.30, crng);

  auto pretrained = pretrain_views<float>(data.split, cfg.train, &per_view);

  auto run_arm = [&](FusionRule rule, const std::string& name) {
    auto arm_cfg = cfg;
    arm_cfg.train.fusion = rule;
    auto state = pretrained;  // same starting point for both arms
    fs::path dir = fs::path(out_root) / ("ulf_seed" + std::to_string(seed)) / name;
    fs::create_directories(dir);
    MetricsWriter csv;
    csv.open((dir / "metrics.csv").string(), arm_cfg.train.n_views);
    cotrain(state, data.split, arm_cfg.train, &csv);
    csv.flush();
    auto summary = evaluate_on_cases(state, data.heldout, arm_cfg.train.window,
                                     (dir / "per_case.csv").string());
    return std::pair{summary, (dir / "metrics.csv").string()};
  };

  auto [ulf_summary, ulf_csv] = run_arm(FusionRule::ULF, "ulf");
  auto [uni_summary, uni_csv] = run_arm(FusionRule::Uniform, "uniform");
  o.ulf_dsc = ulf_summary.ensemble_average_dsc;
  o.uniform_dsc = uni_summary.ensemble_average_dsc;
  o.corrupted_lowest_fraction =
      fraction_lowest_confidence(ulf_csv, 3, o.corrupted_view);
  return o;
}

// ---------------------------------------------------------------------------
// Domain adaptation without source data, plus baseline ordering
// (criteria 8 and 9)
// ---------------------------------------------------------------------------

struct UdaOutcome {
  double source_on_source_dsc = 0;   // pretrain quality control
  double direct_transfer_dsc = 0;    // source model on shifted target
  double adapted_dsc = 0;            // UMCT-DA (no source data)
  double noshift_control_dsc = 0;    // adapted on source-distribution data
  double uda_umct_dsc = 0;           // standard UDA (source + target)
  double self_train_dsc = 0;         // vanilla self-training baseline
};

inline UdaOutcome run_uda_suite(std::uint64_t seed, const std::string& out_root) {
  auto cfg = base_config(seed);
  cfg.train.mode = SplitMode::UDA;
  cfg.apply_shift = true;
  cfg.n_train = 20;
  cfg.n_target_train = 20;
  fs::path dir = fs::path(out_root) / ("uda_seed" + std::to_string(seed));
  fs::create_directories(dir);

  // Source-domain pools.
  auto source_labeled = generate_dataset(cfg.n_train, cfg.recipe, cfg.data_seed);
  auto source_extra =
      generate_dataset(cfg.n_target_train, cfg.recipe, cfg.data_seed + 50000);
  auto source_heldout =
      generate_dataset(cfg.n_heldout, cfg.recipe, cfg.data_seed + 60000);
  // Shifted target pools.
  auto target_recipe = shift_domain(cfg.recipe, cfg.shift);
  auto target_train = generate_dataset(cfg.n_target_train, target_recipe,
                                       cfg.data_seed + 100000);
  auto target_heldout =
      generate_dataset(cfg.n_heldout, target_recipe, cfg.data_seed + 110000);

  for (auto& c : source_labeled) c = preprocess(std::move(c));
  for (auto& c : source_extra) c = preprocess(std::move(c));
  for (auto& c : source_heldout) c = preprocess(std::move(c));
  for (auto& c : target_train) c = preprocess(std::move(c));
  for (auto& c : target_heldout) c = preprocess(std::move(c));

  auto strip_all = [](std::vector<Case<float>> cs) {
    for (auto& c : cs) c.label.reset();
    return cs;
  };

  // Stage 1 on the labeled source domain.
  DatasetSplit<float> source_split;
  source_split.mode = SplitMode::SUPERVISED_ONLY;
  source_split.labeled = source_labeled;
  auto src_cfg = cfg;
  src_cfg.train.mode = SplitMode::SUPERVISED_ONLY;
  auto source_state = pretrain_views<float>(source_split, src_cfg.train);

  UdaOutcome o;
  o.source_on_source_dsc =
      evaluate_on_cases(source_state, source_heldout, cfg.train.window)
          .ensemble_average_dsc;
  o.direct_transfer_dsc =
      evaluate_on_cases(source_state, target_heldout, cfg.train.window)
          .ensemble_average_dsc;

  // UMCT-DA: adapt on unlabeled target only (no source data).
  {
    auto da_cfg = cfg;
    da_cfg.train.mode = SplitMode::UDA_NO_SOURCE;
    DatasetSplit<float> split;
    split.mode = SplitMode::UDA_NO_SOURCE;
    split.unlabeled = strip_all(target_train);
    auto state = source_state;
    MetricsWriter csv;
    csv.open((dir / "umct_da_metrics.csv").string(), 3);
    cotrain(state, split, da_cfg.train, &csv);
    o.adapted_dsc = evaluate_on_cases(state, target_heldout, cfg.train.window)
                        .ensemble_average_dsc;
  }

  // No-shift control: the same adaptation fed source-distribution data must
  // hold within 2 DSC points of the source model.
  {
    auto ctl_cfg = cfg;
    ctl_cfg.train.mode = SplitMode::UDA_NO_SOURCE;
    DatasetSplit<float> split;
    split.mode = SplitMode::UDA_NO_SOURCE;
    split.unlabeled = strip_all(source_extra);
    auto state = source_state;
    cotrain(state, split, ctl_cfg.train);
    o.noshift_control_dsc =
        evaluate_on_cases(state, source_heldout, cfg.train.window)
            .ensemble_average_dsc;
  }

  // Standard UDA: labeled source + unlabeled target.
  {
    auto uda_cfg = cfg;
    uda_cfg.train.mode = SplitMode::UDA;
    DatasetSplit<float> split;
    split.mode = SplitMode::UDA;
    split.labeled = source_labeled;
    split.unlabeled = strip_all(target_train);
    auto state = source_state;
    MetricsWriter csv;
    csv.open((dir / "uda_umct_metrics.csv").string(), 3);
    cotrain(state, split, uda_cfg.train, &csv);
    o.uda_umct_dsc = evaluate_on_cases(state, target_heldout, cfg.train.window)
                         .ensemble_average_dsc;
  }

  // Vanilla self-training from the axial source model.
  {
    auto st_cfg = cfg;
    st_cfg.train.mode = SplitMode::SELF_TRAIN;
    st_cfg.train.n_views = 1;
    DatasetSplit<float> split;
    split.mode = SplitMode::SELF_TRAIN;
    split.labeled = source_labeled;
    split.unlabeled = strip_all(target_train);
    TrainState<float> state;
    state.seed = st_cfg.train.seed;
    state.views = single_view_set();
    state.models.push_back(source_state.models[0]);
    state.models[0].view = identity_transform();
    state.velocity.push_back(ArrayX<float>::Zero(state.models[0].params.size()));
    st_cfg.train.self_train_refresh = std::max(1, cfg.train.iters_stage2 / 3);
    self_train_baseline(state, split, st_cfg.train);
    o.self_train_dsc = evaluate_on_cases(state, target_heldout, cfg.train.window)
                           .ensemble_average_dsc;
  }
  return o;
}

}  // namespace ablate
}  // namespace umct

#endif  // UMCT_EXPERIMENTS_HPP
