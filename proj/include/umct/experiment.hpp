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

#ifndef UMCT_EXPERIMENT_HPP
#define UMCT_EXPERIMENT_HPP

#include <chrono>
#include <filesystem>

#include <json.hpp>

#include "umct/checkpoint.hpp"
#include "umct/config.hpp"
#include "umct/io.hpp"
#include "umct/metrics.hpp"

namespace umct {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Data materialization: generate (or load) cases, preprocess, split per mode.
// ---------------------------------------------------------------------------

struct MaterializedData {
  DatasetSplit<float> split;
  std::vector<Case<float>> heldout;  // labeled, for evaluation
};

inline Case<float> preprocess(Case<float> c) {
  c = resample_isotropic(c, 1.0);
  c.volume = normalize_intensity(c.volume);
  return c;
}

inline std::vector<Case<float>> load_cases_from_dir(const std::string& dir) {
  std::vector<std::string> vol_files;
  for (const auto& e : fs::directory_iterator(dir)) {
    auto name = e.path().filename().string();
    if (name.size() > 11 && name.substr(name.size() - 11) == "volume.umct")
      vol_files.push_back(e.path().string());
  }
  std::sort(vol_files.begin(), vol_files.end());
  if (vol_files.empty())
    throw ValidationError("no *volume.umct files under: " + dir);
  std::vector<Case<float>> out;
  for (const auto& vf : vol_files) {
    Case<float> c;
    c.volume = read_volume<float>(vf);
    c.id = fs::path(vf).filename().string();
    c.id = c.id.substr(0, c.id.size() - std::string(".volume.umct").size());
    auto lf = vf.substr(0, vf.size() - std::string("volume.umct").size()) +
              "label.umct";
    if (fs::exists(lf)) c.label = read_label(lf);
    out.push_back(std::move(c));
  }
  return out;
}

inline MaterializedData materialize_data(const ExperimentConfig& cfg) {
  MaterializedData out;
  out.split.mode = cfg.train.mode;

  const bool cross_domain = cfg.apply_shift;
  auto strip = [](Case<float> c) {
    c.label.reset();
    return c;
  };

  std::vector<Case<float>> source;
  if (!cfg.load_dir.empty()) {
    source = load_cases_from_dir(cfg.load_dir);
    if (int(source.size()) < cfg.n_train + (cross_domain ? 0 : cfg.n_heldout))
      throw ValidationError("loaded dataset too small for requested split");
  } else {
    const int need = cfg.n_train + (cross_domain ? 0 : cfg.n_heldout);
    source = generate_dataset(need, cfg.recipe, cfg.data_seed);
  }
  for (auto& c : source) c = preprocess(std::move(c));

  if (!cross_domain) {
    // Same-domain modes: labeled fraction of the training pool, rest
    // unlabeled, held-out tail for evaluation.
    const int n_labeled =
        std::max(1, int(std::llround(cfg.labeled_fraction * cfg.n_train)));
    for (int i = 0; i < cfg.n_train; ++i) {
      if (i < n_labeled)
        out.split.labeled.push_back(source[std::size_t(i)]);
      else
        out.split.unlabeled.push_back(strip(source[std::size_t(i)]));
    }
    for (int i = cfg.n_train; i < int(source.size()); ++i)
      out.heldout.push_back(source[std::size_t(i)]);
  } else {
    // Cross-domain modes: the whole source pool is labeled; the target
    // domain contributes the unlabeled pool and the held-out cases.
    auto target_recipe = shift_domain(cfg.recipe, cfg.shift);
    const int n_target = cfg.n_target_train > 0 ? cfg.n_target_train : cfg.n_train;
    auto target = generate_dataset(n_target + cfg.n_heldout, target_recipe,
                                   cfg.data_seed + 100000);
    for (auto& c : target) {
      c.id = "target-" + c.id;
      c = preprocess(std::move(c));
    }
    if (cfg.train.mode != SplitMode::UDA_NO_SOURCE)
      out.split.labeled = source;
    for (int i = 0; i < n_target; ++i)
      out.split.unlabeled.push_back(strip(target[std::size_t(i)]));
    for (int i = n_target; i < int(target.size()); ++i)
      out.heldout.push_back(target[std::size_t(i)]);
  }
  validate_split(out.split);
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct RunSummary {
  std::vector<double> per_view_dsc;  // mean foreground DSC per view
  double mean_single_view_dsc = 0.0;
  double ensemble_average_dsc = 0.0;
  double ensemble_majority_dsc = 0.0;
  std::vector<std::string> case_ids;
  std::vector<double> per_case_ensemble_avg;  // foreground DSC per case
  std::vector<double> per_case_mean_view;
};

template <typename Scalar>
RunSummary evaluate_on_cases(const TrainState<Scalar>& state,
                             const std::vector<Case<Scalar>>& heldout,
                             const WindowSpec& window,
                             const std::string& per_case_csv = "",
                             int views_limit = 0) {
  if (heldout.empty()) throw ValidationError("no held-out cases to evaluate");
  const int n_views = views_limit > 0
                          ? std::min<int>(views_limit, int(state.models.size()))
                          : int(state.models.size());

  RunSummary s;
  s.per_view_dsc.assign(std::size_t(n_views), 0.0);

  std::ofstream csv;
  if (!per_case_csv.empty()) {
    fs::path p(per_case_csv);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    csv.open(per_case_csv, std::ios::trunc);
    csv << "case_id,predictor,class,dsc\n";
  }

  struct CaseResult {
    std::vector<double> view_fg;
    double ens_avg = 0, ens_maj = 0;
    std::vector<std::vector<double>> rows;  // predictor -> per-class dsc
  };
  std::vector<CaseResult> results(heldout.size());

  ViewSet views;
  views.transforms.assign(state.views.transforms.begin(),
                          state.views.transforms.begin() + n_views);
  views.names.assign(state.views.names.begin(), state.views.names.begin() + n_views);
  std::vector<ViewModel<Scalar>> models(state.models.begin(),
                                        state.models.begin() + n_views);

  parallel_for(Index(heldout.size()), [&](Index ci) {
    const auto& c = heldout[std::size_t(ci)];
    if (!c.label) throw ValidationError("held-out case without label: " + c.id);
    auto preds = multi_view_predict(models, views, c, window);
    auto& r = results[std::size_t(ci)];
    const int n_classes = c.label->n_classes;
    for (int i = 0; i < n_views; ++i) {
      auto hard = argmax_map(preds[std::size_t(i)]);
      std::vector<double> row;
      for (int cls = 0; cls < n_classes; ++cls)
        row.push_back(dsc(hard, *c.label, cls));
      r.view_fg.push_back(foreground_dsc(hard, *c.label));
      r.rows.push_back(std::move(row));
    }
    auto avg = ensemble(preds, EnsembleMode::Average);
    auto maj = ensemble(preds, EnsembleMode::Majority);
    r.ens_avg = foreground_dsc(avg, *c.label);
    r.ens_maj = foreground_dsc(maj, *c.label);
    std::vector<double> avg_row, maj_row;
    for (int cls = 0; cls < n_classes; ++cls) {
      avg_row.push_back(dsc(avg, *c.label, cls));
      maj_row.push_back(dsc(maj, *c.label, cls));
    }
    r.rows.push_back(std::move(avg_row));
    r.rows.push_back(std::move(maj_row));
  });

  for (std::size_t ci = 0; ci < heldout.size(); ++ci) {
    const auto& r = results[ci];
    s.case_ids.push_back(heldout[ci].id);
    double mean_view = 0;
    for (int i = 0; i < n_views; ++i) {
      s.per_view_dsc[std::size_t(i)] += r.view_fg[std::size_t(i)];
      mean_view += r.view_fg[std::size_t(i)];
    }
    s.per_case_mean_view.push_back(mean_view / n_views);
    s.per_case_ensemble_avg.push_back(r.ens_avg);
    s.ensemble_average_dsc += r.ens_avg;
    s.ensemble_majority_dsc += r.ens_maj;
    if (csv.is_open()) {
      auto emit = [&](const std::string& predictor, const std::vector<double>& row) {
        for (std::size_t cls = 0; cls < row.size(); ++cls)
          csv << heldout[ci].id << ',' << predictor << ',' << cls << ','
              << format_real(row[cls]) << '\n';
      };
      for (int i = 0; i < n_views; ++i)
        emit("view" + std::to_string(i), r.rows[std::size_t(i)]);
      emit("ensemble_average", r.rows[std::size_t(n_views)]);
      emit("ensemble_majority", r.rows[std::size_t(n_views) + 1]);
    }
  }
  const double n_cases = double(heldout.size());
  for (auto& v : s.per_view_dsc) v /= n_cases;
  s.ensemble_average_dsc /= n_cases;
  s.ensemble_majority_dsc /= n_cases;
  for (double v : s.per_view_dsc) s.mean_single_view_dsc += v;
  s.mean_single_view_dsc /= double(n_views);
  return s;
}

inline nlohmann::json summary_to_json(const RunSummary& s) {
  nlohmann::json j;
  j["per_view_dsc"] = s.per_view_dsc;
  j["mean_single_view_dsc"] = s.mean_single_view_dsc;
  j["ensemble_average_dsc"] = s.ensemble_average_dsc;
  j["ensemble_majority_dsc"] = s.ensemble_majority_dsc;
  j["case_ids"] = s.case_ids;
  j["per_case_ensemble_avg"] = s.per_case_ensemble_avg;
  j["per_case_mean_view"] = s.per_case_mean_view;
  return j;
}

inline RunSummary summary_from_json(const nlohmann::json& j) {
  RunSummary s;
  s.per_view_dsc = j.at("per_view_dsc").get<std::vector<double>>();
  s.mean_single_view_dsc = j.at("mean_single_view_dsc").get<double>();
  s.ensemble_average_dsc = j.at("ensemble_average_dsc").get<double>();
  s.ensemble_majority_dsc = j.at("ensemble_majority_dsc").get<double>();
  s.case_ids = j.at("case_ids").get<std::vector<std::string>>();
  s.per_case_ensemble_avg = j.at("per_case_ensemble_avg").get<std::vector<double>>();
  s.per_case_mean_view = j.at("per_case_mean_view").get<std::vector<double>>();
  return s;
}

// ---------------------------------------------------------------------------
// run_experiment: the end-to-end driver behind `umct train` and the ablation
// matrix. Artifacts land under <out_root>/<config_hash>/.
// ---------------------------------------------------------------------------

struct ExperimentArtifacts {
  std::string run_dir;
  std::string config_hash;
  RunSummary summary;
};

inline void write_text_file(const std::string& path, const std::string& text) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ComputeError("cannot write: " + path);
  os << text;
}

inline TrainState<float> load_source_state(const ExperimentConfig& cfg) {
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(cfg.source_checkpoints))
    if (e.path().extension() == ".ckpt") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw ValidationError("no .ckpt files under: " + cfg.source_checkpoints);

  TrainState<float> st;
  st.seed = cfg.train.seed;
  st.views = make_view_set(cfg.train.n_views);

  if (files.size() == 1) {
    // Single source model: replicate across views; the per-view dropout
    // streams stay distinct through the MC seeds.
    auto ck = read_checkpoint(files[0]);
    for (std::size_t i = 0; i < st.views.size(); ++i) {
      auto m = model_from_checkpoint<float>(ck);
      m.view = st.views.transforms[i];
      st.models.push_back(std::move(m));
      st.velocity.push_back(ArrayX<float>::Zero(st.models.back().params.size()));
    }
    return st;
  }
  if (files.size() != st.views.size())
    throw ValidationError("need 1 or n_views checkpoints, found " +
                          std::to_string(files.size()));
  // Files sort as view0, view1, ...; each token must match its slot.
  for (std::size_t i = 0; i < files.size(); ++i) {
    auto ck = read_checkpoint(files[i]);
    auto m = model_from_checkpoint<float>(ck);
    if (!(m.view == st.views.transforms[i]))
      throw ValidationError("checkpoint view token does not match view set: " +
                            files[i]);
    st.models.push_back(std::move(m));
    auto& vel = st.velocity.emplace_back(
        ArrayX<float>::Zero(st.models.back().params.size()));
    if (!ck.momentum.empty())
      for (Index p = 0; p < vel.size(); ++p) vel[p] = ck.momentum[std::size_t(p)];
  }
  return st;
}

inline ExperimentArtifacts run_experiment(const ExperimentConfig& cfg,
                                          const std::string& out_root,
                                          bool force = false,
                                          bool quiet = false) {
  auto warnings = validate_train_config(cfg.train);
  if (!quiet)
    for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());

  ExperimentArtifacts art;
  art.config_hash = config_hash(cfg);
  fs::path run_dir = fs::path(out_root) / art.config_hash;
  art.run_dir = run_dir.string();
  if (fs::exists(run_dir)) {
    if (!force)
      throw ValidationError("run directory exists (append-only, use --force): " +
                            art.run_dir);
    fs::remove_all(run_dir);
  }
  fs::create_directories(run_dir);

  const auto t_start = std::chrono::system_clock::now();
  write_text_file((run_dir / "config.canonical.txt").string(), canonical_text(cfg));

  MetricsWriter csv;
  csv.open((run_dir / "metrics.csv").string(), cfg.train.n_views);

  auto data = materialize_data(cfg);

  TrainState<float> state;
  try {
    switch (cfg.train.mode) {
      case SplitMode::SUPERVISED_ONLY:
        state = pretrain_views<float>(data.split, cfg.train, nullptr, &csv);
        break;
      case SplitMode::SSL:
      case SplitMode::UDA:
        state = pretrain_views<float>(data.split, cfg.train, nullptr, &csv);
        cotrain(state, data.split, cfg.train, &csv);
        break;
      case SplitMode::UDA_NO_SOURCE:
        state = load_source_state(cfg);
        cotrain(state, data.split, cfg.train, &csv);
        break;
      case SplitMode::SELF_TRAIN:
        state = pretrain_views<float>(data.split, cfg.train, nullptr, &csv);
        self_train_baseline(state, data.split, cfg.train, &csv);
        break;
    }
  } catch (...) {
    // Preserve partial artifacts for diagnosis.
    csv.flush();
    write_text_file((run_dir / "FAILED").string(), "training aborted\n");
    throw;
  }
  csv.flush();

  fs::create_directories(run_dir / "checkpoints");
  for (std::size_t i = 0; i < state.models.size(); ++i)
    write_checkpoint((run_dir / "checkpoints" /
                      ("view" + std::to_string(i) + ".ckpt")).string(),
                     state.models[i], &state.velocity[i]);

  art.summary = evaluate_on_cases(state, data.heldout, cfg.train.window,
                                  (run_dir / "eval" / "per_case.csv").string());

  nlohmann::json summary = summary_to_json(art.summary);
  summary["config_hash"] = art.config_hash;
  summary["mode"] = to_string(cfg.train.mode);
  write_text_file((run_dir / "eval" / "summary.json").string(), summary.dump(2) + "\n");

  const auto t_end = std::chrono::system_clock::now();
  nlohmann::json manifest;
  manifest["config_hash"] = art.config_hash;
  manifest["mode"] = to_string(cfg.train.mode);
  manifest["source_revision"] = UMCT_SOURCE_REV;
  manifest["started_unix_ms"] =
      std::chrono::duration_cast<std::chrono::milliseconds>(
          t_start.time_since_epoch()).count();
  manifest["finished_unix_ms"] =
      std::chrono::duration_cast<std::chrono::milliseconds>(
          t_end.time_since_epoch()).count();
  manifest["artifacts"] = {
      {"config", "config.canonical.txt"},
      {"metrics", "metrics.csv"},
      {"checkpoints", "checkpoints"},
      {"per_case", "eval/per_case.csv"},
      {"summary", "eval/summary.json"}};
  manifest["labeled_cases"] = data.split.labeled.size();
  manifest["unlabeled_cases"] = data.split.unlabeled.size();
  manifest["heldout_cases"] = data.heldout.size();
  manifest["labeled_fraction"] = cfg.labeled_fraction;
  manifest["n_views"] = cfg.train.n_views;
  manifest["fusion"] = to_string(cfg.train.fusion);
  write_text_file((run_dir / "manifest.json").string(), manifest.dump(2) + "\n");
  return art;
}

}  // namespace umct

#endif  // UMCT_EXPERIMENT_HPP
