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

#include <CLI11.hpp>

#include "umct/experiment.hpp"
#include "umct/experiments.hpp"
#include "umct/plot.hpp"

namespace fs = std::filesystem;
using namespace umct;

namespace {

// ---------------------------------------------------------------------------
// synth-data
// ---------------------------------------------------------------------------

int cmd_synth_data(const std::string& recipe_path, const std::string& out_dir,
                   bool force) {
  auto spec = load_synth_spec(recipe_path);
  auto recipe = spec.apply_shift ? shift_domain(spec.recipe, spec.shift) : spec.recipe;

  fs::path dir(out_dir);
  if (fs::exists(dir / "dataset_manifest.json") && !force)
    throw ValidationError("dataset already exists (use --force): " + out_dir);
  fs::create_directories(dir);

  auto cases = generate_dataset(spec.n_cases, recipe, spec.base_seed);
  nlohmann::json manifest;
  manifest["n_cases"] = spec.n_cases;
  manifest["base_seed"] = spec.base_seed;
  manifest["cases"] = nlohmann::json::array();
  for (const auto& c : cases) {
    write_volume((dir / (c.id + ".volume.umct")).string(), c.volume);
    write_label((dir / (c.id + ".label.umct")).string(), *c.label);
    manifest["cases"].push_back(c.id);
  }
  std::ifstream rf(recipe_path);
  std::stringstream rbuf;
  rbuf << rf.rdbuf();
  manifest["recipe_text"] = rbuf.str();
  write_text_file((dir / "dataset_manifest.json").string(), manifest.dump(2) + "\n");
  std::printf("wrote %d cases to %s\n", spec.n_cases, out_dir.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const std::string& config_path, const std::string& out_root,
              bool force) {
  auto cfg = load_experiment_config(config_path);
  auto art = run_experiment(cfg, out_root, force);
  std::printf("run directory: %s\n", art.run_dir.c_str());
  std::printf("mean single-view DSC: %.4f\n", art.summary.mean_single_view_dsc);
  std::printf("ensemble (average) DSC: %.4f\n", art.summary.ensemble_average_dsc);
  std::printf("ensemble (majority) DSC: %.4f\n", art.summary.ensemble_majority_dsc);
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

TrainState<float> state_from_checkpoint_dir(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".ckpt") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ValidationError("no .ckpt files under: " + dir);
  TrainState<float> st;
  for (const auto& f : files) {
    auto ck = read_checkpoint(f);
    st.models.push_back(model_from_checkpoint<float>(ck));
    st.views.transforms.push_back(st.models.back().view);
    st.views.names.push_back(to_token(st.models.back().view));
    st.velocity.push_back(ArrayX<float>::Zero(st.models.back().params.size()));
  }
  return st;
}

int cmd_eval(const std::string& checkpoints, const std::string& config_path,
             int views_limit, const std::string& out_dir,
             const std::string& baseline_summary) {
  auto cfg = load_experiment_config(config_path);
  auto state = state_from_checkpoint_dir(checkpoints);

  // Checkpoint/config compatibility gate.
  const std::string want = canonical_config_text(cfg.train.model);
  for (const auto& m : state.models)
    if (canonical_config_text(m.config) != want)
      throw ValidationError(
          "hash-mismatch: checkpoint model config differs from eval config");

  auto data = materialize_data(cfg);
  fs::create_directories(out_dir);
  auto summary =
      evaluate_on_cases(state, data.heldout, cfg.train.window,
                        (fs::path(out_dir) / "per_case.csv").string(), views_limit);

  nlohmann::json j = summary_to_json(summary);
  if (!baseline_summary.empty()) {
    std::ifstream bs(baseline_summary);
    if (!bs) throw ValidationError("cannot open baseline summary: " + baseline_summary);
    nlohmann::json bj = nlohmann::json::parse(bs);
    auto base = summary_from_json(bj);
    if (base.per_case_ensemble_avg.size() != summary.per_case_ensemble_avg.size())
      throw ValidationError("baseline run has a different held-out set size");
    j["baseline_summary"] = baseline_summary;
    j["wilcoxon_p_ensemble_vs_baseline"] = wilcoxon_signed_rank(
        summary.per_case_ensemble_avg, base.per_case_ensemble_avg);
    j["wilcoxon_p_single_view_vs_baseline"] = wilcoxon_signed_rank(
        summary.per_case_mean_view, base.per_case_mean_view);
  }
  write_text_file((fs::path(out_dir) / "summary.json").string(), j.dump(2) + "\n");
  std::printf("mean single-view DSC: %.4f\n", summary.mean_single_view_dsc);
  std::printf("ensemble (average) DSC: %.4f\n", summary.ensemble_average_dsc);
  std::printf("ensemble (majority) DSC: %.4f\n", summary.ensemble_majority_dsc);
  std::printf("wrote %s\n", (fs::path(out_dir) / "summary.json").string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

int cmd_predict(const std::string& checkpoints, const std::string& volume_path,
                const std::string& out_path, const std::string& ensemble_mode,
                const Shape3& wsize, const Shape3& wstride,
                const std::string& dump_views) {
  auto state = state_from_checkpoint_dir(checkpoints);
  Case<float> c;
  c.id = fs::path(volume_path).stem().string();
  c.volume = read_volume<float>(volume_path);
  c = preprocess(std::move(c));

  WindowSpec w{wsize, wstride};
  auto preds = multi_view_predict(state.models, state.views, c, w);
  auto label = ensemble(preds, ensemble_mode_from(ensemble_mode));
  write_label(out_path, label);
  std::printf("wrote %s\n", out_path.c_str());
  if (!dump_views.empty()) {
    fs::create_directories(dump_views);
    for (std::size_t i = 0; i < preds.size(); ++i)
      write_prob((fs::path(dump_views) /
                  ("view" + std::to_string(i) + ".prob.umct")).string(),
                 preds[i]);
    std::printf("wrote per-view probability maps to %s\n", dump_views.c_str());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// dump-pseudo: run one co-training step and write the fused pseudo labels.
// ---------------------------------------------------------------------------

int cmd_dump_pseudo(const std::string& checkpoints, const std::string& config_path,
                    const std::string& out_dir) {
  auto cfg = load_experiment_config(config_path);
  auto state = state_from_checkpoint_dir(checkpoints);
  auto data = materialize_data(cfg);

  CaseTable<float> ltable(data.split.labeled);
  CaseTable<float> utable(data.split.unlabeled);
  Rng rng = Rng::stream(cfg.train.seed, {stream_tag::kStage2Data, 0});
  LabeledBatch<float> lab;
  if (cfg.train.mode != SplitMode::UDA_NO_SOURCE)
    lab = draw_labeled_batch(ltable, cfg.train.patch, cfg.train.labeled_batch, rng);
  auto unl = draw_unlabeled_batch(utable, cfg.train.patch, cfg.train.unlabeled_batch,
                                  rng);

  StepDebug<float> debug;
  cotrain_step(state, lab, unl, cfg.train, nullptr, &debug);
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < debug.pseudo.size(); ++i)
    for (std::size_t s = 0; s < debug.pseudo[i].size(); ++s)
      write_prob((fs::path(out_dir) / ("pseudo_view" + std::to_string(i) +
                                       "_sample" + std::to_string(s) + ".umct"))
                     .string(),
                 debug.pseudo[i][s].target);
  std::printf("wrote %zu pseudo-label maps to %s\n",
              debug.pseudo.size() * (debug.pseudo.empty() ? 0 : debug.pseudo[0].size()),
              out_dir.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// plot
// ---------------------------------------------------------------------------

struct RunRecord {
  std::string dir;
  nlohmann::json manifest;
  RunSummary summary;
};

int cmd_plot(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::string shared_header;
  std::vector<RunRecord> records;

  for (const auto& run : run_dirs) {
    std::ifstream is(run + "/metrics.csv");
    if (!is) throw ValidationError("no metrics.csv under run dir: " + run);
    std::string header;
    std::getline(is, header);
    if (shared_header.empty()) shared_header = header;
    if (header != shared_header)
      throw ValidationError("schema-mismatch: metrics headers differ across runs");

    std::vector<std::string> cols;
    {
      std::istringstream hs(header);
      std::string c;
      while (std::getline(hs, c, ',')) cols.push_back(c);
    }
    auto col_index = [&](const std::string& name) {
      for (int i = 0; i < int(cols.size()); ++i)
        if (cols[std::size_t(i)] == name) return i;
      throw ValidationError("schema-mismatch: missing column " + name);
    };
    const int i_iter = col_index("iter"), i_total = col_index("total"),
              i_sup = col_index("supervised"), i_cot = col_index("cotraining"),
              i_probe = col_index("probe_dsc");

    Series total{"total", {}, {}}, sup{"supervised", {}, {}},
        cot{"cotraining", {}, {}}, probe{"probe_dsc", {}, {}};
    std::string line;
    while (std::getline(is, line)) {
      std::vector<std::string> f;
      std::istringstream ls(line);
      std::string c;
      while (std::getline(ls, c, ',')) f.push_back(c);
      while (f.size() < cols.size()) f.push_back("");
      double it = std::stod(f[std::size_t(i_iter)]);
      total.x.push_back(it);
      total.y.push_back(std::stod(f[std::size_t(i_total)]));
      sup.x.push_back(it);
      sup.y.push_back(std::stod(f[std::size_t(i_sup)]));
      cot.x.push_back(it);
      cot.y.push_back(std::stod(f[std::size_t(i_cot)]));
      if (!f[std::size_t(i_probe)].empty()) {
        probe.x.push_back(it);
        probe.y.push_back(std::stod(f[std::size_t(i_probe)]));
      }
    }

    auto tag = fs::path(run).filename().string();
    write_svg_lineplot((fs::path(out_dir) / ("loss_" + tag + ".svg")).string(),
                       "training loss (" + tag + ")", "iteration", "loss",
                       {total, sup, cot});
    write_series_csv((fs::path(out_dir) / ("loss_" + tag + ".csv")).string(),
                     "iter", {total, sup, cot});
    if (!probe.x.empty()) {
      write_svg_lineplot((fs::path(out_dir) / ("probe_" + tag + ".svg")).string(),
                         "inter-view agreement (" + tag + ")", "iteration",
                         "pairwise foreground DSC", {probe});
      write_series_csv((fs::path(out_dir) / ("probe_" + tag + ".csv")).string(),
                       "iter", {probe});
    }

    RunRecord rec;
    rec.dir = run;
    std::ifstream ms(run + "/manifest.json");
    std::ifstream ss(run + "/eval/summary.json");
    if (ms && ss) {
      rec.manifest = nlohmann::json::parse(ms);
      rec.summary = summary_from_json(nlohmann::json::parse(ss));
      records.push_back(std::move(rec));
    }
  }

  // Label-ratio sweep: one series per method over runs that share everything
  // but the labeled fraction.
  std::map<std::string, Series> sweep;
  for (const auto& r : records) {
    std::string method = r.manifest.value("mode", "?") + "/" +
                         std::to_string(r.manifest.value("n_views", 0)) + "v";
    auto& s = sweep[method];
    s.name = method;
    s.x.push_back(r.manifest.value("labeled_fraction", 0.0));
    s.y.push_back(r.summary.mean_single_view_dsc);
  }
  if (sweep.size() >= 1 && records.size() >= 2) {
    std::vector<Series> series;
    for (auto& [name, s] : sweep) {
      // Sort points by labeled fraction.
      std::vector<std::size_t> order(s.x.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::sort(order.begin(), order.end(),
                [&](std::size_t a, std::size_t b) { return s.x[a] < s.x[b]; });
      Series sorted{s.name, {}, {}};
      for (auto i : order) {
        sorted.x.push_back(s.x[i]);
        sorted.y.push_back(s.y[i]);
      }
      series.push_back(std::move(sorted));
    }
    write_svg_lineplot((fs::path(out_dir) / "sweep_labeled_fraction.svg").string(),
                       "DSC vs labeled fraction", "labeled fraction",
                       "mean single-view DSC", series);
    write_series_csv((fs::path(out_dir) / "sweep_labeled_fraction.csv").string(),
                     "labeled_fraction", series);
  }
  std::printf("wrote plots to %s\n", out_dir.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

int cmd_ablate(const std::string& suite, int seeds, const std::string& out_dir) {
  fs::create_directories(out_dir);
  nlohmann::json results;
  if (suite == "ssl" || suite == "all") {
    for (int s = 1; s <= seeds; ++s) {
      auto o = ablate::run_ssl_pair(std::uint64_t(s), out_dir + "/ssl");
      std::printf("[ssl seed %d] supervised %.4f | post-stage1 %.4f | "
                  "umct mean-view %.4f | umct ensemble %.4f\n",
                  s, o.supervised_dsc, o.pretrain_mean_view_dsc,
                  o.umct_mean_view_dsc, o.umct_ensemble_dsc);
      results["ssl"].push_back({{"seed", s},
                                {"supervised", o.supervised_dsc},
                                {"post_stage1", o.pretrain_mean_view_dsc},
                                {"umct_mean_view", o.umct_mean_view_dsc},
                                {"umct_ensemble", o.umct_ensemble_dsc}});
    }
  }
  if (suite == "ulf" || suite == "all") {
    for (int s = 1; s <= seeds; ++s) {
      auto o = ablate::run_ulf_pair(std::uint64_t(s), out_dir + "/ulf");
      std::printf("[ulf seed %d] ulf %.4f | uniform %.4f | corrupted-lowest %.2f\n",
                  s, o.ulf_dsc, o.uniform_dsc, o.corrupted_lowest_fraction);
      results["ulf"].push_back({{"seed", s},
                                {"ulf", o.ulf_dsc},
                                {"uniform", o.uniform_dsc},
                                {"corrupted_lowest_fraction",
                                 o.corrupted_lowest_fraction}});
    }
  }
  if (suite == "uda" || suite == "all") {
    for (int s = 1; s <= seeds; ++s) {
      auto o = ablate::run_uda_suite(std::uint64_t(s), out_dir + "/uda");
      std::printf("[uda seed %d] src-on-src %.4f | direct %.4f | adapted %.4f | "
                  "no-shift %.4f | uda-umct %.4f | self-train %.4f\n",
                  s, o.source_on_source_dsc, o.direct_transfer_dsc, o.adapted_dsc,
                  o.noshift_control_dsc, o.uda_umct_dsc, o.self_train_dsc);
      results["uda"].push_back({{"seed", s},
                                {"source_on_source", o.source_on_source_dsc},
                                {"direct_transfer", o.direct_transfer_dsc},
                                {"adapted", o.adapted_dsc},
                                {"noshift_control", o.noshift_control_dsc},
                                {"uda_umct", o.uda_umct_dsc},
                                {"self_train", o.self_train_dsc}});
    }
  }
  write_text_file(out_dir + "/ablation_results.json", results.dump(2) + "\n");
  std::printf("wrote %s/ablation_results.json\n", out_dir.c_str());
  return 0;
}

Shape3 parse_shape_flag(const std::vector<int>& v, const char* what) {
  if (v.size() != 3) throw ValidationError(std::string(what) + " needs 3 integers");
  return {v[0], v[1], v[2]};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uncertainty-aware multi-view co-training for volumetric "
               "segmentation"};
  app.require_subcommand(1);

  // synth-data
  std::string recipe_path, data_out;
  bool synth_force = false;
  auto* synth = app.add_subcommand("synth-data", "generate a phantom dataset");
  synth->add_option("--recipe", recipe_path, "recipe file")->required();
  synth->add_option("--out", data_out, "output directory")->required();
  synth->add_flag("--force", synth_force, "overwrite an existing dataset");

  // train
  std::string train_config, out_root = "runs";
  bool train_force = false;
  auto* train = app.add_subcommand("train", "run an experiment end to end");
  train->add_option("--config", train_config, "experiment config file")->required();
  train->add_option("--out-root", out_root, "root directory for run artifacts");
  train->add_flag("--force", train_force, "replace an existing run directory");

  // eval
  std::string eval_ckpt, eval_config, eval_out = "eval_out", eval_baseline;
  int eval_views = 0;
  auto* eval = app.add_subcommand("eval", "evaluate checkpoints on held-out data");
  eval->add_option("--checkpoints", eval_ckpt, "checkpoint directory")->required();
  eval->add_option("--config", eval_config, "experiment config file")->required();
  eval->add_option("--views", eval_views, "evaluate only the first k views");
  eval->add_option("--out", eval_out, "output directory");
  eval->add_option("--baseline", eval_baseline,
                   "baseline summary.json for Wilcoxon signed-rank p-values");

  // predict
  std::string pr_ckpt, pr_volume, pr_out = "prediction.umct", pr_mode = "average";
  std::string pr_dump_views;
  std::vector<int> pr_wsize{16, 16, 16}, pr_wstride{8, 8, 8};
  auto* pred = app.add_subcommand("predict", "segment a single volume");
  pred->add_option("--checkpoints", pr_ckpt, "checkpoint directory")->required();
  pred->add_option("--volume", pr_volume, "input volume container")->required();
  pred->add_option("--out", pr_out, "output label container");
  pred->add_option("--ensemble", pr_mode, "average or majority");
  pred->add_option("--window-size", pr_wsize, "sliding window size (3 ints)");
  pred->add_option("--window-stride", pr_wstride, "sliding window stride (3 ints)");
  pred->add_option("--dump-views", pr_dump_views,
                   "directory for per-view probability maps");

  // dump-pseudo
  std::string dp_ckpt, dp_config, dp_out = "pseudo_out";
  auto* dump = app.add_subcommand(
      "dump-pseudo", "run one co-training step and dump fused pseudo labels");
  dump->add_option("--checkpoints", dp_ckpt, "checkpoint directory")->required();
  dump->add_option("--config", dp_config, "experiment config file")->required();
  dump->add_option("--out", dp_out, "output directory");

  // plot
  std::vector<std::string> plot_runs;
  std::string plot_out = "plots";
  auto* plot = app.add_subcommand("plot", "plot metrics from run directories");
  plot->add_option("--runs", plot_runs, "run directories")->required();
  plot->add_option("--out", plot_out, "output directory");

  // ablate
  std::string ab_suite = "all", ab_out = "ablation";
  int ab_seeds = 5;
  auto* ab = app.add_subcommand("ablate", "run the ablation/validation matrix");
  ab->add_option("--suite", ab_suite, "ssl, ulf, uda, or all");
  ab->add_option("--seeds", ab_seeds, "number of seeds");
  ab->add_option("--out", ab_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth_data(recipe_path, data_out, synth_force);
    if (*train) return cmd_train(train_config, out_root, train_force);
    if (*eval) return cmd_eval(eval_ckpt, eval_config, eval_views, eval_out,
                               eval_baseline);
    if (*pred)
      return cmd_predict(pr_ckpt, pr_volume, pr_out, pr_mode,
                         parse_shape_flag(pr_wsize, "--window-size"),
                         parse_shape_flag(pr_wstride, "--window-stride"),
                         pr_dump_views);
    if (*dump) return cmd_dump_pseudo(dp_ckpt, dp_config, dp_out);
    if (*plot) return cmd_plot(plot_runs, plot_out);
    if (*ab) return cmd_ablate(ab_suite, ab_seeds, ab_out);
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime failure: %s\n", e.what());
    return 2;
  }
  return 0;
}
