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

#ifndef UMCT_CONFIG_HPP
#define UMCT_CONFIG_HPP

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "umct/synth.hpp"
#include "umct/trainer.hpp"

namespace umct {

// Whole-experiment configuration: training hyperparameters plus the data
// recipe. One canonical hash names the run directory.
struct ExperimentConfig {
  TrainConfig train;
  PhantomRecipe recipe;
  int n_train = 40;
  int n_heldout = 10;
  double labeled_fraction = 0.1;
  std::uint64_t data_seed = 9000;
  bool apply_shift = false;
  DomainShift shift;
  int n_target_train = 0;  // 0 means: same count as n_train
  std::string load_dir;    // optional on-disk dataset instead of generation
  std::string source_checkpoints;  // required for uda_no_source
};

// ---------------------------------------------------------------------------
// Key-value config text: `key = value` lines, '#' comments, dotted keys.
// Unknown or duplicate keys are hard errors; silent hyperparameter typos
// would invalidate experiments.
// ---------------------------------------------------------------------------

namespace kv {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::map<std::string, std::string> parse_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(lineno) +
                            ": expected `key = value`, got: " + line);
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw ValidationError("config line " + std::to_string(lineno) + ": empty key");
    if (out.count(key))
      throw ValidationError("duplicate config key: " + key);
    out[key] = val;
  }
  return out;
}

inline std::map<std::string, std::string> parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_text(buf.str());
}

// Pulls typed values out of the parsed map and records which keys were
// consumed, so leftovers can be reported as unknown.
class Extractor {
 public:
  explicit Extractor(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  template <typename T, typename Fn>
  void get(const std::string& key, T& out, Fn&& convert) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return;
    consumed_.insert(key);
    try {
      out = convert(it->second);
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception&) {
      throw ValidationError("config field `" + key + "`: cannot parse value `" +
                            it->second + "`");
    }
  }

  void get_int(const std::string& key, int& out) {
    get(key, out, [](const std::string& s) { return std::stoi(s); });
  }
  void get_u64(const std::string& key, std::uint64_t& out) {
    get(key, out, [](const std::string& s) { return std::stoull(s); });
  }
  void get_real(const std::string& key, double& out) {
    get(key, out, [](const std::string& s) { return std::stod(s); });
  }
  void get_bool(const std::string& key, bool& out) {
    get(key, out, [key](const std::string& s) {
      if (s == "1" || s == "true") return true;
      if (s == "0" || s == "false") return false;
      throw ValidationError("config field `" + key + "`: want 0/1/true/false");
    });
  }
  void get_string(const std::string& key, std::string& out) {
    get(key, out, [](const std::string& s) { return s; });
  }
  void get_shape(const std::string& key, Shape3& out) {
    get(key, out, [key](const std::string& s) {
      Shape3 r;
      std::istringstream is(s);
      if (!(is >> r[0] >> r[1] >> r[2]))
        throw ValidationError("config field `" + key + "`: want three integers");
      return r;
    });
  }
  void get_kernel(const std::string& key, KernelSize& out) {
    get(key, out, [](const std::string& s) { return parse_kernel(s); });
  }
  void get_reals(const std::string& key, std::vector<double>& out) {
    get(key, out, [](const std::string& s) {
      std::vector<double> r;
      std::istringstream is(s);
      double v;
      while (is >> v) r.push_back(v);
      if (r.empty()) throw std::runtime_error("empty list");
      return r;
    });
  }

  void finish(const std::string& what) const {
    for (const auto& [key, value] : kv_)
      if (!consumed_.count(key))
        throw ValidationError("unknown " + what + " key: " + key);
  }

 private:
  std::map<std::string, std::string> kv_;
  std::set<std::string> consumed_;
};

}  // namespace kv

// ---------------------------------------------------------------------------
// Experiment config <-> text
// ---------------------------------------------------------------------------

inline void apply_model_keys(kv::Extractor& ex, SegModelConfig& m,
                             const std::string& prefix) {
  ex.get_int(prefix + "in_channels", m.in_channels);
  ex.get_int(prefix + "n_classes", m.n_classes);
  ex.get_int(prefix + "base_width", m.base_width);
  ex.get_int(prefix + "depth", m.depth);
  ex.get_real(prefix + "dropout_rate", m.dropout_rate);
  ex.get_kernel(prefix + "first_kernel", m.first_kernel);
  ex.get_kernel(prefix + "body_kernel", m.body_kernel);
  ex.get_int(prefix + "skip_connections", m.skip_connections);
  ex.get_bool(prefix + "asymmetric", m.asymmetric);
}

inline void apply_recipe_keys(kv::Extractor& ex, PhantomRecipe& r,
                              const std::string& prefix) {
  ex.get_shape(prefix + "shape", r.shape);
  ex.get_int(prefix + "n_classes", r.n_classes);
  ex.get_int(prefix + "blob_count_min", r.blob_count_min);
  ex.get_int(prefix + "blob_count_max", r.blob_count_max);
  ex.get_real(prefix + "radius_min", r.radius_min);
  ex.get_real(prefix + "radius_max", r.radius_max);
  ex.get_reals(prefix + "class_means", r.class_mean);
  ex.get_reals(prefix + "class_stds", r.class_std);
  ex.get_real(prefix + "class_mean_jitter", r.class_mean_jitter);
  ex.get_real(prefix + "noise_std", r.noise_std);
  ex.get_real(prefix + "gamma", r.contrast_gamma);
  ex.get_real(prefix + "lesion_prob", r.lesion_prob);
  ex.get_real(prefix + "lesion_mean", r.lesion_mean);
  ex.get_real(prefix + "smoothing", r.smoothing);
}

inline ExperimentConfig experiment_config_from(
    const std::map<std::string, std::string>& raw) {
  kv::Extractor ex(raw);
  ExperimentConfig c;
  TrainConfig& t = c.train;

  std::string mode_str = to_string(t.mode), fusion_str = to_string(t.fusion);
  std::string blend_str = "uniform_average";
  ex.get_string("mode", mode_str);
  t.mode = split_mode_from(mode_str);
  ex.get_u64("seed", t.seed);
  ex.get_int("n_views", t.n_views);
  ex.get_real("lambda_cot", t.lambda_cot);
  ex.get_int("mc_samples", t.mc_samples);
  ex.get_int("labeled_batch", t.labeled_batch);
  ex.get_int("unlabeled_batch", t.unlabeled_batch);
  ex.get_real("lr_stage1", t.lr_stage1);
  ex.get_real("lr_stage2", t.lr_stage2);
  ex.get_real("momentum", t.momentum);
  ex.get_real("weight_decay", t.weight_decay);
  ex.get_int("iters_stage1", t.iters_stage1);
  ex.get_int("iters_stage2", t.iters_stage2);
  ex.get_int("self_train_refresh", t.self_train_refresh);
  ex.get_string("fusion", fusion_str);
  t.fusion = fusion_rule_from(fusion_str);
  ex.get_int("probe_interval", t.probe_interval);
  ex.get_real("confidence_eps", t.confidence_eps);
  ex.get_shape("patch.size", t.patch.size);
  ex.get_real("patch.fg_ratio", t.patch.fg_ratio);
  ex.get_shape("window.size", t.window.size);
  ex.get_shape("window.stride", t.window.stride);
  ex.get_string("window.blend", blend_str);
  if (blend_str != "uniform_average")
    throw ValidationError("window.blend supports only uniform_average");
  apply_model_keys(ex, t.model, "model.");
  apply_recipe_keys(ex, c.recipe, "recipe.");
  ex.get_int("data.n_train", c.n_train);
  ex.get_int("data.n_heldout", c.n_heldout);
  ex.get_real("data.labeled_fraction", c.labeled_fraction);
  ex.get_u64("data.seed", c.data_seed);
  ex.get_bool("data.apply_shift", c.apply_shift);
  ex.get_real("data.shift.gamma_delta", c.shift.gamma_delta);
  ex.get_real("data.shift.noise_delta", c.shift.noise_delta);
  ex.get_real("data.shift.lesion_prob_delta", c.shift.lesion_prob_delta);
  ex.get_int("data.n_target_train", c.n_target_train);
  ex.get_string("data.load_dir", c.load_dir);
  ex.get_string("data.source_checkpoints", c.source_checkpoints);
  ex.finish("config");

  if (t.model.n_classes != c.recipe.n_classes)
    throw ValidationError("model.n_classes must equal recipe.n_classes");
  if (c.n_train < 1 || c.n_heldout < 1)
    throw ValidationError("data.n_train and data.n_heldout must be >= 1");
  if (!(c.labeled_fraction > 0.0 && c.labeled_fraction <= 1.0))
    throw ValidationError("data.labeled_fraction must be in (0, 1]");
  if (t.mode == SplitMode::UDA_NO_SOURCE && c.source_checkpoints.empty())
    throw ValidationError(
        "uda_no_source requires data.source_checkpoints (a pretrained source model)");
  if ((t.mode == SplitMode::UDA || t.mode == SplitMode::UDA_NO_SOURCE) &&
      !c.apply_shift)
    throw ValidationError("uda modes expect data.apply_shift = 1");
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  return experiment_config_from(kv::parse_file(path));
}

inline std::string shape_str(const Shape3& s) {
  return std::to_string(s[0]) + " " + std::to_string(s[1]) + " " +
         std::to_string(s[2]);
}

inline std::string kernel_str(const KernelSize& k) {
  return std::to_string(k.d) + "x" + std::to_string(k.h) + "x" + std::to_string(k.w);
}

inline std::string reals_str(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += format_real(v[i]);
  }
  return s;
}

// Canonical form: every key materialized (defaults included), sorted, values
// normalized. Field order and comments in the source file cannot affect it.
inline std::string canonical_text(const ExperimentConfig& c) {
  std::map<std::string, std::string> kv;
  const TrainConfig& t = c.train;
  kv["mode"] = to_string(t.mode);
  kv["seed"] = std::to_string(t.seed);
  kv["n_views"] = std::to_string(t.n_views);
  kv["lambda_cot"] = format_real(t.lambda_cot);
  kv["mc_samples"] = std::to_string(t.mc_samples);
  kv["labeled_batch"] = std::to_string(t.labeled_batch);
  kv["unlabeled_batch"] = std::to_string(t.unlabeled_batch);
  kv["lr_stage1"] = format_real(t.lr_stage1);
  kv["lr_stage2"] = format_real(t.lr_stage2);
  kv["momentum"] = format_real(t.momentum);
  kv["weight_decay"] = format_real(t.weight_decay);
  kv["iters_stage1"] = std::to_string(t.iters_stage1);
  kv["iters_stage2"] = std::to_string(t.iters_stage2);
  kv["self_train_refresh"] = std::to_string(t.self_train_refresh);
  kv["fusion"] = to_string(t.fusion);
  kv["probe_interval"] = std::to_string(t.probe_interval);
  kv["confidence_eps"] = format_real(t.confidence_eps);
  kv["patch.size"] = shape_str(t.patch.size);
  kv["patch.fg_ratio"] = format_real(t.patch.fg_ratio);
  kv["window.size"] = shape_str(t.window.size);
  kv["window.stride"] = shape_str(t.window.stride);
  kv["window.blend"] = "uniform_average";
  kv["model.in_channels"] = std::to_string(t.model.in_channels);
  kv["model.n_classes"] = std::to_string(t.model.n_classes);
  kv["model.base_width"] = std::to_string(t.model.base_width);
  kv["model.depth"] = std::to_string(t.model.depth);
  kv["model.dropout_rate"] = format_real(t.model.dropout_rate);
  kv["model.first_kernel"] = kernel_str(t.model.first_kernel);
  kv["model.body_kernel"] = kernel_str(t.model.body_kernel);
  kv["model.skip_connections"] = std::to_string(t.model.skip_connections);
  kv["model.asymmetric"] = t.model.asymmetric ? "1" : "0";
  kv["recipe.shape"] = shape_str(c.recipe.shape);
  kv["recipe.n_classes"] = std::to_string(c.recipe.n_classes);
  kv["recipe.blob_count_min"] = std::to_string(c.recipe.blob_count_min);
  kv["recipe.blob_count_max"] = std::to_string(c.recipe.blob_count_max);
  kv["recipe.radius_min"] = format_real(c.recipe.radius_min);
  kv["recipe.radius_max"] = format_real(c.recipe.radius_max);
  kv["recipe.class_means"] = reals_str(c.recipe.class_mean);
  kv["recipe.class_stds"] = reals_str(c.recipe.class_std);
  kv["recipe.class_mean_jitter"] = format_real(c.recipe.class_mean_jitter);
  kv["recipe.noise_std"] = format_real(c.recipe.noise_std);
  kv["recipe.gamma"] = format_real(c.recipe.contrast_gamma);
  kv["recipe.lesion_prob"] = format_real(c.recipe.lesion_prob);
  kv["recipe.lesion_mean"] = format_real(c.recipe.lesion_mean);
  kv["recipe.smoothing"] = format_real(c.recipe.smoothing);
  kv["data.n_train"] = std::to_string(c.n_train);
  kv["data.n_heldout"] = std::to_string(c.n_heldout);
  kv["data.labeled_fraction"] = format_real(c.labeled_fraction);
  kv["data.seed"] = std::to_string(c.data_seed);
  kv["data.apply_shift"] = c.apply_shift ? "1" : "0";
  kv["data.shift.gamma_delta"] = format_real(c.shift.gamma_delta);
  kv["data.shift.noise_delta"] = format_real(c.shift.noise_delta);
  kv["data.shift.lesion_prob_delta"] = format_real(c.shift.lesion_prob_delta);
  kv["data.n_target_train"] = std::to_string(c.n_target_train);
  kv["data.load_dir"] = c.load_dir;
  kv["data.source_checkpoints"] = c.source_checkpoints;

  std::string out;
  for (const auto& [k, v] : kv) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

inline std::string config_hash(const ExperimentConfig& c) {
  return hex64(fnv1a(canonical_text(c)));
}

// ---------------------------------------------------------------------------
// synth-data recipe files: recipe.* keys plus the dataset size and seed.
// ---------------------------------------------------------------------------

struct SynthDataSpec {
  PhantomRecipe recipe;
  int n_cases = 10;
  std::uint64_t base_seed = 0;
  bool apply_shift = false;
  DomainShift shift;
};

inline SynthDataSpec load_synth_spec(const std::string& path) {
  kv::Extractor ex(kv::parse_file(path));
  SynthDataSpec s;
  apply_recipe_keys(ex, s.recipe, "recipe.");
  ex.get_int("n_cases", s.n_cases);
  ex.get_u64("base_seed", s.base_seed);
  ex.get_bool("apply_shift", s.apply_shift);
  ex.get_real("shift.gamma_delta", s.shift.gamma_delta);
  ex.get_real("shift.noise_delta", s.shift.noise_delta);
  ex.get_real("shift.lesion_prob_delta", s.shift.lesion_prob_delta);
  ex.finish("recipe");
  if (s.n_cases < 1) throw ValidationError("n_cases must be >= 1");
  validate_recipe(s.recipe);
  return s;
}

}  // namespace umct

#endif  // UMCT_CONFIG_HPP
