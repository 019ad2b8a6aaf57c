#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "umct/config.hpp"
#include "umct/experiment.hpp"

using namespace umct;

namespace {

const char* kBaseConfig = R"(
# training setup
mode = ssl
seed = 3
n_views = 3
labeled_batch = 1
unlabeled_batch = 4
iters_stage1 = 2
iters_stage2 = 2
model.n_classes = 2
model.base_width = 2
model.depth = 1
model.first_kernel = 3x3x3
patch.size = 8 8 8
window.size = 8 8 8
window.stride = 8 8 8
recipe.shape = 16 16 16
recipe.blob_count_min = 1
recipe.blob_count_max = 2
recipe.radius_min = 2.5
recipe.radius_max = 4.5
data.n_train = 4
data.n_heldout = 2
data.labeled_fraction = 0.5
)";

std::string shuffled_with_comments() {
  return R"(
data.n_heldout = 2
recipe.radius_max = 4.5
window.stride = 8 8 8
# a comment in the middle
model.depth = 1
iters_stage2 = 2
recipe.blob_count_max = 2
data.labeled_fraction = 0.5   # inline comment
seed = 3
n_views = 3
model.base_width = 2
recipe.shape = 16 16 16
patch.size = 8 8 8
mode = ssl
labeled_batch = 1
recipe.blob_count_min = 1
window.size = 8 8 8
iters_stage1 = 2
recipe.radius_min = 2.5
model.first_kernel = 3x3x3
data.n_train = 4
model.n_classes = 2
unlabeled_batch = 4
)";
}

}  // namespace

TEST_CASE("config: field order and comments do not affect the hash") {
  auto a = experiment_config_from(kv::parse_text(kBaseConfig));
  auto b = experiment_config_from(kv::parse_text(shuffled_with_comments()));
  CHECK(config_hash(a) == config_hash(b));
  CHECK(canonical_text(a) == canonical_text(b));

  auto c = a;
  c.train.lambda_cot = 0.3;
  CHECK(config_hash(a) != config_hash(c));
}

TEST_CASE("config: unknown and duplicate keys are rejected with the key name") {
  auto kv_map = kv::parse_text(std::string(kBaseConfig) + "\nlambda_cott = 0.2\n");
  CHECK_THROWS_WITH_AS(experiment_config_from(kv_map),
                       doctest::Contains("lambda_cott"), ValidationError);
  CHECK_THROWS_WITH_AS(kv::parse_text("seed = 1\nseed = 2\n"),
                       doctest::Contains("duplicate"), ValidationError);
  CHECK_THROWS_AS(kv::parse_text("not a key value line\n"), ValidationError);
}

TEST_CASE("config: malformed field values name the field") {
  auto text = std::string(kBaseConfig) + "\nlambda_cot = abc\n";
  CHECK_THROWS_WITH_AS(experiment_config_from(kv::parse_text(text)),
                       doctest::Contains("lambda_cot"), ValidationError);
}

TEST_CASE("config: mode-dependent validation") {
  auto text = std::string(kBaseConfig);
  text.replace(text.find("mode = ssl"), 10, "mode = uda");
  // UDA without apply_shift is rejected.
  CHECK_THROWS_AS(experiment_config_from(kv::parse_text(text)), ValidationError);

  auto no_src = std::string(kBaseConfig);
  no_src.replace(no_src.find("mode = ssl"), 10, "mode = uda_no_source");
  no_src += "data.apply_shift = 1\n";
  CHECK_THROWS_WITH_AS(experiment_config_from(kv::parse_text(no_src)),
                       doctest::Contains("source_checkpoints"), ValidationError);
}

TEST_CASE("run_experiment: determinism, artifacts, and append-only run dirs") {
  namespace fs = std::filesystem;
  auto root = fs::temp_directory_path() / "umct_run_test";
  fs::remove_all(root);

  auto cfg = experiment_config_from(kv::parse_text(kBaseConfig));
  auto art1 = run_experiment(cfg, (root / "a").string(), false, true);
  auto art2 = run_experiment(cfg, (root / "b").string(), false, true);

  auto slurp = [](const std::string& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  };
  // Identical config + seed: identical summary and metrics (no timestamps).
  CHECK(slurp(art1.run_dir + "/eval/summary.json") ==
        slurp(art2.run_dir + "/eval/summary.json"));
  CHECK(slurp(art1.run_dir + "/metrics.csv") == slurp(art2.run_dir + "/metrics.csv"));

  for (const char* f : {"manifest.json", "config.canonical.txt", "metrics.csv",
                        "eval/per_case.csv", "eval/summary.json",
                        "checkpoints/view0.ckpt", "checkpoints/view2.ckpt"})
    CHECK(fs::exists(fs::path(art1.run_dir) / f));

  // Same hash, same root: refuses to overwrite unless forced.
  CHECK_THROWS_WITH_AS(run_experiment(cfg, (root / "a").string(), false, true),
                       doctest::Contains("append-only"), ValidationError);
  CHECK_NOTHROW(run_experiment(cfg, (root / "a").string(), true, true));

  // Ensemble is at least the weakest single view on this suite.
  double min_view = *std::min_element(art1.summary.per_view_dsc.begin(),
                                      art1.summary.per_view_dsc.end());
  CHECK(art1.summary.ensemble_average_dsc >= min_view - 1e-12);
  fs::remove_all(root);
}

TEST_CASE("run_experiment: supervised_only skips stage 2 in the metrics CSV") {
  namespace fs = std::filesystem;
  auto root = fs::temp_directory_path() / "umct_sup_test";
  fs::remove_all(root);
  auto text = std::string(kBaseConfig);
  text.replace(text.find("mode = ssl"), 10, "mode = supervised_only");
  text.replace(text.find("n_views = 3"), 11, "n_views = 1");
  auto cfg = experiment_config_from(kv::parse_text(text));
  auto art = run_experiment(cfg, root.string(), false, true);

  std::ifstream is(art.run_dir + "/metrics.csv");
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line))
    CHECK(line.find(",1,") != std::string::npos);  // stage column is always 1
  fs::remove_all(root);
}

TEST_CASE("synth-data spec files parse with strict keys") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "umct_spec_test";
  fs::create_directories(dir);
  auto path = (dir / "recipe.txt").string();
  write_text_file(path,
                  "recipe.shape = 16 16 16\nrecipe.radius_min = 2\n"
                  "recipe.radius_max = 4\nn_cases = 3\nbase_seed = 5\n");
  auto spec = load_synth_spec(path);
  CHECK(spec.n_cases == 3);
  CHECK(spec.recipe.shape == Shape3{16, 16, 16});

  write_text_file(path, "recipe.shape = 16 16 16\nn_case = 3\n");
  CHECK_THROWS_WITH_AS(load_synth_spec(path), doctest::Contains("n_case"),
                       ValidationError);
  fs::remove_all(dir);
}
