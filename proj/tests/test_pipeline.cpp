#include <doctest.h>

#include "umct/pipeline.hpp"

using namespace umct;

namespace {

Case<float> case_from(Volume3D<float> v) {
  Case<float> c;
  c.id = "c";
  c.volume = std::move(v);
  return c;
}

SegModelConfig small_config(int depth = 1) {
  SegModelConfig c;
  c.n_classes = 2;
  c.base_width = 2;
  c.depth = depth;
  c.dropout_rate = 0.0;
  c.first_kernel = {3, 3, 3};
  return c;
}

// Zeroed weights with a fixed head bias: the network emits the same
// probability vector at every voxel, whatever the input.
ViewModel<float> constant_model(float bias0, float bias1) {
  auto m = build_model<float>(small_config(), 0);
  m.params.setZero();
  m.params[m.layout.head.bias_offset] = bias0;
  m.params[m.layout.head.bias_offset + 1] = bias1;
  return m;
}

}  // namespace

TEST_CASE("resample_isotropic: identity resample leaves shape and values") {
  Volume3D<float> v({4, 5, 6});
  Rng rng(1);
  for (Index i = 0; i < v.data.size(); ++i) v.data[i] = float(rng.next_double());
  auto out = resample_isotropic(case_from(v), 1.0);
  CHECK(out.volume.shape == v.shape);
  CHECK((out.volume.data - v.data).abs().maxCoeff() < 1e-6f);
}

TEST_CASE("resample_isotropic: constant volumes stay constant") {
  Volume3D<float> v({5, 5, 5}, 3.25f);
  v.spacing = {0.7, 1.9, 1.3};
  auto out = resample_isotropic(case_from(v), 1.0);
  CHECK((out.volume.data - 3.25f).abs().maxCoeff() < 1e-6f);
  CHECK(out.volume.spacing == Eigen::Vector3d{1.0, 1.0, 1.0});
}

TEST_CASE("resample_isotropic: 2x downsample of a ramp hits analytic midpoints") {
  // Ramp along W: value = 2*w + 1. Output voxel i samples input coordinate
  // 2i + 0.5, so the closed form is 2*(2i + 0.5) + 1 = 4i + 2.
  Volume3D<float> v({1, 1, 8});
  for (Index w = 0; w < 8; ++w) v.at(0, 0, w) = float(2 * w + 1);
  auto c = case_from(v);
  c.label = LabelMap({1, 1, 8}, 8);
  for (Index w = 0; w < 8; ++w) c.label->at(0, 0, w) = std::int32_t(w);
  auto out = resample_isotropic(c, 2.0);
  REQUIRE(out.volume.shape == Shape3{1, 1, 4});  // axes with extent<1mm round up below
  for (Index i = 0; i < 4; ++i)
    CHECK(out.volume.at(0, 0, i) == doctest::Approx(4.0 * double(i) + 2.0));
  // Nearest-neighbor labels: round(2i + 0.5) = 2i + 1.
  for (Index i = 0; i < 4; ++i) CHECK(out.label->at(0, 0, i) == 2 * i + 1);
}

TEST_CASE("resample_isotropic: degenerate axis is an error") {
  Volume3D<float> v({1, 8, 8});
  v.spacing = {0.4, 1.0, 1.0};  // 1 * 0.4 / 1.0 rounds to 0
  CHECK_THROWS_WITH_AS(resample_isotropic(case_from(v), 1.0),
                       doctest::Contains("degenerate-output"), ValidationError);
}

TEST_CASE("normalize_intensity: constant maps to zeros, two-level to +-1") {
  Volume3D<float> c({3, 3, 3}, 7.0f);
  CHECK((normalize_intensity(c).data == 0.0f).all());

  Volume3D<float> v({1, 1, 4});
  v.data << 0, 2, 0, 2;
  auto out = normalize_intensity(v);
  CHECK(out.at(0, 0, 0) == doctest::Approx(-1.0));
  CHECK(out.at(0, 0, 1) == doctest::Approx(1.0));
}

TEST_CASE("normalize_intensity: two-pass statistics oracle on random volumes") {
  Rng rng(3);
  Volume3D<double> v({6, 5, 4});
  for (Index i = 0; i < v.data.size(); ++i)
    v.data[i] = 50.0 + 12.0 * rng.next_normal();
  auto out = normalize_intensity(v);
  double mean = 0;
  for (Index i = 0; i < out.data.size(); ++i) mean += out.data[i];
  mean /= double(out.data.size());
  double var = 0;
  for (Index i = 0; i < out.data.size(); ++i)
    var += (out.data[i] - mean) * (out.data[i] - mean);
  var /= double(out.data.size());
  CHECK(std::abs(mean) < 1e-5);
  CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-5);
}

TEST_CASE("sample_patch: fg_ratio 1 with one foreground voxel pins the center") {
  Case<float> c;
  c.volume = Volume3D<float>({16, 16, 16}, 0.0f);
  c.label = LabelMap({16, 16, 16}, 2, 0);
  c.label->at(9, 10, 11) = 1;
  PatchSpec spec{{4, 4, 4}, 1.0};
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = sample_patch(c, spec, rng);
    CHECK(p.center == std::array<Index, 3>{9, 10, 11});
    CHECK(p.fg_centered);
    CHECK((p.label->data == 1).any());  // the voxel lies inside the patch
  }
}

TEST_CASE("sample_patch: fg_ratio 0 samples uniformly; no-foreground falls back") {
  Case<float> c;
  c.volume = Volume3D<float>({8, 8, 8}, 0.0f);
  c.label = LabelMap({8, 8, 8}, 2, 0);  // no foreground anywhere
  PatchSpec spec{{4, 4, 4}, 1.0};       // wants fg, none exists
  Rng rng(6);
  CHECK_NOTHROW(sample_patch(c, spec, rng));

  // fg_ratio 0: centers cover the volume roughly uniformly.
  spec.fg_ratio = 0.0;
  double mean_d = 0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) mean_d += double(sample_patch(c, spec, rng).center[0]);
  CHECK(mean_d / n == doctest::Approx(3.5).epsilon(0.05));
}

TEST_CASE("sample_patch: fg-centered fraction over 10k draws is within [0.47, 0.53]") {
  Case<float> c;
  c.volume = Volume3D<float>({16, 16, 16}, 0.0f);
  c.label = LabelMap({16, 16, 16}, 2, 0);
  c.label->at(8, 8, 8) = 1;  // tiny foreground so uniform draws rarely hit it
  PatchSpec spec{{4, 4, 4}, 0.5};
  Rng rng(7);
  auto fg = foreground_voxels(*c.label);
  int hits = 0;
  for (int i = 0; i < 10000; ++i)
    hits += sample_patch(c, spec, rng, &fg).fg_centered ? 1 : 0;
  double frac = hits / 10000.0;
  CHECK(frac >= 0.47);
  CHECK(frac <= 0.53);
}

TEST_CASE("sample_patch zero-pads out-of-bounds regions") {
  Case<float> c;
  c.volume = Volume3D<float>({6, 6, 6}, 1.0f);
  c.label = LabelMap({6, 6, 6}, 2, 1);
  PatchSpec spec{{6, 6, 6}, 1.0};
  Rng rng(8);
  auto p = sample_patch(c, spec, rng);  // center is some fg voxel; padding likely
  // Wherever the patch fell outside, volume is 0 and label is 0; inside it is 1.
  CHECK(p.volume.data.minCoeff() == 0.0f);
  for (Index i = 0; i < p.volume.data.size(); ++i) {
    bool inside = p.volume.data[i] == 1.0f;
    CHECK(p.label->data[i] == (inside ? 1 : 0));
  }
}

TEST_CASE("window_starts oracle: every voxel covered at least once") {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    Index extent = 1 + Index(rng.next_below(40));
    Index size = 1 + Index(rng.next_below(16));
    Index stride = 1 + Index(rng.next_below(std::uint64_t(size)));
    auto starts = detail::window_starts(extent, size, stride);
    std::vector<int> covered(std::size_t(extent), 0);
    for (Index s : starts)
      for (Index i = s; i < std::min(extent, s + size); ++i)
        covered[std::size_t(i)] = 1;
    for (int c : covered) REQUIRE(c == 1);
    if (extent > size)
      for (Index s : starts) REQUIRE(s + size <= extent);  // clamped, not padded
  }
}

TEST_CASE("sliding_window_predict: constant model gives the constant everywhere") {
  auto m = constant_model(0.3f, 1.1f);
  Case<float> c;
  c.volume = Volume3D<float>({12, 10, 8});
  Rng rng(10);
  for (Index i = 0; i < c.volume.data.size(); ++i)
    c.volume.data[i] = float(rng.next_normal());

  WindowSpec w{{4, 4, 4}, {2, 3, 4}, BlendMode::UniformAverage};
  auto out = sliding_window_predict(m, c, w);
  CHECK(out.shape == c.volume.shape);
  const double q0 = 1.0 / (1.0 + std::exp(1.1 - 0.3));
  for (Index v = 0; v < out.num_voxels(); ++v)
    REQUIRE(std::abs(double(out.at(0, v)) - q0) < 1e-6);
  CHECK_NOTHROW(validate_prob(out));
}

TEST_CASE("sliding_window_predict: volume smaller than window pads and crops") {
  auto m = constant_model(0.0f, 0.5f);
  Case<float> c;
  c.volume = Volume3D<float>({3, 3, 3}, 1.0f);
  WindowSpec w{{4, 4, 4}, {4, 4, 4}};
  auto out = sliding_window_predict(m, c, w);
  CHECK(out.shape == Shape3{3, 3, 3});
  CHECK_NOTHROW(validate_prob(out));
}

TEST_CASE("sliding_window_predict: stride == size concatenates window predictions") {
  auto m = build_model<float>(small_config(), 77);
  Case<float> c;
  c.volume = Volume3D<float>({8, 4, 4});
  Rng rng(11);
  for (Index i = 0; i < c.volume.data.size(); ++i)
    c.volume.data[i] = float(rng.next_normal());

  WindowSpec w{{4, 4, 4}, {4, 4, 4}};
  auto out = sliding_window_predict(m, c, w);

  for (int half = 0; half < 2; ++half) {
    Volume3D<float> patch({4, 4, 4});
    for (Index d = 0; d < 4; ++d)
      for (Index h = 0; h < 4; ++h)
        for (Index x = 0; x < 4; ++x)
          patch.at(d, h, x) = c.volume.at(d + 4 * half, h, x);
    auto direct = predict(m, patch);
    for (Index d = 0; d < 4; ++d)
      for (Index h = 0; h < 4; ++h)
        for (Index x = 0; x < 4; ++x)
          for (int cl = 0; cl < 2; ++cl)
            REQUIRE(std::abs(out.at(cl, (d + 4 * half) * 16 + h * 4 + x) -
                             direct.at(cl, (d * 4 + h) * 4 + x)) < 1e-6f);
  }
}

TEST_CASE("multi_view_predict matches the per-view contract and output shapes") {
  auto views = standard_view_set(3);
  std::vector<ViewModel<float>> models;
  for (std::size_t i = 0; i < views.size(); ++i)
    models.push_back(build_model<float>(small_config(), 100 + std::uint64_t(i),
                                        views.transforms[i]));
  Case<float> c;
  c.volume = Volume3D<float>({4, 6, 8});
  Rng rng(12);
  for (Index i = 0; i < c.volume.data.size(); ++i)
    c.volume.data[i] = float(rng.next_normal());
  WindowSpec w{{4, 4, 4}, {2, 2, 2}};

  auto preds = multi_view_predict(models, views, c, w);
  REQUIRE(preds.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(preds[i].shape == c.volume.shape);
    // Recompute element i by hand from the contract.
    Case<float> tc;
    tc.volume = apply(views.transforms[i], c.volume);
    auto manual = apply(inverse(views.transforms[i]),
                        sliding_window_predict(models[i], tc, w));
    REQUIRE((preds[i].data == manual.data).all());
  }
}

TEST_CASE("multi_view_predict: identical models on identical views agree") {
  // Bypasses the no-duplicate ViewSet guard on purpose: with every view the
  // identity and shared parameters, all outputs must be bit-identical.
  ViewSet vs;
  vs.transforms = {identity_transform(), identity_transform(), identity_transform()};
  vs.names = {"a", "b", "c"};
  auto m = build_model<float>(small_config(), 55);
  std::vector<ViewModel<float>> models{m, m, m};
  Case<float> c;
  c.volume = Volume3D<float>({4, 4, 4}, 0.25f);
  WindowSpec w{{4, 4, 4}, {4, 4, 4}};
  auto preds = multi_view_predict(models, vs, c, w);
  CHECK((preds[1].data == preds[0].data).all());
  CHECK((preds[2].data == preds[0].data).all());
}

TEST_CASE("ensemble: single prediction reduces to argmax in both modes") {
  ProbMap<float> p({2, 2, 2}, 3);
  Rng rng(13);
  for (Index v = 0; v < 8; ++v) {
    float a = float(rng.next_double()), b = float(rng.next_double()),
          c = float(rng.next_double());
    float s = a + b + c;
    p.at(0, v) = a / s;
    p.at(1, v) = b / s;
    p.at(2, v) = c / s;
  }
  auto avg = ensemble<float>({p}, EnsembleMode::Average);
  auto maj = ensemble<float>({p}, EnsembleMode::Majority);
  auto direct = argmax_map(p);
  CHECK((avg.data == direct.data).all());
  CHECK((maj.data == direct.data).all());
}

TEST_CASE("ensemble: 2:1 one-hot vote picks the majority class in both modes") {
  LabelMap l1({1, 1, 1}, 2, 1), l0({1, 1, 1}, 2, 0);
  auto p1 = one_hot<float>(l1);
  auto p0 = one_hot<float>(l0);
  CHECK(ensemble<float>({p1, p1, p0}, EnsembleMode::Average).data[0] == 1);
  CHECK(ensemble<float>({p1, p1, p0}, EnsembleMode::Majority).data[0] == 1);
}

TEST_CASE("ensemble: soft case where average and majority disagree") {
  auto mk = [](float c0) {
    ProbMap<float> p({1, 1, 1}, 2);
    p.at(0, 0) = c0;
    p.at(1, 0) = 1.0f - c0;
    return p;
  };
  std::vector<ProbMap<float>> preds{mk(0.4f), mk(0.4f), mk(0.9f)};
  // Mean of class 0 is 0.567: average mode picks class 0.
  CHECK(ensemble(preds, EnsembleMode::Average).data[0] == 0);
  // Argmaxes are 1, 1, 0: majority picks class 1.
  CHECK(ensemble(preds, EnsembleMode::Majority).data[0] == 1);
}

TEST_CASE("ensemble rejects an empty list; specs validate their invariants") {
  std::vector<ProbMap<float>> empty;
  CHECK_THROWS_AS(ensemble(empty, EnsembleMode::Average), ValidationError);
  CHECK_THROWS_AS(validate_window_spec(WindowSpec{{4, 4, 4}, {5, 4, 4}}),
                  ValidationError);
  CHECK_THROWS_AS(validate_window_spec(WindowSpec{{4, 4, 4}, {0, 4, 4}}),
                  ValidationError);
  PatchSpec p{{6, 4, 4}, 0.5};
  CHECK_THROWS_AS(validate_patch_spec(p, 2), ValidationError);  // 6 % 4 != 0
  CHECK_NOTHROW(validate_patch_spec(p, 1));
}
