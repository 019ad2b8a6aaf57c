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

#ifndef UMCT_BACKBONE_HPP
#define UMCT_BACKBONE_HPP

#include <string>
#include <vector>

#include "umct/core.hpp"
#include "umct/views.hpp"

namespace umct {

struct KernelSize {
  int d = 1, h = 1, w = 1;
  int taps() const { return d * h * w; }
  bool operator==(const KernelSize&) const = default;
};

// Miniature encoder-decoder with the asymmetric-kernel idea: in-plane-heavy
// first kernel and n x n x 1 body kernels so each view branch, fed a
// differently permuted volume, learns features biased along a different
// canonical axis. A symmetric variant sits behind `asymmetric = false`.
struct SegModelConfig {
  int in_channels = 1;
  int n_classes = 2;
  int base_width = 8;
  int depth = 4;
  double dropout_rate = 0.1;
  KernelSize first_kernel{7, 7, 3};
  KernelSize body_kernel{3, 3, 1};
  int skip_connections = 3;
  bool asymmetric = true;

  int width_at(int level) const { return base_width << level; }
  bool skip_enabled(int level) const { return level < skip_connections; }
};

inline void validate_model_config(const SegModelConfig& c) {
  if (c.in_channels != 1)
    throw ValidationError("only single-channel input volumes are supported");
  if (c.n_classes < 2) throw ValidationError("model needs n_classes >= 2");
  if (c.base_width < 1) throw ValidationError("base_width must be >= 1");
  if (c.depth < 1 || c.depth > 6)
    throw ValidationError("depth must be in [1, 6]");
  if (!(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0))
    throw ValidationError("dropout_rate must be in [0, 1)");
  for (const KernelSize& k : {c.first_kernel, c.body_kernel})
    for (int e : {k.d, k.h, k.w})
      if (e < 1 || e % 2 == 0)
        throw ValidationError("kernel extents must be odd and positive");
  if (c.asymmetric && c.body_kernel.w != 1)
    throw ValidationError("asymmetric mode requires body kernel with last extent 1");
  if (c.skip_connections < 0)
    throw ValidationError("skip_connections must be nonnegative");
}

// Canonical text form of the config; hashed into checkpoints so a loaded
// parameter vector can never silently pair with the wrong architecture.
inline std::string canonical_config_text(const SegModelConfig& c) {
  std::string s;
  auto kv = [&s](const char* k, const std::string& v) {
    s += k;
    s += '=';
    s += v;
    s += '\n';
  };
  kv("asymmetric", c.asymmetric ? "1" : "0");
  kv("base_width", std::to_string(c.base_width));
  kv("body_kernel", std::to_string(c.body_kernel.d) + "x" +
                        std::to_string(c.body_kernel.h) + "x" +
                        std::to_string(c.body_kernel.w));
  kv("depth", std::to_string(c.depth));
  kv("dropout_rate", format_real(c.dropout_rate));
  kv("first_kernel", std::to_string(c.first_kernel.d) + "x" +
                         std::to_string(c.first_kernel.h) + "x" +
                         std::to_string(c.first_kernel.w));
  kv("in_channels", std::to_string(c.in_channels));
  kv("n_classes", std::to_string(c.n_classes));
  kv("skip_connections", std::to_string(c.skip_connections));
  return s;
}

// ---------------------------------------------------------------------------
// Parameter layout: one flat vector, conv weights stored as column-major
// (taps * cin) x cout blocks followed by the bias. SGD, checkpoints and
// finite-difference probes all work on the flat view.
// ---------------------------------------------------------------------------

struct ParamBlock {
  Index offset = 0;
  Index rows = 0;  // taps * cin
  Index cols = 0;  // cout
  Index bias_offset = 0;
  Index size() const { return rows * cols + cols; }
};

struct ParamLayout {
  ParamBlock stem;
  std::vector<ParamBlock> enc;
  std::vector<ParamBlock> dec;
  ParamBlock head;
  Index total = 0;
};

inline ParamLayout make_layout(const SegModelConfig& c) {
  ParamLayout l;
  Index off = 0;
  auto add = [&off](int cin, int cout, const KernelSize& k) {
    ParamBlock b;
    b.offset = off;
    b.rows = Index(k.taps()) * cin;
    b.cols = cout;
    b.bias_offset = b.offset + b.rows * b.cols;
    off += b.size();
    return b;
  };
  l.stem = add(c.in_channels, c.width_at(0), c.first_kernel);
  for (int s = 0; s < c.depth; ++s)
    l.enc.push_back(add(c.width_at(s), c.width_at(s + 1), c.body_kernel));
  l.dec.resize(c.depth);
  for (int s = c.depth - 1; s >= 0; --s)
    l.dec[s] = add(c.width_at(s + 1), c.width_at(s), c.body_kernel);
  l.head = add(c.width_at(0), c.n_classes, KernelSize{1, 1, 1});
  l.total = off;
  return l;
}

inline Index parameter_count(const SegModelConfig& c) { return make_layout(c).total; }

// ---------------------------------------------------------------------------
// Dense conv plumbing. Feature maps live as column-major (voxels x channels)
// matrices; convolution is im2col followed by a single GEMM.
// ---------------------------------------------------------------------------

namespace nn {

template <typename Scalar>
using FeatureMap = MatrixX<Scalar>;  // (num_voxels x channels)

inline Shape3 halved(const Shape3& s) { return {s[0] / 2, s[1] / 2, s[2] / 2}; }
inline Shape3 doubled(const Shape3& s) { return {s[0] * 2, s[1] * 2, s[2] * 2}; }

// col(v, (ci, od, oh, ow)) = in(v shifted by kernel offset, ci), zero padded.
template <typename Scalar>
void im2col(const FeatureMap<Scalar>& in, const Shape3& dims, const KernelSize& k,
            FeatureMap<Scalar>& col) {
  const Index D = dims[0], H = dims[1], W = dims[2];
  const Index cin = in.cols();
  col.setZero(D * H * W, cin * k.taps());
  const int pd = (k.d - 1) / 2, ph = (k.h - 1) / 2, pw = (k.w - 1) / 2;
  Index j = 0;
  for (Index ci = 0; ci < cin; ++ci) {
    const Scalar* src = in.col(ci).data();
    for (int od = 0; od < k.d; ++od) {
      const Index sd = od - pd;
      for (int oh = 0; oh < k.h; ++oh) {
        const Index sh = oh - ph;
        for (int ow = 0; ow < k.w; ++ow, ++j) {
          const Index sw = ow - pw;
          Scalar* dst = col.col(j).data();
          const Index w_lo = std::max<Index>(0, -sw);
          const Index w_hi = std::min<Index>(W, W - sw);
          if (w_lo >= w_hi) continue;
          for (Index d = std::max<Index>(0, -sd);
               d < std::min<Index>(D, D - sd); ++d) {
            for (Index h = std::max<Index>(0, -sh);
                 h < std::min<Index>(H, H - sh); ++h) {
              const Index dst_base = (d * H + h) * W;
              const Index src_base = ((d + sd) * H + (h + sh)) * W + sw;
              std::memcpy(dst + dst_base + w_lo, src + src_base + w_lo,
                          sizeof(Scalar) * static_cast<std::size_t>(w_hi - w_lo));
            }
          }
        }
      }
    }
  }
}

// Scatter-add transpose of im2col, for the data gradient.
template <typename Scalar>
void col2im(const FeatureMap<Scalar>& col, const Shape3& dims, const KernelSize& k,
            FeatureMap<Scalar>& out) {
  const Index D = dims[0], H = dims[1], W = dims[2];
  const Index cin = out.cols();
  out.setZero();
  const int pd = (k.d - 1) / 2, ph = (k.h - 1) / 2, pw = (k.w - 1) / 2;
  Index j = 0;
  for (Index ci = 0; ci < cin; ++ci) {
    Scalar* dst = out.col(ci).data();
    for (int od = 0; od < k.d; ++od) {
      const Index sd = od - pd;
      for (int oh = 0; oh < k.h; ++oh) {
        const Index sh = oh - ph;
        for (int ow = 0; ow < k.w; ++ow, ++j) {
          const Index sw = ow - pw;
          const Scalar* src = col.col(j).data();
          const Index w_lo = std::max<Index>(0, -sw);
          const Index w_hi = std::min<Index>(W, W - sw);
          if (w_lo >= w_hi) continue;
          for (Index d = std::max<Index>(0, -sd);
               d < std::min<Index>(D, D - sd); ++d) {
            for (Index h = std::max<Index>(0, -sh);
                 h < std::min<Index>(H, H - sh); ++h) {
              const Index col_base = (d * H + h) * W;
              const Index im_base = ((d + sd) * H + (h + sh)) * W + sw;
              for (Index w = w_lo; w < w_hi; ++w)
                dst[im_base + w] += src[col_base + w];
            }
          }
        }
      }
    }
  }
}

template <typename Scalar>
FeatureMap<Scalar> avgpool2(const FeatureMap<Scalar>& in, const Shape3& dims) {
  const Shape3 o = halved(dims);
  FeatureMap<Scalar> out(volume_of(o), in.cols());
  const Index H = dims[1], W = dims[2];
  for (Index c = 0; c < in.cols(); ++c) {
    const Scalar* src = in.col(c).data();
    Scalar* dst = out.col(c).data();
    Index n = 0;
    for (Index d = 0; d < o[0]; ++d)
      for (Index h = 0; h < o[1]; ++h)
        for (Index w = 0; w < o[2]; ++w, ++n) {
          Scalar acc = 0;
          for (Index dd = 0; dd < 2; ++dd)
            for (Index hh = 0; hh < 2; ++hh)
              for (Index ww = 0; ww < 2; ++ww)
                acc += src[((2 * d + dd) * H + 2 * h + hh) * W + 2 * w + ww];
          dst[n] = acc / Scalar(8);
        }
  }
  return out;
}

template <typename Scalar>
FeatureMap<Scalar> avgpool2_backward(const FeatureMap<Scalar>& dout,
                                     const Shape3& in_dims) {
  const Shape3 o = halved(in_dims);
  FeatureMap<Scalar> din(volume_of(in_dims), dout.cols());
  const Index H = in_dims[1], W = in_dims[2];
  for (Index c = 0; c < dout.cols(); ++c) {
    const Scalar* src = dout.col(c).data();
    Scalar* dst = din.col(c).data();
    Index n = 0;
    for (Index d = 0; d < o[0]; ++d)
      for (Index h = 0; h < o[1]; ++h)
        for (Index w = 0; w < o[2]; ++w, ++n) {
          const Scalar g = src[n] / Scalar(8);
          for (Index dd = 0; dd < 2; ++dd)
            for (Index hh = 0; hh < 2; ++hh)
              for (Index ww = 0; ww < 2; ++ww)
                dst[((2 * d + dd) * H + 2 * h + hh) * W + 2 * w + ww] = g;
        }
  }
  return din;
}

template <typename Scalar>
FeatureMap<Scalar> upsample2_nearest(const FeatureMap<Scalar>& in,
                                     const Shape3& in_dims) {
  const Shape3 o = doubled(in_dims);
  FeatureMap<Scalar> out(volume_of(o), in.cols());
  const Index H = in_dims[1], W = in_dims[2];
  for (Index c = 0; c < in.cols(); ++c) {
    const Scalar* src = in.col(c).data();
    Scalar* dst = out.col(c).data();
    Index n = 0;
    for (Index d = 0; d < o[0]; ++d)
      for (Index h = 0; h < o[1]; ++h)
        for (Index w = 0; w < o[2]; ++w, ++n)
          dst[n] = src[((d / 2) * H + h / 2) * W + w / 2];
  }
  return out;
}

template <typename Scalar>
FeatureMap<Scalar> upsample2_backward(const FeatureMap<Scalar>& dout,
                                      const Shape3& in_dims) {
  const Shape3 o = doubled(in_dims);
  FeatureMap<Scalar> din = FeatureMap<Scalar>::Zero(volume_of(in_dims), dout.cols());
  const Index H = in_dims[1], W = in_dims[2];
  for (Index c = 0; c < dout.cols(); ++c) {
    const Scalar* src = dout.col(c).data();
    Scalar* dst = din.col(c).data();
    Index n = 0;
    for (Index d = 0; d < o[0]; ++d)
      for (Index h = 0; h < o[1]; ++h)
        for (Index w = 0; w < o[2]; ++w, ++n)
          dst[((d / 2) * H + h / 2) * W + w / 2] += src[n];
  }
  return din;
}

template <typename Scalar>
void softmax_rows(FeatureMap<Scalar>& m) {
  for (Index r = 0; r < m.rows(); ++r) {
    Scalar mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp();
    m.row(r) /= m.row(r).sum();
  }
}

// dL/dlogit = p .* (g - rowdot(g, p)) for softmax output p and dL/dp = g.
template <typename Scalar>
FeatureMap<Scalar> softmax_backward(const FeatureMap<Scalar>& prob,
                                    const FeatureMap<Scalar>& dprob) {
  VectorX<Scalar> dot = (prob.array() * dprob.array()).rowwise().sum().matrix();
  return (prob.array() * (dprob.colwise() - dot).array()).matrix();
}

}  // namespace nn

// ---------------------------------------------------------------------------
// ViewModel: the per-view network, its parameters, and forward/backward.
// ---------------------------------------------------------------------------

template <typename Scalar>
struct ForwardCache {
  std::vector<Shape3> level_dims;                 // dims at levels 0..depth
  nn::FeatureMap<Scalar> input;                   // (V0 x in_channels)
  nn::FeatureMap<Scalar> stem_act;                // a_0, post-relu
  std::vector<nn::FeatureMap<Scalar>> pooled;     // enc conv inputs
  std::vector<nn::FeatureMap<Scalar>> enc_act;    // a_1..a_depth, post-relu
  std::vector<nn::FeatureMap<Scalar>> up_in;      // dec conv inputs per level
  std::vector<nn::FeatureMap<Scalar>> dec_act;    // post-relu dec outputs
  nn::FeatureMap<Scalar> prob;                    // softmax output (V0 x C)
};

template <typename Scalar>
struct ViewModel {
  SegModelConfig config;
  ViewTransform view;
  std::uint64_t init_seed = 0;
  ParamLayout layout;
  ArrayX<Scalar> params;

  using Map = Eigen::Map<MatrixX<Scalar>>;
  using CMap = Eigen::Map<const MatrixX<Scalar>>;
  using VMap = Eigen::Map<VectorX<Scalar>>;
  using CVMap = Eigen::Map<const VectorX<Scalar>>;

  CMap weights(const ParamBlock& b) const {
    return CMap(params.data() + b.offset, b.rows, b.cols);
  }
  CVMap bias(const ParamBlock& b) const {
    return CVMap(params.data() + b.bias_offset, b.cols);
  }

  Index parameter_count() const { return layout.total; }

  // Dropout mask layout: one Bernoulli keep decision per channel after each
  // encoder and each decoder stage, consumed in forward order from a single
  // stream, so a (seed, k) pair pins the whole configuration.
  struct DropoutPlan {
    bool active = false;
    Rng rng{0};
  };

  nn::FeatureMap<Scalar> forward(const nn::FeatureMap<Scalar>& x, const Shape3& dims,
                                 DropoutPlan dropout,
                                 ForwardCache<Scalar>* cache = nullptr) const {
    const int depth = config.depth;
    for (int a = 0; a < 3; ++a)
      if (dims[a] % (Index(1) << depth) != 0)
        throw ValidationError(
            "shape-divisibility: patch dims must be divisible by 2^depth");
    if (x.rows() != volume_of(dims) || x.cols() != config.in_channels)
      throw ValidationError("shape mismatch: model input");

    std::vector<Shape3> level_dims(depth + 1);
    level_dims[0] = dims;
    for (int s = 1; s <= depth; ++s) level_dims[s] = nn::halved(level_dims[s - 1]);

    auto relu = [](nn::FeatureMap<Scalar>& m) { m = m.cwiseMax(Scalar(0)); };
    auto maybe_drop = [&](nn::FeatureMap<Scalar>& m) {
      if (!dropout.active || config.dropout_rate == 0.0) return;
      const Scalar scale = Scalar(1.0 / (1.0 - config.dropout_rate));
      for (Index c = 0; c < m.cols(); ++c) {
        if (dropout.rng.next_double() < config.dropout_rate)
          m.col(c).setZero();
        else
          m.col(c) *= scale;
      }
    };

    nn::FeatureMap<Scalar> col;
    auto conv = [&](const nn::FeatureMap<Scalar>& in, const Shape3& d,
                    const ParamBlock& b, const KernelSize& k) {
      nn::FeatureMap<Scalar> out;
      if (k.taps() == 1 && b.rows == in.cols()) {
        out.noalias() = in * weights(b);
      } else {
        nn::im2col(in, d, k, col);
        out.noalias() = col * weights(b);
      }
      out.rowwise() += bias(b).transpose();
      return out;
    };

    nn::FeatureMap<Scalar> a0 = conv(x, dims, layout.stem, config.first_kernel);
    relu(a0);

    std::vector<nn::FeatureMap<Scalar>> pooled(depth), enc_act(depth);
    const nn::FeatureMap<Scalar>* prev = &a0;
    for (int s = 0; s < depth; ++s) {
      pooled[s] = nn::avgpool2(*prev, level_dims[s]);
      enc_act[s] = conv(pooled[s], level_dims[s + 1], layout.enc[s], config.body_kernel);
      relu(enc_act[s]);
      maybe_drop(enc_act[s]);
      prev = &enc_act[s];
    }

    std::vector<nn::FeatureMap<Scalar>> up_in(depth), dec_act(depth);
    const nn::FeatureMap<Scalar>* u = &enc_act.back();
    for (int s = depth - 1; s >= 0; --s) {
      up_in[s] = nn::upsample2_nearest(*u, level_dims[s + 1]);
      dec_act[s] = conv(up_in[s], level_dims[s], layout.dec[s], config.body_kernel);
      if (config.skip_enabled(s))
        dec_act[s] += (s == 0) ? a0 : enc_act[s - 1];
      relu(dec_act[s]);
      maybe_drop(dec_act[s]);
      u = &dec_act[s];
    }

    nn::FeatureMap<Scalar> prob = conv(dec_act[0], dims, layout.head, KernelSize{1, 1, 1});
    nn::softmax_rows(prob);

    if (cache) {
      cache->level_dims = std::move(level_dims);
      cache->input = x;
      cache->stem_act = std::move(a0);
      cache->pooled = std::move(pooled);
      cache->enc_act = std::move(enc_act);
      cache->up_in = std::move(up_in);
      cache->dec_act = std::move(dec_act);
      cache->prob = prob;
    }
    return prob;
  }

  // Accumulates dL/dparams into grad given dL/dprob; grad must be presized
  // to parameter_count() (callers accumulate over a batch).
  void backward(const ForwardCache<Scalar>& cache, const nn::FeatureMap<Scalar>& dprob,
                ArrayX<Scalar>& grad) const {
    const int depth = config.depth;
    const auto& dims = cache.level_dims;

    nn::FeatureMap<Scalar> col;
    auto conv_backward = [&](const nn::FeatureMap<Scalar>& in, const Shape3& d,
                             const ParamBlock& b, const KernelSize& k,
                             const nn::FeatureMap<Scalar>& dout,
                             bool need_dinput) -> nn::FeatureMap<Scalar> {
      Map dW(grad.data() + b.offset, b.rows, b.cols);
      VMap db(grad.data() + b.bias_offset, b.cols);
      db += dout.colwise().sum().transpose();
      if (k.taps() == 1 && b.rows == in.cols()) {
        dW.noalias() += in.transpose() * dout;
        if (!need_dinput) return {};
        nn::FeatureMap<Scalar> din;
        din.noalias() = dout * weights(b).transpose();
        return din;
      }
      nn::im2col(in, d, k, col);
      dW.noalias() += col.transpose() * dout;
      if (!need_dinput) return {};
      nn::FeatureMap<Scalar> dcol;
      dcol.noalias() = dout * weights(b).transpose();
      nn::FeatureMap<Scalar> din(in.rows(), in.cols());
      nn::col2im(dcol, d, k, din);
      return din;
    };
    auto relu_backward = [](const nn::FeatureMap<Scalar>& act,
                            nn::FeatureMap<Scalar>& g) {
      g = (act.array() > Scalar(0)).select(g, nn::FeatureMap<Scalar>::Zero(g.rows(), g.cols()));
    };

    // Head and softmax.
    nn::FeatureMap<Scalar> g_logits = nn::softmax_backward(cache.prob, dprob);
    nn::FeatureMap<Scalar> g = conv_backward(cache.dec_act[0], dims[0], layout.head,
                                             KernelSize{1, 1, 1}, g_logits, true);

    // Decoder, shallow to deep. g enters as dL/d(dec_act[s]).
    std::vector<nn::FeatureMap<Scalar>> g_enc(depth + 1);  // grads of a_1..a_depth
    nn::FeatureMap<Scalar> g_stem_act;
    for (int s = 0; s < depth; ++s) {
      relu_backward(cache.dec_act[s], g);
      if (config.skip_enabled(s)) {
        auto& sink = (s == 0) ? g_stem_act : g_enc[s];
        if (sink.size() == 0)
          sink = g;
        else
          sink += g;
      }
      nn::FeatureMap<Scalar> d_up = conv_backward(cache.up_in[s], dims[s], layout.dec[s],
                                                  config.body_kernel, g, true);
      nn::FeatureMap<Scalar> d_u = nn::upsample2_backward(d_up, dims[s + 1]);
      if (s + 1 < depth) {
        g = std::move(d_u);  // flows into dec_act[s+1]
      } else {
        if (g_enc[depth].size() == 0)
          g_enc[depth] = std::move(d_u);
        else
          g_enc[depth] += d_u;
      }
    }

    // Encoder, deep to shallow. g_enc[s+1] is dL/d(a_{s+1}).
    for (int s = depth - 1; s >= 0; --s) {
      nn::FeatureMap<Scalar> ga = std::move(g_enc[s + 1]);
      if (ga.size() == 0)
        ga = nn::FeatureMap<Scalar>::Zero(volume_of(dims[s + 1]), config.width_at(s + 1));
      relu_backward(cache.enc_act[s], ga);
      nn::FeatureMap<Scalar> d_pool = conv_backward(cache.pooled[s], dims[s + 1],
                                                    layout.enc[s], config.body_kernel,
                                                    ga, true);
      nn::FeatureMap<Scalar> d_prev = nn::avgpool2_backward(d_pool, dims[s]);
      if (s == 0) {
        if (g_stem_act.size() == 0)
          g_stem_act = std::move(d_prev);
        else
          g_stem_act += d_prev;
      } else {
        if (g_enc[s].size() == 0)
          g_enc[s] = std::move(d_prev);
        else
          g_enc[s] += d_prev;
      }
    }

    relu_backward(cache.stem_act, g_stem_act);
    conv_backward(cache.input, dims[0], layout.stem, config.first_kernel,
                  g_stem_act, false);
  }
};

// Deterministic He-style initialization; two calls with equal (cfg, seed)
// yield identical parameter vectors.
template <typename Scalar = float>
ViewModel<Scalar> build_model(const SegModelConfig& cfg, std::uint64_t seed,
                              const ViewTransform& view = identity_transform()) {
  validate_model_config(cfg);
  ViewModel<Scalar> m;
  m.config = cfg;
  m.view = view;
  m.init_seed = seed;
  m.layout = make_layout(cfg);
  m.params.resize(m.layout.total);

  int layer_ordinal = 0;
  auto init_block = [&](const ParamBlock& b) {
    Rng rng = Rng::stream(seed, {0x696e6974ULL /*"init"*/, std::uint64_t(layer_ordinal++)});
    const double std_dev = std::sqrt(2.0 / static_cast<double>(b.rows));
    for (Index i = 0; i < b.rows * b.cols; ++i)
      m.params[b.offset + i] = Scalar(rng.next_normal() * std_dev);
    for (Index i = 0; i < b.cols; ++i) m.params[b.bias_offset + i] = Scalar(0);
  };
  init_block(m.layout.stem);
  for (const auto& b : m.layout.enc) init_block(b);
  for (int s = int(m.layout.dec.size()) - 1; s >= 0; --s) init_block(m.layout.dec[s]);
  init_block(m.layout.head);
  return m;
}

template <typename Scalar>
std::uint64_t params_checksum(const ViewModel<Scalar>& m) {
  return fnv1a(m.params.data(), sizeof(Scalar) * static_cast<std::size_t>(m.params.size()));
}

namespace detail {

template <typename Scalar>
nn::FeatureMap<Scalar> volume_as_input(const Volume3D<Scalar>& patch) {
  return Eigen::Map<const MatrixX<Scalar>>(patch.data.data(), patch.data.size(), 1);
}

template <typename Scalar>
ProbMap<Scalar> feature_as_prob(const nn::FeatureMap<Scalar>& prob, const Shape3& shape) {
  ProbMap<Scalar> out;
  out.shape = shape;
  out.n_classes = static_cast<int>(prob.cols());
  out.data = Eigen::Map<const ArrayX<Scalar>>(prob.data(), prob.size());
  return out;
}

}  // namespace detail

// Deterministic prediction (dropout inactive).
template <typename Scalar>
ProbMap<Scalar> predict(const ViewModel<Scalar>& m, const Volume3D<Scalar>& patch) {
  auto in = detail::volume_as_input(patch);
  auto prob = m.forward(in, patch.shape, typename ViewModel<Scalar>::DropoutPlan{});
  return detail::feature_as_prob<Scalar>(prob, patch.shape);
}

// K stochastic forward passes under independent dropout configurations;
// deterministic given (seed, K).
template <typename Scalar>
std::vector<ProbMap<Scalar>> mc_sample(const ViewModel<Scalar>& m,
                                       const Volume3D<Scalar>& patch, int k,
                                       std::uint64_t seed) {
  if (k < 2)
    throw ValidationError("mc_sample needs K >= 2 (variance is the point)");
  auto in = detail::volume_as_input(patch);
  std::vector<ProbMap<Scalar>> out(k);
  for (int i = 0; i < k; ++i) {
    typename ViewModel<Scalar>::DropoutPlan plan{
        true, Rng::stream(seed, {0x64726f70ULL /*"drop"*/, std::uint64_t(i)})};
    out[i] = detail::feature_as_prob<Scalar>(m.forward(in, patch.shape, plan),
                                             patch.shape);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: config text + view token + f32 parameters + optimizer state,
// integrity-hashed.
// ---------------------------------------------------------------------------

struct CheckpointData {
  SegModelConfig config;  // parsed back from canonical text
  std::string config_text;
  std::string view_token;
  std::vector<float> params;
  std::vector<float> momentum;  // empty when absent
};

inline KernelSize parse_kernel(const std::string& s) {
  KernelSize k;
  if (std::sscanf(s.c_str(), "%dx%dx%d", &k.d, &k.h, &k.w) != 3)
    throw ValidationError("bad kernel spec (want DxHxW): " + s);
  return k;
}

inline SegModelConfig parse_canonical_config(const std::string& text) {
  SegModelConfig c;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("bad model config line: " + line);
    std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "asymmetric") c.asymmetric = val == "1";
    else if (key == "base_width") c.base_width = std::stoi(val);
    else if (key == "body_kernel") c.body_kernel = parse_kernel(val);
    else if (key == "depth") c.depth = std::stoi(val);
    else if (key == "dropout_rate") c.dropout_rate = std::stod(val);
    else if (key == "first_kernel") c.first_kernel = parse_kernel(val);
    else if (key == "in_channels") c.in_channels = std::stoi(val);
    else if (key == "n_classes") c.n_classes = std::stoi(val);
    else if (key == "skip_connections") c.skip_connections = std::stoi(val);
    else throw ValidationError("unknown model config key: " + key);
  }
  validate_model_config(c);
  return c;
}

namespace detail {
inline std::uint64_t checkpoint_hash(const std::string& cfg_text,
                                     const std::string& token) {
  return fnv1a(token, fnv1a(cfg_text));
}
}  // namespace detail

}  // namespace umct

#endif  // UMCT_BACKBONE_HPP
