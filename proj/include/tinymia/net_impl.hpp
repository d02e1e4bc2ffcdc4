// Copyright 2026 The tinymia Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Templated transformer forward/backward and the AdamW training loop.
// Instantiated with float for production models and double for
// finite-difference gradient verification. All loops run in a fixed
// order, so results are bit-reproducible for a given (config, seed).

#ifndef TINYMIA_NET_IMPL_HPP_
#define TINYMIA_NET_IMPL_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "tinymia/model.hpp"

namespace tinymia {

inline constexpr double kLnEps = 1e-5;
inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;
inline constexpr double kInitGain = 0.5;
// Embedding tables use a small fixed scale (not fan-in): the token table
// doubles as the output head, and near-zero logits keep an untrained
// model close to the uniform-prediction loss ln(vocab_size).
inline constexpr double kEmbInitStd = 0.02;
inline constexpr double kPosInitStd = 0.02;

// Flat parameter layout. Weight matrices are row-major (in_dim x out_dim);
// the token embedding (vocab x embed) doubles as the output head.
struct ParamLayout {
  struct Layer {
    size_t ln1_g, ln1_b, w_qkv, b_qkv, w_proj, b_proj;
    size_t ln2_g, ln2_b, w_fc1, b_fc1, w_fc2, b_fc2;
  };
  size_t tok_emb = 0, pos_emb = 0, lnf_g = 0, lnf_b = 0, total = 0;
  std::vector<Layer> layers;
  std::vector<std::pair<size_t, size_t>> decay_spans;  // weight matrices only

  static ParamLayout make(const ModelConfig& cfg) {
    const size_t V = cfg.vocab_size, T = cfg.seq_len, D = cfg.embed_dim, H = cfg.hidden_dim;
    ParamLayout lay;
    size_t off = 0;
    auto claim = [&off](size_t n) {
      const size_t at = off;
      off += n;
      return at;
    };
    auto claim_decay = [&](size_t n) {
      const size_t at = claim(n);
      lay.decay_spans.emplace_back(at, at + n);
      return at;
    };
    lay.tok_emb = claim_decay(V * D);
    lay.pos_emb = claim_decay(T * D);
    lay.layers.resize(cfg.num_layers);
    for (auto& l : lay.layers) {
      l.ln1_g = claim(D);
      l.ln1_b = claim(D);
      l.w_qkv = claim_decay(D * 3 * D);
      l.b_qkv = claim(3 * D);
      l.w_proj = claim_decay(D * D);
      l.b_proj = claim(D);
      l.ln2_g = claim(D);
      l.ln2_b = claim(D);
      l.w_fc1 = claim_decay(D * H);
      l.b_fc1 = claim(H);
      l.w_fc2 = claim_decay(H * D);
      l.b_fc2 = claim(D);
    }
    lay.lnf_g = claim(D);
    lay.lnf_b = claim(D);
    lay.total = off;
    return lay;
  }
};

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using MatMap = Eigen::Map<MatX<S>>;
template <typename S>
using CMatMap = Eigen::Map<const MatX<S>>;

// A training/eval batch flattened to one row per non-pad token position.
struct BatchRows {
  std::vector<uint32_t> tok;       // token id per row
  std::vector<uint32_t> pos;       // sequence position per row
  std::vector<size_t> ex_begin;    // per-example row offsets, size B + 1
  std::vector<const Example*> examples;

  size_t rows() const { return tok.size(); }
  size_t batch() const { return examples.size(); }
};

inline BatchRows make_batch_ptrs(const Example* const* exs, size_t count) {
  BatchRows b;
  b.ex_begin.push_back(0);
  for (size_t i = 0; i < count; ++i) {
    const Example& ex = *exs[i];
    if (ex.real_len < 2) throw DataError("example " + std::to_string(ex.id) + " has no targets");
    for (uint32_t p = 0; p < ex.real_len; ++p) {
      b.tok.push_back(ex.tokens[p]);
      b.pos.push_back(p);
    }
    b.examples.push_back(&ex);
    b.ex_begin.push_back(b.tok.size());
  }
  return b;
}

inline BatchRows make_batch(const Dataset& ds, const uint32_t* ids, size_t count) {
  std::vector<const Example*> ptrs(count);
  for (size_t i = 0; i < count; ++i) {
    if (ids[i] >= ds.size()) throw DataError("example id out of range");
    ptrs[i] = &ds.examples[ids[i]];
  }
  return make_batch_ptrs(ptrs.data(), count);
}

template <typename S>
struct LayerCache {
  MatX<S> x_in;  // residual stream entering the layer
  VecX<S> mean1, rstd1, mean2, rstd2;
  MatX<S> y1;    // LN1 output
  MatX<S> qkv;
  std::vector<MatX<S>> probs;  // per (example, head) causal softmax weights
  MatX<S> attn;  // concatenated head outputs
  MatX<S> r1;    // x_in + attention projection
  MatX<S> y2;    // LN2 output
  MatX<S> u;     // fc1 pre-activation
  MatX<S> g;     // gelu(u)
};

template <typename S>
struct ForwardState {
  MatX<S> x0;
  std::vector<LayerCache<S>> layer;
  MatX<S> x_final;  // input to the final layer norm
  VecX<S> meanf, rstdf;
  MatX<S> f;       // final LN output
  MatX<S> logits;  // per-row vocab logits
};

template <typename S>
void layer_norm_fwd(const MatX<S>& x, const S* gain, const S* bias, MatX<S>& y, VecX<S>& mean,
                    VecX<S>& rstd) {
  const Eigen::Index n = x.rows(), d = x.cols();
  y.resize(n, d);
  mean.resize(n);
  rstd.resize(n);
  CMatMap<S> g(gain, 1, d), b(bias, 1, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    const S mu = x.row(r).mean();
    const S var = (x.row(r).array() - mu).square().sum() / static_cast<S>(d);
    const S rs = S(1) / std::sqrt(var + static_cast<S>(kLnEps));
    mean(r) = mu;
    rstd(r) = rs;
    y.row(r) = (((x.row(r).array() - mu) * rs) * g.array() + b.array()).matrix();
  }
}

// dx += LN backward; accumulates gain/bias grads.
template <typename S>
void layer_norm_bwd(const MatX<S>& dy, const MatX<S>& x, const VecX<S>& mean, const VecX<S>& rstd,
                    const S* gain, MatX<S>& dx, S* dgain, S* dbias) {
  const Eigen::Index n = x.rows(), d = x.cols();
  CMatMap<S> g(gain, 1, d);
  MatMap<S> dg(dgain, 1, d), db(dbias, 1, d);
  Eigen::Array<S, 1, Eigen::Dynamic> xhat(d), dyh(d);
  for (Eigen::Index r = 0; r < n; ++r) {
    xhat = (x.row(r).array() - mean(r)) * rstd(r);
    dg.array() += dy.row(r).array() * xhat;
    db.array() += dy.row(r).array();
    dyh = dy.row(r).array() * g.array();
    const S m1 = dyh.mean();
    const S m2 = (dyh * xhat).mean();
    dx.row(r).array() += rstd(r) * (dyh - m1 - xhat * m2);
  }
}

template <typename S>
S gelu_scalar(S u) {
  const S c0 = static_cast<S>(0.7978845608028654);  // sqrt(2/pi)
  const S c1 = static_cast<S>(0.044715);
  return S(0.5) * u * (S(1) + std::tanh(c0 * (u + c1 * u * u * u)));
}

template <typename S>
S gelu_grad_scalar(S u) {
  const S c0 = static_cast<S>(0.7978845608028654);
  const S c1 = static_cast<S>(0.044715);
  const S t = std::tanh(c0 * (u + c1 * u * u * u));
  return S(0.5) * (S(1) + t) + S(0.5) * u * (S(1) - t * t) * c0 * (S(1) + S(3) * c1 * u * u);
}

template <typename S>
void forward_net(const ModelT<S>& model, const ParamLayout& lay, const BatchRows& batch,
                 ForwardState<S>& st) {
  const ModelConfig& cfg = model.cfg;
  const Eigen::Index n = static_cast<Eigen::Index>(batch.rows());
  const Eigen::Index D = cfg.embed_dim, H = cfg.hidden_dim, V = cfg.vocab_size;
  const Eigen::Index nh = cfg.num_heads, hd = D / nh;
  const S* p = model.params.data();
  CMatMap<S> tok_emb(p + lay.tok_emb, V, D);
  CMatMap<S> pos_emb(p + lay.pos_emb, cfg.seq_len, D);

  st.x0.resize(n, D);
  for (Eigen::Index r = 0; r < n; ++r) {
    st.x0.row(r) = tok_emb.row(batch.tok[r]) + pos_emb.row(batch.pos[r]);
  }

  st.layer.resize(cfg.num_layers);
  MatX<S> x = st.x0;
  const S inv_sqrt_hd = S(1) / std::sqrt(static_cast<S>(hd));
  for (uint32_t li = 0; li < cfg.num_layers; ++li) {
    const auto& L = lay.layers[li];
    LayerCache<S>& c = st.layer[li];
    c.x_in = x;
    layer_norm_fwd(c.x_in, p + L.ln1_g, p + L.ln1_b, c.y1, c.mean1, c.rstd1);

    CMatMap<S> w_qkv(p + L.w_qkv, D, 3 * D);
    CMatMap<S> b_qkv(p + L.b_qkv, 1, 3 * D);
    c.qkv.noalias() = c.y1 * w_qkv;
    c.qkv.rowwise() += b_qkv.row(0);

    c.attn.resize(n, D);
    c.probs.assign(batch.batch() * nh, MatX<S>());
    for (size_t e = 0; e < batch.batch(); ++e) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(batch.ex_begin[e]);
      const Eigen::Index t = static_cast<Eigen::Index>(batch.ex_begin[e + 1]) - r0;
      for (Eigen::Index h = 0; h < nh; ++h) {
        auto q = c.qkv.block(r0, h * hd, t, hd);
        auto k = c.qkv.block(r0, D + h * hd, t, hd);
        auto v = c.qkv.block(r0, 2 * D + h * hd, t, hd);
        MatX<S>& prob = c.probs[e * nh + h];
        prob.noalias() = q * k.transpose();
        prob *= inv_sqrt_hd;
        // Causal softmax: row i attends to columns 0..i only.
        for (Eigen::Index i = 0; i < t; ++i) {
          const S mx = prob.row(i).head(i + 1).maxCoeff();
          S z = 0;
          for (Eigen::Index j = 0; j <= i; ++j) {
            const S w = std::exp(prob(i, j) - mx);
            prob(i, j) = w;
            z += w;
          }
          const S inv_z = S(1) / z;
          for (Eigen::Index j = 0; j <= i; ++j) prob(i, j) *= inv_z;
          for (Eigen::Index j = i + 1; j < t; ++j) prob(i, j) = S(0);
        }
        c.attn.block(r0, h * hd, t, hd).noalias() = prob * v;
      }
    }

    CMatMap<S> w_proj(p + L.w_proj, D, D);
    CMatMap<S> b_proj(p + L.b_proj, 1, D);
    c.r1.noalias() = c.attn * w_proj;
    c.r1.rowwise() += b_proj.row(0);
    c.r1 += c.x_in;

    layer_norm_fwd(c.r1, p + L.ln2_g, p + L.ln2_b, c.y2, c.mean2, c.rstd2);
    CMatMap<S> w_fc1(p + L.w_fc1, D, H);
    CMatMap<S> b_fc1(p + L.b_fc1, 1, H);
    c.u.noalias() = c.y2 * w_fc1;
    c.u.rowwise() += b_fc1.row(0);
    c.g = c.u.unaryExpr([](S v) { return gelu_scalar(v); });
    CMatMap<S> w_fc2(p + L.w_fc2, H, D);
    CMatMap<S> b_fc2(p + L.b_fc2, 1, D);
    x.noalias() = c.g * w_fc2;
    x.rowwise() += b_fc2.row(0);
    x += c.r1;
  }

  st.x_final = x;
  layer_norm_fwd(st.x_final, p + lay.lnf_g, p + lay.lnf_b, st.f, st.meanf, st.rstdf);
  st.logits.noalias() = st.f * tok_emb.transpose();
}

// Mean over examples of per-example mean token NLL. When `grad` is given
// it receives d(loss)/d(params), same layout as params. Per-example
// losses are written to `example_loss` when given.
template <typename S>
double loss_and_grad(const ModelT<S>& model, const ParamLayout& lay, const BatchRows& batch,
                     AlignedVec<S>* grad, std::vector<double>* example_loss = nullptr) {
  const ModelConfig& cfg = model.cfg;
  ForwardState<S> st;
  forward_net(model, lay, batch, st);

  const Eigen::Index n = static_cast<Eigen::Index>(batch.rows());
  const Eigen::Index D = cfg.embed_dim, H = cfg.hidden_dim, V = cfg.vocab_size;
  const Eigen::Index nh = cfg.num_heads, hd = D / nh;
  const size_t B = batch.batch();
  const S* p = model.params.data();

  // Cross-entropy over target rows; st.logits is reused as dlogits.
  double total_loss = 0.0;
  if (example_loss) example_loss->assign(B, 0.0);
  std::vector<S> row_weight(n, S(0));
  for (size_t e = 0; e < B; ++e) {
    const size_t r0 = batch.ex_begin[e];
    const size_t t = batch.ex_begin[e + 1] - r0;
    const double w = 1.0 / static_cast<double>(t - 1);
    double ex_loss = 0.0;
    for (size_t r = r0; r + 1 < r0 + t; ++r) {
      const uint32_t target = batch.tok[r + 1];
      auto row = st.logits.row(static_cast<Eigen::Index>(r));
      const S mx = row.maxCoeff();
      double z = 0.0;
      for (Eigen::Index j = 0; j < V; ++j) z += std::exp(static_cast<double>(row(j) - mx));
      const double logprob = static_cast<double>(row(target) - mx) - std::log(z);
      ex_loss -= w * logprob;
      row_weight[r] = static_cast<S>(w / static_cast<double>(B));
      if (grad) {
        // softmax - onehot, scaled by the example weight
        const S inv_z = static_cast<S>(1.0 / z);
        for (Eigen::Index j = 0; j < V; ++j) {
          row(j) = std::exp(row(j) - mx) * inv_z * row_weight[r];
        }
        row(target) -= row_weight[r];
      }
    }
    total_loss += ex_loss;
    if (example_loss) (*example_loss)[e] = ex_loss;
  }
  total_loss /= static_cast<double>(B);
  if (!grad) return total_loss;

  // Zero out non-target rows of dlogits (final row of each example).
  for (Eigen::Index r = 0; r < n; ++r) {
    if (row_weight[r] == S(0)) st.logits.row(r).setZero();
  }

  grad->assign(lay.total, S(0));
  S* g = grad->data();
  MatX<S>& dlogits = st.logits;

  // Output head (tied embedding) and final LN.
  MatMap<S> g_tok(g + lay.tok_emb, V, D);
  g_tok.noalias() += dlogits.transpose() * st.f;
  CMatMap<S> tok_emb(p + lay.tok_emb, V, D);
  MatX<S> df;
  df.noalias() = dlogits * tok_emb;
  MatX<S> dx = MatX<S>::Zero(n, D);
  layer_norm_bwd(df, st.x_final, st.meanf, st.rstdf, p + lay.lnf_g, dx, g + lay.lnf_g,
                 g + lay.lnf_b);

  const S inv_sqrt_hd = S(1) / std::sqrt(static_cast<S>(hd));
  for (uint32_t li = cfg.num_layers; li-- > 0;) {
    const auto& L = lay.layers[li];
    LayerCache<S>& c = st.layer[li];

    // MLP block: x_out = r1 + gelu(LN2(r1) W1 + b1) W2 + b2
    CMatMap<S> w_fc2(p + L.w_fc2, H, D);
    MatMap<S> g_fc2(g + L.w_fc2, H, D);
    MatMap<S> gb_fc2(g + L.b_fc2, 1, D);
    g_fc2.noalias() += c.g.transpose() * dx;
    gb_fc2.row(0) += dx.colwise().sum();
    MatX<S> dgelu;
    dgelu.noalias() = dx * w_fc2.transpose();
    MatX<S> du = dgelu.binaryExpr(c.u, [](S d, S u) { return d * gelu_grad_scalar(u); });
    CMatMap<S> w_fc1(p + L.w_fc1, D, H);
    MatMap<S> g_fc1(g + L.w_fc1, D, H);
    MatMap<S> gb_fc1(g + L.b_fc1, 1, H);
    g_fc1.noalias() += c.y2.transpose() * du;
    gb_fc1.row(0) += du.colwise().sum();
    MatX<S> dy2;
    dy2.noalias() = du * w_fc1.transpose();
    MatX<S> dr1 = dx;  // residual path
    layer_norm_bwd(dy2, c.r1, c.mean2, c.rstd2, p + L.ln2_g, dr1, g + L.ln2_g, g + L.ln2_b);

    // Attention block: r1 = x_in + attn(LN1(x_in)) W_proj + b_proj
    CMatMap<S> w_proj(p + L.w_proj, D, D);
    MatMap<S> g_proj(g + L.w_proj, D, D);
    MatMap<S> gb_proj(g + L.b_proj, 1, D);
    g_proj.noalias() += c.attn.transpose() * dr1;
    gb_proj.row(0) += dr1.colwise().sum();
    MatX<S> dattn;
    dattn.noalias() = dr1 * w_proj.transpose();

    MatX<S> dqkv = MatX<S>::Zero(n, 3 * D);
    for (size_t e = 0; e < B; ++e) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(batch.ex_begin[e]);
      const Eigen::Index t = static_cast<Eigen::Index>(batch.ex_begin[e + 1]) - r0;
      for (Eigen::Index h = 0; h < nh; ++h) {
        const MatX<S>& prob = c.probs[e * nh + h];
        auto q = c.qkv.block(r0, h * hd, t, hd);
        auto k = c.qkv.block(r0, D + h * hd, t, hd);
        auto v = c.qkv.block(r0, 2 * D + h * hd, t, hd);
        auto dO = dattn.block(r0, h * hd, t, hd);
        MatX<S> dprob;
        dprob.noalias() = dO * v.transpose();
        dqkv.block(r0, 2 * D + h * hd, t, hd).noalias() = prob.transpose() * dO;
        // Softmax backward, causal rows only.
        MatX<S> ds(t, t);
        for (Eigen::Index i = 0; i < t; ++i) {
          S dot = 0;
          for (Eigen::Index j = 0; j <= i; ++j) dot += dprob(i, j) * prob(i, j);
          for (Eigen::Index j = 0; j <= i; ++j) {
            ds(i, j) = prob(i, j) * (dprob(i, j) - dot) * inv_sqrt_hd;
          }
          for (Eigen::Index j = i + 1; j < t; ++j) ds(i, j) = S(0);
        }
        dqkv.block(r0, h * hd, t, hd).noalias() = ds * k;
        dqkv.block(r0, D + h * hd, t, hd).noalias() = ds.transpose() * q;
      }
    }

    CMatMap<S> w_qkv(p + L.w_qkv, D, 3 * D);
    MatMap<S> g_qkv(g + L.w_qkv, D, 3 * D);
    MatMap<S> gb_qkv(g + L.b_qkv, 1, 3 * D);
    g_qkv.noalias() += c.y1.transpose() * dqkv;
    gb_qkv.row(0) += dqkv.colwise().sum();
    MatX<S> dy1;
    dy1.noalias() = dqkv * w_qkv.transpose();
    layer_norm_bwd(dy1, c.x_in, c.mean1, c.rstd1, p + L.ln1_g, dr1, g + L.ln1_g, g + L.ln1_b);
    dx = std::move(dr1);
  }

  // Embedding scatter.
  MatMap<S> g_pos(g + lay.pos_emb, cfg.seq_len, D);
  for (Eigen::Index r = 0; r < n; ++r) {
    g_tok.row(batch.tok[r]) += dx.row(r);
    g_pos.row(batch.pos[r]) += dx.row(r);
  }
  return total_loss;
}

template <typename S>
ModelT<S> init_model_t(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  const ParamLayout lay = ParamLayout::make(cfg);
  ModelT<S> model;
  model.cfg = cfg;
  model.params.assign(lay.total, S(0));
  std::mt19937_64 rng(hash3(seed, StreamTag::kParamInit, 0, 0));
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](size_t off, size_t count, double std) {
    for (size_t i = 0; i < count; ++i) {
      model.params[off + i] = static_cast<S>(normal(rng) * std);
    }
  };
  const size_t D = cfg.embed_dim, H = cfg.hidden_dim;
  const double d_std = kInitGain / std::sqrt(static_cast<double>(D));
  const double h_std = kInitGain / std::sqrt(static_cast<double>(H));
  fill(lay.tok_emb, cfg.vocab_size * D, kEmbInitStd);
  fill(lay.pos_emb, cfg.seq_len * D, kPosInitStd);
  for (const auto& L : lay.layers) {
    for (size_t i = 0; i < D; ++i) model.params[L.ln1_g + i] = S(1);
    fill(L.w_qkv, D * 3 * D, d_std);
    fill(L.w_proj, D * D, d_std);
    for (size_t i = 0; i < D; ++i) model.params[L.ln2_g + i] = S(1);
    fill(L.w_fc1, D * H, d_std);
    fill(L.w_fc2, H * D, h_std);
  }
  for (size_t i = 0; i < D; ++i) model.params[lay.lnf_g + i] = S(1);
  return model;
}

template <typename S>
std::vector<SignalRecord> eval_batch_t(const ModelT<S>& model, const ParamLayout& lay,
                                       const Example* const* exs, size_t count) {
  BatchRows batch = make_batch_ptrs(exs, count);
  ForwardState<S> st;
  forward_net(model, lay, batch, st);
  const Eigen::Index V = model.cfg.vocab_size;
  std::vector<SignalRecord> out(count);
  for (size_t e = 0; e < count; ++e) {
    const size_t r0 = batch.ex_begin[e];
    const size_t t = batch.ex_begin[e + 1] - r0;
    SignalRecord& rec = out[e];
    rec.example_id = batch.examples[e]->id;
    rec.token_logprobs.resize(t - 1);
    double loss = 0.0, logit_sum = 0.0;
    for (size_t r = r0; r + 1 < r0 + t; ++r) {
      const uint32_t target = batch.tok[r + 1];
      auto row = st.logits.row(static_cast<Eigen::Index>(r));
      const S mx = row.maxCoeff();
      double z = 0.0;
      for (Eigen::Index j = 0; j < V; ++j) z += std::exp(static_cast<double>(row(j) - mx));
      const double logprob = static_cast<double>(row(target) - mx) - std::log(z);
      rec.token_logprobs[r - r0] = logprob;
      loss -= logprob;
      logit_sum += static_cast<double>(row(target));
    }
    rec.loss = loss / static_cast<double>(t - 1);
    rec.mean_logit = logit_sum / static_cast<double>(t - 1);
    if (!std::isfinite(rec.loss)) {
      throw NumericError("non-finite loss evaluating example " + std::to_string(rec.example_id));
    }
  }
  return out;
}

template <typename S>
TrainLog train_t(ModelT<S>& model, const ParamLayout& lay, const Dataset& ds,
                 const std::vector<uint32_t>& member_ids, const TrainConfig& tc) {
  tc.validate();
  if (member_ids.empty()) throw ConfigError("train: no member examples");
  const size_t M = member_ids.size();
  const uint32_t bpe = static_cast<uint32_t>((M + tc.batch_size - 1) / tc.batch_size);
  const uint32_t total = tc.epochs * bpe;
  const uint32_t warmup =
      tc.warmup_steps == kAutoWarmup ? std::min<uint32_t>(750, total / 20) : tc.warmup_steps;
  if (warmup > total) throw ConfigError("train: warmup_steps exceeds total steps");

  TrainLog log;
  log.total_steps = total;
  std::vector<uint32_t> last_seen(ds.size(), 0);
  std::vector<uint8_t> seen(ds.size(), 0);

  std::vector<S> m_state(lay.total, S(0)), v_state(lay.total, S(0));
  AlignedVec<S> grad;
  std::vector<uint8_t> decays(lay.total, 0);
  for (const auto& [b, e] : lay.decay_spans) std::fill(decays.begin() + b, decays.begin() + e, 1);

  std::vector<uint32_t> order(member_ids);
  for (uint32_t epoch = 0; epoch < tc.epochs; ++epoch) {
    std::mt19937_64 rng(hash3(tc.seed, StreamTag::kEpochShuffle, epoch, 0));
    std::shuffle(order.begin(), order.end(), rng);
    for (uint32_t b = 0; b < bpe; ++b) {
      const uint32_t step = epoch * bpe + b;
      const size_t lo = static_cast<size_t>(b) * tc.batch_size;
      const size_t hi = std::min(lo + tc.batch_size, M);
      BatchRows batch = make_batch(ds, order.data() + lo, hi - lo);
      const double loss = loss_and_grad(model, lay, batch, &grad);
      const double lr = lr_at(step, total, warmup, tc.init_lr, tc.peak_lr, tc.final_lr,
                              tc.schedule);
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite training loss at step " + std::to_string(step) +
                           " (lr " + format_double(lr) + ")");
      }

      if (tc.clip_norm > 0 && std::isfinite(tc.clip_norm)) {
        double sq = 0.0;
        for (S gv : grad) sq += static_cast<double>(gv) * static_cast<double>(gv);
        const double norm = std::sqrt(sq);
        if (norm > tc.clip_norm) {
          const S scale = static_cast<S>(tc.clip_norm / norm);
          for (S& gv : grad) gv *= scale;
        }
      }

      const double t_adam = static_cast<double>(step) + 1.0;
      const double bc1 = 1.0 - std::pow(kAdamBeta1, t_adam);
      const double bc2 = 1.0 - std::pow(kAdamBeta2, t_adam);
      for (size_t i = 0; i < lay.total; ++i) {
        const double gv = static_cast<double>(grad[i]);
        const double m = kAdamBeta1 * static_cast<double>(m_state[i]) + (1.0 - kAdamBeta1) * gv;
        const double v = kAdamBeta2 * static_cast<double>(v_state[i]) +
                         (1.0 - kAdamBeta2) * gv * gv;
        m_state[i] = static_cast<S>(m);
        v_state[i] = static_cast<S>(v);
        const double theta = static_cast<double>(model.params[i]);
        const double update = (m / bc1) / (std::sqrt(v / bc2) + kAdamEps) +
                              (decays[i] ? tc.weight_decay * theta : 0.0);
        model.params[i] = static_cast<S>(theta - lr * update);
      }

      for (size_t i = lo; i < hi; ++i) {
        last_seen[order[i]] = step;
        seen[order[i]] = 1;
      }
      if (step % tc.log_every == 0 || step + 1 == total) {
        log.trace.push_back({step, lr, loss});
      }
    }
  }
  for (uint32_t id = 0; id < ds.size(); ++id) {
    if (seen[id]) log.last_seen_step.emplace_back(id, last_seen[id]);
  }
  return log;
}

}  // namespace tinymia

#endif  // TINYMIA_NET_IMPL_HPP_
