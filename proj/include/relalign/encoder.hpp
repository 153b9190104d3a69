// SPDX-License-Identifier: Apache-2.0
#pragma once

// Minimal single-stream joint encoder: token and region features are
// projected into a shared width, concatenated text-first, and passed
// through pre-norm transformer layers. The pre-softmax attention score
// matrix of every layer and head is retained for metric extraction.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "relalign/autodiff.hpp"
#include "relalign/layout.hpp"
#include "relalign/matrix.hpp"
#include "relalign/rng.hpp"

namespace relalign {

struct EncoderConfig {
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t d_model = 16;
  std::size_t d_ff = 32;
  std::size_t feature_dim = 16;
  std::size_t max_tokens = 32;

  std::size_t d_head() const { return d_model / heads; }

  void validate() const {
    if (heads == 0 || d_model == 0) throw std::invalid_argument("encoder: empty dimensions");
    if (d_model % heads != 0)
      throw std::invalid_argument("encoder: d_model " + std::to_string(d_model) +
                                  " not divisible by heads " + std::to_string(heads));
    if (feature_dim == 0 || d_ff == 0 || max_tokens == 0)
      throw std::invalid_argument("encoder: empty dimensions");
  }
};

struct LayerParams {
  std::vector<Matrix> wq, wk, wv;  // per head, d_model x d_head
  Matrix wo;                       // d_model x d_model
  Matrix w1, b1;                   // d_model x d_ff, 1 x d_ff
  Matrix w2, b2;                   // d_ff x d_model, 1 x d_model
};

struct EncoderParams {
  EncoderConfig config;
  Matrix w_in;                    // feature_dim x d_model, shared by both modalities
  Matrix type_text, type_region;  // 1 x d_model
  Matrix pos_text;                // max_tokens x d_model (regions carry no positions)
  std::vector<LayerParams> layers;
};

/// Encoder plus the similarity head that scores a pair.
struct Model {
  EncoderParams encoder;
  Matrix head_w;  // d_model x 1
  Matrix head_b;  // 1 x 1

  static Model init(const EncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    Model m;
    m.encoder.config = cfg;
    auto randn = [&rng](std::size_t r, std::size_t c, double sd) {
      Matrix out(r, c);
      for (double& v : out.data()) v = rng.normal(0.0, sd);
      return out;
    };
    const double in_sd = 1.0 / std::sqrt(static_cast<double>(cfg.feature_dim));
    const double d_sd = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
    const double ff_sd = 1.0 / std::sqrt(static_cast<double>(cfg.d_ff));
    m.encoder.w_in = randn(cfg.feature_dim, cfg.d_model, in_sd);
    m.encoder.type_text = randn(1, cfg.d_model, 0.1);
    m.encoder.type_region = randn(1, cfg.d_model, 0.1);
    m.encoder.pos_text = randn(cfg.max_tokens, cfg.d_model, 0.1);
    m.encoder.layers.resize(cfg.layers);
    for (auto& layer : m.encoder.layers) {
      layer.wq.resize(cfg.heads);
      layer.wk.resize(cfg.heads);
      layer.wv.resize(cfg.heads);
      for (std::size_t h = 0; h < cfg.heads; ++h) {
        // W^K starts correlated with W^Q so initial attention is partly a
        // feature-similarity Gram form: items with similar features tend to
        // attend to each other before any training, with headroom left for
        // training to tighten the alignment. The two remain independent
        // parameters.
        const double mix = 0.8;
        layer.wq[h] = randn(cfg.d_model, cfg.d_head(), 2.0 * d_sd);
        layer.wk[h] = randn(cfg.d_model, cfg.d_head(), 2.0 * d_sd);
        for (std::size_t k = 0; k < layer.wk[h].size(); ++k) {
          layer.wk[h].data()[k] = std::sqrt(1.0 - mix * mix) * layer.wq[h].data()[k] +
                                  mix * layer.wk[h].data()[k];
        }
        layer.wv[h] = randn(cfg.d_model, cfg.d_head(), d_sd);
      }
      layer.wo = randn(cfg.d_model, cfg.d_model, d_sd);
      layer.w1 = randn(cfg.d_model, cfg.d_ff, d_sd);
      layer.b1 = Matrix(1, cfg.d_ff);
      layer.w2 = randn(cfg.d_ff, cfg.d_model, ff_sd);
      layer.b2 = Matrix(1, cfg.d_model);
    }
    m.head_w = randn(cfg.d_model, 1, d_sd);
    m.head_b = Matrix(1, 1);
    return m;
  }

  /// Visits every parameter matrix in a fixed order. lift() mirrors this
  /// order exactly; keep the two in sync.
  template <class F>
  void for_each_param(F&& fn) {
    fn(encoder.w_in);
    fn(encoder.type_text);
    fn(encoder.type_region);
    fn(encoder.pos_text);
    for (auto& layer : encoder.layers) {
      for (auto& w : layer.wq) fn(w);
      for (auto& w : layer.wk) fn(w);
      for (auto& w : layer.wv) fn(w);
      fn(layer.wo);
      fn(layer.w1);
      fn(layer.b1);
      fn(layer.w2);
      fn(layer.b2);
    }
    fn(head_w);
    fn(head_b);
  }

  template <class F>
  void for_each_param(F&& fn) const {
    const_cast<Model*>(this)->for_each_param([&fn](Matrix& m) { fn(static_cast<const Matrix&>(m)); });
  }
};

struct LayerVars {
  std::vector<ad::Var> wq, wk, wv;
  ad::Var wo, w1, b1, w2, b2;
};

/// Tape-lifted model parameters; `flat` lists every Var in
/// Model::for_each_param order for gradient readback.
struct ModelVars {
  EncoderConfig config;
  ad::Var w_in, type_text, type_region, pos_text;
  std::vector<LayerVars> layers;
  ad::Var head_w, head_b;
  std::vector<ad::Var> flat;
};

inline ModelVars lift(ad::Tape& tape, const Model& model) {
  ModelVars mv;
  mv.config = model.encoder.config;
  auto lift_one = [&tape, &mv](const Matrix& m) {
    ad::Var v = tape.param(m);
    mv.flat.push_back(v);
    return v;
  };
  mv.w_in = lift_one(model.encoder.w_in);
  mv.type_text = lift_one(model.encoder.type_text);
  mv.type_region = lift_one(model.encoder.type_region);
  mv.pos_text = lift_one(model.encoder.pos_text);
  mv.layers.resize(model.encoder.layers.size());
  for (std::size_t l = 0; l < model.encoder.layers.size(); ++l) {
    const LayerParams& lp = model.encoder.layers[l];
    LayerVars& lv = mv.layers[l];
    for (const Matrix& w : lp.wq) lv.wq.push_back(lift_one(w));
    for (const Matrix& w : lp.wk) lv.wk.push_back(lift_one(w));
    for (const Matrix& w : lp.wv) lv.wv.push_back(lift_one(w));
    lv.wo = lift_one(lp.wo);
    lv.w1 = lift_one(lp.w1);
    lv.b1 = lift_one(lp.b1);
    lv.w2 = lift_one(lp.w2);
    lv.b2 = lift_one(lp.b2);
  }
  mv.head_w = lift_one(model.head_w);
  mv.head_b = lift_one(model.head_b);
  return mv;
}

/// Raw attention scores for one head: (X Wq)(X Wk)^T, no softmax.
inline Matrix compute_scores(const Matrix& x, const Matrix& wq, const Matrix& wk) {
  if (wq.rows() != x.cols() || wk.rows() != x.cols() || wq.cols() != wk.cols())
    throw std::invalid_argument("compute_scores: projection shapes do not match input width");
  const Matrix q = matmul(x, wq);
  const Matrix k = matmul(x, wk);
  return matmul(q, transpose(k));
}

/// Joint encoding of one pair with retained per-layer, per-head scores.
struct EncodedPair {
  ad::Var hidden;                            // N x d_model
  std::vector<std::vector<ad::Var>> scores;  // [layer][head], N x N pre-softmax
  ModalityLayout layout;
};

inline EncodedPair encode_pair(ad::Tape& tape, const Matrix& text_features,
                               const Matrix& region_features, const ModelVars& mv) {
  const EncoderConfig& cfg = mv.config;
  if (text_features.cols() != cfg.feature_dim || region_features.cols() != cfg.feature_dim)
    throw std::invalid_argument("encode_pair: feature width does not match input projection");
  if (text_features.rows() > cfg.max_tokens)
    throw std::invalid_argument("encode_pair: text longer than the learned position table");
  const ModalityLayout layout(text_features.rows(), region_features.rows());

  EncodedPair out;
  out.layout = layout;

  ad::Var xt = tape.constant(text_features);
  ad::Var xr = tape.constant(region_features);
  ad::Var pos = tape.block(mv.pos_text, 0, layout.n_l, 0, cfg.d_model);
  ad::Var emb_l = tape.add(tape.add_rowvec(tape.matmul(xt, mv.w_in), mv.type_text), pos);
  ad::Var emb_v = tape.add_rowvec(tape.matmul(xr, mv.w_in), mv.type_region);
  ad::Var x = tape.concat_rows(emb_l, emb_v);

  const double att_scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_head()));
  out.scores.resize(cfg.layers);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const LayerVars& lv = mv.layers[l];
    ad::Var h = tape.layer_norm(x);
    std::vector<ad::Var> head_outs;
    for (std::size_t hd = 0; hd < cfg.heads; ++hd) {
      try {
        ad::Var q = tape.matmul(h, lv.wq[hd]);
        ad::Var k = tape.matmul(h, lv.wk[hd]);
        ad::Var s = tape.matmul(q, tape.transpose(k));
        out.scores[l].push_back(s);
        ad::Var p = tape.row_softmax(s, att_scale);
        head_outs.push_back(tape.matmul(p, tape.matmul(h, lv.wv[hd])));
      } catch (const std::invalid_argument& e) {
        throw std::runtime_error("encode_pair: non-finite value at layer " + std::to_string(l) +
                                 " head " + std::to_string(hd) + ": " + e.what());
      }
    }
    try {
      x = tape.add(x, tape.matmul(tape.concat_cols(head_outs), lv.wo));
      ad::Var h2 = tape.layer_norm(x);
      ad::Var f = tape.relu(tape.add_rowvec(tape.matmul(h2, lv.w1), lv.b1));
      x = tape.add(x, tape.add_rowvec(tape.matmul(f, lv.w2), lv.b2));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error("encode_pair: non-finite value at layer " + std::to_string(l) +
                               ": " + e.what());
    }
  }
  out.hidden = x;
  return out;
}

/// Affine map over the mean-pooled final hidden states; returns a 1x1 Var.
inline ad::Var similarity_score(ad::Tape& tape, const EncodedPair& pair, const ModelVars& mv) {
  ad::Var pooled = tape.mean_rows(pair.hidden);
  return tape.add(tape.matmul(pooled, mv.head_w), mv.head_b);
}

/// Per-head mean of one layer's retained scores as a plain matrix.
inline Matrix head_mean_scores(const EncodedPair& pair, std::size_t layer) {
  const auto& heads = pair.scores.at(layer);
  Matrix acc = heads.at(0).value();
  for (std::size_t h = 1; h < heads.size(); ++h) acc = add(acc, heads[h].value());
  return scale(acc, 1.0 / static_cast<double>(heads.size()));
}

/// Per-head mean of one layer's post-softmax attention distributions.
inline Matrix head_mean_attention(const EncodedPair& pair, std::size_t layer, double sigma_scale) {
  const auto& heads = pair.scores.at(layer);
  Matrix acc = row_softmax(heads.at(0).value(), sigma_scale).matrix();
  for (std::size_t h = 1; h < heads.size(); ++h)
    acc = add(acc, row_softmax(heads[h].value(), sigma_scale).matrix());
  return scale(acc, 1.0 / static_cast<double>(heads.size()));
}

}  // namespace relalign
