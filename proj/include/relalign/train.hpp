// SPDX-License-Identifier: Apache-2.0
#pragma once

// Regularized training: pairwise/literal margin loss over similarity
// scores, the annealed alignment regularizer on positive pairs, plain SGD,
// and per-checkpoint metric traces (losses, probe ISDa, Recall@K).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "relalign/autodiff.hpp"
#include "relalign/encoder.hpp"
#include "relalign/iais.hpp"
#include "relalign/isda.hpp"
#include "relalign/matrix.hpp"
#include "relalign/retrieval.hpp"
#include "relalign/rng.hpp"
#include "relalign/schedule.hpp"
#include "relalign/synthetic.hpp"

namespace relalign {

enum class IaisKind { None, Singular, Distributed };
enum class AnchorMode { Both, VisionOnly, LanguageOnly };
enum class MarginMode { Literal, Pairwise };
enum class HeadReduction { Mean, PerHeadSum };

struct TrainConfig {
  double margin = 0.2;
  MarginMode margin_mode = MarginMode::Pairwise;
  IaisKind iais = IaisKind::None;
  AnchorMode anchor = AnchorMode::Both;
  ScheduleKind schedule = ScheduleKind::Exp;
  double gamma = 5.0;
  std::int64_t steps = 2000;
  std::int64_t iais_layer = -1;  // -1 = last layer
  HeadReduction head_reduction = HeadReduction::Mean;
  std::size_t positives_per_batch = 4;
  std::size_t negatives_per_positive = 7;
  std::uint64_t seed = 42;
  double learning_rate = 0.008;
  std::int64_t checkpoint_interval = 100;
  bool hard_negatives = true;
  EncoderConfig encoder;
  SyntheticTaskConfig task;

  void validate() const {
    if (margin < 0.0) throw std::invalid_argument("config: margin must be nonnegative");
    if (!(gamma > 0.0)) throw std::invalid_argument("config: gamma must be positive");
    if (steps < 0) throw std::invalid_argument("config: steps must be nonnegative");
    if (positives_per_batch == 0) throw std::invalid_argument("config: need at least one positive");
    if (negatives_per_positive == 0)
      throw std::invalid_argument("config: need at least one negative per positive");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("config: learning rate must be positive");
    if (checkpoint_interval < 1)
      throw std::invalid_argument("config: checkpoint interval must be >= 1");
    encoder.validate();
    task.validate();
    if (encoder.feature_dim != task.feature_dim)
      throw std::invalid_argument("config: encoder feature_dim does not match the task");
    if (iais_layer >= 0 && static_cast<std::size_t>(iais_layer) >= encoder.layers)
      throw std::invalid_argument("config: iais_layer " + std::to_string(iais_layer) +
                                  " out of range for " + std::to_string(encoder.layers) +
                                  " layers");
  }
};

// ---- margin loss ----

inline double margin_loss(const std::vector<double>& positives,
                          const std::vector<std::vector<double>>& negatives, double alpha,
                          MarginMode mode) {
  if (positives.size() != negatives.size())
    throw std::invalid_argument("margin_loss: one negative list per positive required");
  double total = 0.0;
  for (std::size_t i = 0; i < positives.size(); ++i) {
    if (negatives[i].empty())
      throw std::invalid_argument("margin_loss: positive " + std::to_string(i) +
                                  " has no negatives");
    if (mode == MarginMode::Pairwise) {
      for (double sj : negatives[i]) total += std::max(0.0, sj - positives[i] + alpha);
    } else {
      double neg_sum = 0.0;
      for (double sj : negatives[i]) neg_sum += sj;
      total += std::max(0.0, neg_sum - positives[i] + alpha);
    }
  }
  return total;
}

inline ad::Var margin_loss_var(ad::Tape& t, const std::vector<ad::Var>& positives,
                               const std::vector<std::vector<ad::Var>>& negatives, double alpha,
                               MarginMode mode) {
  if (positives.empty()) throw std::invalid_argument("margin_loss: empty batch");
  if (positives.size() != negatives.size())
    throw std::invalid_argument("margin_loss: one negative list per positive required");
  ad::Var total;
  bool have = false;
  auto accumulate = [&](ad::Var v) {
    total = have ? t.add(total, v) : v;
    have = true;
  };
  for (std::size_t i = 0; i < positives.size(); ++i) {
    if (negatives[i].empty())
      throw std::invalid_argument("margin_loss: positive " + std::to_string(i) +
                                  " has no negatives");
    if (mode == MarginMode::Pairwise) {
      for (ad::Var sj : negatives[i])
        accumulate(t.relu(t.add_scalar(t.sub(sj, positives[i]), alpha)));
    } else {
      ad::Var neg_sum = negatives[i][0];
      for (std::size_t j = 1; j < negatives[i].size(); ++j)
        neg_sum = t.add(neg_sum, negatives[i][j]);
      accumulate(t.relu(t.add_scalar(t.sub(neg_sum, positives[i]), alpha)));
    }
  }
  return total;
}

// ---- batches ----

struct BatchPair {
  std::size_t text_idx;
  std::size_t image_idx;
};

struct Batch {
  std::vector<std::size_t> positives;              // pool indices
  std::vector<std::vector<BatchPair>> negatives;   // per positive, mismatched pairs
};

/// Draws a batch from a pool of `pool_size` matched pairs. Negatives
/// re-pair a positive's text with other images and its image with other
/// texts; with `cached_scores` (pool x pool similarity under the current
/// model) the highest-scoring mismatches are taken instead of random ones.
inline Batch sample_batch(std::size_t pool_size, Rng& rng, const TrainConfig& cfg,
                          const Matrix* cached_scores) {
  if (cfg.positives_per_batch > pool_size)
    throw std::runtime_error("batch: pool exhausted (" + std::to_string(cfg.positives_per_batch) +
                             " positives requested from " + std::to_string(pool_size) + " pairs)");
  if (cfg.negatives_per_positive > pool_size - 1)
    throw std::runtime_error("batch: pool exhausted (" +
                             std::to_string(cfg.negatives_per_positive) +
                             " negatives requested from " + std::to_string(pool_size - 1) +
                             " candidates)");
  std::vector<std::size_t> order(pool_size);
  for (std::size_t i = 0; i < pool_size; ++i) order[i] = i;
  rng.shuffle(order);

  Batch batch;
  batch.positives.assign(order.begin(), order.begin() + cfg.positives_per_batch);
  batch.negatives.resize(cfg.positives_per_batch);

  const std::size_t n_image_side = (cfg.negatives_per_positive + 1) / 2;
  const std::size_t n_text_side = cfg.negatives_per_positive / 2;
  for (std::size_t k = 0; k < batch.positives.size(); ++k) {
    const std::size_t p = batch.positives[k];
    std::vector<std::size_t> candidates;
    candidates.reserve(pool_size - 1);
    for (std::size_t j = 0; j < pool_size; ++j)
      if (j != p) candidates.push_back(j);

    auto take_top = [&](auto score_of, std::size_t count) {
      std::vector<std::size_t> picked = candidates;
      std::stable_sort(picked.begin(), picked.end(), [&](std::size_t a, std::size_t b) {
        return score_of(a) > score_of(b);
      });
      picked.resize(count);
      return picked;
    };

    std::vector<std::size_t> image_side, text_side;
    if (cached_scores) {
      image_side = take_top([&](std::size_t j) { return (*cached_scores)(p, j); }, n_image_side);
      text_side = take_top([&](std::size_t j) { return (*cached_scores)(j, p); }, n_text_side);
    } else {
      std::vector<std::size_t> pool = candidates;
      rng.shuffle(pool);
      image_side.assign(pool.begin(), pool.begin() + n_image_side);
      rng.shuffle(pool);
      text_side.assign(pool.begin(), pool.begin() + n_text_side);
    }
    for (std::size_t j : image_side) batch.negatives[k].push_back({p, j});
    for (std::size_t j : text_side) batch.negatives[k].push_back({j, p});
  }
  return batch;
}

// ---- composed objective ----

struct LossBreakdown {
  double lambda = 0.0;
  double margin = 0.0;
  double iais = 0.0;  // full loss (V + L), mean over positives
  double iais_v = 0.0;
  double iais_l = 0.0;
  double total = 0.0;
};

namespace detail {

inline BlockVars split_block_vars(ad::Tape& t, ad::Var joint, const ModalityLayout& layout) {
  const std::size_t nl = layout.n_l;
  const std::size_t n = layout.joint();
  return BlockVars{t.block(joint, 0, nl, 0, nl), t.block(joint, 0, nl, nl, n),
                   t.block(joint, nl, n, 0, nl), t.block(joint, nl, n, nl, n)};
}

}  // namespace detail

/// L = L_margin + lambda_t * L_IAIS over one batch. The IAIS term covers
/// positive pairs only and is averaged over them; `breakdown` reports the
/// logged values (the full V+L loss regardless of the anchor selection).
inline ad::Var total_loss_var(ad::Tape& t, const ModelVars& mv,
                              const std::vector<PairSample>& pool, const Batch& batch,
                              const TrainConfig& cfg, std::int64_t step,
                              LossBreakdown* breakdown = nullptr) {
  std::map<std::pair<std::size_t, std::size_t>, EncodedPair> encoded;
  auto encode = [&](std::size_t ti, std::size_t ii) -> EncodedPair& {
    auto key = std::make_pair(ti, ii);
    auto it = encoded.find(key);
    if (it == encoded.end()) {
      it = encoded
               .emplace(key, encode_pair(t, pool.at(ti).text_features, pool.at(ii).region_features,
                                         mv))
               .first;
    }
    return it->second;
  };

  std::vector<ad::Var> pos_scores;
  std::vector<std::vector<ad::Var>> neg_scores(batch.positives.size());
  for (std::size_t k = 0; k < batch.positives.size(); ++k) {
    const std::size_t p = batch.positives[k];
    pos_scores.push_back(similarity_score(t, encode(p, p), mv));
    for (const BatchPair& np : batch.negatives[k])
      neg_scores[k].push_back(similarity_score(t, encode(np.text_idx, np.image_idx), mv));
  }
  ad::Var margin = margin_loss_var(t, pos_scores, neg_scores, cfg.margin, cfg.margin_mode);

  const double lambda =
      cfg.steps >= 1 ? lambda_schedule(cfg.schedule, cfg.gamma, step, cfg.steps) : 0.0;
  if (breakdown) {
    *breakdown = {};
    breakdown->lambda = lambda;
    breakdown->margin = t.value(margin)(0, 0);
  }

  if (cfg.iais == IaisKind::None) {
    if (breakdown) breakdown->total = breakdown->margin;
    return margin;
  }

  const std::size_t layer = cfg.iais_layer < 0 ? cfg.encoder.layers - 1
                                               : static_cast<std::size_t>(cfg.iais_layer);
  const double sigma_scale = 1.0 / std::sqrt(static_cast<double>(cfg.encoder.d_head()));

  ad::Var objective_sum, v_sum, l_sum;
  bool have = false;
  for (std::size_t k = 0; k < batch.positives.size(); ++k) {
    const std::size_t p = batch.positives[k];
    EncodedPair& pair = encode(p, p);

    auto loss_of = [&](ad::Var joint, IaisPartVars* parts) {
      BlockVars blocks = detail::split_block_vars(t, joint, pair.layout);
      return cfg.iais == IaisKind::Singular ? iais_singular_loss(t, blocks, sigma_scale, parts)
                                            : iais_distributed_loss(t, blocks, sigma_scale, parts);
    };

    ad::Var pv, pl;
    if (cfg.head_reduction == HeadReduction::Mean) {
      const auto& heads = pair.scores.at(layer);
      ad::Var mean = heads.at(0);
      for (std::size_t h = 1; h < heads.size(); ++h) mean = t.add(mean, heads[h]);
      mean = t.scale(mean, 1.0 / static_cast<double>(heads.size()));
      IaisPartVars parts;
      loss_of(mean, &parts);
      pv = parts.v_anchored;
      pl = parts.l_anchored;
    } else {
      const auto& heads = pair.scores.at(layer);
      IaisPartVars parts;
      loss_of(heads.at(0), &parts);
      pv = parts.v_anchored;
      pl = parts.l_anchored;
      for (std::size_t h = 1; h < heads.size(); ++h) {
        IaisPartVars ph;
        loss_of(heads[h], &ph);
        pv = t.add(pv, ph.v_anchored);
        pl = t.add(pl, ph.l_anchored);
      }
    }

    ad::Var selected = cfg.anchor == AnchorMode::Both        ? t.add(pv, pl)
                       : cfg.anchor == AnchorMode::VisionOnly ? pv
                                                              : pl;
    if (!have) {
      objective_sum = selected;
      v_sum = pv;
      l_sum = pl;
      have = true;
    } else {
      objective_sum = t.add(objective_sum, selected);
      v_sum = t.add(v_sum, pv);
      l_sum = t.add(l_sum, pl);
    }
  }

  const double inv_p = 1.0 / static_cast<double>(batch.positives.size());
  if (breakdown) {
    breakdown->iais_v = t.value(v_sum)(0, 0) * inv_p;
    breakdown->iais_l = t.value(l_sum)(0, 0) * inv_p;
    breakdown->iais = breakdown->iais_v + breakdown->iais_l;
  }

  if (lambda == 0.0) {
    if (breakdown) breakdown->total = breakdown->margin;
    return margin;
  }
  ad::Var total = t.add(margin, t.scale(t.scale(objective_sum, inv_p), lambda));
  if (breakdown) breakdown->total = t.value(total)(0, 0);
  return total;
}

// ---- checkpoint evaluation ----

struct CheckpointRow {
  std::int64_t step = 0;
  double lambda = 0, margin_loss = 0, iais_loss = 0, iais_v = 0, iais_l = 0, isda = 0;
  double r1_i = 0, r5_i = 0, r10_i = 0, r1_t = 0, r5_t = 0, r10_t = 0, meta_sum = 0;
};

struct RunRecord {
  std::vector<CheckpointRow> rows;
};

/// scores(i, j) = similarity of (text of pool[i], image of pool[j]).
inline Matrix pool_scores(const Model& model, const std::vector<PairSample>& pool) {
  Matrix out(pool.size(), pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    ad::Tape t;
    ModelVars mv = lift(t, model);
    for (std::size_t j = 0; j < pool.size(); ++j) {
      EncodedPair pair = encode_pair(t, pool[i].text_features, pool[j].region_features, mv);
      out(i, j) = t.value(similarity_score(t, pair, mv))(0, 0);
    }
  }
  return out;
}

/// Mean probe-set ISDa of the last layer's head-averaged attention.
inline double probe_isda(const Model& model, const std::vector<PairSample>& probe) {
  const EncoderConfig& cfg = model.encoder.config;
  const double sigma_scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_head()));
  double acc = 0.0;
  for (const PairSample& sample : probe) {
    ad::Tape t;
    ModelVars mv = lift(t, model);
    EncodedPair pair = encode_pair(t, sample.text_features, sample.region_features, mv);
    const Matrix attn = head_mean_attention(pair, cfg.layers - 1, sigma_scale);
    const AttentionBlocks blocks = split_blocks(attn, pair.layout);
    acc += isda(blocks.s_ll, blocks.s_vv, sample.annotations);
  }
  return acc / static_cast<double>(probe.size());
}

namespace detail {

/// Fixed evaluation batch over the probe pool: the first positives with
/// cyclically re-paired negatives, alternating image and text side.
inline Batch probe_eval_batch(std::size_t probe_size, const TrainConfig& cfg) {
  Batch batch;
  const std::size_t n_pos = std::min<std::size_t>(cfg.positives_per_batch, probe_size);
  const std::size_t n_neg = std::min<std::size_t>(cfg.negatives_per_positive, probe_size - 1);
  batch.negatives.resize(n_pos);
  for (std::size_t i = 0; i < n_pos; ++i) {
    batch.positives.push_back(i);
    for (std::size_t k = 1; k <= n_neg; ++k) {
      const std::size_t other = (i + k) % probe_size;
      if (k % 2 == 1)
        batch.negatives[i].push_back({i, other});
      else
        batch.negatives[i].push_back({other, i});
    }
  }
  return batch;
}

}  // namespace detail

inline CheckpointRow evaluate_checkpoint(const Model& model, const SyntheticTask& task,
                                         const TrainConfig& cfg, std::int64_t step) {
  CheckpointRow row;
  row.step = step;

  ad::Tape t;
  ModelVars mv = lift(t, model);
  LossBreakdown bd;
  total_loss_var(t, mv, task.probe_pool, detail::probe_eval_batch(task.probe_pool.size(), cfg),
                 cfg, step, &bd);
  row.lambda = bd.lambda;
  row.margin_loss = bd.margin;
  row.iais_loss = bd.iais;
  row.iais_v = bd.iais_v;
  row.iais_l = bd.iais_l;

  const Matrix scores = pool_scores(model, task.probe_pool);
  std::vector<std::size_t> identity(task.probe_pool.size());
  for (std::size_t i = 0; i < identity.size(); ++i) identity[i] = i;
  const RetrievalMetrics m = evaluate_retrieval(scores, identity);
  row.r1_i = m.r1_i;
  row.r5_i = m.r5_i;
  row.r10_i = m.r10_i;
  row.r1_t = m.r1_t;
  row.r5_t = m.r5_t;
  row.r10_t = m.r10_t;
  row.meta_sum = m.meta_sum;

  row.isda = probe_isda(model, task.probe_pool);
  return row;
}

// ---- the training loop ----

inline RunRecord train(const TrainConfig& cfg, const SyntheticTask& task) {
  cfg.validate();
  if (task.train_pool.empty() || task.probe_pool.empty())
    throw std::invalid_argument("train: task pools must be nonempty");

  Rng rng(cfg.seed);
  Model model = Model::init(cfg.encoder, rng);
  RunRecord record;
  Matrix mining_cache;

  for (std::int64_t step = 0;; ++step) {
    try {
      const bool checkpoint = (step % cfg.checkpoint_interval == 0) || step == cfg.steps;
      if (checkpoint) {
        if (cfg.hard_negatives) mining_cache = pool_scores(model, task.train_pool);
        record.rows.push_back(evaluate_checkpoint(model, task, cfg, step));
      }
      if (step == cfg.steps) break;

      Batch batch = sample_batch(task.train_pool.size(), rng, cfg,
                                 cfg.hard_negatives ? &mining_cache : nullptr);
      ad::Tape tape;
      ModelVars mv = lift(tape, model);
      LossBreakdown bd;
      ad::Var loss = total_loss_var(tape, mv, task.train_pool, batch, cfg, step, &bd);
      if (!std::isfinite(bd.total)) throw std::runtime_error("non-finite loss");
      tape.backward(loss);
      std::size_t next = 0;
      model.for_each_param([&](Matrix& p) {
        const Matrix& g = tape.grad(mv.flat[next++]);
        for (std::size_t k = 0; k < p.size(); ++k)
          p.data()[k] -= cfg.learning_rate * g.data()[k];
      });
    } catch (const std::exception& e) {
      throw std::runtime_error("train: aborted at step " + std::to_string(step) + ": " + e.what());
    }
  }
  return record;
}

/// Generates the synthetic task from the config and trains on it.
inline RunRecord train_run(const TrainConfig& cfg) {
  cfg.validate();
  return train(cfg, generate_task(cfg.task, cfg.seed));
}

}  // namespace relalign
