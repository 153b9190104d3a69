// SPDX-License-Identifier: Apache-2.0
#pragma once

// Desk-scale stand-in for annotated image-text pairs. Each pair draws a set
// of latent object vectors; tokens and regions are noisy copies of their
// object's latent, so matched pairs share structure across modalities while
// mismatched pairs do not. Ground-truth annotations record which positions
// belong to which object.

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "relalign/annotations.hpp"
#include "relalign/matrix.hpp"
#include "relalign/rng.hpp"

namespace relalign {

struct SyntheticTaskConfig {
  std::size_t objects = 4;
  std::size_t tokens_min = 1, tokens_max = 1;
  std::size_t regions_min = 1, regions_max = 1;
  std::size_t feature_dim = 16;
  double noise = 0.1;
  std::size_t train_pairs = 64;
  std::size_t probe_pairs = 64;

  void validate() const {
    if (objects == 0) throw std::invalid_argument("task: need at least one object");
    if (tokens_min == 0 || regions_min == 0 || tokens_min > tokens_max ||
        regions_min > regions_max)
      throw std::invalid_argument("task: invalid per-object token/region ranges");
    if (feature_dim == 0) throw std::invalid_argument("task: feature_dim must be >= 1");
    if (noise < 0.0) throw std::invalid_argument("task: noise must be nonnegative");
    if (train_pairs == 0 || probe_pairs == 0)
      throw std::invalid_argument("task: pools must be nonempty");
  }
};

struct PairSample {
  Matrix text_features;    // n_l x feature_dim
  Matrix region_features;  // n_v x feature_dim
  ObjectAnnotationSet annotations;
};

struct SyntheticTask {
  SyntheticTaskConfig config;
  std::vector<PairSample> train_pool;
  std::vector<PairSample> probe_pool;  // held out; never trained on
};

inline PairSample generate_pair(const SyntheticTaskConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.feature_dim;
  std::vector<std::vector<double>> latents(cfg.objects, std::vector<double>(d));
  for (auto& z : latents)
    for (double& v : z) v = rng.normal();

  auto noisy_copy = [&](const std::vector<double>& z, std::vector<double>& out) {
    out.resize(d);
    for (std::size_t j = 0; j < d; ++j) out[j] = z[j] + cfg.noise * rng.normal();
  };

  // Tokens: objects appear in order, sentence-like.
  std::vector<double> text_data;
  std::vector<std::vector<std::size_t>> token_idx(cfg.objects);
  std::size_t n_l = 0;
  for (std::size_t k = 0; k < cfg.objects; ++k) {
    const std::size_t count =
        static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(cfg.tokens_min),
                                                 static_cast<std::int64_t>(cfg.tokens_max)));
    for (std::size_t c = 0; c < count; ++c) {
      std::vector<double> row;
      noisy_copy(latents[k], row);
      text_data.insert(text_data.end(), row.begin(), row.end());
      token_idx[k].push_back(n_l++);
    }
  }

  // Regions: set-like, stored in a shuffled order.
  std::vector<std::size_t> owner;  // owner[r] = object of region row r, pre-shuffle
  for (std::size_t k = 0; k < cfg.objects; ++k) {
    const std::size_t count =
        static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(cfg.regions_min),
                                                 static_cast<std::int64_t>(cfg.regions_max)));
    for (std::size_t c = 0; c < count; ++c) owner.push_back(k);
  }
  std::vector<std::size_t> order(owner.size());
  for (std::size_t r = 0; r < order.size(); ++r) order[r] = r;
  rng.shuffle(order);

  const std::size_t n_v = owner.size();
  std::vector<double> region_data(n_v * d);
  std::vector<std::vector<std::size_t>> region_idx(cfg.objects);
  for (std::size_t pos = 0; pos < n_v; ++pos) {
    const std::size_t k = owner[order[pos]];
    std::vector<double> row;
    noisy_copy(latents[k], row);
    for (std::size_t j = 0; j < d; ++j) region_data[pos * d + j] = row[j];
    region_idx[k].push_back(pos);
  }

  std::vector<ObjectAnnotation> objects;
  for (std::size_t k = 0; k < cfg.objects; ++k) {
    objects.push_back({"object_" + std::to_string(k), token_idx[k], region_idx[k]});
  }
  return PairSample{Matrix(n_l, d, std::move(text_data)), Matrix(n_v, d, std::move(region_data)),
                    ObjectAnnotationSet(std::move(objects))};
}

inline SyntheticTask generate_task(const SyntheticTaskConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SyntheticTask task;
  task.config = cfg;
  Rng rng(seed);
  task.train_pool.reserve(cfg.train_pairs);
  for (std::size_t i = 0; i < cfg.train_pairs; ++i) task.train_pool.push_back(generate_pair(cfg, rng));
  task.probe_pool.reserve(cfg.probe_pairs);
  for (std::size_t i = 0; i < cfg.probe_pairs; ++i) task.probe_pool.push_back(generate_pair(cfg, rng));
  return task;
}

}  // namespace relalign
