// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "relalign/matrix.hpp"

namespace relalign {

/// Recall@{1,5,10} for both retrieval directions, on a percent scale, and
/// their six-term sum.
struct RetrievalMetrics {
  double r1_i = 0, r5_i = 0, r10_i = 0;  // image retrieval: text queries
  double r1_t = 0, r5_t = 0, r10_t = 0;  // text retrieval: image queries
  double meta_sum = 0;
};

namespace detail {
// Rank of `target` among the scores (descending; ties broken to the lowest
// index). score(j) is an accessor over [0, n).
template <class ScoreFn>
std::size_t rank_of(ScoreFn score, std::size_t n, std::size_t target) {
  const double st = score(target);
  std::size_t rank = 1;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == target) continue;
    if (score(j) > st || (score(j) == st && j < target)) ++rank;
  }
  return rank;
}
}  // namespace detail

/// `scores` is texts x images; text_to_image[i] is the ground-truth image of
/// text i and must form a 1:1 pairing (a permutation).
inline RetrievalMetrics evaluate_retrieval(const Matrix& scores,
                                           const std::vector<std::size_t>& text_to_image) {
  const std::size_t n_text = scores.rows();
  const std::size_t n_image = scores.cols();
  if (text_to_image.size() != n_text)
    throw std::invalid_argument("retrieval: ground-truth mapping size does not match texts");
  if (n_text != n_image)
    throw std::invalid_argument("retrieval: 1:1 pairing requires a square score matrix");
  if (n_image < 10 || n_text < 10)
    throw std::invalid_argument("retrieval: recall@10 needs at least 10 candidates, got " +
                                std::to_string(n_image));
  std::vector<std::size_t> image_to_text(n_image, n_text);
  for (std::size_t i = 0; i < n_text; ++i) {
    const std::size_t j = text_to_image[i];
    if (j >= n_image) throw std::invalid_argument("retrieval: ground-truth image out of range");
    if (image_to_text[j] != n_text)
      throw std::invalid_argument("retrieval: ground-truth mapping is not 1:1");
    image_to_text[j] = i;
  }

  std::size_t i1 = 0, i5 = 0, i10 = 0, t1 = 0, t5 = 0, t10 = 0;
  for (std::size_t i = 0; i < n_text; ++i) {
    const std::size_t r =
        detail::rank_of([&](std::size_t j) { return scores(i, j); }, n_image, text_to_image[i]);
    i1 += r <= 1;
    i5 += r <= 5;
    i10 += r <= 10;
  }
  for (std::size_t j = 0; j < n_image; ++j) {
    const std::size_t r =
        detail::rank_of([&](std::size_t i) { return scores(i, j); }, n_text, image_to_text[j]);
    t1 += r <= 1;
    t5 += r <= 5;
    t10 += r <= 10;
  }
  RetrievalMetrics m;
  const double ft = 100.0 / static_cast<double>(n_text);
  const double fi = 100.0 / static_cast<double>(n_image);
  m.r1_i = static_cast<double>(i1) * ft;
  m.r5_i = static_cast<double>(i5) * ft;
  m.r10_i = static_cast<double>(i10) * ft;
  m.r1_t = static_cast<double>(t1) * fi;
  m.r5_t = static_cast<double>(t5) * fi;
  m.r10_t = static_cast<double>(t10) * fi;
  m.meta_sum = m.r1_i + m.r5_i + m.r10_i + m.r1_t + m.r5_t + m.r10_t;
  return m;
}

}  // namespace relalign
