// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include "relalign/matrix.hpp"

namespace relalign {

/// Split point of a joint linguistic+visual sequence. Linguistic positions
/// occupy indices [0, n_l), visual positions [n_l, n_l + n_v).
struct ModalityLayout {
  std::size_t n_l = 0;
  std::size_t n_v = 0;

  ModalityLayout() = default;
  ModalityLayout(std::size_t nl, std::size_t nv) : n_l(nl), n_v(nv) {
    if (n_l == 0 || n_v == 0)
      throw std::invalid_argument("layout: both modalities need at least one position");
  }

  std::size_t joint() const { return n_l + n_v; }

  friend bool operator==(const ModalityLayout& a, const ModalityLayout& b) {
    return a.n_l == b.n_l && a.n_v == b.n_v;
  }
};

enum class Modality { Text, Vision };

/// The four-block decomposition of a joint attention score matrix.
struct AttentionBlocks {
  Matrix s_ll;  // n_l x n_l
  Matrix s_lv;  // n_l x n_v
  Matrix s_vl;  // n_v x n_l
  Matrix s_vv;  // n_v x n_v
  ModalityLayout layout;
};

inline AttentionBlocks split_blocks(const Matrix& s, const ModalityLayout& layout) {
  const std::size_t n = layout.joint();
  if (s.rows() != n || s.cols() != n) {
    throw std::invalid_argument("split_blocks: matrix is " + std::to_string(s.rows()) + "x" +
                                std::to_string(s.cols()) + " but layout expects " +
                                std::to_string(n) + "x" + std::to_string(n));
  }
  AttentionBlocks b;
  b.layout = layout;
  b.s_ll = Matrix(layout.n_l, layout.n_l);
  b.s_lv = Matrix(layout.n_l, layout.n_v);
  b.s_vl = Matrix(layout.n_v, layout.n_l);
  b.s_vv = Matrix(layout.n_v, layout.n_v);
  for (std::size_t i = 0; i < layout.n_l; ++i) {
    for (std::size_t j = 0; j < layout.n_l; ++j) b.s_ll(i, j) = s(i, j);
    for (std::size_t j = 0; j < layout.n_v; ++j) b.s_lv(i, j) = s(i, layout.n_l + j);
  }
  for (std::size_t i = 0; i < layout.n_v; ++i) {
    for (std::size_t j = 0; j < layout.n_l; ++j) b.s_vl(i, j) = s(layout.n_l + i, j);
    for (std::size_t j = 0; j < layout.n_v; ++j) b.s_vv(i, j) = s(layout.n_l + i, layout.n_l + j);
  }
  return b;
}

inline Matrix reassemble(const AttentionBlocks& b) {
  const std::size_t n = b.layout.joint();
  Matrix s(n, n);
  for (std::size_t i = 0; i < b.layout.n_l; ++i) {
    for (std::size_t j = 0; j < b.layout.n_l; ++j) s(i, j) = b.s_ll(i, j);
    for (std::size_t j = 0; j < b.layout.n_v; ++j) s(i, b.layout.n_l + j) = b.s_lv(i, j);
  }
  for (std::size_t i = 0; i < b.layout.n_v; ++i) {
    for (std::size_t j = 0; j < b.layout.n_l; ++j) s(b.layout.n_l + i, j) = b.s_vl(i, j);
    for (std::size_t j = 0; j < b.layout.n_v; ++j) s(b.layout.n_l + i, b.layout.n_l + j) = b.s_vv(i, j);
  }
  return s;
}

}  // namespace relalign
