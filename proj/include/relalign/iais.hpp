// SPDX-License-Identifier: Apache-2.0
#pragma once

// Mirrored-attention reconstruction and the singular/distributed alignment
// losses. The loss builders work on tape variables so the same formulas
// serve both training and the plain-matrix entry points.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

#include "relalign/autodiff.hpp"
#include "relalign/layout.hpp"
#include "relalign/matrix.hpp"
#include "relalign/tensor_ops.hpp"

namespace relalign {

enum class AlignmentKind { Singular, Distributed };

/// An intra-modal block next to its reconstruction from the other modality.
struct MirroredAttention {
  Matrix original;
  Matrix mirrored;
  Modality anchor;
  AlignmentKind kind;
};

/// Rebuilds an intra-modal block through argmax lookups in the cross-modal
/// scores: out[i,j] = src[i*, j*] with i* = argmax of cross row i. The
/// argmax works on raw scores; any strictly monotone row transform of
/// `s_cross` leaves the result unchanged.
inline Matrix singular_mirror(const Matrix& s_src_intra, const Matrix& s_cross) {
  if (s_src_intra.rows() != s_src_intra.cols())
    throw std::invalid_argument("singular_mirror: source intra block must be square");
  if (s_cross.cols() != s_src_intra.rows())
    throw std::invalid_argument("singular_mirror: cross block has " +
                                std::to_string(s_cross.cols()) +
                                " columns but source block is " +
                                std::to_string(s_src_intra.rows()) + "-dimensional");
  const std::vector<std::size_t> idx = row_argmax(s_cross);
  Matrix out(s_cross.rows(), s_cross.rows());
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) = s_src_intra(idx[i], idx[j]);
  return out;
}

/// Soft reconstruction: S_VV^(d) = sigma(S_VL) sigma(S_LV) and the L
/// counterpart. Outputs are row-stochastic.
inline std::pair<Matrix, Matrix> distributed_mirror(const Matrix& s_vl, const Matrix& s_lv,
                                                    double sigma_scale = 1.0) {
  if (s_vl.cols() != s_lv.rows() || s_lv.cols() != s_vl.rows())
    throw std::invalid_argument("distributed_mirror: inner dimensions do not match");
  const Matrix p_vl = row_softmax(s_vl, sigma_scale).matrix();
  const Matrix p_lv = row_softmax(s_lv, sigma_scale).matrix();
  return {matmul(p_vl, p_lv), matmul(p_lv, p_vl)};
}

struct BlockVars {
  ad::Var s_ll, s_lv, s_vl, s_vv;
};

struct IaisPartVars {
  ad::Var v_anchored, l_anchored;
};

inline ad::Var iais_singular_loss(ad::Tape& t, const BlockVars& b, double sigma_scale,
                                  IaisPartVars* parts = nullptr) {
  const Matrix& vl = t.value(b.s_vl);
  const Matrix& lv = t.value(b.s_lv);
  if (vl.cols() != t.value(b.s_ll).rows())
    throw std::invalid_argument("iais_singular: S_VL width does not match S_LL");
  if (lv.cols() != t.value(b.s_vv).rows())
    throw std::invalid_argument("iais_singular: S_LV width does not match S_VV");
  const auto iv = row_argmax(vl);
  const auto il = row_argmax(lv);
  ad::Var mirror_vv = t.gather(b.s_ll, iv, iv);
  ad::Var mirror_ll = t.gather(b.s_vv, il, il);
  ad::Var part_v = ad::m_kl(t, t.row_softmax(b.s_vv, sigma_scale),
                            t.row_softmax(mirror_vv, sigma_scale));
  ad::Var part_l = ad::m_kl(t, t.row_softmax(b.s_ll, sigma_scale),
                            t.row_softmax(mirror_ll, sigma_scale));
  if (parts) *parts = {part_v, part_l};
  return t.add(part_v, part_l);
}

inline ad::Var iais_distributed_loss(ad::Tape& t, const BlockVars& b, double sigma_scale,
                                     IaisPartVars* parts = nullptr) {
  const Matrix& vl = t.value(b.s_vl);
  const Matrix& lv = t.value(b.s_lv);
  if (vl.cols() != lv.rows() || lv.cols() != vl.rows())
    throw std::invalid_argument("iais_distributed: inner dimensions do not match");
  ad::Var p_vl = t.row_softmax(b.s_vl, sigma_scale);
  ad::Var p_lv = t.row_softmax(b.s_lv, sigma_scale);
  ad::Var s_vv_d = t.matmul(p_vl, p_lv);
  ad::Var s_ll_d = t.matmul(p_lv, p_vl);
  ad::Var part_v = ad::m_kl(t, t.row_softmax(b.s_vv, sigma_scale), s_vv_d);
  ad::Var part_l = ad::m_kl(t, t.row_softmax(b.s_ll, sigma_scale), s_ll_d);
  if (parts) *parts = {part_v, part_l};
  return t.add(part_v, part_l);
}

struct IaisParts {
  double v_anchored = 0.0;
  double l_anchored = 0.0;
};

struct IaisResult {
  double loss = 0.0;
  IaisParts parts;
};

namespace detail {
inline IaisResult eval_iais(const AttentionBlocks& blocks, AlignmentKind kind,
                            double sigma_scale) {
  ad::Tape t;
  BlockVars b{t.constant(blocks.s_ll), t.constant(blocks.s_lv), t.constant(blocks.s_vl),
              t.constant(blocks.s_vv)};
  IaisPartVars parts;
  ad::Var loss = kind == AlignmentKind::Singular ? iais_singular_loss(t, b, sigma_scale, &parts)
                                                 : iais_distributed_loss(t, b, sigma_scale, &parts);
  IaisResult out;
  out.parts.v_anchored = t.value(parts.v_anchored)(0, 0);
  out.parts.l_anchored = t.value(parts.l_anchored)(0, 0);
  out.loss = t.value(loss)(0, 0);
  return out;
}
}  // namespace detail

inline IaisResult iais_singular(const AttentionBlocks& blocks, double sigma_scale = 1.0) {
  return detail::eval_iais(blocks, AlignmentKind::Singular, sigma_scale);
}

inline IaisResult iais_distributed(const AttentionBlocks& blocks, double sigma_scale = 1.0) {
  return detail::eval_iais(blocks, AlignmentKind::Distributed, sigma_scale);
}

/// Builds the MirroredAttention record for one anchor modality.
inline MirroredAttention mirror_attention(const AttentionBlocks& blocks, AlignmentKind kind,
                                          Modality anchor, double sigma_scale = 1.0) {
  MirroredAttention out;
  out.kind = kind;
  out.anchor = anchor;
  if (kind == AlignmentKind::Singular) {
    if (anchor == Modality::Vision) {
      out.original = blocks.s_vv;
      out.mirrored = singular_mirror(blocks.s_ll, blocks.s_vl);
    } else {
      out.original = blocks.s_ll;
      out.mirrored = singular_mirror(blocks.s_vv, blocks.s_lv);
    }
  } else {
    auto [vv_d, ll_d] = distributed_mirror(blocks.s_vl, blocks.s_lv, sigma_scale);
    if (anchor == Modality::Vision) {
      out.original = blocks.s_vv;
      out.mirrored = std::move(vv_d);
    } else {
      out.original = blocks.s_ll;
      out.mirrored = std::move(ll_d);
    }
    for (std::size_t i = 0; i < out.mirrored.rows(); ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < out.mirrored.cols(); ++j) sum += out.mirrored(i, j);
      if (std::abs(sum - 1.0) > 1e-10)
        throw std::logic_error("mirror_attention: distributed mirror row " + std::to_string(i) +
                               " is not stochastic");
    }
  }
  if (!out.original.same_shape(out.mirrored))
    throw std::logic_error("mirror_attention: shape mismatch between original and mirror");
  return out;
}

}  // namespace relalign
