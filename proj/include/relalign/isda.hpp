// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "relalign/annotations.hpp"
#include "relalign/matrix.hpp"
#include "relalign/tensor_ops.hpp"

namespace relalign {

/// Gathers the submatrix of S addressed by the given row and column index
/// sets, in listed order.
inline Matrix ext_patch(const Matrix& s, const std::vector<std::size_t>& row_indices,
                        const std::vector<std::size_t>& col_indices) {
  if (row_indices.empty() || col_indices.empty())
    throw std::invalid_argument("ext_patch: empty index set");
  for (std::size_t r : row_indices) {
    if (r >= s.rows())
      throw std::out_of_range("ext_patch: row index " + std::to_string(r) + " out of bounds");
  }
  for (std::size_t c : col_indices) {
    if (c >= s.cols())
      throw std::out_of_range("ext_patch: col index " + std::to_string(c) + " out of bounds");
  }
  Matrix out(row_indices.size(), col_indices.size());
  for (std::size_t i = 0; i < row_indices.size(); ++i)
    for (std::size_t j = 0; j < col_indices.size(); ++j)
      out(i, j) = s(row_indices[i], col_indices[j]);
  return out;
}

/// Compresses an attention patch to a scalar: column-wise sum, row-wise
/// average, i.e. (sum of all entries) / rows.
inline double cps(const Matrix& patch) {
  double total = 0.0;
  for (std::size_t i = 0; i < patch.rows(); ++i)
    for (std::size_t j = 0; j < patch.cols(); ++j) total += patch(i, j);
  return total / static_cast<double>(patch.rows());
}

/// Annotation-grouped compression of one intra-modal attention block.
struct CompressedAttention {
  Matrix matrix;  // object-count x object-count
  Modality modality;
};

/// Entry [i,j] is cps(ext_patch(block, idx(o_i), idx(o_j))) with index sets
/// taken from the modality's side of the annotations.
inline CompressedAttention compress_by_objects(const RowStochasticMatrix& block,
                                               const ObjectAnnotationSet& annotations,
                                               Modality modality) {
  const std::size_t n = annotations.size();
  const Matrix& s = block.matrix();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t idx : annotations.indices(i, modality)) {
      if (idx >= s.rows()) {
        throw std::out_of_range("compress_by_objects: object " + std::to_string(i) + " index " +
                                std::to_string(idx) + " exceeds block size " +
                                std::to_string(s.rows()));
      }
    }
  }
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out(i, j) = cps(ext_patch(s, annotations.indices(i, modality),
                                annotations.indices(j, modality)));
    }
  }
  return CompressedAttention{std::move(out), modality};
}

struct IsdaOptions {
  // Compressed rows are not guaranteed stochastic; by default they are
  // renormalized before the symmetric KL. The raw variant skips that step.
  bool normalize_compressed = true;
};

struct IsdaBreakdown {
  double total = 0.0;
  std::vector<double> per_object;  // symmetric KL term of each object row
};

/// Intra-modal self-attention distance over annotation-grouped attention.
/// Inputs are the intra-modal blocks of a post-softmax attention matrix;
/// rows are renormalized over the block before extraction.
inline IsdaBreakdown isda_detailed(const Matrix& p_ll, const Matrix& p_vv,
                                   const ObjectAnnotationSet& annotations,
                                   const IsdaOptions& opts = {}) {
  if (p_ll.rows() != p_ll.cols() || p_vv.rows() != p_vv.cols())
    throw std::invalid_argument("isda: intra-modal blocks must be square");
  annotations.check_bounds(ModalityLayout(p_ll.rows(), p_vv.rows()));
  const RowStochasticMatrix ll = renormalize_rows(p_ll);
  const RowStochasticMatrix vv = renormalize_rows(p_vv);
  const Matrix cl = compress_by_objects(ll, annotations, Modality::Text).matrix;
  const Matrix cv = compress_by_objects(vv, annotations, Modality::Vision).matrix;

  IsdaBreakdown out;
  out.per_object.resize(annotations.size());
  if (opts.normalize_compressed) {
    const RowStochasticMatrix nl = renormalize_rows(cl);
    const RowStochasticMatrix nv = renormalize_rows(cv);
    for (std::size_t i = 0; i < annotations.size(); ++i) {
      out.per_object[i] =
          detail::kl_prepared(nl.row(i), nv.row(i)) + detail::kl_prepared(nv.row(i), nl.row(i));
      out.total += out.per_object[i];
    }
  } else {
    for (std::size_t i = 0; i < annotations.size(); ++i) {
      out.per_object[i] = detail::kl_raw(cl.row(i), cv.row(i)) + detail::kl_raw(cv.row(i), cl.row(i));
      out.total += out.per_object[i];
    }
  }
  return out;
}

inline double isda(const Matrix& p_ll, const Matrix& p_vv, const ObjectAnnotationSet& annotations,
                   const IsdaOptions& opts = {}) {
  return isda_detailed(p_ll, p_vv, annotations, opts).total;
}

}  // namespace relalign
