// Copyright 2026 The slimnet Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SLIMNET_LAYER_HPP
#define SLIMNET_LAYER_HPP

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <string>
#include <tuple>
#include <vector>

#include "slimnet/ops.hpp"

namespace slimnet {

enum class LayerKind {
  dense,               // plain W, not compressed
  pruned,              // W diag(alpha)
  unstructured,        // W (elementwise) A
  low_rank,            // U diag(beta) V
  prune_low_rank,      // U diag(beta) V diag(alpha)
  quantized,           // bit-mask ladder over quantized copies of W
  prune_unstructured,  // (W (elementwise) A) diag(alpha)
  prune_quantized,     // ladder(W) diag(alpha)
};

inline bool kind_has_input_mask(LayerKind k) {
  return k == LayerKind::pruned || k == LayerKind::prune_low_rank ||
         k == LayerKind::prune_unstructured || k == LayerKind::prune_quantized;
}

inline bool kind_has_ladder(LayerKind k) {
  return k == LayerKind::quantized || k == LayerKind::prune_quantized;
}

inline const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::pruned: return "pruned";
    case LayerKind::unstructured: return "unstructured";
    case LayerKind::low_rank: return "low-rank";
    case LayerKind::prune_low_rank: return "prune+low-rank";
    case LayerKind::quantized: return "quantized";
    case LayerKind::prune_unstructured: return "prune+unstructured";
    case LayerKind::prune_quantized: return "prune+quantized";
  }
  return "?";
}

inline LayerKind kind_from_name(const std::string& s) {
  for (LayerKind k : {LayerKind::dense, LayerKind::pruned, LayerKind::unstructured,
                      LayerKind::low_rank, LayerKind::prune_low_rank,
                      LayerKind::quantized, LayerKind::prune_unstructured,
                      LayerKind::prune_quantized})
    if (s == kind_name(k)) return k;
  throw std::invalid_argument("unknown layer kind: " + s);
}

/// One compressible dense layer: base weights plus the mask parameterization
/// of its kind. Activations flow as (batch, in) -> (batch, out); weights are
/// stored out-by-in. 1x1 convolutions map onto this as matmuls over
/// (spatial*batch, channels).
struct CompressibleLayer {
  LayerKind kind = LayerKind::dense;
  std::size_t in_dim = 0, out_dim = 0;

  NodePtr weight;      // (out, in); unused by low-rank kinds
  NodePtr bias;        // (out), optional
  NodePtr input_mask;  // alpha (in); null means the static all-ones mask
  NodePtr elem_mask;   // (out, in) for unstructured kinds

  // Low-rank factors: weight ~ U diag(s) V with r = min(in, out).
  NodePtr factor_u, factor_s, factor_v;  // (out, r), (r), (r, in)

  // Quantization ladder: bits[0] is the floor width (its mask is fixed at 1);
  // bit_masks[j] is the scalar mask for bits[j+1].
  std::vector<int> bit_ladder;
  std::vector<NodePtr> bit_masks;
  double range_lo = 0.0, range_hi = 0.0;

  bool batchnorm = false;
  NodePtr bn_scale, bn_shift;
  double bn_eps = 1e-5;
  bool relu_after = false;

  bool mask_dead = false;  // set when a mask's l2 norm fell below the guard

  std::size_t rank_dim() const { return std::min(in_dim, out_dim); }
};

/// Elementwise clamp to [r_lo, r_hi] built from the double-ReLU composition,
/// so it stays differentiable in the graph.
inline NodePtr clip(const NodePtr& w, double r_lo, double r_hi) {
  if (r_lo >= r_hi)
    throw std::invalid_argument("clip: need r_lo < r_hi, got [" +
                                std::to_string(r_lo) + ", " +
                                std::to_string(r_hi) + ")");
  auto shape = w->value.shape;
  auto inner = relu(sub(w, constant(Tensor::full(shape, r_lo))));
  auto outer = relu(sub(constant(Tensor::full(shape, r_hi - r_lo)), inner));
  return sub(constant(Tensor::full(shape, r_hi)), outer);
}

/// Uniform b-bit quantization over [r_lo, r_hi]: clip, snap to the 2^b-point
/// grid through the straight-through round, so training gradients pass.
inline NodePtr quantize_b(const NodePtr& w, double r_lo, double r_hi, int b) {
  if (b < 1) throw std::invalid_argument("quantize_b: bits must be >= 1");
  double step = (r_hi - r_lo) / double((1ll << b) - 1);
  auto shape = w->value.shape;
  auto shifted = sub(clip(w, r_lo, r_hi), constant(Tensor::full(shape, r_lo)));
  auto snapped = scale(round_ste(scale(shifted, 1.0 / step)), step);
  return add(snapped, constant(Tensor::full(shape, r_lo)));
}

/// Nested ladder of Appendix-style bit masks: with all masks binary the
/// expression telescopes to the quantized copy at the selected width.
inline NodePtr quant_ladder_weight(const CompressibleLayer& layer) {
  if (layer.bit_ladder.empty())
    throw std::invalid_argument("quant ladder: empty bit ladder");
  if (layer.bit_masks.size() + 1 != layer.bit_ladder.size())
    throw std::invalid_argument("quant ladder: need one mask per bit width "
                                "after the first");
  std::vector<NodePtr> levels;
  levels.reserve(layer.bit_ladder.size());
  for (int b : layer.bit_ladder)
    levels.push_back(quantize_b(layer.weight, layer.range_lo, layer.range_hi, b));
  // W_{b0} + m1 (W_{b1} - W_{b0} + m2 (W_{b2} - W_{b1} + ...))
  NodePtr acc;
  for (std::size_t j = layer.bit_ladder.size(); j-- > 1;) {
    NodePtr delta = sub(levels[j], levels[j - 1]);
    NodePtr term = acc ? add(delta, acc) : delta;
    acc = scalar_mul(layer.bit_masks[j - 1], term);
  }
  return acc ? add(levels[0], acc) : levels[0];
}

inline NodePtr mask_or_ones(const NodePtr& mask, std::size_t dim) {
  return mask ? mask : constant(Tensor::ones({dim}));
}

/// The layer's effective dense weight per its parameterization.
inline NodePtr effective_weight(const CompressibleLayer& layer) {
  switch (layer.kind) {
    case LayerKind::dense:
      return layer.weight;
    case LayerKind::pruned:
      return col_scale(layer.weight, mask_or_ones(layer.input_mask, layer.in_dim));
    case LayerKind::unstructured:
      return mul(layer.weight, layer.elem_mask);
    case LayerKind::low_rank:
      return matmul(layer.factor_u, row_scale(layer.factor_s, layer.factor_v));
    case LayerKind::prune_low_rank:
      return col_scale(
          matmul(layer.factor_u, row_scale(layer.factor_s, layer.factor_v)),
          mask_or_ones(layer.input_mask, layer.in_dim));
    case LayerKind::quantized:
      return quant_ladder_weight(layer);
    case LayerKind::prune_unstructured:
      return col_scale(mul(layer.weight, layer.elem_mask),
                       mask_or_ones(layer.input_mask, layer.in_dim));
    case LayerKind::prune_quantized:
      return col_scale(quant_ladder_weight(layer),
                       mask_or_ones(layer.input_mask, layer.in_dim));
  }
  throw std::logic_error("effective_weight: unreachable");
}

/// SVD warm start: W == U diag(s) V with s nonnegative nonincreasing,
/// orthonormal U columns and V rows. Thin factorization, r = min(m, n).
inline std::tuple<Tensor, Tensor, Tensor> svd_init(const Tensor& w) {
  if (!w.is_matrix()) throw std::invalid_argument("svd_init: expected a matrix");
  if (!w.all_finite()) throw std::invalid_argument("svd_init: non-finite weight");
  std::size_t m = w.rows(), n = w.cols(), r = std::min(m, n);
  Eigen::MatrixXd a(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = w.at(i, j);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success)
    throw std::runtime_error("svd_init: SVD did not converge on a " +
                             w.shape_str() + " matrix");
  Tensor u({m, r}), s({r}), v({r, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < r; ++j) u.at(i, j) = svd.matrixU()(i, j);
  for (std::size_t j = 0; j < r; ++j) s.at(j) = svd.singularValues()(j);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < n; ++j) v.at(i, j) = svd.matrixV()(j, i);
  return {u, s, v};
}

}  // namespace slimnet

#endif  // SLIMNET_LAYER_HPP
