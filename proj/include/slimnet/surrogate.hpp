// Copyright 2026 The slimnet Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SLIMNET_SURROGATE_HPP
#define SLIMNET_SURROGATE_HPP

#include <cmath>
#include <string>
#include <vector>

#include "slimnet/layer.hpp"

namespace slimnet {

// Below this l2 norm a mask is declared dead: its surrogate contribution is
// exactly 0 and no gradient flows (the ratio is undefined at the zero vector).
inline constexpr double kDeadMaskEps = 1e-12;

enum class SurrogateKind { l1, l1_over_l2 };
enum class CostModel { flops, latency_table };
enum class QuantSurrogateVariant { verbatim_ratio, numerator_only };

/// Which surrogate drives training, against which cost model, at what
/// coefficient (the schedule lives in TrainConfig).
struct RegularizerSpec {
  SurrogateKind surrogate = SurrogateKind::l1_over_l2;
  CostModel cost = CostModel::flops;
  double lambda_max = 0.0;
  QuantSurrogateVariant quant_variant = QuantSurrogateVariant::verbatim_ratio;
};

inline void require_nonnegative(const Tensor& mask, const char* what) {
  for (std::size_t i = 0; i < mask.data.size(); ++i)
    if (mask.data[i] < 0.0)
      throw std::invalid_argument(std::string(what) + ": negative entry " +
                                  std::to_string(mask.data[i]) + " at index " +
                                  std::to_string(i) +
                                  " (projection contract violated)");
}

/// Scale-invariant differentiable proxy for the nonzero count:
/// sqrt(d) * sum(alpha) / ||alpha||_2, in [0, d] for nonnegative alpha.
/// A dead mask (l2 below the guard) contributes exactly 0.
inline NodePtr l1l2_count(const NodePtr& alpha, bool* dead = nullptr) {
  const Tensor& a = alpha->value;
  if (a.numel() < 1) throw std::invalid_argument("l1l2_count: empty mask");
  require_nonnegative(a, "l1l2_count");
  double norm2 = 0.0;
  for (double v : a.data) norm2 += v * v;
  if (std::sqrt(norm2) < kDeadMaskEps) {
    if (dead) *dead = true;
    return constant(0.0);
  }
  return scale(divide(sum(alpha), l2_norm(alpha)), std::sqrt(double(a.numel())));
}

inline NodePtr count_or_const(const NodePtr& mask, std::size_t dim, bool* dead) {
  if (!mask) return constant(double(dim));  // static all-ones mask
  return l1l2_count(mask, dead);
}

/// The bit-cost vector of the quantization ladder: entry j carries
/// bits[j] * prod(masks up to j) * (1 - next mask).
inline NodePtr quant_bit_vector(const CompressibleLayer& layer) {
  const auto& bits = layer.bit_ladder;
  const auto& masks = layer.bit_masks;
  if (masks.size() + 1 != bits.size())
    throw std::invalid_argument("quant surrogate: ladder/mask size mismatch");
  for (std::size_t j = 0; j < masks.size(); ++j) {
    double v = masks[j]->value.data[0];
    if (v < 0.0 || v > 1.0)
      throw std::invalid_argument("quant surrogate: bit mask for " +
                                  std::to_string(bits[j + 1]) +
                                  " bits outside [0,1]: " + std::to_string(v));
  }
  std::vector<NodePtr> entries;
  NodePtr prod;  // running product of masks; null means 1
  for (std::size_t j = 0; j < bits.size(); ++j) {
    NodePtr term;
    if (j + 1 < bits.size()) {
      NodePtr one_minus = sub(constant(1.0), masks[j]);
      term = prod ? mul(prod, one_minus) : one_minus;
    } else {
      term = prod ? prod : constant(1.0);
    }
    entries.push_back(scale(term, double(bits[j])));
    if (j + 1 < bits.size()) prod = prod ? mul(prod, masks[j]) : masks[j];
  }
  return concat_scalars(entries);
}

/// Differentiable bit-cost ratio of a quantized layer, without the
/// d_i*d_{i+1} scaling (callers multiply by FLOPs or by pruning counts).
inline NodePtr quant_cost_ratio(const CompressibleLayer& layer,
                                QuantSurrogateVariant variant, bool* dead = nullptr) {
  NodePtr v = quant_bit_vector(layer);
  if (variant == QuantSurrogateVariant::numerator_only) return sum(v);
  double norm2 = 0.0;
  for (double x : v->value.data) norm2 += x * x;
  if (std::sqrt(norm2) < kDeadMaskEps) {
    if (dead) *dead = true;
    return constant(0.0);
  }
  return divide(sum(v), l2_norm(v));
}

/// Differentiable FLOPs surrogate of one layer. `next_mask` is the following
/// layer's input mask (null for the static all-ones mask of width next_dim).
inline NodePtr flops_surrogate(const CompressibleLayer& layer,
                               const NodePtr& next_mask, std::size_t next_dim,
                               QuantSurrogateVariant quant_variant =
                                   QuantSurrogateVariant::verbatim_ratio,
                               bool* dead = nullptr) {
  double dd = double(layer.in_dim) * double(layer.out_dim);
  switch (layer.kind) {
    case LayerKind::dense:
      return constant(dd);
    case LayerKind::pruned:
      return mul(count_or_const(layer.input_mask, layer.in_dim, dead),
                 count_or_const(next_mask, next_dim, dead));
    case LayerKind::unstructured:
      return l1l2_count(layer.elem_mask, dead);
    case LayerKind::low_rank:
      return scale(l1l2_count(layer.factor_s, dead),
                   double(layer.in_dim + layer.out_dim));
    case LayerKind::prune_low_rank:
      return mul(add(count_or_const(layer.input_mask, layer.in_dim, dead),
                     count_or_const(next_mask, next_dim, dead)),
                 l1l2_count(layer.factor_s, dead));
    case LayerKind::prune_unstructured:
      return l1l2_count(
          col_scale(layer.elem_mask, mask_or_ones(layer.input_mask, layer.in_dim)),
          dead);
    case LayerKind::quantized:
      return scale(quant_cost_ratio(layer, quant_variant, dead), dd);
    case LayerKind::prune_quantized:
      return mul(quant_cost_ratio(layer, quant_variant, dead),
                 mul(count_or_const(layer.input_mask, layer.in_dim, dead),
                     count_or_const(next_mask, next_dim, dead)));
  }
  throw std::logic_error("flops_surrogate: unreachable");
}

/// The l1 baseline surrogate (pruning parameterization only):
/// ||alpha_i||_1 * ||alpha_{i+1}||_1. Scales linearly with the masks, which
/// is exactly the failure mode the design-verification study demonstrates.
inline NodePtr l1_surrogate(const CompressibleLayer& layer,
                            const NodePtr& next_mask, std::size_t next_dim) {
  if (layer.kind != LayerKind::pruned && layer.kind != LayerKind::dense)
    throw std::invalid_argument(
        std::string("l1_surrogate: only the pruning parameterization is "
                    "supported, got ") + kind_name(layer.kind));
  if (layer.input_mask) require_nonnegative(layer.input_mask->value, "l1_surrogate");
  if (next_mask) require_nonnegative(next_mask->value, "l1_surrogate");
  NodePtr a = layer.input_mask ? sum(layer.input_mask)
                               : constant(double(layer.in_dim));
  NodePtr b = next_mask ? sum(next_mask) : constant(double(next_dim));
  return mul(a, b);
}

inline std::size_t nnz(const Tensor& t) {
  std::size_t k = 0;
  for (double v : t.data)
    if (v != 0.0) ++k;
  return k;
}

inline std::size_t nnz_or_dim(const NodePtr& mask, std::size_t dim) {
  return mask ? nnz(mask->value) : dim;
}

/// Bit width the ladder selects once masks are projected to {0,1} at 0.5.
inline int selected_bits(const CompressibleLayer& layer) {
  int b = layer.bit_ladder.at(0);
  for (std::size_t j = 0; j < layer.bit_masks.size(); ++j) {
    if (layer.bit_masks[j]->value.data[0] >= 0.5)
      b = layer.bit_ladder[j + 1];
    else
      break;
  }
  return b;
}

/// Exact l0-based MAC count of one layer (strict nonzeros; quantized layers
/// count bits * dense MACs after 0/1 mask projection).
inline double exact_flops(const CompressibleLayer& layer, const NodePtr& next_mask,
                          std::size_t next_dim) {
  switch (layer.kind) {
    case LayerKind::dense:
      return double(layer.in_dim) * double(layer.out_dim);
    case LayerKind::pruned:
      return double(nnz_or_dim(layer.input_mask, layer.in_dim)) *
             double(nnz_or_dim(next_mask, next_dim));
    case LayerKind::unstructured:
      return double(nnz(layer.elem_mask->value));
    case LayerKind::low_rank:
      return double(layer.in_dim + layer.out_dim) * double(nnz(layer.factor_s->value));
    case LayerKind::prune_low_rank:
      return double(nnz_or_dim(layer.input_mask, layer.in_dim) +
                    nnz_or_dim(next_mask, next_dim)) *
             double(nnz(layer.factor_s->value));
    case LayerKind::prune_unstructured: {
      // vec(A diag(alpha)): an entry survives iff both factors are nonzero.
      std::size_t k = 0;
      const Tensor& a = layer.elem_mask->value;
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) {
          double m = layer.input_mask ? layer.input_mask->value.at(j) : 1.0;
          if (a.at(i, j) * m != 0.0) ++k;
        }
      return double(k);
    }
    case LayerKind::quantized:
      return double(selected_bits(layer)) * double(layer.in_dim) *
             double(layer.out_dim);
    case LayerKind::prune_quantized:
      return double(selected_bits(layer)) *
             double(nnz_or_dim(layer.input_mask, layer.in_dim)) *
             double(nnz_or_dim(next_mask, next_dim));
  }
  throw std::logic_error("exact_flops: unreachable");
}

}  // namespace slimnet

#endif  // SLIMNET_SURROGATE_HPP
