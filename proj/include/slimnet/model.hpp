// Copyright 2026 The slimnet Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SLIMNET_MODEL_HPP
#define SLIMNET_MODEL_HPP

#include <string>
#include <vector>

#include "slimnet/latency.hpp"
#include "slimnet/random.hpp"
#include "slimnet/surrogate.hpp"

namespace slimnet {

/// A feed-forward stack of compressible layers. Layer i's input mask doubles
/// as the output mask of layer i-1; the output of the last layer carries the
/// static all-ones mask.
struct Model {
  std::vector<CompressibleLayer> layers;

  std::size_t input_dim() const { return layers.front().in_dim; }
  std::size_t output_dim() const { return layers.back().out_dim; }

  NodePtr next_mask(std::size_t i) const {
    return (i + 1 < layers.size()) ? layers[i + 1].input_mask : nullptr;
  }
  std::size_t next_dim(std::size_t i) const { return layers[i].out_dim; }
};

/// Forward pass building the differentiation graph. Batch normalization runs
/// in training mode (batch statistics); there is no separate inference mode.
inline NodePtr forward(const Model& model, const NodePtr& x) {
  NodePtr h = x;
  for (const CompressibleLayer& layer : model.layers) {
    h = matmul_nt(h, effective_weight(layer));
    if (layer.bias) h = add_rowvec(h, layer.bias);
    if (layer.batchnorm)
      h = batchnorm_train(h, layer.bn_scale, layer.bn_shift, layer.bn_eps);
    if (layer.relu_after) h = relu(h);
  }
  return h;
}

inline NodePtr forward(const Model& model, const Tensor& x) {
  return forward(model, constant(x));
}

/// Sum of per-layer FLOPs surrogates (or interpolated latency terms) per the
/// regularizer spec. Marks layers whose masks have died.
inline NodePtr surrogate_total(Model& model, const RegularizerSpec& spec,
                               const LatencyTable* table = nullptr) {
  if (spec.cost == CostModel::latency_table) {
    if (!table)
      throw std::invalid_argument("surrogate_total: latency cost model needs a table");
    if (spec.surrogate != SurrogateKind::l1_over_l2)
      throw std::invalid_argument(
          "surrogate_total: the latency regularizer requires the l1/l2 surrogate");
    return latency_reg(model.layers, *table);
  }
  NodePtr total;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    CompressibleLayer& layer = model.layers[i];
    bool dead = false;
    NodePtr term =
        spec.surrogate == SurrogateKind::l1
            ? l1_surrogate(layer, model.next_mask(i), model.next_dim(i))
            : flops_surrogate(layer, model.next_mask(i), model.next_dim(i),
                              spec.quant_variant, &dead);
    if (dead) layer.mask_dead = true;
    total = total ? add(total, term) : term;
  }
  if (!total) throw std::invalid_argument("surrogate_total: empty model");
  return total;
}

/// Exact l0-based MAC count of the whole (masked) model.
inline double exact_flops(const Model& model) {
  double total = 0.0;
  for (std::size_t i = 0; i < model.layers.size(); ++i)
    total += exact_flops(model.layers[i], model.next_mask(i), model.next_dim(i));
  return total;
}

/// Weight-storage bits: ladder layers count their selected width, everything
/// else is stored as 64-bit floats.
inline double total_param_bits(const Model& model) {
  double bits = 0.0;
  for (const CompressibleLayer& layer : model.layers) {
    double n = double(layer.in_dim) * double(layer.out_dim);
    bits += kind_has_ladder(layer.kind) ? double(selected_bits(layer)) * n : 64.0 * n;
  }
  return bits;
}

enum class MaskProjection { none, nonnegative, unit_interval };

struct ParamRef {
  NodePtr node;
  MaskProjection projection = MaskProjection::none;
  std::string name;
};

/// All trainable leaves of the model, with the projection each needs after an
/// optimizer step. Null input masks are static all-ones and never appear.
inline std::vector<ParamRef> collect_params(Model& model) {
  std::vector<ParamRef> out;
  auto push = [&out](const NodePtr& n, MaskProjection p, std::string name) {
    if (n) out.push_back({n, p, std::move(name)});
  };
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    CompressibleLayer& l = model.layers[i];
    std::string pre = "layer" + std::to_string(i) + ".";
    bool low_rank =
        l.kind == LayerKind::low_rank || l.kind == LayerKind::prune_low_rank;
    if (!low_rank) push(l.weight, MaskProjection::none, pre + "weight");
    push(l.bias, MaskProjection::none, pre + "bias");
    push(l.input_mask, MaskProjection::nonnegative, pre + "alpha");
    push(l.elem_mask, MaskProjection::nonnegative, pre + "elem_mask");
    if (low_rank) {
      push(l.factor_u, MaskProjection::none, pre + "u");
      push(l.factor_s, MaskProjection::nonnegative, pre + "beta");
      push(l.factor_v, MaskProjection::none, pre + "v");
    }
    for (std::size_t j = 0; j < l.bit_masks.size(); ++j)
      push(l.bit_masks[j], MaskProjection::unit_interval,
           pre + "alpha_b" + std::to_string(l.bit_ladder[j + 1]));
    if (l.batchnorm) {
      push(l.bn_scale, MaskProjection::none, pre + "bn_scale");
      push(l.bn_shift, MaskProjection::none, pre + "bn_shift");
    }
  }
  return out;
}

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t in_dim = 0, out_dim = 0;
  bool batchnorm = false;
  bool relu_after = false;
  bool bias = true;
  bool optimize_mask = true;  // false leaves the input mask static all-ones
  std::vector<int> bit_ladder = {2, 4, 8, 16};
};

enum class MaskInit { all_ones, uniform_half };

/// Build a randomly initialized layer; masks start at all-ones or uniform in
/// [0, 0.5]. Quantization ranges are fixed at the initial weight min/max,
/// shared across widths. Low-rank factors come from the SVD warm start.
inline CompressibleLayer make_layer(const LayerSpec& spec, Rng& rng,
                                    MaskInit mask_init = MaskInit::all_ones) {
  CompressibleLayer l;
  l.kind = spec.kind;
  l.in_dim = spec.in_dim;
  l.out_dim = spec.out_dim;
  l.relu_after = spec.relu_after;
  l.batchnorm = spec.batchnorm;

  Tensor w = rng.normal_tensor({spec.out_dim, spec.in_dim},
                               1.0 / std::sqrt(double(spec.in_dim)));
  bool low_rank =
      spec.kind == LayerKind::low_rank || spec.kind == LayerKind::prune_low_rank;
  if (low_rank) {
    auto [u, s, v] = svd_init(w);
    l.factor_u = leaf(u, "u");
    l.factor_s = leaf(s, "beta");
    l.factor_v = leaf(v, "v");
  } else {
    l.weight = leaf(w, "weight");
  }
  if (spec.bias) l.bias = leaf(Tensor::zeros({spec.out_dim}), "bias");

  auto init_mask = [&](std::vector<std::size_t> shape) {
    return mask_init == MaskInit::all_ones
               ? Tensor::ones(shape)
               : rng.uniform_tensor(shape, 0.0, 0.5);
  };
  if (kind_has_input_mask(spec.kind) && spec.optimize_mask)
    l.input_mask = leaf(init_mask({spec.in_dim}), "alpha");
  if (spec.kind == LayerKind::unstructured ||
      spec.kind == LayerKind::prune_unstructured)
    l.elem_mask = leaf(init_mask({spec.out_dim, spec.in_dim}), "elem_mask");

  if (kind_has_ladder(spec.kind)) {
    l.bit_ladder = spec.bit_ladder;
    double lo = w.data[0], hi = w.data[0];
    for (double v : w.data) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (lo >= hi) hi = lo + 1.0;
    l.range_lo = lo;
    l.range_hi = hi;
    for (std::size_t j = 1; j < l.bit_ladder.size(); ++j)
      l.bit_masks.push_back(leaf(Tensor::scalar(1.0),
                                 "alpha_b" + std::to_string(l.bit_ladder[j])));
  }
  if (spec.batchnorm) {
    l.bn_scale = leaf(Tensor::ones({spec.out_dim}), "bn_scale");
    l.bn_shift = leaf(Tensor::zeros({spec.out_dim}), "bn_shift");
  }
  return l;
}

/// Deep copy: fresh leaves with copied values (used for teacher snapshots).
inline Model clone_model(const Model& src) {
  Model dst;
  for (const CompressibleLayer& s : src.layers) {
    CompressibleLayer d = s;
    auto cp = [](NodePtr& n) {
      if (n) n = leaf(n->value, n->name);
    };
    cp(d.weight);
    cp(d.bias);
    cp(d.input_mask);
    cp(d.elem_mask);
    cp(d.factor_u);
    cp(d.factor_s);
    cp(d.factor_v);
    for (NodePtr& m : d.bit_masks) cp(m);
    cp(d.bn_scale);
    cp(d.bn_shift);
    dst.layers.push_back(std::move(d));
  }
  return dst;
}

inline double frobenius_norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data) s += v * v;
  return std::sqrt(s);
}

/// Frobenius norm of the layer's base weight (factors composed for low-rank).
inline double weight_frobenius(const CompressibleLayer& l) {
  if (l.weight) return frobenius_norm(l.weight->value);
  double s = 0.0;
  std::size_t r = l.factor_s->value.numel();
  for (std::size_t i = 0; i < l.out_dim; ++i)
    for (std::size_t j = 0; j < l.in_dim; ++j) {
      double w = 0.0;
      for (std::size_t k = 0; k < r; ++k)
        w += l.factor_u->value.at(i, k) * l.factor_s->value.at(k) *
             l.factor_v->value.at(k, j);
      s += w * w;
    }
  return std::sqrt(s);
}

}  // namespace slimnet

#endif  // SLIMNET_MODEL_HPP
