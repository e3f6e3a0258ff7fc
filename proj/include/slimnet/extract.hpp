// Copyright 2026 The slimnet Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SLIMNET_EXTRACT_HPP
#define SLIMNET_EXTRACT_HPP

#include <json.hpp>
#include <string>
#include <vector>

#include "slimnet/model.hpp"

namespace slimnet {

/// One layer of the exactly-compressed model. Dense kinds carry the
/// materialized weight with masks folded in; quantized kinds keep the weight
/// on its b-bit grid and carry surviving column-mask values separately;
/// low-rank kinds keep the truncated factors so the MAC accounting holds.
struct ExtractedLayer {
  LayerKind kind = LayerKind::dense;
  std::size_t in_dim = 0, out_dim = 0;  // reduced dims
  Tensor weight;                        // (out, in) for non-factored kinds
  Tensor col_mask;                      // surviving alpha values (quant kinds)
  Tensor factor_u, factor_s, factor_v;  // truncated, for low-rank kinds
  Tensor bias;                          // (out) or empty
  bool batchnorm = false;
  Tensor bn_scale, bn_shift;
  double bn_eps = 1e-5;
  bool relu_after = false;
  int bits = 64;
};

struct ExtractedModel {
  std::vector<ExtractedLayer> layers;
  std::vector<std::size_t> input_features;  // surviving input columns
  double total_flops = 0.0;
  double total_param_bits = 0.0;
  bool degenerate = false;
  std::vector<std::string> degenerate_layers;
};

inline void project_bit_masks(Model& model) {
  for (CompressibleLayer& l : model.layers)
    for (NodePtr& m : l.bit_masks)
      m->value.data[0] = m->value.data[0] >= 0.5 ? 1.0 : 0.0;
}

namespace detail {

inline std::vector<std::size_t> nonzero_indices(const Tensor& v) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < v.numel(); ++i)
    if (v.at(i) != 0.0) idx.push_back(i);
  return idx;
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return idx;
}

inline Tensor take_rows_cols(const Tensor& m, const std::vector<std::size_t>& rows,
                             const std::vector<std::size_t>& cols) {
  Tensor out({rows.size(), cols.size()});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      out.at(i, j) = m.at(rows[i], cols[j]);
  return out;
}

inline Tensor take(const Tensor& v, const std::vector<std::size_t>& idx) {
  Tensor out({idx.size()});
  for (std::size_t i = 0; i < idx.size(); ++i) out.at(i) = v.at(idx[i]);
  return out;
}

}  // namespace detail

inline Tensor select_columns(const Tensor& x, const std::vector<std::size_t>& idx) {
  Tensor out({x.rows(), idx.size()});
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < idx.size(); ++j) out.at(i, j) = x.at(i, idx[j]);
  return out;
}

/// Materialize the exactly-sparse compressed model: zero-mask neurons are
/// removed from their layer's columns and the previous layer's rows, zero
/// singular values truncate the factors, bit masks are projected to {0,1}.
/// A fully dead mask makes the model degenerate; nothing is extracted then.
inline ExtractedModel extract_compressed(const Model& masked) {
  Model model = clone_model(masked);
  project_bit_masks(model);

  const std::size_t n = model.layers.size();
  ExtractedModel out;

  // keep[i]: surviving input columns of layer i (also the surviving output
  // rows of layer i-1); keep[n] covers the static output mask.
  std::vector<std::vector<std::size_t>> keep(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const CompressibleLayer& l = model.layers[i];
    keep[i] = l.input_mask ? detail::nonzero_indices(l.input_mask->value)
                           : detail::all_indices(l.in_dim);
    if (keep[i].empty()) {
      out.degenerate = true;
      out.degenerate_layers.push_back("layer" + std::to_string(i) + ".alpha");
    }
  }
  keep[n] = detail::all_indices(model.layers.back().out_dim);
  for (std::size_t i = 0; i < n; ++i) {
    bool low_rank = model.layers[i].kind == LayerKind::low_rank ||
                    model.layers[i].kind == LayerKind::prune_low_rank;
    if (low_rank &&
        detail::nonzero_indices(model.layers[i].factor_s->value).empty()) {
      out.degenerate = true;
      out.degenerate_layers.push_back("layer" + std::to_string(i) + ".beta");
    }
  }
  if (out.degenerate) return out;

  out.input_features = keep[0];
  for (std::size_t i = 0; i < n; ++i) {
    const CompressibleLayer& l = model.layers[i];
    const auto& cols = keep[i];
    const auto& rows = keep[i + 1];
    ExtractedLayer e;
    e.kind = l.kind;
    e.in_dim = cols.size();
    e.out_dim = rows.size();
    e.relu_after = l.relu_after;

    switch (l.kind) {
      case LayerKind::low_rank:
      case LayerKind::prune_low_rank: {
        auto ranks = detail::nonzero_indices(l.factor_s->value);
        e.factor_u = detail::take_rows_cols(l.factor_u->value, rows, ranks);
        e.factor_s = detail::take(l.factor_s->value, ranks);
        // Fold surviving mask values into the kept columns of V.
        e.factor_v = detail::take_rows_cols(l.factor_v->value, ranks, cols);
        if (l.input_mask)
          for (std::size_t r = 0; r < ranks.size(); ++r)
            for (std::size_t c = 0; c < cols.size(); ++c)
              e.factor_v.at(r, c) *= l.input_mask->value.at(cols[c]);
        break;
      }
      case LayerKind::quantized:
      case LayerKind::prune_quantized: {
        e.bits = selected_bits(l);
        Tensor grid_w = quantize_b(l.weight, l.range_lo, l.range_hi, e.bits)->value;
        e.weight = detail::take_rows_cols(grid_w, rows, cols);
        if (l.input_mask) e.col_mask = detail::take(l.input_mask->value, cols);
        break;
      }
      default: {
        Tensor eff = effective_weight(l)->value;  // masks folded in
        e.weight = detail::take_rows_cols(eff, rows, cols);
        break;
      }
    }
    if (l.bias) e.bias = detail::take(l.bias->value, rows);
    if (l.batchnorm) {
      e.batchnorm = true;
      e.bn_eps = l.bn_eps;
      e.bn_scale = detail::take(l.bn_scale->value, rows);
      e.bn_shift = detail::take(l.bn_shift->value, rows);
    }
    out.layers.push_back(std::move(e));
  }

  double flops = 0.0, bits = 0.0;
  for (const ExtractedLayer& e : out.layers) {
    double dd = double(e.in_dim) * double(e.out_dim);
    switch (e.kind) {
      case LayerKind::dense:
      case LayerKind::pruned:
        flops += dd;
        break;
      case LayerKind::unstructured:
      case LayerKind::prune_unstructured:
        flops += double(nnz(e.weight));
        break;
      case LayerKind::low_rank:
      case LayerKind::prune_low_rank:
        flops += double(e.in_dim + e.out_dim) * double(e.factor_s.numel());
        break;
      case LayerKind::quantized:
      case LayerKind::prune_quantized:
        flops += double(e.bits) * dd;
        break;
    }
    bits += double(e.bits) * dd;
  }
  out.total_flops = flops;
  out.total_param_bits = bits;
  return out;
}

/// Plain numeric forward of the extracted model; batchnorm uses the batch's
/// own statistics, matching the training-mode graph.
inline Tensor forward_extracted(const ExtractedModel& em, const Tensor& x) {
  if (em.degenerate)
    throw std::invalid_argument("forward_extracted: degenerate model");
  Tensor h = x;
  for (const ExtractedLayer& e : em.layers) {
    std::size_t b = h.rows();
    Tensor next({b, e.out_dim});
    if (e.factor_s.numel() > 0) {
      std::size_t r = e.factor_s.numel();
      // h V^T diag(s) U^T
      Tensor mid({b, r});
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t k = 0; k < r; ++k) {
          double s = 0.0;
          for (std::size_t j = 0; j < e.in_dim; ++j)
            s += h.at(i, j) * e.factor_v.at(k, j);
          mid.at(i, k) = s * e.factor_s.at(k);
        }
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t o = 0; o < e.out_dim; ++o) {
          double s = 0.0;
          for (std::size_t k = 0; k < r; ++k)
            s += mid.at(i, k) * e.factor_u.at(o, k);
          next.at(i, o) = s;
        }
    } else {
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t o = 0; o < e.out_dim; ++o) {
          double s = 0.0;
          for (std::size_t j = 0; j < e.in_dim; ++j) {
            double m = e.col_mask.numel() ? e.col_mask.at(j) : 1.0;
            s += h.at(i, j) * e.weight.at(o, j) * m;
          }
          next.at(i, o) = s;
        }
    }
    if (e.bias.numel())
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t o = 0; o < e.out_dim; ++o) next.at(i, o) += e.bias.at(o);
    if (e.batchnorm) {
      for (std::size_t o = 0; o < e.out_dim; ++o) {
        double mean = 0.0;
        for (std::size_t i = 0; i < b; ++i) mean += next.at(i, o);
        mean /= double(b);
        double var = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
          double d = next.at(i, o) - mean;
          var += d * d;
        }
        var /= double(b);
        double istd = 1.0 / std::sqrt(var + e.bn_eps);
        for (std::size_t i = 0; i < b; ++i)
          next.at(i, o) = (next.at(i, o) - mean) * istd * e.bn_scale.at(o) +
                          e.bn_shift.at(o);
      }
    }
    if (e.relu_after)
      for (double& v : next.data) v = std::max(0.0, v);
    h = std::move(next);
  }
  return h;
}

// --- JSON serialization (shortest round-trip doubles via nlohmann) ---

inline nlohmann::json tensor_to_json(const Tensor& t) {
  return {{"shape", t.shape}, {"data", t.data}};
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
  if (j.is_null()) return Tensor();
  return Tensor(j.at("shape").get<std::vector<std::size_t>>(),
                j.at("data").get<std::vector<double>>());
}

inline nlohmann::json to_json(const ExtractedModel& em) {
  nlohmann::json j;
  j["format"] = "slimnet-extracted-model v1";
  j["degenerate"] = em.degenerate;
  j["degenerate_layers"] = em.degenerate_layers;
  j["input_features"] = em.input_features;
  j["total_flops"] = em.total_flops;
  j["total_param_bits"] = em.total_param_bits;
  j["layers"] = nlohmann::json::array();
  for (const ExtractedLayer& e : em.layers) {
    nlohmann::json l;
    l["kind"] = kind_name(e.kind);
    l["in_dim"] = e.in_dim;
    l["out_dim"] = e.out_dim;
    l["bits"] = e.bits;
    l["relu_after"] = e.relu_after;
    if (e.weight.numel()) l["weight"] = tensor_to_json(e.weight);
    if (e.col_mask.numel()) l["col_mask"] = tensor_to_json(e.col_mask);
    if (e.factor_s.numel()) {
      l["factor_u"] = tensor_to_json(e.factor_u);
      l["factor_s"] = tensor_to_json(e.factor_s);
      l["factor_v"] = tensor_to_json(e.factor_v);
    }
    if (e.bias.numel()) l["bias"] = tensor_to_json(e.bias);
    if (e.batchnorm) {
      l["bn_eps"] = e.bn_eps;
      l["bn_scale"] = tensor_to_json(e.bn_scale);
      l["bn_shift"] = tensor_to_json(e.bn_shift);
    }
    j["layers"].push_back(std::move(l));
  }
  return j;
}

inline ExtractedModel extracted_from_json(const nlohmann::json& j) {
  ExtractedModel em;
  em.degenerate = j.at("degenerate").get<bool>();
  em.degenerate_layers = j.at("degenerate_layers").get<std::vector<std::string>>();
  em.input_features = j.at("input_features").get<std::vector<std::size_t>>();
  em.total_flops = j.at("total_flops").get<double>();
  em.total_param_bits = j.at("total_param_bits").get<double>();
  for (const auto& l : j.at("layers")) {
    ExtractedLayer e;
    e.kind = kind_from_name(l.at("kind").get<std::string>());
    e.in_dim = l.at("in_dim").get<std::size_t>();
    e.out_dim = l.at("out_dim").get<std::size_t>();
    e.bits = l.at("bits").get<int>();
    e.relu_after = l.at("relu_after").get<bool>();
    if (l.contains("weight")) e.weight = tensor_from_json(l["weight"]);
    if (l.contains("col_mask")) e.col_mask = tensor_from_json(l["col_mask"]);
    if (l.contains("factor_s")) {
      e.factor_u = tensor_from_json(l["factor_u"]);
      e.factor_s = tensor_from_json(l["factor_s"]);
      e.factor_v = tensor_from_json(l["factor_v"]);
    }
    if (l.contains("bias")) e.bias = tensor_from_json(l["bias"]);
    if (l.contains("bn_scale")) {
      e.batchnorm = true;
      e.bn_eps = l.at("bn_eps").get<double>();
      e.bn_scale = tensor_from_json(l["bn_scale"]);
      e.bn_shift = tensor_from_json(l["bn_shift"]);
    }
    em.layers.push_back(std::move(e));
  }
  return em;
}

}  // namespace slimnet

#endif  // SLIMNET_EXTRACT_HPP
