// Copyright 2026 The slimnet Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "slimnet/extract.hpp"
#include "test_util.hpp"

using namespace slimnet;
using namespace slimnet::test;

namespace {

Model pruned_mlp(Rng& rng, bool batchnorm = false) {
  Model m;
  for (auto [in, out, last] : {std::tuple<std::size_t, std::size_t, bool>{10, 8, false},
                               {8, 6, false},
                               {6, 3, true}}) {
    LayerSpec spec;
    spec.kind = LayerKind::pruned;
    spec.in_dim = in;
    spec.out_dim = out;
    spec.batchnorm = batchnorm && !last;
    spec.relu_after = !last;
    m.layers.push_back(make_layer(spec, rng));
  }
  return m;
}

void zero_some(const NodePtr& mask, Rng& rng, double p) {
  bool all_zero = true;
  for (double& v : mask->value.data) {
    if (rng.uniform() < p)
      v = 0.0;
    else
      all_zero = false;
  }
  if (all_zero) mask->value.data[0] = 1.0;
}

}  // namespace

TEST_CASE("extraction removes dead neurons and preserves outputs exactly") {
  Rng rng(41);
  for (int rep = 0; rep < 5; ++rep) {
    Model m = pruned_mlp(rng, rep % 2 == 1);
    for (auto& l : m.layers)
      if (l.input_mask) zero_some(l.input_mask, rng, 0.4);

    ExtractedModel em = extract_compressed(m);
    REQUIRE(!em.degenerate);
    CHECK(em.layers[0].in_dim == em.input_features.size());
    CHECK(em.layers[0].in_dim < 10);  // something was pruned at p = 0.4

    Tensor x = rng.normal_tensor({7, 10});
    Tensor full = forward(m, x)->value;
    Tensor compact = forward_extracted(em, select_columns(x, em.input_features));
    REQUIRE(full.shape == compact.shape);
    for (std::size_t i = 0; i < full.numel(); ++i)
      CHECK(std::abs(full.data[i] - compact.data[i]) < 1e-9);
  }
}

TEST_CASE("extraction preserves exact FLOPs for pruned stacks") {
  Rng rng(43);
  for (int rep = 0; rep < 5; ++rep) {
    Model m = pruned_mlp(rng);
    for (auto& l : m.layers)
      if (l.input_mask) zero_some(l.input_mask, rng, 0.3);
    ExtractedModel em = extract_compressed(m);
    REQUIRE(!em.degenerate);
    CHECK(em.total_flops == doctest::Approx(exact_flops(m)).epsilon(1e-12));
  }
}

TEST_CASE("low-rank extraction truncates zero singular values exactly") {
  Rng rng(47);
  LayerSpec spec;
  spec.kind = LayerKind::low_rank;
  spec.in_dim = 6;
  spec.out_dim = 5;
  Model m;
  m.layers.push_back(make_layer(spec, rng));
  auto& s = m.layers[0].factor_s->value;
  s.data[3] = 0.0;
  s.data[4] = 0.0;

  ExtractedModel em = extract_compressed(m);
  REQUIRE(!em.degenerate);
  CHECK(em.layers[0].factor_s.numel() == 3);
  CHECK(em.total_flops == doctest::Approx(exact_flops(m)).epsilon(1e-12));

  Tensor x = rng.normal_tensor({4, 6});
  Tensor full = forward(m, x)->value;
  Tensor compact = forward_extracted(em, select_columns(x, em.input_features));
  for (std::size_t i = 0; i < full.numel(); ++i)
    CHECK(std::abs(full.data[i] - compact.data[i]) < 1e-9);
}

TEST_CASE("prune+low-rank extraction folds surviving mask values into V") {
  Rng rng(53);
  LayerSpec spec;
  spec.kind = LayerKind::prune_low_rank;
  spec.in_dim = 7;
  spec.out_dim = 4;
  Model m;
  m.layers.push_back(make_layer(spec, rng));
  auto& alpha = m.layers[0].input_mask->value;
  alpha.data[1] = 0.0;
  alpha.data[5] = 0.0;
  alpha.data[2] = 0.7;  // surviving non-unit value must be preserved

  ExtractedModel em = extract_compressed(m);
  REQUIRE(!em.degenerate);
  CHECK(em.layers[0].in_dim == 5);

  Tensor x = rng.normal_tensor({6, 7});
  Tensor full = forward(m, x)->value;
  Tensor compact = forward_extracted(em, select_columns(x, em.input_features));
  for (std::size_t i = 0; i < full.numel(); ++i)
    CHECK(std::abs(full.data[i] - compact.data[i]) < 1e-9);
}

TEST_CASE("quantized extraction keeps weights on the selected bit grid") {
  Rng rng(59);
  LayerSpec spec;
  spec.kind = LayerKind::quantized;
  spec.in_dim = 5;
  spec.out_dim = 4;
  spec.bit_ladder = {2, 4, 8};
  Model m;
  m.layers.push_back(make_layer(spec, rng));
  m.layers[0].bit_masks[0]->value.data[0] = 0.9;  // projects to 1 -> 4 bits
  m.layers[0].bit_masks[1]->value.data[0] = 0.2;  // projects to 0

  ExtractedModel em = extract_compressed(m);
  REQUIRE(!em.degenerate);
  CHECK(em.layers[0].bits == 4);
  CHECK(em.total_param_bits == doctest::Approx(4.0 * 20.0));

  const auto& l = m.layers[0];
  double step = (l.range_hi - l.range_lo) / 15.0;
  for (double v : em.layers[0].weight.data) {
    double k = (v - l.range_lo) / step;
    CHECK(std::abs(k - std::round(k)) < 1e-9);
  }

  // with binary masks the ladder equals the extracted grid weight exactly
  project_bit_masks(m);
  Tensor x = rng.normal_tensor({3, 5});
  Tensor full = forward(m, x)->value;
  Tensor compact = forward_extracted(em, select_columns(x, em.input_features));
  for (std::size_t i = 0; i < full.numel(); ++i)
    CHECK(std::abs(full.data[i] - compact.data[i]) < 1e-9);
}

TEST_CASE("prune+quantized extraction carries the surviving column mask") {
  Rng rng(61);
  LayerSpec spec;
  spec.kind = LayerKind::prune_quantized;
  spec.in_dim = 6;
  spec.out_dim = 3;
  spec.bit_ladder = {2, 4};
  Model m;
  m.layers.push_back(make_layer(spec, rng));
  m.layers[0].bit_masks[0]->value.data[0] = 0.0;
  auto& alpha = m.layers[0].input_mask->value;
  alpha.data[0] = 0.0;
  alpha.data[4] = 1.5;

  ExtractedModel em = extract_compressed(m);
  REQUIRE(!em.degenerate);
  CHECK(em.layers[0].bits == 2);
  CHECK(em.layers[0].in_dim == 5);
  CHECK(em.layers[0].col_mask.numel() == 5);

  Tensor x = rng.normal_tensor({4, 6});
  Tensor full = forward(m, x)->value;
  Tensor compact = forward_extracted(em, select_columns(x, em.input_features));
  for (std::size_t i = 0; i < full.numel(); ++i)
    CHECK(std::abs(full.data[i] - compact.data[i]) < 1e-9);
}

TEST_CASE("a fully dead mask makes extraction degenerate, not crash") {
  Rng rng(67);
  Model m = pruned_mlp(rng);
  for (double& v : m.layers[1].input_mask->value.data) v = 0.0;
  ExtractedModel em = extract_compressed(m);
  CHECK(em.degenerate);
  REQUIRE(em.degenerate_layers.size() == 1);
  CHECK(em.degenerate_layers[0] == "layer1.alpha");
  CHECK(em.layers.empty());
  CHECK_THROWS_AS(forward_extracted(em, Tensor::zeros({1, 1})),
                  std::invalid_argument);

  // all-zero singular values are reported the same way
  LayerSpec spec;
  spec.kind = LayerKind::low_rank;
  spec.in_dim = 4;
  spec.out_dim = 4;
  Model lr;
  lr.layers.push_back(make_layer(spec, rng));
  for (double& v : lr.layers[0].factor_s->value.data) v = 0.0;
  ExtractedModel em2 = extract_compressed(lr);
  CHECK(em2.degenerate);
  CHECK(em2.degenerate_layers[0] == "layer0.beta");
}

TEST_CASE("extracted model JSON round-trips with identical behavior") {
  Rng rng(71);
  Model m = pruned_mlp(rng, true);
  for (auto& l : m.layers)
    if (l.input_mask) zero_some(l.input_mask, rng, 0.3);
  ExtractedModel em = extract_compressed(m);
  REQUIRE(!em.degenerate);

  nlohmann::json j = to_json(em);
  CHECK(j.at("format") == "slimnet-extracted-model v1");
  ExtractedModel back = extracted_from_json(nlohmann::json::parse(j.dump()));

  CHECK(back.total_flops == em.total_flops);
  CHECK(back.total_param_bits == em.total_param_bits);
  CHECK(back.input_features == em.input_features);
  REQUIRE(back.layers.size() == em.layers.size());

  Tensor x = rng.normal_tensor({5, em.input_features.size()});
  Tensor a = forward_extracted(em, x);
  Tensor b = forward_extracted(back, x);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.data[i] == b.data[i]);
}
