// Copyright 2026 The slimnet Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "slimnet/ops.hpp"
#include "slimnet/random.hpp"

using namespace slimnet;

TEST_CASE("tensor shape/data consistency is enforced") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.shape_str() == "(2,3)");
}

TEST_CASE("matmul with the identity is the identity") {
  auto eye = constant(Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
  auto v = constant(Tensor::matrix(3, 1, {1, 2, 3}));
  auto out = matmul(eye, v);
  CHECK(out->value.at(0, 0) == 1.0);
  CHECK(out->value.at(1, 0) == 2.0);
  CHECK(out->value.at(2, 0) == 3.0);
}

TEST_CASE("relu clamps negatives") {
  auto x = constant(Tensor::vec({-1, 0, 2}));
  auto y = relu(x);
  CHECK(y->value.data == std::vector<double>{0, 0, 2});
}

TEST_CASE("l2 norm of (3,4) is 5") {
  auto x = leaf(Tensor::vec({3, 4}));
  auto n = l2_norm(x);
  CHECK(n->value.data[0] == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("l2 norm of the zero vector is 0 with zero gradient") {
  auto x = leaf(Tensor::vec({0, 0, 0}));
  auto n = l2_norm(x);
  CHECK(n->value.data[0] == 0.0);
  backward(n);
  for (double g : x->grad.data) CHECK(g == 0.0);
}

TEST_CASE("shape mismatches are rejected with both shapes named") {
  auto a = constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  auto b = constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("(2,3)"),
                       std::invalid_argument);
  CHECK_THROWS_AS(add(a, b), std::invalid_argument);
}

TEST_CASE("softmax cross entropy hand values") {
  SUBCASE("two equal logits give ln 2") {
    auto z = leaf(Tensor::matrix(1, 2, {0, 0}));
    auto l = softmax_cross_entropy(z, {0});
    CHECK(l->value.data[0] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }
  SUBCASE("uniform logits over k classes give ln k") {
    for (std::size_t k : {3, 5, 10}) {
      auto z = leaf(Tensor::full({1, k}, 0.7));
      auto l = softmax_cross_entropy(z, {k - 1});
      CHECK(l->value.data[0] == doctest::Approx(std::log(double(k))).epsilon(1e-12));
    }
  }
  SUBCASE("huge logit gap stays finite and near zero") {
    auto z = leaf(Tensor::matrix(1, 2, {1e4, -1e4}));
    auto l = softmax_cross_entropy(z, {0});
    CHECK(std::isfinite(l->value.data[0]));
    CHECK(l->value.data[0] == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("out-of-range label rejected") {
    auto z = leaf(Tensor::matrix(1, 2, {0, 0}));
    CHECK_THROWS_AS(softmax_cross_entropy(z, {2}), std::invalid_argument);
  }
}

TEST_CASE("round_ste forward rounds ties away from zero") {
  auto x = leaf(Tensor::vec({0.6, 1.5, -1.5, -0.4}));
  auto y = round_ste(x);
  CHECK(y->value.data == std::vector<double>{1.0, 2.0, -2.0, -0.0});
}

TEST_CASE("round_ste backward is the bit-identical upstream gradient") {
  auto x = leaf(Tensor::vec({0.6, 2.3, -7.5}));
  auto w = constant(Tensor::vec({0.123456789, -9.87, 3.25}));
  auto loss = sum(mul(round_ste(x), w));
  backward(loss);
  for (std::size_t i = 0; i < 3; ++i) CHECK(x->grad.data[i] == w->value.data[i]);
}

TEST_CASE("batchnorm hand values") {
  auto gamma = leaf(Tensor::ones({1}));
  auto shift = leaf(Tensor::zeros({1}));
  SUBCASE("two-sample batch normalizes to (-1, 1)") {
    auto x = leaf(Tensor::matrix(2, 1, {1, 3}));
    auto y = batchnorm_train(x, gamma, shift, 1e-12);
    CHECK(y->value.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(y->value.at(1, 0) == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("constant batch maps to about zero") {
    auto x = leaf(Tensor::matrix(2, 1, {5, 5}));
    auto y = batchnorm_train(x, gamma, shift, 1e-5);
    CHECK(std::abs(y->value.at(0, 0)) < 1e-9);
    CHECK(std::abs(y->value.at(1, 0)) < 1e-9);
  }
  SUBCASE("scale 2 shift 3 maps normalized (-1,1) to (1,5)") {
    auto g2 = leaf(Tensor::full({1}, 2.0));
    auto s3 = leaf(Tensor::full({1}, 3.0));
    auto x = leaf(Tensor::matrix(2, 1, {1, 3}));
    auto y = batchnorm_train(x, g2, s3, 1e-12);
    CHECK(y->value.at(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(y->value.at(1, 0) == doctest::Approx(5.0).epsilon(1e-9));
  }
  SUBCASE("batch of one is rejected") {
    auto x = leaf(Tensor::matrix(1, 1, {5}));
    CHECK_THROWS_AS(batchnorm_train(x, gamma, shift, 1e-5), std::invalid_argument);
  }
}

TEST_CASE("batchnorm output is standardized per feature for batches >= 8") {
  Rng rng(11);
  for (int rep = 0; rep < 5; ++rep) {
    std::size_t b = 8 + std::size_t(rep) * 7, f = 4;
    auto x = leaf(rng.normal_tensor({b, f}, 2.5));
    auto gamma = leaf(Tensor::ones({f}));
    auto shift = leaf(Tensor::zeros({f}));
    auto y = batchnorm_train(x, gamma, shift, 1e-9);
    for (std::size_t j = 0; j < f; ++j) {
      double mean = 0, var = 0;
      for (std::size_t i = 0; i < b; ++i) mean += y->value.at(i, j);
      mean /= double(b);
      for (std::size_t i = 0; i < b; ++i) {
        double d = y->value.at(i, j) - mean;
        var += d * d;
      }
      var /= double(b);
      CHECK(std::abs(mean) < 1e-6);
      CHECK(std::abs(var - 1.0) < 1e-3);
    }
  }
}

TEST_CASE("distill loss basics") {
  SUBCASE("identical logits give zero") {
    Tensor t = Tensor::matrix(1, 3, {0.3, -1.2, 2.0});
    auto s = leaf(t);
    auto l = distill_loss(t, s, 2.0, 0.7);
    CHECK(l->value.data[0] == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("zero coefficient gives zero") {
    auto s = leaf(Tensor::matrix(1, 2, {5, -5}));
    auto l = distill_loss(Tensor::matrix(1, 2, {-1, 1}), s, 1.0, 0.0);
    CHECK(l->value.data[0] == 0.0);
  }
  SUBCASE("hand value for opposing binary logits") {
    // KL(softmax(1,0) || softmax(0,1)): both log-ratios are exactly +/-1, so
    // the divergence is sigmoid(1) - sigmoid(-1) = tanh(1/2).
    auto s = leaf(Tensor::matrix(1, 2, {0, 1}));
    auto l = distill_loss(Tensor::matrix(1, 2, {1, 0}), s, 1.0, 1.0);
    CHECK(l->value.data[0] == doctest::Approx(std::tanh(0.5)).epsilon(1e-12));
  }
  SUBCASE("shape mismatch rejected") {
    auto s = leaf(Tensor::matrix(1, 2, {0, 1}));
    CHECK_THROWS_AS(distill_loss(Tensor::matrix(1, 3, {1, 0, 0}), s, 1.0, 1.0),
                    std::invalid_argument);
  }
}

TEST_CASE("graph evaluation is deterministic") {
  Rng rng1(42), rng2(42);
  auto build = [](Rng& rng) {
    auto a = leaf(rng.normal_tensor({4, 4}));
    auto b = leaf(rng.normal_tensor({4, 4}));
    return sum(relu(matmul(a, b)));
  };
  CHECK(build(rng1)->value.data[0] == build(rng2)->value.data[0]);
}
