// Copyright 2026 The slimnet Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SLIMNET_OPS_HPP
#define SLIMNET_OPS_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "slimnet/graph.hpp"

namespace slimnet {

// L2 norms below this are treated as exactly zero; the subgradient at the
// all-zeros vector is defined as zero.
inline constexpr double kZeroNormGuard = 1e-12;

inline NodePtr add(const NodePtr& a, const NodePtr& b) {
  require_same_shape(a->value, b->value, "add");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b->value.data[i];
  return make_node(std::move(out), {a, b}, [a = a.get(), b = b.get()](Node& self) {
    accumulate(*a, self.grad);
    accumulate(*b, self.grad);
  });
}

inline NodePtr sub(const NodePtr& a, const NodePtr& b) {
  require_same_shape(a->value, b->value, "sub");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b->value.data[i];
  return make_node(std::move(out), {a, b}, [a = a.get(), b = b.get()](Node& self) {
    accumulate(*a, self.grad);
    Tensor g = self.grad;
    for (double& v : g.data) v = -v;
    accumulate(*b, g);
  });
}

/// Broadcast a length-n row vector across the rows of an m-by-n matrix.
inline NodePtr add_rowvec(const NodePtr& a, const NodePtr& b) {
  if (!a->value.is_matrix() || b->value.shape.size() != 1 ||
      a->value.cols() != b->value.shape[0])
    throw std::invalid_argument("add_rowvec: shape mismatch " +
                                a->value.shape_str() + " vs " + b->value.shape_str());
  Tensor out = a->value;
  std::size_t m = out.rows(), n = out.cols();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) += b->value.at(j);
  return make_node(std::move(out), {a, b}, [a = a.get(), b = b.get(), m, n](Node& self) {
    accumulate(*a, self.grad);
    Tensor gb = Tensor::zeros({n});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gb.at(j) += self.grad.at(i, j);
    accumulate(*b, gb);
  });
}

inline NodePtr mul(const NodePtr& a, const NodePtr& b) {
  require_same_shape(a->value, b->value, "mul");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b->value.data[i];
  return make_node(std::move(out), {a, b}, [a = a.get(), b = b.get()](Node& self) {
    Tensor ga = self.grad, gb = self.grad;
    for (std::size_t i = 0; i < ga.data.size(); ++i) {
      ga.data[i] *= b->value.data[i];
      gb.data[i] *= a->value.data[i];
    }
    accumulate(*a, ga);
    accumulate(*b, gb);
  });
}

/// Elementwise divide; intended for scalar ratios such as the l1/l2 count.
inline NodePtr divide(const NodePtr& a, const NodePtr& b) {
  require_same_shape(a->value, b->value, "divide");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] /= b->value.data[i];
  return make_node(std::move(out), {a, b}, [a = a.get(), b = b.get()](Node& self) {
    Tensor ga = self.grad, gb = self.grad;
    for (std::size_t i = 0; i < ga.data.size(); ++i) {
      double bi = b->value.data[i];
      ga.data[i] /= bi;
      gb.data[i] *= -a->value.data[i] / (bi * bi);
    }
    accumulate(*a, ga);
    accumulate(*b, gb);
  });
}

inline NodePtr scale(const NodePtr& a, double c) {
  Tensor out = a->value;
  for (double& v : out.data) v *= c;
  return make_node(std::move(out), {a}, [a = a.get(), c](Node& self) {
    Tensor g = self.grad;
    for (double& v : g.data) v *= c;
    accumulate(*a, g);
  });
}

inline NodePtr matmul(const NodePtr& a, const NodePtr& b) {
  const Tensor& A = a->value;
  const Tensor& B = b->value;
  if (!A.is_matrix() || !B.is_matrix() || A.cols() != B.rows())
    throw std::invalid_argument("matmul: shape mismatch " + A.shape_str() +
                                " vs " + B.shape_str());
  std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t l = 0; l < k; ++l) {
      double av = A.at(i, l);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) += av * B.at(l, j);
    }
  return make_node(std::move(out), {a, b},
                   [a = a.get(), b = b.get(), m, k, n](Node& self) {
    // dA = G B^T, dB = A^T G
    Tensor ga = Tensor::zeros({m, k});
    Tensor gb = Tensor::zeros({k, n});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double g = self.grad.at(i, j);
        if (g == 0.0) continue;
        for (std::size_t l = 0; l < k; ++l) {
          ga.at(i, l) += g * b->value.at(l, j);
          gb.at(l, j) += g * a->value.at(i, l);
        }
      }
    accumulate(*a, ga);
    accumulate(*b, gb);
  });
}

/// x (m,k) times W^T where W is (n,k): activations against a weight matrix
/// stored out-by-in, the layout used by the layer parameterizations.
inline NodePtr matmul_nt(const NodePtr& x, const NodePtr& w) {
  const Tensor& X = x->value;
  const Tensor& W = w->value;
  if (!X.is_matrix() || !W.is_matrix() || X.cols() != W.cols())
    throw std::invalid_argument("matmul_nt: shape mismatch " + X.shape_str() +
                                " vs " + W.shape_str());
  std::size_t m = X.rows(), k = X.cols(), n = W.rows();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t l = 0; l < k; ++l) s += X.at(i, l) * W.at(j, l);
      out.at(i, j) = s;
    }
  return make_node(std::move(out), {x, w},
                   [x = x.get(), w = w.get(), m, k, n](Node& self) {
    // y = x W^T: dx = G W, dW = G^T x
    Tensor gx = Tensor::zeros({m, k});
    Tensor gw = Tensor::zeros({n, k});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double g = self.grad.at(i, j);
        if (g == 0.0) continue;
        for (std::size_t l = 0; l < k; ++l) {
          gx.at(i, l) += g * w->value.at(j, l);
          gw.at(j, l) += g * x->value.at(i, l);
        }
      }
    accumulate(*x, gx);
    accumulate(*w, gw);
  });
}

/// W (m,n) times diag(alpha): scales column j by alpha_j.
inline NodePtr col_scale(const NodePtr& w, const NodePtr& alpha) {
  const Tensor& W = w->value;
  if (!W.is_matrix() || alpha->value.shape.size() != 1 ||
      W.cols() != alpha->value.shape[0])
    throw std::invalid_argument("col_scale: shape mismatch " + W.shape_str() +
                                " vs " + alpha->value.shape_str());
  std::size_t m = W.rows(), n = W.cols();
  Tensor out = W;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) *= alpha->value.at(j);
  return make_node(std::move(out), {w, alpha},
                   [w = w.get(), alpha = alpha.get(), m, n](Node& self) {
    Tensor gw = self.grad;
    Tensor ga = Tensor::zeros({n});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        ga.at(j) += self.grad.at(i, j) * w->value.at(i, j);
        gw.at(i, j) *= alpha->value.at(j);
      }
    accumulate(*w, gw);
    accumulate(*alpha, ga);
  });
}

/// diag(beta) times V: scales row i by beta_i.
inline NodePtr row_scale(const NodePtr& beta, const NodePtr& v) {
  const Tensor& V = v->value;
  if (!V.is_matrix() || beta->value.shape.size() != 1 ||
      V.rows() != beta->value.shape[0])
    throw std::invalid_argument("row_scale: shape mismatch " +
                                beta->value.shape_str() + " vs " + V.shape_str());
  std::size_t m = V.rows(), n = V.cols();
  Tensor out = V;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) *= beta->value.at(i);
  return make_node(std::move(out), {beta, v},
                   [beta = beta.get(), v = v.get(), m, n](Node& self) {
    Tensor gb = Tensor::zeros({m});
    Tensor gv = self.grad;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        gb.at(i) += self.grad.at(i, j) * v->value.at(i, j);
        gv.at(i, j) *= beta->value.at(i);
      }
    accumulate(*beta, gb);
    accumulate(*v, gv);
  });
}

inline NodePtr relu(const NodePtr& a) {
  Tensor out = a->value;
  for (double& v : out.data) v = std::max(0.0, v);
  return make_node(std::move(out), {a}, [a = a.get()](Node& self) {
    Tensor g = self.grad;
    for (std::size_t i = 0; i < g.data.size(); ++i)
      if (a->value.data[i] <= 0.0) g.data[i] = 0.0;
    accumulate(*a, g);
  });
}

/// Alias kept for callers that think of the projection as max(0, x).
inline NodePtr max_with_zero(const NodePtr& a) { return relu(a); }

inline NodePtr sum(const NodePtr& a) {
  double s = 0.0;
  for (double v : a->value.data) s += v;
  return make_node(Tensor::scalar(s), {a}, [a = a.get()](Node& self) {
    accumulate(*a, Tensor::full(a->value.shape, self.grad.data[0]));
  });
}

/// Euclidean norm with a guarded subgradient: at the all-zeros vector the
/// value is 0 and the gradient is 0.
inline NodePtr l2_norm(const NodePtr& a) {
  double s = 0.0;
  for (double v : a->value.data) s += v * v;
  double norm = std::sqrt(s);
  return make_node(Tensor::scalar(norm), {a}, [a = a.get(), norm](Node& self) {
    if (norm < kZeroNormGuard) return;
    Tensor g = a->value;
    double c = self.grad.data[0] / norm;
    for (double& v : g.data) v *= c;
    accumulate(*a, g);
  });
}

/// Round to nearest, ties away from zero, with a straight-through backward:
/// the upstream gradient passes through bit-identically.
inline NodePtr round_ste(const NodePtr& a) {
  Tensor out = a->value;
  for (double& v : out.data) v = std::round(v);  // std::round ties away from zero
  return make_node(std::move(out), {a}, [a = a.get()](Node& self) {
    accumulate(*a, self.grad);
  });
}

/// Training-mode batch normalization over (batch, features) with learnable
/// scale/shift, differentiable through the batch mean and variance.
inline NodePtr batchnorm_train(const NodePtr& x, const NodePtr& gamma,
                               const NodePtr& beta, double eps) {
  const Tensor& X = x->value;
  if (!X.is_matrix())
    throw std::invalid_argument("batchnorm: expected (batch, features), got " +
                                X.shape_str());
  std::size_t b = X.rows(), f = X.cols();
  if (b < 2)
    throw std::invalid_argument("batchnorm: batch size must be >= 2, got " +
                                std::to_string(b));
  if (eps <= 0.0) throw std::invalid_argument("batchnorm: eps must be positive");
  if (gamma->value.shape != std::vector<std::size_t>{f} ||
      beta->value.shape != std::vector<std::size_t>{f})
    throw std::invalid_argument("batchnorm: scale/shift must have length " +
                                std::to_string(f));

  auto mean = std::make_shared<std::vector<double>>(f, 0.0);
  auto istd = std::make_shared<std::vector<double>>(f, 0.0);
  for (std::size_t j = 0; j < f; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < b; ++i) m += X.at(i, j);
    m /= double(b);
    double var = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
      double d = X.at(i, j) - m;
      var += d * d;
    }
    var /= double(b);
    (*mean)[j] = m;
    (*istd)[j] = 1.0 / std::sqrt(var + eps);
  }
  Tensor out({b, f});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < f; ++j)
      out.at(i, j) = (X.at(i, j) - (*mean)[j]) * (*istd)[j] * gamma->value.at(j) +
                     beta->value.at(j);

  return make_node(std::move(out), {x, gamma, beta},
                   [x = x.get(), gamma = gamma.get(), bshift = beta.get(), mean,
                    istd, b, f](Node& self) {
    Tensor gx = Tensor::zeros({b, f});
    Tensor gg = Tensor::zeros({f});
    Tensor gb = Tensor::zeros({f});
    for (std::size_t j = 0; j < f; ++j) {
      double is = (*istd)[j];
      double m = (*mean)[j];
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t i = 0; i < b; ++i) {
        double dy = self.grad.at(i, j);
        double xhat = (x->value.at(i, j) - m) * is;
        sum_dy += dy;
        sum_dy_xhat += dy * xhat;
        gg.at(j) += dy * xhat;
        gb.at(j) += dy;
      }
      double g = gamma->value.at(j);
      for (std::size_t i = 0; i < b; ++i) {
        double dy = self.grad.at(i, j);
        double xhat = (x->value.at(i, j) - m) * is;
        gx.at(i, j) =
            g * is / double(b) * (double(b) * dy - sum_dy - xhat * sum_dy_xhat);
      }
    }
    accumulate(*x, gx);
    accumulate(*gamma, gg);
    accumulate(*bshift, gb);
  });
}

/// Mean negative log-likelihood over the batch, stabilized by max-subtraction.
inline NodePtr softmax_cross_entropy(const NodePtr& logits,
                                     const std::vector<std::size_t>& labels) {
  const Tensor& Z = logits->value;
  if (!Z.is_matrix())
    throw std::invalid_argument("softmax_cross_entropy: logits must be "
                                "(batch, classes), got " + Z.shape_str());
  std::size_t b = Z.rows(), c = Z.cols();
  if (labels.size() != b)
    throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
  for (std::size_t l : labels)
    if (l >= c)
      throw std::invalid_argument("softmax_cross_entropy: label " +
                                  std::to_string(l) + " out of range for " +
                                  std::to_string(c) + " classes");

  auto probs = std::make_shared<Tensor>(Tensor::zeros({b, c}));
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double mx = Z.at(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, Z.at(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) denom += std::exp(Z.at(i, j) - mx);
    for (std::size_t j = 0; j < c; ++j)
      probs->at(i, j) = std::exp(Z.at(i, j) - mx) / denom;
    loss -= (Z.at(i, labels[i]) - mx) - std::log(denom);
  }
  loss /= double(b);
  return make_node(Tensor::scalar(loss), {logits},
                   [logits = logits.get(), probs, labels, b, c](Node& self) {
    Tensor g = *probs;
    for (std::size_t i = 0; i < b; ++i) g.at(i, labels[i]) -= 1.0;
    double s = self.grad.data[0] / double(b);
    for (double& v : g.data) v *= s;
    accumulate(*logits, g);
  });
}

/// Temperature-scaled distillation loss: coefficient * T^2 * mean-batch
/// KL(softmax(teacher/T) || softmax(student/T)). The teacher is a constant.
inline NodePtr distill_loss(const Tensor& teacher_logits, const NodePtr& student,
                            double temperature, double coefficient) {
  const Tensor& S = student->value;
  if (!S.is_matrix() || !teacher_logits.same_shape(S))
    throw std::invalid_argument("distill_loss: shape mismatch " +
                                teacher_logits.shape_str() + " vs " +
                                S.shape_str());
  if (temperature <= 0.0)
    throw std::invalid_argument("distill_loss: temperature must be positive");
  std::size_t b = S.rows(), c = S.cols();

  auto softmax_row = [c](const Tensor& z, std::size_t i, double T,
                         std::vector<double>& out) {
    double mx = z.at(i, 0) / T;
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, z.at(i, j) / T);
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[j] = std::exp(z.at(i, j) / T - mx);
      denom += out[j];
    }
    for (std::size_t j = 0; j < c; ++j) out[j] /= denom;
  };

  auto q_all = std::make_shared<Tensor>(Tensor::zeros({b, c}));  // student probs
  auto p_all = std::make_shared<Tensor>(Tensor::zeros({b, c}));  // teacher probs
  std::vector<double> p(c), q(c);
  double kl = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    softmax_row(teacher_logits, i, temperature, p);
    softmax_row(S, i, temperature, q);
    for (std::size_t j = 0; j < c; ++j) {
      p_all->at(i, j) = p[j];
      q_all->at(i, j) = q[j];
      if (p[j] > 0.0) kl += p[j] * (std::log(p[j]) - std::log(q[j]));
    }
  }
  double loss = coefficient * temperature * temperature * kl / double(b);
  return make_node(Tensor::scalar(loss), {student},
                   [student = student.get(), p_all, q_all, temperature,
                    coefficient, b, c](Node& self) {
    // d/ds of T^2 * KL is T * (q - p); mean over batch.
    Tensor g = Tensor::zeros({b, c});
    double s = self.grad.data[0] * coefficient * temperature / double(b);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < c; ++j)
        g.at(i, j) = s * (q_all->at(i, j) - p_all->at(i, j));
    accumulate(*student, g);
  });
}

/// Multiply a tensor by a scalar node (broadcast).
inline NodePtr scalar_mul(const NodePtr& s, const NodePtr& t) {
  if (!s->value.is_scalar())
    throw std::invalid_argument("scalar_mul: first operand must be scalar, got " +
                                s->value.shape_str());
  Tensor out = t->value;
  double sv = s->value.data[0];
  for (double& v : out.data) v *= sv;
  return make_node(std::move(out), {s, t}, [s = s.get(), t = t.get()](Node& self) {
    double gs = 0.0;
    Tensor gt = self.grad;
    for (std::size_t i = 0; i < gt.data.size(); ++i) {
      gs += self.grad.data[i] * t->value.data[i];
      gt.data[i] *= s->value.data[0];
    }
    accumulate(*s, Tensor::scalar(gs));
    accumulate(*t, gt);
  });
}

/// Pack scalar nodes into one vector node; gradients route back entrywise.
inline NodePtr concat_scalars(const std::vector<NodePtr>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_scalars: empty input");
  Tensor out({parts.size()});
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (!parts[i]->value.is_scalar())
      throw std::invalid_argument("concat_scalars: operand " + std::to_string(i) +
                                  " is not scalar");
    out.at(i) = parts[i]->value.data[0];
  }
  std::vector<NodePtr> parents = parts;
  return make_node(std::move(out), std::move(parents), [](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i)
      accumulate(*self.parents[i], Tensor::scalar(self.grad.at(i)));
  });
}

/// Mean squared error against a constant target.
inline NodePtr mse_loss(const NodePtr& pred, const Tensor& target) {
  require_same_shape(pred->value, target, "mse_loss");
  auto diff = sub(pred, constant(target));
  return scale(sum(mul(diff, diff)), 1.0 / double(target.numel()));
}

}  // namespace slimnet

#endif  // SLIMNET_OPS_HPP
