#pragma once

#include <cmath>
#include <cstddef>

#include "loupe/graph.hpp"
#include "loupe/ops.hpp"

namespace loupe {

enum class GateKind { kNone, kContextGate, kGlu };

// Self-gating y = sigmoid(W x + b) o x. Keeps label scores in [0, 1] when
// the input is, so it is also valid after the classifier.
template <typename S>
Value<S> context_gate_vec(Value<S> x, Value<S> w, Value<S> b) {
  return mul(sigmoid(linear_vec(x, w, b)), x);
}

template <typename S>
Value<S> context_gate_rows(Value<S> x, Value<S> w, Value<S> b) {
  return mul(sigmoid(linear_rows(x, w, b)), x);
}

// Gated linear unit: sigmoid(W1 x + b1) o (W2 x + b2).
template <typename S>
Value<S> glu_vec(Value<S> x, Value<S> w1, Value<S> b1, Value<S> w2, Value<S> b2) {
  return mul(sigmoid(linear_vec(x, w1, b1)), linear_vec(x, w2, b2));
}

template <typename S>
Value<S> glu_rows(Value<S> x, Value<S> w1, Value<S> b1, Value<S> w2, Value<S> b2) {
  return mul(sigmoid(linear_rows(x, w1, b1)), linear_rows(x, w2, b2));
}

// Residual block y = relu(W x + b) + x (square W).
template <typename S>
Value<S> residual_relu_vec(Value<S> x, Value<S> w, Value<S> b) {
  return add(relu(linear_vec(x, w, b)), x);
}

template <typename S>
Value<S> residual_relu_rows(Value<S> x, Value<S> w, Value<S> b) {
  return add(relu(linear_rows(x, w, b)), x);
}

// Learnable parameter counts per gate unit on width n.
inline std::size_t gate_param_count(GateKind kind, std::size_t n) {
  switch (kind) {
    case GateKind::kNone:
      return 0;
    case GateKind::kContextGate:
      return n * n + n;
    case GateKind::kGlu:
      return 2 * (n * n + n);
  }
  return 0;
}

// Compares the autodiff input-gradient of the context gate against the
// closed form g o u + W^T (u o x o g o (1 - g)), g = sigmoid(W x + b).
struct CgIdentityReport {
  double max_abs_diff = 0.0;
};

inline CgIdentityReport cg_backward_identity_check(const Tensor<double>& x,
                                                   const Tensor<double>& w,
                                                   const Tensor<double>& b,
                                                   const Tensor<double>& upstream) {
  const std::size_t n = x.numel();
  Tape<double> t;
  auto xv = t.input(x, "x");
  auto wv = t.input(w, "w");
  auto bv = t.input(b, "b");
  auto y = context_gate_vec(xv, wv, bv);
  t.backward(y, upstream);
  const auto& auto_grad = t.grad(xv);

  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) {
    double z = b.at(i);
    for (std::size_t j = 0; j < n; ++j) z += w.at(i, j) * x.at(j);
    g[i] = 1.0 / (1.0 + std::exp(-z));
  }
  CgIdentityReport rep;
  for (std::size_t j = 0; j < n; ++j) {
    double closed = g[j] * upstream.at(j);
    for (std::size_t i = 0; i < n; ++i)
      closed += w.at(i, j) * upstream.at(i) * x.at(i) * g[i] * (1.0 - g[i]);
    rep.max_abs_diff = std::max(rep.max_abs_diff, std::abs(closed - auto_grad.at(j)));
  }
  return rep;
}

}  // namespace loupe
