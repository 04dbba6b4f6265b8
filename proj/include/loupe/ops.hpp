#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "loupe/graph.hpp"
#include "loupe/tensor.hpp"
#include "loupe/threadpool.hpp"

namespace loupe {

namespace detail {

template <typename S>
Tape<S>& tape_of(Value<S> a) {
  if (!a.valid()) throw UsageError("op: value handle is empty");
  return *a.tape;
}

template <typename S>
void same_tape(const char* op, Value<S> a, Value<S> b) {
  if (a.tape != b.tape)
    throw UsageError(std::string(op) + ": operands come from different tapes");
}

template <typename S>
void acc(Tensor<S>& dst, const Tensor<S>& src) {
  for (std::size_t i = 0; i < dst.numel(); ++i) dst.data[i] += src.data[i];
}

// C += op(A) * op(B). Output rows are partitioned across threads, each
// element is written by exactly one thread, so the result is bitwise
// independent of the worker count.
template <typename S>
void matmul_acc(Tensor<S>& c, const Tensor<S>& a, const Tensor<S>& b, bool ta, bool tb) {
  const std::size_t m = c.rows(), n = c.cols();
  const std::size_t kk = ta ? a.rows() : a.cols();
  const std::size_t grain = std::max<std::size_t>(1, 131072 / std::max<std::size_t>(1, n * kk));
  parallel_for(m, grain, [&](std::size_t i0, std::size_t i1) {
    if (!ta && !tb) {
      for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t k = 0; k < kk; ++k) {
          const S av = a.at(i, k);
          if (av == S(0)) continue;
          for (std::size_t j = 0; j < n; ++j) c.at(i, j) += av * b.at(k, j);
        }
    } else if (!ta && tb) {
      for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          S s = 0;
          for (std::size_t k = 0; k < kk; ++k) s += a.at(i, k) * b.at(j, k);
          c.at(i, j) += s;
        }
    } else if (ta && !tb) {
      for (std::size_t k = 0; k < kk; ++k)
        for (std::size_t i = i0; i < i1; ++i) {
          const S av = a.at(k, i);
          if (av == S(0)) continue;
          for (std::size_t j = 0; j < n; ++j) c.at(i, j) += av * b.at(k, j);
        }
    } else {
      for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          S s = 0;
          for (std::size_t k = 0; k < kk; ++k) s += a.at(k, i) * b.at(j, k);
          c.at(i, j) += s;
        }
    }
  });
}

}  // namespace detail

template <typename S>
Value<S> matmul(Value<S> a, Value<S> b) {
  detail::same_tape("matmul", a, b);
  auto& t = detail::tape_of(a);
  const auto& ta = a.tensor();
  const auto& tb = b.tensor();
  if (ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows())
    throw ShapeError("matmul: " + ta.shape_str() + " incompatible with " + tb.shape_str());
  Tensor<S> out({ta.rows(), tb.cols()});
  detail::matmul_acc(out, ta, tb, false, false);
  auto v = t.make("matmul", {a.idx, b.idx}, std::move(out), nullptr);
  t.set_backward(v, [ai = a.idx, bi = b.idx](Tape<S>& tp, std::size_t self) {
    const auto& gu = tp.grad_buf(self);
    detail::matmul_acc(tp.grad_buf(ai), gu, tp.out(bi), false, true);
    detail::matmul_acc(tp.grad_buf(bi), tp.out(ai), gu, true, false);
  });
  return v;
}

template <typename S>
Value<S> transpose(Value<S> a) {
  auto& t = detail::tape_of(a);
  const auto& ta = a.tensor();
  if (ta.rank() != 2) throw ShapeError("transpose: " + ta.shape_str() + " is not rank 2");
  Tensor<S> out({ta.cols(), ta.rows()});
  for (std::size_t i = 0; i < ta.rows(); ++i)
    for (std::size_t j = 0; j < ta.cols(); ++j) out.at(j, i) = ta.at(i, j);
  auto v = t.make("transpose", {a.idx}, std::move(out), nullptr);
  t.set_backward(v, [ai = a.idx](Tape<S>& tp, std::size_t self) {
    const auto& gu = tp.grad_buf(self);
    auto& ga = tp.grad_buf(ai);
    for (std::size_t i = 0; i < gu.rows(); ++i)
      for (std::size_t j = 0; j < gu.cols(); ++j) ga.at(j, i) += gu.at(i, j);
  });
  return v;
}

namespace detail {

template <typename S, typename FwdFn, typename BackFn>
Value<S> binary_elementwise(const char* op, Value<S> a, Value<S> b, FwdFn fwd, BackFn back) {
  same_tape(op, a, b);
  auto& t = tape_of(a);
  check_same_shape(op, a.tensor(), b.tensor());
  Tensor<S> out(a.tensor().shape);
  const auto& x = a.tensor();
  const auto& y = b.tensor();
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = fwd(x.data[i], y.data[i]);
  auto v = t.make(op, {a.idx, b.idx}, std::move(out), nullptr);
  t.set_backward(v, [ai = a.idx, bi = b.idx, back](Tape<S>& tp, std::size_t self) {
    const auto& gu = tp.grad_buf(self);
    const auto& x = tp.out(ai);
    const auto& y = tp.out(bi);
    auto& ga = tp.grad_buf(ai);
    auto& gb = tp.grad_buf(bi);
    for (std::size_t i = 0; i < gu.numel(); ++i)
      back(gu.data[i], x.data[i], y.data[i], ga.data[i], gb.data[i]);
  });
  return v;
}

template <typename S, typename FwdFn, typename BackFn>
Value<S> unary_elementwise(const char* op, Value<S> a, FwdFn fwd, BackFn back) {
  auto& t = tape_of(a);
  Tensor<S> out(a.tensor().shape);
  const auto& x = a.tensor();
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = fwd(x.data[i]);
  auto v = t.make(op, {a.idx}, std::move(out), nullptr);
  t.set_backward(v, [ai = a.idx, back](Tape<S>& tp, std::size_t self) {
    const auto& gu = tp.grad_buf(self);
    const auto& x = tp.out(ai);
    const auto& y = tp.out(self);
    auto& ga = tp.grad_buf(ai);
    for (std::size_t i = 0; i < gu.numel(); ++i)
      ga.data[i] += back(gu.data[i], x.data[i], y.data[i]);
  });
  return v;
}

}  // namespace detail

template <typename S>
Value<S> add(Value<S> a, Value<S> b) {
  return detail::binary_elementwise<S>(
      "add", a, b, [](S x, S y) { return x + y; },
      [](S gu, S, S, S& ga, S& gb) {
        ga += gu;
        gb += gu;
      });
}

template <typename S>
Value<S> sub(Value<S> a, Value<S> b) {
  return detail::binary_elementwise<S>(
      "sub", a, b, [](S x, S y) { return x - y; },
      [](S gu, S, S, S& ga, S& gb) {
        ga += gu;
        gb -= gu;
      });
}

template <typename S>
Value<S> mul(Value<S> a, Value<S> b) {
  return detail::binary_elementwise<S>(
      "mul", a, b, [](S x, S y) { return x * y; },
      [](S gu, S x, S y, S& ga, S& gb) {
        ga += gu * y;
        gb += gu * x;
      });
}

template <typename S>
Value<S> div(Value<S> a, Value<S> b) {
  return detail::binary_elementwise<S>(
      "div", a, b, [](S x, S y) { return x / y; },
      [](S gu, S x, S y, S& ga, S& gb) {
        ga += gu / y;
        gb -= gu * x / (y * y);
      });
}

template <typename S>
Value<S> neg(Value<S> a) {
  return detail::unary_elementwise<S>(
      "neg", a, [](S x) { return -x; }, [](S gu, S, S) { return -gu; });
}

template <typename S>
Value<S> add_scalar(Value<S> a, S c) {
  return detail::unary_elementwise<S>(
      "add_scalar", a, [c](S x) { return x + c; }, [](S gu, S, S) { return gu; });
}

template <typename S>
Value<S> mul_scalar(Value<S> a, S c) {
  return detail::unary_elementwise<S>(
      "mul_scalar", a, [c](S x) { return x * c; }, [c](S gu, S, S) { return gu * c; });
}

template <typename S>
Value<S> square(Value<S> a) {
  return detail::unary_elementwise<S>(
      "square", a, [](S x) { return x * x; }, [](S gu, S x, S) { return gu * S(2) * x; });
}

template <typename S>
Value<S> log_op(Value<S> a) {
  return detail::unary_elementwise<S>(
      "log", a, [](S x) { return std::log(x); }, [](S gu, S x, S) { return gu / x; });
}

template <typename S>
Value<S> sigmoid(Value<S> a) {
  return detail::unary_elementwise<S>(
      "sigmoid", a,
      [](S x) {
        // numerically symmetric form, avoids overflow on either tail
        if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
        const S e = std::exp(x);
        return e / (S(1) + e);
      },
      [](S gu, S, S y) { return gu * y * (S(1) - y); });
}

template <typename S>
Value<S> relu(Value<S> a) {
  return detail::unary_elementwise<S>(
      "relu", a, [](S x) { return x > S(0) ? x : S(0); },
      [](S gu, S x, S) { return x > S(0) ? gu : S(0); });
}

// Gradient is passed only strictly inside (lo, hi).
template <typename S>
Value<S> clamp(Value<S> a, S lo, S hi) {
  return detail::unary_elementwise<S>(
      "clamp", a, [lo, hi](S x) { return std::min(hi, std::max(lo, x)); },
      [lo, hi](S gu, S x, S) { return (x > lo && x < hi) ? gu : S(0); });
}

// Row-wise softmax with max subtraction. Rows sum to 1.
template <typename S>
Value<S> softmax_rows(Value<S> a) {
  auto& t = detail::tape_of(a);
  const auto& x = a.tensor();
  if (x.rank() != 2) throw ShapeError("softmax_rows: " + x.shape_str() + " is not rank 2");
  Tensor<S> out(x.shape);
  const std::size_t m = x.rows(), n = x.cols();
  for (std::size_t i = 0; i < m; ++i) {
    S mx = x.at(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x.at(i, j));
    S sum = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const S e = std::exp(x.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) /= sum;
  }
  auto v = t.make("softmax_rows", {a.idx}, std::move(out), nullptr);
  t.set_backward(v, [ai = a.idx](Tape<S>& tp, std::size_t self) {
    const auto& gu = tp.grad_buf(self);
    const auto& y = tp.out(self);
    auto& ga = tp.grad_buf(ai);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      S dot = 0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += gu.at(i, j) * y.at(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j)
        ga.at(i, j) += y.at(i, j) * (gu.at(i, j) - dot);
    }
  });
  return v;
}

// [n] -> [m x n], every row a copy of v.
template <typename S>
Value<S> broadcast_row(Value<S> a, std::size_t m) {
  auto& t = detail::tape_of(a);
  const auto& x = a.tensor();
  if (x.rank() != 1) throw ShapeError("broadcast_row: " + x.shape_str() + " is not rank 1");
  const std::size_t n = x.numel();
  Tensor<S> out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = x.at(j);
  auto v = t.make("broadcast_row", {a.idx}, std::move(out), nullptr);
  t.set_backward(v, [ai = a.idx](Tape<S>& tp, std::size_t self) {
    const auto& gu = tp.grad_buf(self);
    auto& ga = tp.grad_buf(ai);
    for (std::size_t i = 0; i < gu.rows(); ++i)
      for (std::size_t j = 0; j < gu.cols(); ++j) ga.at(j) += gu.at(i, j);
  });
  return v;
}

// [m] -> [m x n], entry (i, j) = v[i].
template <typename S>
Value<S> broadcast_col(Value<S> a, std::size_t n) {
  auto& t = detail::tape_of(a);
  const auto& x = a.tensor();
  if (x.rank() != 1) throw ShapeError("broadcast_col: " + x.shape_str() + " is not rank 1");
  const std::size_t m = x.numel();
  Tensor<S> out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = x.at(i);
  auto v = t.make("broadcast_col", {a.idx}, std::move(out), nullptr);
  t.set_backward(v, [ai = a.idx](Tape<S>& tp, std::size_t self) {
    const auto& gu = tp.grad_buf(self);
    auto& ga = tp.grad_buf(ai);
    for (std::size_t i = 0; i < gu.rows(); ++i)
      for (std::size_t j = 0; j < gu.cols(); ++j) ga.at(i) += gu.at(i, j);
  });
  return v;
}

template <typename S>
Value<S> row_sums(Value<S> a) {
  auto& t = detail::tape_of(a);
  const auto& x = a.tensor();
  if (x.rank() != 2) throw ShapeError("row_sums: " + x.shape_str() + " is not rank 2");
  Tensor<S> out({x.rows()});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    S s = 0;
    for (std::size_t j = 0; j < x.cols(); ++j) s += x.at(i, j);
    out.at(i) = s;
  }
  auto v = t.make("row_sums", {a.idx}, std::move(out), nullptr);
  t.set_backward(v, [ai = a.idx](Tape<S>& tp, std::size_t self) {
    const auto& gu = tp.grad_buf(self);
    auto& ga = tp.grad_buf(ai);
    for (std::size_t i = 0; i < ga.rows(); ++i)
      for (std::size_t j = 0; j < ga.cols(); ++j) ga.at(i, j) += gu.at(i);
  });
  return v;
}

template <typename S>
Value<S> col_sums(Value<S> a) {
  auto& t = detail::tape_of(a);
  const auto& x = a.tensor();
  if (x.rank() != 2) throw ShapeError("col_sums: " + x.shape_str() + " is not rank 2");
  Tensor<S> out({x.cols()});
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out.at(j) += x.at(i, j);
  auto v = t.make("col_sums", {a.idx}, std::move(out), nullptr);
  t.set_backward(v, [ai = a.idx](Tape<S>& tp, std::size_t self) {
    const auto& gu = tp.grad_buf(self);
    auto& ga = tp.grad_buf(ai);
    for (std::size_t i = 0; i < ga.rows(); ++i)
      for (std::size_t j = 0; j < ga.cols(); ++j) ga.at(i, j) += gu.at(j);
  });
  return v;
}

template <typename S>
Value<S> col_mean(Value<S> a) {
  const std::size_t m = a.tensor().rows();
  return mul_scalar(col_sums(a), S(1) / S(m));
}

// Per-column max over rows; gradient routes to the first argmax.
template <typename S>
Value<S> col_max(Value<S> a) {
  auto& t = detail::tape_of(a);
  const auto& x = a.tensor();
  if (x.rank() != 2 || x.rows() == 0)
    throw ShapeError("col_max: " + x.shape_str() + " needs rank 2 with rows >= 1");
  Tensor<S> out({x.cols()});
  std::vector<std::size_t> arg(x.cols(), 0);
  for (std::size_t j = 0; j < x.cols(); ++j) {
    S best = x.at(0, j);
    for (std::size_t i = 1; i < x.rows(); ++i)
      if (x.at(i, j) > best) {
        best = x.at(i, j);
        arg[j] = i;
      }
    out.at(j) = best;
  }
  auto v = t.make("col_max", {a.idx}, std::move(out), nullptr);
  t.set_backward(v, [ai = a.idx, arg](Tape<S>& tp, std::size_t self) {
    const auto& gu = tp.grad_buf(self);
    auto& ga = tp.grad_buf(ai);
    for (std::size_t j = 0; j < gu.numel(); ++j) ga.at(arg[j], j) += gu.at(j);
  });
  return v;
}

template <typename S>
Value<S> sum_all(Value<S> a) {
  auto& t = detail::tape_of(a);
  const auto& x = a.tensor();
  S s = 0;
  for (S v : x.data) s += v;
  auto v = t.make("sum_all", {a.idx}, Tensor<S>({1}, {s}), nullptr);
  t.set_backward(v, [ai = a.idx](Tape<S>& tp, std::size_t self) {
    const S gu = tp.grad_buf(self).at(0);
    auto& ga = tp.grad_buf(ai);
    for (auto& g : ga.data) g += gu;
  });
  return v;
}

template <typename S>
Value<S> mean_all(Value<S> a) {
  return mul_scalar(sum_all(a), S(1) / S(a.tensor().numel()));
}

template <typename S>
Value<S> reshape(Value<S> a, std::vector<std::size_t> shape) {
  auto& t = detail::tape_of(a);
  const auto& x = a.tensor();
  if (Tensor<S>::numel_of(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + x.shape_str() + " as " +
                     Tensor<S>::shape_str_of(shape));
  Tensor<S> out(std::move(shape), x.data);
  auto v = t.make("reshape", {a.idx}, std::move(out), nullptr);
  t.set_backward(v, [ai = a.idx](Tape<S>& tp, std::size_t self) {
    const auto& gu = tp.grad_buf(self);
    auto& ga = tp.grad_buf(ai);
    for (std::size_t i = 0; i < gu.numel(); ++i) ga.data[i] += gu.data[i];
  });
  return v;
}

template <typename S>
Value<S> concat_vec(Value<S> a, Value<S> b) {
  detail::same_tape("concat_vec", a, b);
  auto& t = detail::tape_of(a);
  const auto& x = a.tensor();
  const auto& y = b.tensor();
  if (x.rank() != 1 || y.rank() != 1)
    throw ShapeError("concat_vec: " + x.shape_str() + ", " + y.shape_str() + " must be rank 1");
  Tensor<S> out({x.numel() + y.numel()});
  std::copy(x.data.begin(), x.data.end(), out.data.begin());
  std::copy(y.data.begin(), y.data.end(), out.data.begin() + x.numel());
  auto v = t.make("concat_vec", {a.idx, b.idx}, std::move(out), nullptr);
  t.set_backward(v, [ai = a.idx, bi = b.idx, na = x.numel()](Tape<S>& tp, std::size_t self) {
    const auto& gu = tp.grad_buf(self);
    auto& ga = tp.grad_buf(ai);
    auto& gb = tp.grad_buf(bi);
    for (std::size_t i = 0; i < ga.numel(); ++i) ga.data[i] += gu.data[i];
    for (std::size_t i = 0; i < gb.numel(); ++i) gb.data[i] += gu.data[na + i];
  });
  return v;
}

template <typename S>
Value<S> concat_cols(Value<S> a, Value<S> b) {
  detail::same_tape("concat_cols", a, b);
  auto& t = detail::tape_of(a);
  const auto& x = a.tensor();
  const auto& y = b.tensor();
  if (x.rank() != 2 || y.rank() != 2 || x.rows() != y.rows())
    throw ShapeError("concat_cols: " + x.shape_str() + " and " + y.shape_str() +
                     " must be rank 2 with equal rows");
  const std::size_t m = x.rows(), p = x.cols(), q = y.cols();
  Tensor<S> out({m, p + q});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < p; ++j) out.at(i, j) = x.at(i, j);
    for (std::size_t j = 0; j < q; ++j) out.at(i, p + j) = y.at(i, j);
  }
  auto v = t.make("concat_cols", {a.idx, b.idx}, std::move(out), nullptr);
  t.set_backward(v, [ai = a.idx, bi = b.idx, p](Tape<S>& tp, std::size_t self) {
    const auto& gu = tp.grad_buf(self);
    auto& ga = tp.grad_buf(ai);
    auto& gb = tp.grad_buf(bi);
    for (std::size_t i = 0; i < ga.rows(); ++i) {
      for (std::size_t j = 0; j < ga.cols(); ++j) ga.at(i, j) += gu.at(i, j);
      for (std::size_t j = 0; j < gb.cols(); ++j) gb.at(i, j) += gu.at(i, p + j);
    }
  });
  return v;
}

template <typename S>
Value<S> slice_cols(Value<S> a, std::size_t c0, std::size_t c1) {
  auto& t = detail::tape_of(a);
  const auto& x = a.tensor();
  if (x.rank() != 2 || c0 >= c1 || c1 > x.cols())
    throw ShapeError("slice_cols: invalid [" + std::to_string(c0) + ", " + std::to_string(c1) +
                     ") for " + x.shape_str());
  Tensor<S> out({x.rows(), c1 - c0});
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = c0; j < c1; ++j) out.at(i, j - c0) = x.at(i, j);
  auto v = t.make("slice_cols", {a.idx}, std::move(out), nullptr);
  t.set_backward(v, [ai = a.idx, c0](Tape<S>& tp, std::size_t self) {
    const auto& gu = tp.grad_buf(self);
    auto& ga = tp.grad_buf(ai);
    for (std::size_t i = 0; i < gu.rows(); ++i)
      for (std::size_t j = 0; j < gu.cols(); ++j) ga.at(i, c0 + j) += gu.at(i, j);
  });
  return v;
}

// Stacks B rank-1 values of equal length into [B x n].
template <typename S>
Value<S> stack_rows(const std::vector<Value<S>>& rows) {
  if (rows.empty()) throw UsageError("stack_rows: no rows");
  auto& t = detail::tape_of(rows[0]);
  const std::size_t n = rows[0].tensor().numel();
  std::vector<std::size_t> parents;
  parents.reserve(rows.size());
  Tensor<S> out({rows.size(), n});
  for (std::size_t b = 0; b < rows.size(); ++b) {
    detail::same_tape("stack_rows", rows[0], rows[b]);
    const auto& r = rows[b].tensor();
    if (r.rank() != 1 || r.numel() != n)
      throw ShapeError("stack_rows: row " + std::to_string(b) + " has shape " + r.shape_str());
    std::copy(r.data.begin(), r.data.end(), out.data.begin() + b * n);
    parents.push_back(rows[b].idx);
  }
  auto v = t.make("stack_rows", parents, std::move(out), nullptr);
  t.set_backward(v, [parents = v.tape->node(v.idx).parents, n](Tape<S>& tp, std::size_t self) {
    const auto& gu = tp.grad_buf(self);
    for (std::size_t b = 0; b < parents.size(); ++b) {
      auto& g = tp.grad_buf(parents[b]);
      for (std::size_t j = 0; j < n; ++j) g.at(j) += gu.at(b, j);
    }
  });
  return v;
}

// L2-normalizes each contiguous block of `block` entries; zero blocks pass
// through as zeros with zero gradient.
template <typename S>
Value<S> l2_normalize_blocks(Value<S> a, std::size_t block) {
  auto& t = detail::tape_of(a);
  const auto& x = a.tensor();
  if (block == 0 || x.numel() % block != 0)
    throw ShapeError("l2_normalize_blocks: block " + std::to_string(block) +
                     " does not divide " + x.shape_str());
  const std::size_t nb = x.numel() / block;
  Tensor<S> out(x.shape);
  std::vector<S> norms(nb, S(0));
  for (std::size_t b = 0; b < nb; ++b) {
    S ss = 0;
    for (std::size_t j = 0; j < block; ++j) {
      const S v = x.data[b * block + j];
      ss += v * v;
    }
    const S nrm = std::sqrt(ss);
    norms[b] = nrm;
    for (std::size_t j = 0; j < block; ++j)
      out.data[b * block + j] = nrm > S(0) ? x.data[b * block + j] / nrm : S(0);
  }
  auto v = t.make("l2_normalize", {a.idx}, std::move(out), nullptr);
  t.set_backward(v, [ai = a.idx, block, norms](Tape<S>& tp, std::size_t self) {
    const auto& gu = tp.grad_buf(self);
    const auto& y = tp.out(self);
    auto& ga = tp.grad_buf(ai);
    const std::size_t nb = norms.size();
    for (std::size_t b = 0; b < nb; ++b) {
      if (norms[b] <= S(0)) continue;
      S dot = 0;
      for (std::size_t j = 0; j < block; ++j)
        dot += gu.data[b * block + j] * y.data[b * block + j];
      for (std::size_t j = 0; j < block; ++j)
        ga.data[b * block + j] +=
            (gu.data[b * block + j] - y.data[b * block + j] * dot) / norms[b];
    }
  });
  return v;
}

template <typename S>
Value<S> l2_normalize_vec(Value<S> a) {
  return l2_normalize_blocks(a, a.tensor().numel());
}

// X[B x n] * W^T + b per row.
template <typename S>
Value<S> linear_rows(Value<S> x, Value<S> w, Value<S> b) {
  const std::size_t m = x.tensor().rows();
  return add(matmul(x, transpose(w)), broadcast_row(b, m));
}

// W x + b for a single vector.
template <typename S>
Value<S> linear_vec(Value<S> x, Value<S> w, Value<S> b) {
  auto col = reshape(x, {x.tensor().numel(), std::size_t(1)});
  auto y = reshape(matmul(w, col), {w.tensor().rows()});
  return add(y, b);
}

}  // namespace loupe
