#pragma once

#include <cmath>
#include <cstddef>

#include "loupe/graph.hpp"
#include "loupe/ops.hpp"
#include "loupe/rng.hpp"

namespace loupe {

template <typename S>
Tensor<S> gaussian_tensor(Rng& rng, std::vector<std::size_t> shape, double mean, double stddev) {
  Tensor<S> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<S>(rng.gaussian(mean, stddev));
  return t;
}

enum class BnMode { kTrain, kEval };

// Running statistics and mode for one batch-norm layer. Scale/shift live in
// the ParamStore; this struct owns the non-learnable side.
template <typename S>
struct BatchNormState {
  Tensor<S> running_mean;
  Tensor<S> running_var;
  S momentum = S(0.99);
  S epsilon = S(1e-6);
  BnMode mode = BnMode::kTrain;
  bool update_running = true;

  explicit BatchNormState(std::size_t n = 0)
      : running_mean({n}), running_var(Tensor<S>::full({n}, S(1))) {}
};

// Column-wise batch normalization of x[B x n]. Train mode normalizes by
// batch statistics (biased variance) and optionally updates running stats;
// eval mode is a pure function of the inputs and running stats.
template <typename S>
Value<S> batch_norm(Value<S> x, Value<S> scale, Value<S> shift, BatchNormState<S>* state) {
  auto& t = detail::tape_of(x);
  const auto& xt = x.tensor();
  if (xt.rank() != 2) throw ShapeError("batch_norm: " + xt.shape_str() + " is not rank 2");
  const std::size_t bsz = xt.rows(), n = xt.cols();
  if (scale.tensor().numel() != n || shift.tensor().numel() != n ||
      state->running_mean.numel() != n)
    throw ShapeError("batch_norm: feature width mismatch for " + xt.shape_str());

  const bool train = state->mode == BnMode::kTrain;
  if (train && bsz < 2)
    throw Error("batch_norm: train mode requires batch size >= 2, got " + std::to_string(bsz));

  Tensor<S> mean({n}), var({n});
  if (train) {
    for (std::size_t j = 0; j < n; ++j) {
      S m = 0;
      for (std::size_t i = 0; i < bsz; ++i) m += xt.at(i, j);
      m /= S(bsz);
      S v = 0;
      for (std::size_t i = 0; i < bsz; ++i) {
        const S d = xt.at(i, j) - m;
        v += d * d;
      }
      mean.at(j) = m;
      var.at(j) = v / S(bsz);
    }
    if (state->update_running) {
      for (std::size_t j = 0; j < n; ++j) {
        state->running_mean.at(j) =
            state->momentum * state->running_mean.at(j) + (S(1) - state->momentum) * mean.at(j);
        state->running_var.at(j) =
            state->momentum * state->running_var.at(j) + (S(1) - state->momentum) * var.at(j);
      }
    }
  } else {
    mean = state->running_mean;
    var = state->running_var;
  }

  const S eps = state->epsilon;
  Tensor<S> inv_std({n});
  for (std::size_t j = 0; j < n; ++j) inv_std.at(j) = S(1) / std::sqrt(var.at(j) + eps);

  Tensor<S> xhat({bsz, n});
  Tensor<S> out({bsz, n});
  const auto& g = scale.tensor();
  const auto& be = shift.tensor();
  for (std::size_t i = 0; i < bsz; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const S xh = (xt.at(i, j) - mean.at(j)) * inv_std.at(j);
      xhat.at(i, j) = xh;
      out.at(i, j) = g.at(j) * xh + be.at(j);
    }

  auto v = t.make("batch_norm", {x.idx, scale.idx, shift.idx}, std::move(out), nullptr);
  t.set_backward(v, [xi = x.idx, si = scale.idx, bi = shift.idx, xhat, inv_std, train](
                        Tape<S>& tp, std::size_t self) {
    const auto& gu = tp.grad_buf(self);
    const auto& gamma = tp.out(si);
    auto& gx = tp.grad_buf(xi);
    auto& gs = tp.grad_buf(si);
    auto& gb = tp.grad_buf(bi);
    const std::size_t bsz = gu.rows(), n = gu.cols();
    for (std::size_t j = 0; j < n; ++j) {
      S sum_gu = 0, sum_gu_xhat = 0;
      for (std::size_t i = 0; i < bsz; ++i) {
        sum_gu += gu.at(i, j);
        sum_gu_xhat += gu.at(i, j) * xhat.at(i, j);
      }
      gb.at(j) += sum_gu;
      gs.at(j) += sum_gu_xhat;
      if (train) {
        const S mean_dxhat = gamma.at(j) * sum_gu / S(bsz);
        const S mean_dxhat_xhat = gamma.at(j) * sum_gu_xhat / S(bsz);
        for (std::size_t i = 0; i < bsz; ++i) {
          const S dxhat = gu.at(i, j) * gamma.at(j);
          gx.at(i, j) += inv_std.at(j) * (dxhat - mean_dxhat - xhat.at(i, j) * mean_dxhat_xhat);
        }
      } else {
        for (std::size_t i = 0; i < bsz; ++i)
          gx.at(i, j) += gu.at(i, j) * gamma.at(j) * inv_std.at(j);
      }
    }
  });
  return v;
}

}  // namespace loupe
