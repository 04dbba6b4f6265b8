#pragma once

#include <cstddef>
#include <string>

#include "loupe/graph.hpp"
#include "loupe/layers.hpp"
#include "loupe/ops.hpp"

namespace loupe {

enum class PoolKind { kAverage, kMax, kBow, kNetVlad, kNetRVlad, kNetFv };
enum class NormScheme { kNone, kIntraGlobalL2 };

inline const char* pool_kind_name(PoolKind k) {
  switch (k) {
    case PoolKind::kAverage: return "average";
    case PoolKind::kMax: return "max";
    case PoolKind::kBow: return "bow";
    case PoolKind::kNetVlad: return "netvlad";
    case PoolKind::kNetRVlad: return "netrvlad";
    case PoolKind::kNetFv: return "netfv";
  }
  return "?";
}

// sigma_k = r_k^2 + kCovarianceFloor keeps NetFV covariances positive.
inline constexpr double kCovarianceFloor = 1e-4;

struct PoolingConfig {
  PoolKind kind = PoolKind::kNetVlad;
  std::size_t clusters = 8;
  std::size_t dim = 0;
  NormScheme normalization = NormScheme::kIntraGlobalL2;
  std::size_t sample_count = 16;

  std::size_t output_dim() const {
    switch (kind) {
      case PoolKind::kAverage:
      case PoolKind::kMax: return dim;
      case PoolKind::kBow: return clusters;
      case PoolKind::kNetVlad:
      case PoolKind::kNetRVlad: return clusters * dim;
      case PoolKind::kNetFv: return 2 * clusters * dim;
    }
    return 0;
  }

  // Block width for intra-normalization; 0 means the intra step is skipped
  // (bow/average/max have no per-cluster sub-blocks).
  std::size_t intra_block() const {
    switch (kind) {
      case PoolKind::kNetVlad:
      case PoolKind::kNetRVlad:
      case PoolKind::kNetFv: return dim;
      default: return 0;
    }
  }
};

// Softmax over per-cluster scores w_k . x_i + b_k; rows sum to 1.
template <typename S>
Value<S> soft_assign(Value<S> x, Value<S> w, Value<S> b) {
  return softmax_rows(linear_rows(x, w, b));
}

// Column sums of the soft assignment; output sums to the frame count.
template <typename S>
Value<S> pool_bow(Value<S> x, Value<S> w, Value<S> b) {
  return col_sums(soft_assign(x, w, b));
}

// VLAD(k, j) = sum_i a_k(x_i) (x_i(j) - c_k(j)), flattened to [K*D].
// The anchor term uses per-cluster assignment mass: A^T X - diag(s) C.
template <typename S>
Value<S> pool_netvlad(Value<S> x, Value<S> w, Value<S> b, Value<S> c) {
  auto a = soft_assign(x, w, b);
  auto agg = matmul(transpose(a), x);                       // [K x D]
  auto mass = col_sums(a);                                  // [K]
  auto anchored = mul(broadcast_col(mass, c.tensor().cols()), c);
  return reshape(sub(agg, anchored), {agg.tensor().numel()});
}

// Residual-less variant: RVLAD(k, j) = sum_i a_k(x_i) x_i(j). No anchors.
template <typename S>
Value<S> pool_netrvlad(Value<S> x, Value<S> w, Value<S> b) {
  auto a = soft_assign(x, w, b);
  auto agg = matmul(transpose(a), x);
  return reshape(agg, {agg.tensor().numel()});
}

// First- and second-order statistics with learned diagonal covariances:
//   FV1(k,j) = sum_i a_k(x_i) (x_i(j)-c_k(j)) / sigma_k(j)
//   FV2(k,j) = sum_i a_k(x_i) (((x_i(j)-c_k(j)) / sigma_k(j))^2 - 1)
// sigma = r^2 + floor. Output is [FV1 ; FV2] flattened to [2*K*D].
template <typename S>
Value<S> pool_netfv(Value<S> x, Value<S> w, Value<S> b, Value<S> c, Value<S> r) {
  const std::size_t d = c.tensor().cols();
  auto a = soft_assign(x, w, b);
  auto m1 = matmul(transpose(a), x);        // sum_i a_ik x_ij
  auto m2 = matmul(transpose(a), square(x));
  auto mass_cols = broadcast_col(col_sums(a), d);
  auto sigma = add_scalar(square(r), S(kCovarianceFloor));

  auto fv1 = div(sub(m1, mul(mass_cols, c)), sigma);
  // sum_i a_ik (x_ij - c_kj)^2 = m2 - 2 c m1 + s c^2
  auto centered_sq = add(sub(m2, mul_scalar(mul(c, m1), S(2))), mul(mass_cols, square(c)));
  auto fv2 = sub(div(centered_sq, square(sigma)), mass_cols);
  return concat_vec(reshape(fv1, {fv1.tensor().numel()}),
                    reshape(fv2, {fv2.tensor().numel()}));
}

template <typename S>
Value<S> pool_average(Value<S> x) {
  if (x.tensor().rows() == 0) throw Error("pool_average: empty descriptor batch");
  return col_mean(x);
}

template <typename S>
Value<S> pool_max(Value<S> x) {
  if (x.tensor().rows() == 0) throw Error("pool_max: empty descriptor batch");
  return col_max(x);
}

// Two-stage normalization: per-block unit L2 (when block > 0), then whole
// vector unit L2. Zero blocks/vectors stay zero.
template <typename S>
Value<S> normalize_pooled(Value<S> v, NormScheme scheme, std::size_t intra_block) {
  if (scheme == NormScheme::kNone) return v;
  auto out = v;
  if (intra_block > 0) out = l2_normalize_blocks(out, intra_block);
  return l2_normalize_vec(out);
}

// One stream's pooling layer: owns parameter handles, builds the subgraph
// for a sampled descriptor batch [N x D].
template <typename S>
struct PoolingLayer {
  PoolingConfig config;
  Param<S>* assign_w = nullptr;
  Param<S>* assign_b = nullptr;
  Param<S>* anchors = nullptr;
  Param<S>* cov_r = nullptr;

  static PoolingLayer create(ParamStore<S>& store, const std::string& prefix,
                             const PoolingConfig& cfg, Rng& rng) {
    PoolingLayer layer;
    layer.config = cfg;
    if (cfg.clusters < 1) throw ConfigError("pooling: clusters must be >= 1");
    if (cfg.dim < 1) throw ConfigError("pooling: dim must be >= 1");
    const double wstd = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
    const bool clustering = cfg.kind == PoolKind::kBow || cfg.kind == PoolKind::kNetVlad ||
                            cfg.kind == PoolKind::kNetRVlad || cfg.kind == PoolKind::kNetFv;
    if (clustering) {
      layer.assign_w = &store.create(
          prefix + ".assign_w", gaussian_tensor<S>(rng, {cfg.clusters, cfg.dim}, 0.0, wstd));
      layer.assign_b = &store.create(prefix + ".assign_b", Tensor<S>::zeros({cfg.clusters}));
    }
    if (cfg.kind == PoolKind::kNetVlad || cfg.kind == PoolKind::kNetFv) {
      layer.anchors = &store.create(
          prefix + ".anchors", gaussian_tensor<S>(rng, {cfg.clusters, cfg.dim}, 0.0, wstd));
    }
    if (cfg.kind == PoolKind::kNetFv) {
      layer.cov_r = &store.create(prefix + ".cov_r",
                                  gaussian_tensor<S>(rng, {cfg.clusters, cfg.dim}, 1.0, 0.1));
    }
    return layer;
  }

  Value<S> forward(Tape<S>& t, Value<S> x) const {
    const auto& xt = x.tensor();
    if (xt.rank() != 2 || xt.cols() != config.dim)
      throw ShapeError("pooling: batch " + xt.shape_str() + " does not match dim " +
                       std::to_string(config.dim));
    Value<S> pooled;
    switch (config.kind) {
      case PoolKind::kAverage:
        pooled = pool_average(x);
        break;
      case PoolKind::kMax:
        pooled = pool_max(x);
        break;
      case PoolKind::kBow:
        pooled = pool_bow(x, t.param(*assign_w), t.param(*assign_b));
        break;
      case PoolKind::kNetVlad:
        pooled = pool_netvlad(x, t.param(*assign_w), t.param(*assign_b), t.param(*anchors));
        break;
      case PoolKind::kNetRVlad:
        pooled = pool_netrvlad(x, t.param(*assign_w), t.param(*assign_b));
        break;
      case PoolKind::kNetFv:
        pooled = pool_netfv(x, t.param(*assign_w), t.param(*assign_b), t.param(*anchors),
                            t.param(*cov_r));
        break;
    }
    return normalize_pooled(pooled, config.normalization, config.intra_block());
  }
};

}  // namespace loupe
