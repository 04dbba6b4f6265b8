#pragma once

#include <cstddef>
#include <string>

#include "loupe/graph.hpp"
#include "loupe/layers.hpp"
#include "loupe/ops.hpp"

namespace loupe {

struct MoeConfig {
  std::size_t labels = 0;
  std::size_t experts = 2;
  bool null_expert = true;

  std::size_t gate_arms() const { return experts + (null_expert ? 1 : 0); }
};

// Per-label mixture of logistic experts with a softmax gate. With a null
// expert the gate has E+1 arms and the last arm's probability mass predicts
// nothing, so every label score stays strictly below 1.
template <typename S>
struct MoeLayer {
  MoeConfig config;
  std::size_t input_dim = 0;
  Param<S>* expert_w = nullptr;  // [(L*E) x n], rows ordered (label, expert)
  Param<S>* expert_b = nullptr;  // [L*E]
  Param<S>* gate_w = nullptr;    // [(L*G) x n], rows ordered (label, arm)
  Param<S>* gate_b = nullptr;    // [L*G]

  static MoeLayer create(ParamStore<S>& store, const std::string& prefix, const MoeConfig& cfg,
                         std::size_t input_dim, Rng& rng) {
    if (cfg.experts < 1) throw ConfigError("classifier: experts must be >= 1");
    if (cfg.labels < 1) throw ConfigError("classifier: labels must be >= 1");
    MoeLayer layer;
    layer.config = cfg;
    layer.input_dim = input_dim;
    const double wstd = 1.0 / std::sqrt(static_cast<double>(input_dim));
    const std::size_t le = cfg.labels * cfg.experts;
    const std::size_t lg = cfg.labels * cfg.gate_arms();
    layer.expert_w =
        &store.create(prefix + ".expert_w", gaussian_tensor<S>(rng, {le, input_dim}, 0.0, wstd));
    layer.expert_b = &store.create(prefix + ".expert_b", Tensor<S>::zeros({le}));
    layer.gate_w =
        &store.create(prefix + ".gate_w", gaussian_tensor<S>(rng, {lg, input_dim}, 0.0, wstd));
    layer.gate_b = &store.create(prefix + ".gate_b", Tensor<S>::zeros({lg}));
    return layer;
  }

  // x: [B x n] -> probabilities [B x L].
  Value<S> forward(Tape<S>& t, Value<S> x) const {
    const std::size_t bsz = x.tensor().rows();
    const std::size_t L = config.labels, E = config.experts, G = config.gate_arms();

    auto esig = sigmoid(linear_rows(x, t.param(*expert_w), t.param(*expert_b)));  // [B x LE]
    auto glog = linear_rows(x, t.param(*gate_w), t.param(*gate_b));               // [B x LG]
    auto gates = softmax_rows(reshape(glog, {bsz * L, G}));                       // rows: (b, l)
    auto expert_gates = G == E ? gates : slice_cols(gates, 0, E);
    auto mixed = row_sums(mul(expert_gates, reshape(esig, {bsz * L, E})));
    return reshape(mixed, {bsz, L});
  }

  std::size_t learnable_count() const {
    const std::size_t n = input_dim;
    return config.labels * config.experts * (n + 1) +
           config.labels * config.gate_arms() * (n + 1);
  }
};

}  // namespace loupe
