#include "loupe/gradcheck_suite.hpp"

#include "loupe/gradcheck.hpp"
#include "loupe/model.hpp"

namespace loupe {

namespace {

double worst(const std::vector<GradCheckRow>& rows) {
  double m = 0.0;
  for (const auto& r : rows) m = std::max(m, r.max_rel_err);
  return m;
}

LayerCheck make_check(const std::string& layer, double err, double tol) {
  return {layer, err, tol, err < tol};
}

}  // namespace

std::vector<LayerCheck> run_layer_gradchecks(std::uint64_t seed) {
  std::vector<LayerCheck> out;
  Rng rng(seed);

  {
    ParamStore<double> s;
    auto& w = s.create("w", gaussian_tensor<double>(rng, {4, 5}, 0.0, 1.0));
    auto& b = s.create("b", gaussian_tensor<double>(rng, {4}, 0.0, 1.0));
    auto& x = s.create("x", gaussian_tensor<double>(rng, {3, 5}, 0.0, 1.0));
    out.push_back(make_check("linear", worst(check_gradients("linear", s, [&](Tape<double>& t) {
                               return linear_rows(t.param(x), t.param(w), t.param(b));
                             })),
                             1e-6));
  }

  for (BnMode mode : {BnMode::kTrain, BnMode::kEval}) {
    ParamStore<double> s;
    auto& scale = s.create("scale", gaussian_tensor<double>(rng, {4}, 1.0, 0.2));
    auto& shift = s.create("shift", gaussian_tensor<double>(rng, {4}, 0.0, 0.2));
    auto& x = s.create("x", gaussian_tensor<double>(rng, {6, 4}, 0.0, 1.0));
    BatchNormState<double> state(4);
    state.mode = mode;
    state.update_running = false;
    const char* name = mode == BnMode::kTrain ? "batch_norm_train" : "batch_norm_eval";
    out.push_back(make_check(name, worst(check_gradients(name, s, [&](Tape<double>& t) {
                               return batch_norm(t.param(x), t.param(scale), t.param(shift),
                                                 &state);
                             })),
                             1e-5));
  }

  {
    ParamStore<double> s;
    auto& w = s.create("w", gaussian_tensor<double>(rng, {4, 4}, 0.0, 0.6));
    auto& b = s.create("b", gaussian_tensor<double>(rng, {4}, 0.0, 0.6));
    auto& x = s.create("x", gaussian_tensor<double>(rng, {4}, 0.0, 1.0));
    out.push_back(make_check("context_gate",
                             worst(check_gradients("cg", s, [&](Tape<double>& t) {
                               return context_gate_vec(t.param(x), t.param(w), t.param(b));
                             })),
                             1e-5));
  }

  {
    ParamStore<double> s;
    auto& w1 = s.create("w1", gaussian_tensor<double>(rng, {4, 4}, 0.0, 0.6));
    auto& b1 = s.create("b1", gaussian_tensor<double>(rng, {4}, 0.0, 0.6));
    auto& w2 = s.create("w2", gaussian_tensor<double>(rng, {4, 4}, 0.0, 0.6));
    auto& b2 = s.create("b2", gaussian_tensor<double>(rng, {4}, 0.0, 0.6));
    auto& x = s.create("x", gaussian_tensor<double>(rng, {4}, 0.0, 1.0));
    out.push_back(make_check("glu", worst(check_gradients("glu", s, [&](Tape<double>& t) {
                               return glu_vec(t.param(x), t.param(w1), t.param(b1), t.param(w2),
                                              t.param(b2));
                             })),
                             1e-5));
  }

  {
    ParamStore<double> s;
    auto& w = s.create("w", gaussian_tensor<double>(rng, {4, 4}, 0.0, 0.6));
    // bias away from zero keeps relu preactivations off the kink
    auto& b = s.create("b", gaussian_tensor<double>(rng, {4}, 2.0, 0.2));
    auto& x = s.create("x", gaussian_tensor<double>(rng, {4}, 0.0, 1.0));
    out.push_back(make_check("residual",
                             worst(check_gradients("residual", s, [&](Tape<double>& t) {
                               return residual_relu_vec(t.param(x), t.param(w), t.param(b));
                             })),
                             1e-5));
  }

  const auto pooling_check = [&](PoolKind kind, const char* name) {
    PoolingConfig cfg;
    cfg.kind = kind;
    cfg.clusters = 3;
    cfg.dim = 4;
    cfg.normalization = NormScheme::kIntraGlobalL2;
    ParamStore<double> s;
    auto layer = PoolingLayer<double>::create(s, "pool", cfg, rng);
    auto& x = s.create("x", gaussian_tensor<double>(rng, {6, 4}, 0.0, 1.0));
    out.push_back(make_check(name, worst(check_gradients(name, s, [&](Tape<double>& t) {
                               return layer.forward(t, t.param(x));
                             })),
                             1e-5));
  };
  pooling_check(PoolKind::kBow, "soft_bow");
  pooling_check(PoolKind::kNetVlad, "netvlad");
  pooling_check(PoolKind::kNetRVlad, "netrvlad");
  pooling_check(PoolKind::kNetFv, "netfv");

  {
    ParamStore<double> s;
    MoeConfig cfg;
    cfg.labels = 3;
    cfg.experts = 2;
    cfg.null_expert = true;
    auto layer = MoeLayer<double>::create(s, "moe", cfg, 5, rng);
    auto& x = s.create("x", gaussian_tensor<double>(rng, {3, 5}, 0.0, 1.0));
    out.push_back(make_check("moe", worst(check_gradients("moe", s, [&](Tape<double>& t) {
                               return layer.forward(t, t.param(x));
                             })),
                             1e-5));
  }

  {
    // whole tiny model: two-stream NetVLAD, BN, CG after pooling and output
    ModelConfig cfg;
    cfg.dim_visual = 6;
    cfg.dim_audio = 3;
    cfg.labels = 3;
    cfg.hidden = 8;
    cfg.precision = "f64";
    cfg.seed = seed + 31;
    cfg.visual_pool.kind = PoolKind::kNetVlad;
    cfg.visual_pool.clusters = 2;
    cfg.visual_pool.dim = 6;
    cfg.visual_pool.sample_count = 4;
    cfg.audio_pool = cfg.visual_pool;
    cfg.audio_pool.dim = 3;
    cfg.after_pooling = GateKind::kContextGate;
    cfg.cg_after_classifier = true;
    cfg.classifier.labels = 3;
    cfg.classifier.experts = 2;
    cfg.classifier.null_expert = true;

    Model<double> model(cfg);
    model.bn_state().update_running = false;
    std::vector<SampledVideo<double>> batch(3);
    for (auto& v : batch) {
      v.visual = gaussian_tensor<double>(rng, {4, 6}, 0.0, 1.0);
      v.audio = gaussian_tensor<double>(rng, {4, 3}, 0.0, 1.0);
    }
    out.push_back(make_check("full_model",
                             worst(check_gradients("full_model", model.params(),
                                                   [&](Tape<double>& t) {
                                                     return model.forward(t, batch);
                                                   })),
                             1e-4));
  }

  return out;
}

}  // namespace loupe
