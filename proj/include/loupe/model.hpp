#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "loupe/config.hpp"
#include "loupe/dataio.hpp"
#include "loupe/gating.hpp"
#include "loupe/layers.hpp"
#include "loupe/moe.hpp"
#include "loupe/pooling.hpp"

namespace loupe {

enum class Fusion { kLateConcat, kEarlyConcat };

inline const char* fusion_name(Fusion f) {
  return f == Fusion::kLateConcat ? "late_concat" : "early_concat";
}

PoolKind parse_pool_kind(const std::string& s);
NormScheme parse_norm_scheme(const std::string& s);
GateKind parse_gate_kind(const std::string& s);
Fusion parse_fusion(const std::string& s);
const char* norm_scheme_name(NormScheme s);
const char* gate_kind_name(GateKind k);

// Architecture-defining configuration. `canonical()` is the checkpoint
// compatibility contract: two models interoperate iff their canonical
// texts are identical.
struct ModelConfig {
  std::size_t dim_visual = 0;
  std::size_t dim_audio = 0;
  std::size_t labels = 0;
  Fusion fusion = Fusion::kLateConcat;
  std::size_t hidden = 64;
  bool batch_norm = true;
  PoolingConfig visual_pool;  // for early fusion: the single pooling over D_v + D_a
  PoolingConfig audio_pool;   // late fusion only
  GateKind after_pooling = GateKind::kNone;
  bool cg_after_classifier = false;
  MoeConfig classifier;
  std::string precision = "f32";
  std::uint64_t seed = 1;

  static ModelConfig from(const Config& cfg, const DatasetMeta& meta);
  static ModelConfig from_canonical(const std::string& text);
  std::string canonical() const;
  void validate() const;
};

// One video's sampled descriptor batch. Late fusion fills both streams;
// early fusion holds the concatenated per-frame descriptors in `visual`.
template <typename S>
struct SampledVideo {
  Tensor<S> visual;
  Tensor<S> audio;
};

// Draws `count` frame indices uniformly with replacement; both streams use
// the same indices so early fusion stays frame-aligned.
std::vector<std::size_t> sample_frame_indices(std::size_t frames, std::size_t count, Rng& rng);

template <typename S>
class Model {
 public:
  explicit Model(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg_.seed);
    Rng init = rng.fork(0x1417);

    if (cfg_.fusion == Fusion::kLateConcat) {
      vis_pool_ = PoolingLayer<S>::create(store_, "vis_pool", cfg_.visual_pool, init);
      aud_pool_ = PoolingLayer<S>::create(store_, "aud_pool", cfg_.audio_pool, init);
      pooled_dim_ = cfg_.visual_pool.output_dim() + cfg_.audio_pool.output_dim();
    } else {
      vis_pool_ = PoolingLayer<S>::create(store_, "pool", cfg_.visual_pool, init);
      pooled_dim_ = cfg_.visual_pool.output_dim();
    }

    const std::size_t h = cfg_.hidden;
    fc_w_ = &store_.create(
        "fc.w", gaussian_tensor<S>(init, {h, pooled_dim_}, 0.0,
                                   1.0 / std::sqrt(static_cast<double>(pooled_dim_))));
    fc_b_ = &store_.create("fc.b", Tensor<S>::zeros({h}));

    if (cfg_.batch_norm) {
      bn_scale_ = &store_.create("bn.scale", Tensor<S>::full({h}, S(1)));
      bn_shift_ = &store_.create("bn.shift", Tensor<S>::zeros({h}));
      bn_ = BatchNormState<S>(h);
    }

    if (cfg_.after_pooling != GateKind::kNone) {
      const double gstd = 1.0 / static_cast<double>(h);
      gp_w_ = &store_.create("gate_pool.w", gaussian_tensor<S>(init, {h, h}, 0.0, gstd));
      gp_b_ = &store_.create("gate_pool.b", Tensor<S>::zeros({h}));
      if (cfg_.after_pooling == GateKind::kGlu) {
        gp_w2_ = &store_.create("gate_pool.w2", gaussian_tensor<S>(init, {h, h}, 0.0, gstd));
        gp_b2_ = &store_.create("gate_pool.b2", Tensor<S>::zeros({h}));
      }
    }

    moe_ = MoeLayer<S>::create(store_, "moe", cfg_.classifier, h, init);

    if (cfg_.cg_after_classifier) {
      const std::size_t l = cfg_.labels;
      const double gstd = 1.0 / static_cast<double>(l);
      go_w_ = &store_.create("gate_out.w", gaussian_tensor<S>(init, {l, l}, 0.0, gstd));
      go_b_ = &store_.create("gate_out.b", Tensor<S>::zeros({l}));
    }
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<S>& params() { return store_; }
  const ParamStore<S>& params() const { return store_; }
  std::size_t param_count() const { return store_.learnable_count(); }

  BnMode mode() const { return bn_.mode; }
  void set_mode(BnMode m) { bn_.mode = m; }
  BatchNormState<S>& bn_state() { return bn_; }

  SampledVideo<S> sample(const FeatureSequence& seq, Rng& rng) const {
    const auto idx =
        sample_frame_indices(seq.frames, cfg_.visual_pool.sample_count, rng);
    return sample_with_indices(seq, idx);
  }

  SampledVideo<S> sample_with_indices(const FeatureSequence& seq,
                                      const std::vector<std::size_t>& idx) const {
    const std::size_t dv = cfg_.dim_visual, da = cfg_.dim_audio, n = idx.size();
    SampledVideo<S> out;
    if (cfg_.fusion == Fusion::kLateConcat) {
      out.visual = Tensor<S>({n, dv});
      out.audio = Tensor<S>({n, da});
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < dv; ++j)
          out.visual.at(i, j) = static_cast<S>(seq.visual[idx[i] * dv + j]);
        for (std::size_t j = 0; j < da; ++j)
          out.audio.at(i, j) = static_cast<S>(seq.audio[idx[i] * da + j]);
      }
    } else {
      out.visual = Tensor<S>({n, dv + da});
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < dv; ++j)
          out.visual.at(i, j) = static_cast<S>(seq.visual[idx[i] * dv + j]);
        for (std::size_t j = 0; j < da; ++j)
          out.visual.at(i, dv + j) = static_cast<S>(seq.audio[idx[i] * da + j]);
      }
    }
    return out;
  }

  // Batch forward: pooled streams -> concat -> FC -> BN -> gate -> MoE ->
  // output gate. Returns per-label probabilities [B x L].
  Value<S> forward(Tape<S>& t, const std::vector<SampledVideo<S>>& batch) {
    if (batch.empty()) throw UsageError("model forward: empty batch");
    std::vector<Value<S>> pooled;
    pooled.reserve(batch.size());
    for (const auto& v : batch) {
      if (cfg_.fusion == Fusion::kLateConcat) {
        auto hv = vis_pool_.forward(t, t.input(v.visual, "visual"));
        auto ha = aud_pool_.forward(t, t.input(v.audio, "audio"));
        pooled.push_back(concat_vec(hv, ha));
      } else {
        pooled.push_back(vis_pool_.forward(t, t.input(v.visual, "combined")));
      }
    }
    auto h = linear_rows(stack_rows(pooled), t.param(*fc_w_), t.param(*fc_b_));
    if (cfg_.batch_norm) h = batch_norm(h, t.param(*bn_scale_), t.param(*bn_shift_), &bn_);
    switch (cfg_.after_pooling) {
      case GateKind::kNone:
        break;
      case GateKind::kContextGate:
        h = context_gate_rows(h, t.param(*gp_w_), t.param(*gp_b_));
        break;
      case GateKind::kGlu:
        h = glu_rows(h, t.param(*gp_w_), t.param(*gp_b_), t.param(*gp_w2_), t.param(*gp_b2_));
        break;
    }
    auto probs = moe_.forward(t, h);
    if (cfg_.cg_after_classifier)
      probs = context_gate_rows(probs, t.param(*go_w_), t.param(*go_b_));
    return probs;
  }

  // Averages one sampled-frame evaluation per pass seed. Eval mode only.
  Tensor<S> predict(const FeatureSequence& seq,
                    const std::vector<std::uint64_t>& pass_seeds) {
    if (bn_.mode != BnMode::kEval) throw UsageError("predict: model must be in eval mode");
    if (pass_seeds.empty()) throw UsageError("predict: needs at least one pass");
    Tensor<S> avg({cfg_.labels});
    for (const auto seed : pass_seeds) {
      Rng rng(seed);
      Tape<S> t(false);
      auto probs = forward(t, {sample(seq, rng)});
      for (std::size_t l = 0; l < cfg_.labels; ++l) avg.at(l) += probs.tensor().at(0, l);
    }
    for (auto& v : avg.data) v /= static_cast<S>(pass_seeds.size());
    return avg;
  }

  Tensor<S> predict(const FeatureSequence& seq, const Rng& rng, std::size_t passes) {
    std::vector<std::uint64_t> seeds;
    Rng r = rng;
    for (std::size_t p = 0; p < passes; ++p) seeds.push_back(r.next_u64());
    return predict(seq, seeds);
  }

  void save(const std::string& path) const {
    std::vector<NamedTensorF32> tensors;
    for (const Param<S>* p : store_.all()) {
      auto f32 = p->value.template cast<float>();
      tensors.push_back({p->name, p->value.shape, std::move(f32.data)});
    }
    if (cfg_.batch_norm) {
      auto rm = bn_.running_mean.template cast<float>();
      auto rv = bn_.running_var.template cast<float>();
      tensors.push_back({"bn.running_mean", bn_.running_mean.shape, std::move(rm.data)});
      tensors.push_back({"bn.running_var", bn_.running_var.shape, std::move(rv.data)});
    }
    write_checkpoint(path, cfg_.canonical(), tensors);
  }

  void load(const std::string& path) {
    const auto ck = read_checkpoint(path);
    if (ck.config_text != cfg_.canonical())
      throw ConfigError("checkpoint '" + path + "': config mismatch (file hash " +
                        std::to_string(fnv1a(ck.config_text)) + ", model hash " +
                        std::to_string(fnv1a(cfg_.canonical())) + ")");
    std::map<std::string, const NamedTensorF32*> by_name;
    for (const auto& t : ck.tensors) by_name[t.name] = &t;

    const auto take = [&](const std::string& name, Tensor<S>& dst) {
      auto it = by_name.find(name);
      if (it == by_name.end())
        throw IoError("checkpoint '" + path + "': missing tensor '" + name + "'");
      const auto& src = *it->second;
      if (src.shape != dst.shape)
        throw ShapeError("checkpoint tensor '" + name + "': shape " +
                         Tensor<S>::shape_str_of(src.shape) + " does not match model " +
                         dst.shape_str());
      for (std::size_t i = 0; i < dst.numel(); ++i) dst.data[i] = static_cast<S>(src.data[i]);
      by_name.erase(it);
    };

    for (Param<S>* p : store_.all()) take(p->name, p->value);
    if (cfg_.batch_norm) {
      take("bn.running_mean", bn_.running_mean);
      take("bn.running_var", bn_.running_var);
    }
    if (!by_name.empty())
      throw IoError("checkpoint '" + path + "': unknown tensor '" +
                    by_name.begin()->first + "'");
  }

  static Model load_from_checkpoint(const std::string& path) {
    const auto ck = read_checkpoint(path);
    Model m(ModelConfig::from_canonical(ck.config_text));
    m.load(path);
    return m;
  }

 private:
  ModelConfig cfg_;
  ParamStore<S> store_;
  PoolingLayer<S> vis_pool_, aud_pool_;
  std::size_t pooled_dim_ = 0;
  Param<S>* fc_w_ = nullptr;
  Param<S>* fc_b_ = nullptr;
  Param<S>* bn_scale_ = nullptr;
  Param<S>* bn_shift_ = nullptr;
  BatchNormState<S> bn_{0};
  Param<S>* gp_w_ = nullptr;
  Param<S>* gp_b_ = nullptr;
  Param<S>* gp_w2_ = nullptr;
  Param<S>* gp_b2_ = nullptr;
  Param<S>* go_w_ = nullptr;
  Param<S>* go_b_ = nullptr;
  MoeLayer<S> moe_;
};

}  // namespace loupe
