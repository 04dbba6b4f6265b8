#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "loupe/config.hpp"
#include "loupe/metrics.hpp"
#include "loupe/model.hpp"
#include "loupe/threadpool.hpp"

namespace loupe {

struct TrainConfig {
  double lr = 0.0002;
  double decay = 0.8;
  std::size_t decay_samples = 50000;
  bool staircase = false;
  std::size_t batch = 100;
  std::size_t epochs = 10;
  std::size_t max_steps = 0;  // 0 = epochs decide
  double clip_norm = 1.0;
  double val_fraction = 0.1;
  std::size_t val_every = 200;
  std::size_t eval_passes = 1;
  std::uint64_t seed = 1;

  static TrainConfig from(const Config& cfg) {
    TrainConfig t;
    t.lr = cfg.get_double("train.lr");
    t.decay = cfg.get_double("train.decay");
    t.decay_samples = static_cast<std::size_t>(cfg.get_int("train.decay_samples"));
    t.staircase = cfg.get_bool("train.staircase");
    t.batch = static_cast<std::size_t>(cfg.get_int("train.batch"));
    t.epochs = static_cast<std::size_t>(cfg.get_int("train.epochs"));
    t.clip_norm = cfg.get_double("train.clip_norm");
    t.val_fraction = cfg.get_double("train.val_fraction");
    t.val_every = static_cast<std::size_t>(cfg.get_int("train.val_every"));
    t.eval_passes = static_cast<std::size_t>(cfg.get_int("eval.passes"));
    t.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
    if (t.lr <= 0.0) throw ConfigError("train.lr must be positive");
    if (t.decay <= 0.0 || t.decay > 1.0) throw ConfigError("train.decay must be in (0, 1]");
    if (t.batch < 2) throw ConfigError("train.batch must be >= 2 (batch norm)");
    if (t.clip_norm <= 0.0) throw ConfigError("train.clip_norm must be positive");
    return t;
  }
};

// base * decay^(samples/interval); staircase floors the exponent.
inline double lr_at(std::size_t samples_seen, const TrainConfig& cfg) {
  double x = static_cast<double>(samples_seen) / static_cast<double>(cfg.decay_samples);
  if (cfg.staircase) x = std::floor(x);
  return cfg.lr * std::pow(cfg.decay, x);
}

inline constexpr double kPredictionClamp = 1e-6;

// Mean binary cross-entropy over the label vocabulary; predictions clamped
// to [eps, 1 - eps].
inline double bce_loss(const Tensor<double>& pred, const std::vector<std::uint32_t>& labels) {
  double sum = 0.0;
  for (std::size_t l = 0; l < pred.numel(); ++l) {
    const double raw = pred.at(l);
    if (!std::isfinite(raw)) throw NumericError("bce_loss: non-finite prediction");
    const double p = std::min(1.0 - kPredictionClamp, std::max(kPredictionClamp, raw));
    const bool y =
        std::binary_search(labels.begin(), labels.end(), static_cast<std::uint32_t>(l));
    sum += y ? -std::log(p) : -std::log(1.0 - p);
  }
  return sum / static_cast<double>(pred.numel());
}

// Graph version: mean over batch and labels.
template <typename S>
Value<S> bce_loss_node(Tape<S>& t, Value<S> probs, const Tensor<S>& targets) {
  check_same_shape("bce_loss", probs.tensor(), targets);
  if (!probs.tensor().all_finite())
    throw NumericError("bce_loss: non-finite prediction");
  const S eps = S(kPredictionClamp);
  auto p = clamp(probs, eps, S(1) - eps);
  auto y = t.constant(targets);
  Tensor<S> ones_minus = targets;
  for (auto& v : ones_minus.data) v = S(1) - v;
  auto yneg = t.constant(ones_minus);
  auto ll = add(mul(y, log_op(p)), mul(yneg, log_op(add_scalar(neg(p), S(1)))));
  return neg(mean_all(ll));
}

// Adam with bias correction; state buffers follow the store's param order.
template <typename S>
class Adam {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  explicit Adam(ParamStore<S>& store) : store_(&store) {
    for (Param<S>* p : store.all()) {
      m_.push_back(Tensor<S>::zeros(p->value.shape));
      v_.push_back(Tensor<S>::zeros(p->value.shape));
    }
  }

  std::size_t steps() const { return t_; }

  void step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    const auto params = store_->all();
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i]->trainable) continue;
      auto& pv = params[i]->value;
      const auto& g = params[i]->grad;
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t k = 0; k < pv.numel(); ++k) {
        const double gk = static_cast<double>(g.data[k]);
        const double mk = kBeta1 * static_cast<double>(m.data[k]) + (1.0 - kBeta1) * gk;
        const double vk = kBeta2 * static_cast<double>(v.data[k]) + (1.0 - kBeta2) * gk * gk;
        m.data[k] = static_cast<S>(mk);
        v.data[k] = static_cast<S>(vk);
        pv.data[k] -= static_cast<S>(lr * (mk / c1) / (std::sqrt(vk / c2) + kEps));
      }
    }
  }

 private:
  ParamStore<S>* store_;
  std::vector<Tensor<S>> m_, v_;
  std::size_t t_ = 0;
};

// Global-norm clipping across all trainable gradients; returns the pre-clip
// norm. Direction is preserved exactly.
template <typename S>
double clip_gradients(ParamStore<S>& store, double max_norm) {
  if (max_norm <= 0.0) throw UsageError("clip_gradients: max_norm must be positive");
  double ss = 0.0;
  for (Param<S>* p : store.all()) {
    if (!p->trainable) continue;
    for (S g : p->grad.data) ss += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(ss);
  if (norm > max_norm) {
    const S scale = static_cast<S>(max_norm / norm);
    for (Param<S>* p : store.all()) {
      if (!p->trainable) continue;
      for (auto& g : p->grad.data) g *= scale;
    }
  }
  return norm;
}

// Deterministic per-video prediction over a list of sequences; work is
// chunked across threads with results written into per-index slots.
template <typename S>
std::vector<std::vector<double>> predict_all(Model<S>& model,
                                             const std::vector<const FeatureSequence*>& videos,
                                             std::uint64_t seed, std::size_t passes) {
  std::vector<std::vector<double>> out(videos.size());
  Rng base(seed);
  parallel_for(videos.size(), 8, [&](std::size_t b, std::size_t e) {
    for (std::size_t v = b; v < e; ++v) {
      const auto probs = model.predict(*videos[v], base.fork(v), passes);
      out[v].resize(probs.numel());
      for (std::size_t l = 0; l < probs.numel(); ++l)
        out[v][l] = static_cast<double>(probs.at(l));
    }
  });
  return out;
}

template <typename S>
double evaluate_gap(Model<S>& model, const std::vector<const FeatureSequence*>& videos,
                    std::uint64_t seed, std::size_t passes) {
  const auto preds = predict_all(model, videos, seed, passes);
  GapAccumulator acc;
  for (std::size_t v = 0; v < videos.size(); ++v) acc.add_video(preds[v], videos[v]->labels);
  return acc.value();
}

struct TrainResult {
  double best_gap = 0.0;
  std::size_t steps = 0;
  std::size_t samples = 0;
  double final_train_loss = 0.0;
  std::string checkpoint_path;
  std::string metrics_path;
};

// Cross-entropy training with Adam, exponential lr decay and global-norm
// gradient clipping. Validation GAP is logged periodically and the best
// checkpoint is retained. Fully deterministic given the seed.
template <typename S>
TrainResult train_model(Model<S>& model, const Dataset& data, const TrainConfig& cfg,
                        const std::string& out_dir) {
  if (data.videos.empty()) throw Error("train: dataset is empty");
  const std::size_t total = data.videos.size();
  const std::size_t val_count = static_cast<std::size_t>(
      std::llround(static_cast<double>(total) * cfg.val_fraction));
  if (val_count < 1 || total - val_count < 2)
    throw ConfigError("train: split leaves too few train or validation videos");

  std::vector<const FeatureSequence*> val;
  for (std::size_t v = total - val_count; v < total; ++v) val.push_back(&data.videos[v]);
  std::vector<std::size_t> train_idx(total - val_count);
  for (std::size_t i = 0; i < train_idx.size(); ++i) train_idx[i] = i;

  TrainResult res;
  res.checkpoint_path = out_dir + "/checkpoint.bin";
  res.metrics_path = out_dir + "/metrics.csv";

  std::ofstream log(res.metrics_path);
  if (!log) throw IoError("cannot open '" + res.metrics_path + "' for writing");
  {
    const auto now = std::chrono::system_clock::now();
    log << "# train started "
        << std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count()
        << "\n";
    log << "step,samples,lr,train_loss,val_gap\n";
  }

  Rng shuffle_rng = Rng(cfg.seed).fork(0xA);
  Rng sample_rng = Rng(cfg.seed).fork(0xB);
  const std::uint64_t val_seed = Rng(cfg.seed).fork(0xC).next_u64();

  Adam<S> adam(model.params());
  double best = -1.0;
  double last_loss = 0.0;
  std::size_t step = 0, samples = 0;
  bool stop = false;

  char row[160];
  const auto validate_and_log = [&]() {
    model.set_mode(BnMode::kEval);
    const double gap = evaluate_gap(model, val, val_seed, cfg.eval_passes);
    model.set_mode(BnMode::kTrain);
    if (gap > best) {
      best = gap;
      model.save(res.checkpoint_path);
    }
    std::snprintf(row, sizeof(row), "%zu,%zu,%.9g,%.9g,%.9g\n", step, samples,
                  lr_at(samples, cfg), last_loss, gap);
    log << row;
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
    for (std::size_t i = train_idx.size(); i > 1; --i)
      std::swap(train_idx[i - 1], train_idx[shuffle_rng.below(i)]);

    for (std::size_t start = 0; start < train_idx.size() && !stop; start += cfg.batch) {
      const std::size_t bsz = std::min(cfg.batch, train_idx.size() - start);
      if (bsz < 2) break;  // batch norm needs >= 2

      std::vector<SampledVideo<S>> batch;
      batch.reserve(bsz);
      Tensor<S> targets({bsz, model.config().labels});
      for (std::size_t b = 0; b < bsz; ++b) {
        const auto& seq = data.videos[train_idx[start + b]];
        batch.push_back(model.sample(seq, sample_rng));
        for (auto l : seq.labels) targets.at(b, l) = S(1);
      }

      Tape<S> tape;
      auto probs = model.forward(tape, batch);
      if (!probs.tensor().all_finite()) {
        throw NumericError("train: non-finite activations at step " + std::to_string(step + 1) +
                           "; first non-finite tensor: " + tape.first_nonfinite());
      }
      auto loss = bce_loss_node(tape, probs, targets);
      last_loss = static_cast<double>(loss.tensor().at(0));
      if (!std::isfinite(last_loss)) {
        const auto bad = tape.first_nonfinite();
        throw NumericError("train: non-finite loss at step " + std::to_string(step + 1) +
                           "; first non-finite tensor: " + (bad.empty() ? "loss" : bad));
      }

      model.params().zero_grads();
      tape.backward(loss, Tensor<S>({1}, {S(1)}));
      clip_gradients(model.params(), cfg.clip_norm);
      adam.step(lr_at(samples, cfg));

      ++step;
      samples += bsz;
      if (cfg.val_every > 0 && step % cfg.val_every == 0) validate_and_log();
      if (cfg.max_steps > 0 && step >= cfg.max_steps) stop = true;
    }
  }

  if (cfg.val_every == 0 || step % cfg.val_every != 0 || step == 0) validate_and_log();
  log.flush();
  if (!log) throw IoError("write failure on '" + res.metrics_path + "'");

  res.best_gap = best;
  res.steps = step;
  res.samples = samples;
  res.final_train_loss = last_loss;
  return res;
}

}  // namespace loupe
