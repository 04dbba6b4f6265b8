#include "loupe/model.hpp"

#include <sstream>

namespace loupe {

PoolKind parse_pool_kind(const std::string& s) {
  if (s == "average") return PoolKind::kAverage;
  if (s == "max") return PoolKind::kMax;
  if (s == "bow") return PoolKind::kBow;
  if (s == "netvlad") return PoolKind::kNetVlad;
  if (s == "netrvlad") return PoolKind::kNetRVlad;
  if (s == "netfv") return PoolKind::kNetFv;
  throw ConfigError("unknown pooling kind '" + s + "'");
}

NormScheme parse_norm_scheme(const std::string& s) {
  if (s == "none") return NormScheme::kNone;
  if (s == "intra+global-l2") return NormScheme::kIntraGlobalL2;
  throw ConfigError("unknown normalization '" + s + "'");
}

const char* norm_scheme_name(NormScheme s) {
  return s == NormScheme::kNone ? "none" : "intra+global-l2";
}

GateKind parse_gate_kind(const std::string& s) {
  if (s == "none") return GateKind::kNone;
  if (s == "cg") return GateKind::kContextGate;
  if (s == "glu") return GateKind::kGlu;
  throw ConfigError("unknown gating kind '" + s + "'");
}

const char* gate_kind_name(GateKind k) {
  switch (k) {
    case GateKind::kNone: return "none";
    case GateKind::kContextGate: return "cg";
    case GateKind::kGlu: return "glu";
  }
  return "?";
}

Fusion parse_fusion(const std::string& s) {
  if (s == "late_concat") return Fusion::kLateConcat;
  if (s == "early_concat") return Fusion::kEarlyConcat;
  throw ConfigError("unknown fusion '" + s + "'");
}

ModelConfig ModelConfig::from(const Config& cfg, const DatasetMeta& meta) {
  ModelConfig m;
  m.dim_visual = meta.dim_visual;
  m.dim_audio = meta.dim_audio;
  m.labels = meta.label_count;
  m.fusion = parse_fusion(cfg.get_string("model.fusion"));
  m.hidden = static_cast<std::size_t>(cfg.get_int("model.hidden"));
  m.batch_norm = cfg.get_bool("model.batch_norm");
  m.precision = cfg.get_string("model.precision");
  m.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));

  PoolingConfig pool;
  pool.kind = parse_pool_kind(cfg.get_string("pooling.kind"));
  pool.clusters = static_cast<std::size_t>(cfg.get_int("pooling.clusters"));
  pool.normalization = parse_norm_scheme(cfg.get_string("pooling.normalization"));
  pool.sample_count = static_cast<std::size_t>(cfg.get_int("pooling.sample_count"));

  m.visual_pool = pool;
  m.visual_pool.dim =
      m.fusion == Fusion::kLateConcat ? m.dim_visual : m.dim_visual + m.dim_audio;
  m.audio_pool = pool;
  m.audio_pool.dim = m.dim_audio;
  const auto audio_clusters = cfg.get_int("pooling.audio_clusters");
  if (audio_clusters > 0) m.audio_pool.clusters = static_cast<std::size_t>(audio_clusters);

  m.after_pooling = parse_gate_kind(cfg.get_string("gating.after_pooling"));
  const auto out_gate = parse_gate_kind(cfg.get_string("gating.after_classifier"));
  // config schema already restricts this slot to {none, cg}
  m.cg_after_classifier = out_gate == GateKind::kContextGate;

  m.classifier.labels = m.labels;
  m.classifier.experts = static_cast<std::size_t>(cfg.get_int("classifier.experts"));
  m.classifier.null_expert = cfg.get_bool("classifier.null_expert");
  m.validate();
  return m;
}

void ModelConfig::validate() const {
  if (dim_visual < 1 || labels < 1) throw ConfigError("model: dims and labels must be positive");
  if (fusion == Fusion::kLateConcat && dim_audio < 1)
    throw ConfigError("model: late fusion needs an audio stream");
  if (hidden < 1) throw ConfigError("model: hidden width must be positive");
  if (precision != "f32" && precision != "f64")
    throw ConfigError("model: precision must be f32 or f64");
  const std::size_t expect_vis =
      fusion == Fusion::kLateConcat ? dim_visual : dim_visual + dim_audio;
  if (visual_pool.dim != expect_vis)
    throw ConfigError("model: visual pooling dim inconsistent with fusion");
  if (fusion == Fusion::kLateConcat && audio_pool.dim != dim_audio)
    throw ConfigError("model: audio pooling dim inconsistent");
  if (classifier.labels != labels) throw ConfigError("model: classifier label count mismatch");
}

std::string ModelConfig::canonical() const {
  std::map<std::string, std::string> kv;
  kv["data.dim_visual"] = std::to_string(dim_visual);
  kv["data.dim_audio"] = std::to_string(dim_audio);
  kv["data.labels"] = std::to_string(labels);
  kv["model.fusion"] = fusion_name(fusion);
  kv["model.hidden"] = std::to_string(hidden);
  kv["model.batch_norm"] = batch_norm ? "true" : "false";
  kv["model.precision"] = precision;
  kv["pooling.kind"] = pool_kind_name(visual_pool.kind);
  kv["pooling.clusters"] = std::to_string(visual_pool.clusters);
  kv["pooling.audio_clusters"] = std::to_string(audio_pool.clusters);
  kv["pooling.normalization"] = norm_scheme_name(visual_pool.normalization);
  kv["pooling.sample_count"] = std::to_string(visual_pool.sample_count);
  kv["gating.after_pooling"] = gate_kind_name(after_pooling);
  kv["gating.after_classifier"] = cg_after_classifier ? "cg" : "none";
  kv["classifier.experts"] = std::to_string(classifier.experts);
  kv["classifier.null_expert"] = classifier.null_expert ? "true" : "false";
  kv["seed"] = std::to_string(seed);
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

ModelConfig ModelConfig::from_canonical(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  const auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("checkpoint config: missing key '" + key + "'");
    return it->second;
  };

  ModelConfig m;
  m.dim_visual = std::stoul(need("data.dim_visual"));
  m.dim_audio = std::stoul(need("data.dim_audio"));
  m.labels = std::stoul(need("data.labels"));
  m.fusion = parse_fusion(need("model.fusion"));
  m.hidden = std::stoul(need("model.hidden"));
  m.batch_norm = need("model.batch_norm") == "true";
  m.precision = need("model.precision");
  m.seed = std::stoull(need("seed"));

  PoolingConfig pool;
  pool.kind = parse_pool_kind(need("pooling.kind"));
  pool.clusters = std::stoul(need("pooling.clusters"));
  pool.normalization = parse_norm_scheme(need("pooling.normalization"));
  pool.sample_count = std::stoul(need("pooling.sample_count"));
  m.visual_pool = pool;
  m.visual_pool.dim =
      m.fusion == Fusion::kLateConcat ? m.dim_visual : m.dim_visual + m.dim_audio;
  m.audio_pool = pool;
  m.audio_pool.dim = m.dim_audio;
  m.audio_pool.clusters = std::stoul(need("pooling.audio_clusters"));

  m.after_pooling = parse_gate_kind(need("gating.after_pooling"));
  m.cg_after_classifier = need("gating.after_classifier") == "cg";
  m.classifier.labels = m.labels;
  m.classifier.experts = std::stoul(need("classifier.experts"));
  m.classifier.null_expert = need("classifier.null_expert") == "true";
  m.validate();
  return m;
}

std::vector<std::size_t> sample_frame_indices(std::size_t frames, std::size_t count, Rng& rng) {
  if (frames < 1) throw Error("sample_frames: sequence has no frames");
  if (count < 1) throw UsageError("sample_frames: sample count must be >= 1");
  std::vector<std::size_t> idx(count);
  for (auto& i : idx) i = static_cast<std::size_t>(rng.below(frames));
  return idx;
}

}  // namespace loupe
