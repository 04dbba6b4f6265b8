#include "loupe/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace loupe {

namespace {

enum class Kind { kString, kInt, kFloat, kBool };

struct SchemaEntry {
  const char* key;
  Kind kind;
  const char* def;
  const char* choices;  // pipe-separated for enum-valued strings, else nullptr
};

// clang-format off
const SchemaEntry kSchema[] = {
    {"seed",                    Kind::kInt,    "1",            nullptr},
    {"gen.videos",              Kind::kInt,    "20000",        nullptr},
    {"gen.labels",              Kind::kInt,    "200",          nullptr},
    {"gen.dim_visual",          Kind::kInt,    "64",           nullptr},
    {"gen.dim_audio",           Kind::kInt,    "16",           nullptr},
    {"gen.zipf_exponent",       Kind::kFloat,  "1.0",          nullptr},
    {"gen.labels_min",          Kind::kInt,    "1",            nullptr},
    {"gen.labels_max",          Kind::kInt,    "4",            nullptr},
    {"gen.frames_min",          Kind::kInt,    "8",            nullptr},
    {"gen.frames_max",          Kind::kInt,    "40",           nullptr},
    {"gen.frame_noise",         Kind::kFloat,  "0.6",          nullptr},
    {"gen.distractor_ratio",    Kind::kFloat,  "0.25",         nullptr},
    {"model.fusion",            Kind::kString, "late_concat",  "late_concat|early_concat"},
    {"model.hidden",            Kind::kInt,    "64",           nullptr},
    {"model.precision",         Kind::kString, "f32",          "f32|f64"},
    {"model.batch_norm",        Kind::kBool,   "true",         nullptr},
    {"pooling.kind",            Kind::kString, "netvlad",
     "average|max|bow|netvlad|netrvlad|netfv"},
    {"pooling.clusters",        Kind::kInt,    "8",            nullptr},
    {"pooling.audio_clusters",  Kind::kInt,    "0",            nullptr},  // 0 = same as visual
    {"pooling.normalization",   Kind::kString, "intra+global-l2", "none|intra+global-l2"},
    {"pooling.sample_count",    Kind::kInt,    "16",           nullptr},
    {"gating.after_pooling",    Kind::kString, "none",         "none|cg|glu"},
    {"gating.after_classifier", Kind::kString, "none",         "none|cg"},
    {"classifier.experts",      Kind::kInt,    "2",            nullptr},
    {"classifier.null_expert",  Kind::kBool,   "true",         nullptr},
    {"train.lr",                Kind::kFloat,  "0.0002",       nullptr},
    {"train.decay",             Kind::kFloat,  "0.8",          nullptr},
    {"train.decay_samples",     Kind::kInt,    "50000",        nullptr},
    {"train.staircase",         Kind::kBool,   "false",        nullptr},
    {"train.batch",             Kind::kInt,    "100",          nullptr},
    {"train.epochs",            Kind::kInt,    "10",           nullptr},
    {"train.clip_norm",         Kind::kFloat,  "1.0",          nullptr},
    {"train.val_fraction",      Kind::kFloat,  "0.1",          nullptr},
    {"train.val_every",         Kind::kInt,    "200",          nullptr},
    {"eval.passes",             Kind::kInt,    "1",            nullptr},
    {"eval.per_label_ap",       Kind::kBool,   "false",        nullptr},
    {"ensemble.budget",         Kind::kInt,    "3",            nullptr},
};
// clang-format on

const SchemaEntry* find_entry(const std::string& key) {
  for (const auto& e : kSchema)
    if (key == e.key) return &e;
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, bool& out) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") {
    out = true;
    return true;
  }
  if (v == "false" || v == "0" || v == "off" || v == "no") {
    out = false;
    return true;
  }
  return false;
}

}  // namespace

Config Config::defaults() {
  Config c;
  for (const auto& e : kSchema) c.values_[e.key] = e.def;
  return c;
}

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  Config c = defaults();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    try {
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

void Config::set(const std::string& key, const std::string& value) {
  const SchemaEntry* e = find_entry(key);
  if (!e) throw ConfigError("unknown config key '" + key + "'");
  switch (e->kind) {
    case Kind::kInt: {
      char* end = nullptr;
      std::strtoll(value.c_str(), &end, 10);
      if (value.empty() || *end != '\0')
        throw ConfigError("key '" + key + "': '" + value + "' is not an integer");
      break;
    }
    case Kind::kFloat: {
      char* end = nullptr;
      std::strtod(value.c_str(), &end);
      if (value.empty() || *end != '\0')
        throw ConfigError("key '" + key + "': '" + value + "' is not a number");
      break;
    }
    case Kind::kBool: {
      bool b;
      if (!parse_bool(value, b))
        throw ConfigError("key '" + key + "': '" + value + "' is not a boolean");
      break;
    }
    case Kind::kString: {
      if (e->choices) {
        std::stringstream ss(e->choices);
        std::string choice;
        bool ok = false;
        while (std::getline(ss, choice, '|'))
          if (choice == value) ok = true;
        if (!ok)
          throw ConfigError("key '" + key + "': '" + value + "' not in {" + e->choices + "}");
      }
      break;
    }
  }
  values_[key] = value;
}

void Config::apply_override(const std::string& key_eq_value) {
  const auto eq = key_eq_value.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override '" + key_eq_value + "': expected key=value");
  set(trim(key_eq_value.substr(0, eq)), trim(key_eq_value.substr(eq + 1)));
}

const std::string& Config::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

std::int64_t Config::get_int(const std::string& key) const {
  return std::strtoll(get_string(key).c_str(), nullptr, 10);
}

double Config::get_double(const std::string& key) const {
  return std::strtod(get_string(key).c_str(), nullptr);
}

bool Config::get_bool(const std::string& key) const {
  bool b = false;
  parse_bool(get_string(key), b);
  return b;
}

std::string Config::resolved_text() const {
  std::string out;
  for (const auto& [k, v] : values_) {
    out += k;
    out += " = ";
    out += v;
    out += "\n";
  }
  return out;
}

const std::vector<std::string>& Config::known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& e : kSchema) k.push_back(e.key);
    std::sort(k.begin(), k.end());
    return k;
  }();
  return keys;
}

}  // namespace loupe
