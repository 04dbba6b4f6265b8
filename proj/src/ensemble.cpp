#include "loupe/ensemble.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace loupe {

std::vector<std::vector<double>> average_predictions(
    const std::vector<const std::vector<std::vector<double>>*>& member_preds,
    const std::vector<double>& weights) {
  if (member_preds.empty()) throw UsageError("ensemble: no members to average");
  const auto& first = *member_preds[0];
  std::vector<std::vector<double>> out(first.size());
  for (std::size_t v = 0; v < first.size(); ++v) out[v].assign(first[v].size(), 0.0);
  for (std::size_t m = 0; m < member_preds.size(); ++m) {
    const auto& p = *member_preds[m];
    if (p.size() != first.size()) throw UsageError("ensemble: member video counts differ");
    for (std::size_t v = 0; v < p.size(); ++v) {
      if (p[v].size() != out[v].size())
        throw ConfigError("ensemble: members disagree on the label vocabulary");
      for (std::size_t l = 0; l < p[v].size(); ++l) out[v][l] += weights[m] * p[v][l];
    }
  }
  return out;
}

GreedyResult greedy_select(const std::vector<std::string>& candidate_names,
                           const std::vector<std::vector<std::vector<double>>>& candidate_preds,
                           const std::vector<std::vector<std::uint32_t>>& truths,
                           std::size_t budget) {
  if (candidate_names.size() != candidate_preds.size())
    throw UsageError("greedy_select: name/prediction count mismatch");
  if (candidate_names.empty()) throw UsageError("greedy_select: no candidates");
  if (budget < 1) throw UsageError("greedy_select: budget must be >= 1");
  if (truths.empty()) throw Error("greedy_select: empty validation set");

  const std::size_t n = candidate_names.size();
  const auto gap_of = [&](const std::vector<std::size_t>& chosen) {
    std::vector<const std::vector<std::vector<double>>*> members;
    members.reserve(chosen.size());
    for (auto c : chosen) members.push_back(&candidate_preds[c]);
    const std::vector<double> weights(chosen.size(), 1.0 / static_cast<double>(chosen.size()));
    return gap_at_20(average_predictions(members, weights), truths);
  };

  std::vector<std::size_t> chosen;
  std::vector<char> used(n, 0);
  GreedyResult res;

  // seed with the best single model (ties: lower index)
  std::size_t best0 = 0;
  double best0_gap = -1.0;
  for (std::size_t c = 0; c < n; ++c) {
    const double g = gap_of({c});
    if (g > best0_gap) {
      best0_gap = g;
      best0 = c;
    }
  }
  chosen.push_back(best0);
  used[best0] = 1;
  double current = best0_gap;
  res.log.push_back({candidate_names[best0], current});

  while (chosen.size() < budget) {
    std::size_t pick = n;
    double pick_gap = current;
    for (std::size_t c = 0; c < n; ++c) {
      if (used[c]) continue;
      auto trial = chosen;
      trial.push_back(c);
      const double g = gap_of(trial);
      if (g > pick_gap) {
        pick_gap = g;
        pick = c;
      }
    }
    if (pick == n) break;  // no candidate strictly improves
    chosen.push_back(pick);
    used[pick] = 1;
    current = pick_gap;
    res.log.push_back({candidate_names[pick], current});
  }

  const double w = 1.0 / static_cast<double>(chosen.size());
  for (auto c : chosen) res.spec.members.push_back({candidate_names[c], w});
  return res;
}

void save_ensemble_spec(const std::string& path, const EnsembleSpec& spec) {
  if (spec.members.empty()) throw UsageError("ensemble spec: no members");
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  char buf[64];
  for (const auto& m : spec.members) {
    std::snprintf(buf, sizeof(buf), "member %.17g ", m.weight);
    out << buf << m.checkpoint << "\n";
  }
  out.flush();
  if (!out) throw IoError("write failure on '" + path + "'");
}

EnsembleSpec load_ensemble_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open ensemble spec '" + path + "'");
  EnsembleSpec spec;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string tag;
    EnsembleMember m;
    ss >> tag >> m.weight;
    std::getline(ss, m.checkpoint);
    const auto b = m.checkpoint.find_first_not_of(' ');
    if (tag != "member" || b == std::string::npos || !std::isfinite(m.weight))
      throw IoError(path + ":" + std::to_string(lineno) + ": expected 'member <weight> <path>'");
    m.checkpoint = m.checkpoint.substr(b);
    spec.members.push_back(std::move(m));
  }
  if (spec.members.empty()) throw IoError("ensemble spec '" + path + "' has no members");
  double total = 0;
  for (const auto& m : spec.members) total += m.weight;
  if (std::abs(total - 1.0) > 1e-9)
    throw IoError("ensemble spec '" + path + "': weights sum to " + std::to_string(total));
  return spec;
}

void save_selection_log(const std::string& path, const std::vector<SelectionRow>& log) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "rank,checkpoint,val_gap\n";
  char buf[32];
  for (std::size_t i = 0; i < log.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.9g", log[i].gap);
    out << (i + 1) << "," << log[i].checkpoint << "," << buf << "\n";
  }
}

}  // namespace loupe
