#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "loupe/metrics.hpp"
#include "loupe/model.hpp"
#include "loupe/train.hpp"

namespace loupe {

struct EnsembleMember {
  std::string checkpoint;
  double weight = 1.0;
};

struct EnsembleSpec {
  std::vector<EnsembleMember> members;  // weights sum to 1
};

struct SelectionRow {
  std::string checkpoint;
  double gap = 0.0;
};

struct GreedyResult {
  EnsembleSpec spec;
  std::vector<SelectionRow> log;  // gap after each addition, non-decreasing
};

// Weighted mean of per-video prediction matrices.
std::vector<std::vector<double>> average_predictions(
    const std::vector<const std::vector<std::vector<double>>*>& member_preds,
    const std::vector<double>& weights);

// Forward selection without replacement on precomputed candidate
// predictions: start from the best single model, then add whichever
// candidate most improves validation GAP; stop at the budget or when no
// candidate strictly improves. Uniform weights over the chosen members.
GreedyResult greedy_select(const std::vector<std::string>& candidate_names,
                           const std::vector<std::vector<std::vector<double>>>& candidate_preds,
                           const std::vector<std::vector<std::uint32_t>>& truths,
                           std::size_t budget);

void save_ensemble_spec(const std::string& path, const EnsembleSpec& spec);
EnsembleSpec load_ensemble_spec(const std::string& path);
void save_selection_log(const std::string& path, const std::vector<SelectionRow>& log);

// Weighted mean of member probability vectors for one video. Members must
// share the label vocabulary.
template <typename S>
std::vector<double> ensemble_predict(std::vector<Model<S>>& members,
                                     const std::vector<double>& weights,
                                     const FeatureSequence& seq, std::uint64_t seed,
                                     std::size_t passes = 1) {
  if (members.empty()) throw UsageError("ensemble: no members");
  if (members.size() != weights.size())
    throw UsageError("ensemble: member/weight count mismatch");
  const std::size_t labels = members[0].config().labels;
  std::vector<double> out(labels, 0.0);
  for (std::size_t m = 0; m < members.size(); ++m) {
    if (members[m].config().labels != labels)
      throw ConfigError("ensemble: member " + std::to_string(m) +
                        " has a different label vocabulary");
    const auto p = members[m].predict(seq, Rng(seed), passes);
    for (std::size_t l = 0; l < labels; ++l)
      out[l] += weights[m] * static_cast<double>(p.at(l));
  }
  return out;
}

// Loads candidates, scores them on the validation set and runs the greedy
// selection. Every member is evaluated with the same sampling seed.
template <typename S>
GreedyResult greedy_select_models(const std::vector<std::string>& checkpoint_paths,
                                  const std::vector<const FeatureSequence*>& validation,
                                  std::uint64_t seed, std::size_t passes, std::size_t budget) {
  if (checkpoint_paths.empty()) throw UsageError("ensemble: no candidates");
  if (validation.empty()) throw Error("ensemble: empty validation set");
  std::vector<std::vector<std::vector<double>>> preds;
  preds.reserve(checkpoint_paths.size());
  for (const auto& path : checkpoint_paths) {
    auto model = Model<S>::load_from_checkpoint(path);
    model.set_mode(BnMode::kEval);
    preds.push_back(predict_all(model, validation, seed, passes));
  }
  std::vector<std::vector<std::uint32_t>> truths;
  truths.reserve(validation.size());
  for (const auto* v : validation) truths.push_back(v->labels);
  return greedy_select(checkpoint_paths, preds, truths, budget);
}

}  // namespace loupe
