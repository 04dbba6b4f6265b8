#include "loupe/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace loupe {

std::vector<ScoredLabel> topk(const std::vector<double>& scores, std::size_t k) {
  if (k < 1) throw UsageError("topk: k must be >= 1");
  std::vector<ScoredLabel> all(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw NumericError("topk: non-finite score");
    all[i] = {i, scores[i]};
  }
  const std::size_t take = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + take, all.end(),
                    [](const ScoredLabel& a, const ScoredLabel& b) {
                      if (a.score != b.score) return a.score > b.score;
                      return a.label < b.label;
                    });
  all.resize(take);
  return all;
}

void GapAccumulator::add_video(const std::vector<double>& confidences,
                               const std::vector<std::uint32_t>& truth_labels) {
  const auto top = topk(confidences, kGapTopK);
  const std::size_t video = next_video_++;
  for (const auto& sl : top) {
    const bool rel = std::binary_search(truth_labels.begin(), truth_labels.end(),
                                        static_cast<std::uint32_t>(sl.label));
    pooled_.push_back({sl.score, rel, video, sl.label});
  }
  positives_ += std::min<std::size_t>(truth_labels.size(), kGapTopK);
}

void GapAccumulator::merge(const GapAccumulator& other) {
  pooled_.reserve(pooled_.size() + other.pooled_.size());
  for (Entry e : other.pooled_) {
    e.video += next_video_;
    pooled_.push_back(e);
  }
  positives_ += other.positives_;
  next_video_ += other.next_video_;
}

double GapAccumulator::value() const {
  if (next_video_ == 0) throw Error("gap: empty dataset");
  if (positives_ == 0) throw Error("gap: no positive labels in the pool");
  std::vector<Entry> ranked = pooled_;
  std::sort(ranked.begin(), ranked.end(), [](const Entry& a, const Entry& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.video != b.video) return a.video < b.video;
    return a.label < b.label;
  });
  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (ranked[i].relevant) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return ap / static_cast<double>(positives_);
}

double gap_at_20(const std::vector<std::vector<double>>& predictions,
                 const std::vector<std::vector<std::uint32_t>>& truths) {
  if (predictions.size() != truths.size())
    throw UsageError("gap_at_20: predictions and truths differ in length");
  GapAccumulator acc;
  for (std::size_t v = 0; v < predictions.size(); ++v) acc.add_video(predictions[v], truths[v]);
  return acc.value();
}

double per_label_ap(const std::vector<std::vector<double>>& predictions,
                    const std::vector<std::vector<std::uint32_t>>& truths,
                    std::uint32_t label) {
  std::vector<std::pair<double, bool>> ranked;
  std::size_t positives = 0;
  for (std::size_t v = 0; v < predictions.size(); ++v) {
    const bool rel = std::binary_search(truths[v].begin(), truths[v].end(), label);
    positives += rel;
    ranked.emplace_back(predictions[v][label], rel);
  }
  if (positives == 0) return 0.0;
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (ranked[i].second) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return ap / static_cast<double>(positives);
}

}  // namespace loupe
