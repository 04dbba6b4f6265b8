#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "loupe/common.hpp"

namespace loupe {

inline constexpr std::size_t kGapTopK = 20;

struct ScoredLabel {
  std::size_t label = 0;
  double score = 0.0;
};

// k highest scores, ties broken toward the lower label index. k > L returns
// all L entries.
std::vector<ScoredLabel> topk(const std::vector<double>& scores, std::size_t k);

// Global average precision at top 20. Each video contributes its top-20
// scored labels and min(|labels|, 20) positives to one global pool; the pool
// is ranked by confidence (ties: lower video index, then lower label index)
// and AP is computed over that ranking.
class GapAccumulator {
 public:
  void add_video(const std::vector<double>& confidences,
                 const std::vector<std::uint32_t>& truth_labels);

  // Appends another accumulator's pool; its video indices are offset so that
  // chunked evaluation merged in chunk order reproduces the sequential pool.
  void merge(const GapAccumulator& other);

  double value() const;
  std::size_t videos() const { return next_video_; }
  std::size_t pooled_pairs() const { return pooled_.size(); }

 private:
  struct Entry {
    double confidence;
    bool relevant;
    std::size_t video;
    std::size_t label;
  };
  std::vector<Entry> pooled_;
  std::size_t positives_ = 0;
  std::size_t next_video_ = 0;
};

double gap_at_20(const std::vector<std::vector<double>>& predictions,
                 const std::vector<std::vector<std::uint32_t>>& truths);

// Average precision for one label across videos (ranking videos by that
// label's confidence).
double per_label_ap(const std::vector<std::vector<double>>& predictions,
                    const std::vector<std::vector<std::uint32_t>>& truths, std::uint32_t label);

}  // namespace loupe
