#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "loupe/common.hpp"

namespace loupe {

// One video: per-second visual/audio descriptor rows plus its label set.
struct FeatureSequence {
  std::string id;
  std::size_t frames = 0;              // T, >= 1; shared by both streams
  std::vector<float> visual;           // T x dim_visual, row-major
  std::vector<float> audio;            // T x dim_audio, row-major
  std::vector<std::uint32_t> labels;   // sorted, each < label_count
};

struct DatasetMeta {
  std::uint32_t label_count = 0;
  std::uint32_t dim_visual = 0;
  std::uint32_t dim_audio = 0;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<FeatureSequence> videos;
};

void validate_sequence(const FeatureSequence& seq, const DatasetMeta& meta);

// VSEQ container, version 1. Little-endian throughout:
//   magic "VSEQ", version byte 1,
//   u32 label_count, u32 dim_visual, u32 dim_audio, u32 video_count,
//   then per record: u32 id_len, id bytes, u32 T, u32 n_labels,
//   u32 labels[n_labels], f32 visual[T*dim_visual], f32 audio[T*dim_audio].
class VseqWriter {
 public:
  VseqWriter(const std::string& path, const DatasetMeta& meta, std::uint32_t video_count);
  void write(const FeatureSequence& seq);
  void close();
  ~VseqWriter();

 private:
  std::ofstream out_;
  std::string path_;
  DatasetMeta meta_;
  std::uint32_t declared_ = 0;
  std::uint32_t written_ = 0;
  bool closed_ = false;
};

// Streaming reader; holds one record in memory at a time.
class VseqReader {
 public:
  explicit VseqReader(const std::string& path);
  const DatasetMeta& meta() const { return meta_; }
  std::uint32_t video_count() const { return declared_; }
  bool next(FeatureSequence& out);  // false once all records were read
  void finish();                    // verifies clean end of file

 private:
  std::ifstream in_;
  std::string path_;
  DatasetMeta meta_;
  std::uint32_t declared_ = 0;
  std::uint32_t read_ = 0;
};

void write_vseq(const std::string& path, const Dataset& ds);
Dataset read_vseq(const std::string& path);

// Synthetic dataset: per-label visual/audio concept centroids drawn once
// from a seeded unit Gaussian; each video mixes frames around its active
// labels' centroids with optional pure-noise distractor frames. Label
// frequencies follow a Zipf law.
struct SynthSpec {
  std::uint32_t videos = 20000;
  std::uint32_t labels = 200;
  double zipf_exponent = 1.0;
  std::uint32_t labels_per_video_min = 1;
  std::uint32_t labels_per_video_max = 4;
  std::uint32_t dim_visual = 64;
  std::uint32_t dim_audio = 16;
  std::uint32_t frames_min = 8;
  std::uint32_t frames_max = 40;
  double frame_noise = 0.6;
  double distractor_ratio = 0.25;
  std::uint64_t seed = 1;
};

Dataset generate_synthetic(const SynthSpec& spec);

// Checkpoint container, version 1. Little-endian:
//   magic "VCKP", version byte 1,
//   u32 config_len, config bytes, u64 fnv1a(config bytes),
//   u32 tensor_count, then per tensor: u32 name_len, name bytes,
//   u32 rank, u32 dims[rank], f32 data.
struct NamedTensorF32 {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> data;
};

struct CheckpointData {
  std::string config_text;
  std::vector<NamedTensorF32> tensors;
};

void write_checkpoint(const std::string& path, const std::string& config_text,
                      const std::vector<NamedTensorF32>& tensors);
CheckpointData read_checkpoint(const std::string& path);

std::uint64_t fnv1a(const std::string& bytes);

}  // namespace loupe
