#include "loupe/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "loupe/rng.hpp"

namespace loupe {

namespace {

constexpr char kVseqMagic[4] = {'V', 'S', 'E', 'Q'};
constexpr char kCkptMagic[4] = {'V', 'C', 'K', 'P'};
constexpr std::uint8_t kFormatVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  put_u32(os, static_cast<std::uint32_t>(v));
  put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t get_u32(std::istream& is, const std::string& ctx) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw IoError("truncated file while reading " + ctx);
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

std::uint64_t get_u64(std::istream& is, const std::string& ctx) {
  const std::uint64_t lo = get_u32(is, ctx);
  const std::uint64_t hi = get_u32(is, ctx);
  return lo | hi << 32;
}

float get_f32(std::istream& is, const std::string& ctx) {
  return std::bit_cast<float>(get_u32(is, ctx));
}

void put_f32_block(std::ostream& os, const std::vector<float>& v) {
  for (float x : v) put_f32(os, x);
}

void get_f32_block(std::istream& is, std::vector<float>& v, std::size_t n,
                   const std::string& ctx) {
  v.resize(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = get_f32(is, ctx);
}

void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is, const std::string& ctx) {
  const std::uint32_t len = get_u32(is, ctx);
  std::string s(len, '\0');
  if (len && !is.read(s.data(), len)) throw IoError("truncated file while reading " + ctx);
  return s;
}

void check_magic(std::istream& is, const char (&magic)[4], const std::string& path,
                 const char* kind) {
  char got[4];
  if (!is.read(got, 4)) throw IoError(std::string(kind) + " '" + path + "': truncated header");
  if (std::memcmp(got, magic, 4) != 0)
    throw IoError(std::string(kind) + " '" + path + "': bad magic");
  char ver;
  if (!is.read(&ver, 1)) throw IoError(std::string(kind) + " '" + path + "': truncated header");
  if (static_cast<std::uint8_t>(ver) != kFormatVersion)
    throw IoError(std::string(kind) + " '" + path + "': unsupported version " +
                  std::to_string(static_cast<int>(ver)));
}

}  // namespace

void validate_sequence(const FeatureSequence& seq, const DatasetMeta& meta) {
  if (seq.frames < 1) throw Error("sequence '" + seq.id + "': has no frames");
  if (seq.visual.size() != seq.frames * meta.dim_visual)
    throw ShapeError("sequence '" + seq.id + "': visual size " +
                     std::to_string(seq.visual.size()) + " != T*dv");
  if (seq.audio.size() != seq.frames * meta.dim_audio)
    throw ShapeError("sequence '" + seq.id + "': audio size " +
                     std::to_string(seq.audio.size()) + " != T*da");
  if (!std::is_sorted(seq.labels.begin(), seq.labels.end()))
    throw Error("sequence '" + seq.id + "': labels not sorted");
  for (auto l : seq.labels)
    if (l >= meta.label_count)
      throw Error("sequence '" + seq.id + "': label " + std::to_string(l) + " out of range");
}

VseqWriter::VseqWriter(const std::string& path, const DatasetMeta& meta,
                       std::uint32_t video_count)
    : out_(path, std::ios::binary), path_(path), meta_(meta), declared_(video_count) {
  if (!out_) throw IoError("cannot open '" + path + "' for writing");
  out_.write(kVseqMagic, 4);
  const char ver = static_cast<char>(kFormatVersion);
  out_.write(&ver, 1);
  put_u32(out_, meta.label_count);
  put_u32(out_, meta.dim_visual);
  put_u32(out_, meta.dim_audio);
  put_u32(out_, video_count);
}

void VseqWriter::write(const FeatureSequence& seq) {
  validate_sequence(seq, meta_);
  if (written_ == declared_)
    throw UsageError("vseq '" + path_ + "': more records than declared");
  put_string(out_, seq.id);
  put_u32(out_, static_cast<std::uint32_t>(seq.frames));
  put_u32(out_, static_cast<std::uint32_t>(seq.labels.size()));
  for (auto l : seq.labels) put_u32(out_, l);
  put_f32_block(out_, seq.visual);
  put_f32_block(out_, seq.audio);
  ++written_;
}

void VseqWriter::close() {
  if (closed_) return;
  if (written_ != declared_)
    throw UsageError("vseq '" + path_ + "': wrote " + std::to_string(written_) + " of " +
                     std::to_string(declared_) + " records");
  out_.flush();
  if (!out_) throw IoError("write failure on '" + path_ + "'");
  out_.close();
  closed_ = true;
}

VseqWriter::~VseqWriter() {
  if (!closed_ && written_ == declared_) out_.close();
}

VseqReader::VseqReader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
  if (!in_) throw IoError("cannot open '" + path + "' for reading");
  check_magic(in_, kVseqMagic, path, "vseq");
  meta_.label_count = get_u32(in_, "header");
  meta_.dim_visual = get_u32(in_, "header");
  meta_.dim_audio = get_u32(in_, "header");
  declared_ = get_u32(in_, "header");
}

bool VseqReader::next(FeatureSequence& out) {
  if (read_ == declared_) return false;
  const std::string ctx = "record " + std::to_string(read_);
  out.id = get_string(in_, ctx + " id");
  out.frames = get_u32(in_, ctx + " frame count");
  const std::uint32_t nl = get_u32(in_, ctx + " label count");
  out.labels.resize(nl);
  for (auto& l : out.labels) l = get_u32(in_, ctx + " labels");
  get_f32_block(in_, out.visual, out.frames * meta_.dim_visual, ctx + " visual");
  get_f32_block(in_, out.audio, out.frames * meta_.dim_audio, ctx + " audio");
  validate_sequence(out, meta_);
  ++read_;
  return true;
}

void VseqReader::finish() {
  if (read_ != declared_)
    throw IoError("vseq '" + path_ + "': " + std::to_string(declared_ - read_) +
                  " records not consumed");
  char extra;
  if (in_.read(&extra, 1)) throw IoError("vseq '" + path_ + "': trailing bytes after records");
}

void write_vseq(const std::string& path, const Dataset& ds) {
  VseqWriter w(path, ds.meta, static_cast<std::uint32_t>(ds.videos.size()));
  for (const auto& v : ds.videos) w.write(v);
  w.close();
}

Dataset read_vseq(const std::string& path) {
  VseqReader r(path);
  Dataset ds;
  ds.meta = r.meta();
  ds.videos.reserve(r.video_count());
  FeatureSequence seq;
  while (r.next(seq)) ds.videos.push_back(seq);
  r.finish();
  return ds;
}

Dataset generate_synthetic(const SynthSpec& spec) {
  if (spec.labels < 2) throw ConfigError("synthetic: label vocabulary must be >= 2");
  if (spec.labels_per_video_min < 1 || spec.labels_per_video_max < spec.labels_per_video_min)
    throw ConfigError("synthetic: bad labels-per-video range");
  if (spec.labels_per_video_max > spec.labels)
    throw ConfigError("synthetic: labels per video exceed the vocabulary");
  if (spec.frames_min < 1 || spec.frames_max < spec.frames_min)
    throw ConfigError("synthetic: bad frame-count range");
  if (spec.distractor_ratio < 0.0 || spec.distractor_ratio >= 1.0)
    throw ConfigError("synthetic: distractor ratio must be in [0, 1)");

  Rng base(spec.seed);
  Rng centroid_rng = base.fork(0xC0);
  std::vector<float> cv(static_cast<std::size_t>(spec.labels) * spec.dim_visual);
  std::vector<float> ca(static_cast<std::size_t>(spec.labels) * spec.dim_audio);
  for (auto& x : cv) x = static_cast<float>(centroid_rng.gaussian());
  for (auto& x : ca) x = static_cast<float>(centroid_rng.gaussian());

  // Zipf CDF over label indices
  std::vector<double> cdf(spec.labels);
  double total = 0;
  for (std::uint32_t l = 0; l < spec.labels; ++l) {
    total += 1.0 / std::pow(static_cast<double>(l + 1), spec.zipf_exponent);
    cdf[l] = total;
  }
  for (auto& c : cdf) c /= total;

  Dataset ds;
  ds.meta = {spec.labels, spec.dim_visual, spec.dim_audio};
  ds.videos.reserve(spec.videos);

  for (std::uint32_t v = 0; v < spec.videos; ++v) {
    Rng rng = base.fork(1 + v);
    FeatureSequence seq;
    char idbuf[24];
    std::snprintf(idbuf, sizeof(idbuf), "synth-%07u", v);
    seq.id = idbuf;

    const std::uint32_t want =
        static_cast<std::uint32_t>(rng.uniform_int(spec.labels_per_video_min,
                                                   spec.labels_per_video_max));
    std::vector<std::uint32_t> chosen;
    while (chosen.size() < want) {
      const double u = rng.uniform();
      const std::uint32_t l = static_cast<std::uint32_t>(
          std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
      if (std::find(chosen.begin(), chosen.end(), l) == chosen.end()) chosen.push_back(l);
    }
    seq.labels = chosen;
    std::sort(seq.labels.begin(), seq.labels.end());

    seq.frames = static_cast<std::size_t>(rng.uniform_int(spec.frames_min, spec.frames_max));
    seq.visual.resize(seq.frames * spec.dim_visual);
    seq.audio.resize(seq.frames * spec.dim_audio);
    for (std::size_t f = 0; f < seq.frames; ++f) {
      float* vis = seq.visual.data() + f * spec.dim_visual;
      float* aud = seq.audio.data() + f * spec.dim_audio;
      if (rng.uniform() < spec.distractor_ratio) {
        for (std::uint32_t j = 0; j < spec.dim_visual; ++j)
          vis[j] = static_cast<float>(rng.gaussian());
        for (std::uint32_t j = 0; j < spec.dim_audio; ++j)
          aud[j] = static_cast<float>(rng.gaussian());
      } else {
        // both streams are driven by the same drawn label
        const std::uint32_t l = chosen[rng.below(chosen.size())];
        const float* lcv = cv.data() + static_cast<std::size_t>(l) * spec.dim_visual;
        const float* lca = ca.data() + static_cast<std::size_t>(l) * spec.dim_audio;
        for (std::uint32_t j = 0; j < spec.dim_visual; ++j)
          vis[j] = lcv[j] + static_cast<float>(rng.gaussian(0.0, spec.frame_noise));
        for (std::uint32_t j = 0; j < spec.dim_audio; ++j)
          aud[j] = lca[j] + static_cast<float>(rng.gaussian(0.0, spec.frame_noise));
      }
    }
    ds.videos.push_back(std::move(seq));
  }
  return ds;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_checkpoint(const std::string& path, const std::string& config_text,
                      const std::vector<NamedTensorF32>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(kCkptMagic, 4);
  const char ver = static_cast<char>(kFormatVersion);
  out.write(&ver, 1);
  put_string(out, config_text);
  put_u64(out, fnv1a(config_text));
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    std::size_t numel = 1;
    for (auto d : t.shape) numel *= d;
    if (numel != t.data.size())
      throw ShapeError("checkpoint tensor '" + t.name + "': shape/data mismatch");
    put_string(out, t.name);
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
    put_f32_block(out, t.data);
  }
  out.flush();
  if (!out) throw IoError("write failure on '" + path + "'");
}

CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  check_magic(in, kCkptMagic, path, "checkpoint");
  CheckpointData ck;
  ck.config_text = get_string(in, "config snapshot");
  const std::uint64_t stored_hash = get_u64(in, "config hash");
  if (stored_hash != fnv1a(ck.config_text))
    throw IoError("checkpoint '" + path + "': config hash mismatch (corrupt file)");
  const std::uint32_t count = get_u32(in, "tensor count");
  ck.tensors.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto& t = ck.tensors[i];
    t.name = get_string(in, "tensor name");
    const std::uint32_t rank = get_u32(in, t.name + " rank");
    t.shape.resize(rank);
    std::size_t numel = 1;
    for (auto& d : t.shape) {
      d = get_u32(in, t.name + " dims");
      numel *= d;
    }
    get_f32_block(in, t.data, numel, t.name + " data");
  }
  char extra;
  if (in.read(&extra, 1)) throw IoError("checkpoint '" + path + "': trailing bytes");
  return ck;
}

}  // namespace loupe
