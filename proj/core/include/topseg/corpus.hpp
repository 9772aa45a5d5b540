#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "topseg/tensor.hpp"

namespace topseg::corpus {

struct Sentence {
  std::size_t index = 0;
  double begin_s = 0.0;
  double end_s = 0.0;
  // Present on labeled data only; 1 marks the last sentence of a segment.
  std::optional<int> boundary;

  bool operator==(const Sentence&) const = default;
};

struct Frame {
  std::size_t index = 0;
  double time_s = 0.0;

  bool operator==(const Frame&) const = default;
};

// Row-major float32 matrix. Embeddings stay in their on-disk precision so
// save/load round-trips are bit-exact; model code widens rows on entry.
class EmbMatrix {
 public:
  EmbMatrix() = default;
  EmbMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  float& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  numkit::Tensor to_tensor() const;
  // Rows [r0, r1) as a double tensor.
  numkit::Tensor rows_tensor(std::size_t r0, std::size_t r1) const;

  bool operator==(const EmbMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

struct Episode {
  std::string id;
  std::vector<Sentence> sentences;
  std::vector<Frame> frames;
  EmbMatrix sent_emb;   // n x d_text
  EmbMatrix frame_emb;  // m x d_vis

  std::size_t n_sentences() const { return sentences.size(); }
  std::size_t n_frames() const { return frames.size(); }
  bool labeled() const {
    return !sentences.empty() && sentences.front().boundary.has_value();
  }
  // Gold prediction targets: boundary labels for positions 0..n-2. The
  // final sentence's label is fixed at 1 and never predicted.
  std::vector<int> gold_labels() const;

  bool operator==(const Episode&) const = default;
};

// Half-open range of frame indices attached to one sentence.
struct FrameRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool empty() const { return begin == end; }
  bool operator==(const FrameRange&) const = default;
};

struct AlignedEpisode {
  Episode episode;
  std::vector<FrameRange> frame_ranges;  // one per sentence, in order
};

// Throws DataError with the offending record's position on any violated
// episode invariant (ordering, overlap, row counts, non-finite entries).
void validate_episode(const Episode& e);

// Frame k joins sentence i iff begin_s(i) <= time_s(k) < end_s(i).
// Frames outside every interval are dropped.
AlignedEpisode align_frames(Episode e);

Episode load_episode(const std::filesystem::path& dir);
void save_episode(const Episode& e, const std::filesystem::path& dir);

struct ManifestEntry {
  std::string dir;    // relative to the manifest's directory
  std::string split;  // train | val | test
};

struct Manifest {
  std::filesystem::path root;  // directory holding corpus.json
  std::vector<ManifestEntry> entries;

  std::vector<std::filesystem::path> dirs_for(const std::string& split) const;
};

Manifest load_manifest(const std::filesystem::path& corpus_json);
void save_manifest(const Manifest& m, const std::filesystem::path& corpus_json);

// Loads, validates and aligns every episode of one split.
std::vector<AlignedEpisode> load_split(const Manifest& m, const std::string& split);

}  // namespace topseg::corpus
