#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "g2l/matrix.hpp"
#include "g2l/metrics.hpp"

namespace g2l {

// One sample: per-frame feature vectors (F x T) plus per-frame labels.
struct FrameSequence {
  std::string id;
  Matrix features;
  LabelSequence labels;

  void validate() const;  // throws DataError on length mismatch / non-finite features
};

struct FoldSplit {
  int fold = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
};

enum class SegmentLengthMode { Geometric, Uniform };

// Desk-scale synthetic sequence-segmentation task. Labels form a Markov chain
// of class runs. Features are a class prototype plus optional slow drift plus
// Gaussian noise. Drift segments replace the prototype with a vector shared
// between a confusable class pair; only the drift slope's sign across the
// segment separates the two classes, so disambiguation genuinely needs a
// receptive field spanning a good part of the segment.
struct SynthTaskConfig {
  int num_classes = 6;
  int num_videos = 40;
  std::size_t t_min = 400;
  std::size_t t_max = 600;
  std::size_t feature_dim = 12;
  double segment_mean_len = 60.0;
  SegmentLengthMode length_mode = SegmentLengthMode::Geometric;
  std::size_t min_segment_len = 10;
  double noise_sigma = 0.4;
  double drift_prob = 0.5;   // long-range dependency strength
  double drift_amp = 2.0;
  std::uint64_t seed = 0;

  void validate() const;
};

std::vector<FrameSequence> generate_synthetic(const SynthTaskConfig& cfg);

// On-disk layout in `dir`: per sequence `<id>.feat` (magic G2LFT1, u32 F,
// u32 T little-endian, then F*T float32 column-major by time) and `<id>.txt`
// (one label token per line), plus `mapping.txt` ("<id> <token>" per line).
void save_dataset(const std::vector<FrameSequence>& sequences, const std::string& dir);
std::vector<FrameSequence> load_dataset(const std::string& dir);

// Seeded shuffle then contiguous partition; validation fold i, train = rest.
std::vector<FoldSplit> make_folds(const std::vector<std::string>& ids, int num_folds,
                                  std::uint64_t seed);

void save_folds(const std::vector<FoldSplit>& folds, const std::string& path);
std::vector<FoldSplit> load_folds(const std::string& path);

std::vector<FrameSequence> select_by_ids(const std::vector<FrameSequence>& all,
                                         const std::vector<std::string>& ids);

std::vector<std::string> sequence_ids(const std::vector<FrameSequence>& all);

}  // namespace g2l
