#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace topseg::metrics {

// Binary boundary labels for positions 0..n-2 of an n-sentence episode.
using BoundarySeq = std::vector<int>;

// Half-open sentence-index interval.
struct Segment {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const Segment&) const = default;
};
using SegmentList = std::vector<Segment>;

SegmentList boundaries_to_segments(const BoundarySeq& b, std::size_t n);
BoundarySeq segments_to_boundaries(const SegmentList& segs);

// Positive-class F1 over the label sequences. Both sides empty of
// positives counts as perfect agreement (1.0); P+R = 0 otherwise gives 0.
double f1_boundary(const BoundarySeq& gold, const BoundarySeq& hyp);

// Half the mean gold segment length, the customary Pk window, clamped to
// the valid range [1, n-1].
std::size_t default_window(const BoundarySeq& gold);

// Fraction of unit pairs (i, i+k) where gold and hyp disagree on
// same-segment membership. Requires n >= k+1 units.
double pk(const BoundarySeq& gold, const BoundarySeq& hyp, std::size_t k);

// Fraction of width-k unit windows whose internal boundary counts differ.
double window_diff(const BoundarySeq& gold, const BoundarySeq& hyp, std::size_t k);

// Mean of miss and false-alarm rates over width-k windows of boundary
// slots, judging boundary presence per window. A rate with an empty
// denominator contributes 0.
double pr_error(const BoundarySeq& gold, const BoundarySeq& hyp, std::size_t k);

// Mean over gold segments of the best IoU against any hypothesis segment.
// Asymmetric in (gold, hyp) by definition.
double miou(const SegmentList& gold, const SegmentList& hyp);

struct EpisodeMetrics {
  std::string id;
  double f1 = 0, pr = 0, miou = 0, pk = 0, window_diff = 0;
  std::size_t k = 0;
};

struct LabeledPrediction {
  std::string id;
  BoundarySeq gold;
  BoundarySeq hyp;
};

struct MetricReport {
  std::vector<EpisodeMetrics> episodes;
  EpisodeMetrics mean;  // unweighted over episodes; mean.k is informational
};

// Per-episode metrics plus unweighted corpus means. The window is derived
// per episode from its gold segmentation unless overridden.
MetricReport evaluate_corpus(const std::vector<LabeledPrediction>& pairs,
                             std::optional<std::size_t> window_override = {});

std::string to_csv(const MetricReport& report);
void write_csv(const MetricReport& report, const std::filesystem::path& path);
std::string to_table(const MetricReport& report);

}  // namespace topseg::metrics
