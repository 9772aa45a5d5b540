#pragma once

#include <cstdint>
#include <string>

#include "topseg/corpus.hpp"
#include "topseg/metrics.hpp"

namespace topseg::baselines {

// Draw b uniformly from {0..n-1}, then mark each of the n-1 positions
// independently with probability b/n.
metrics::BoundarySeq random_segmenter(std::size_t n, std::uint64_t seed);

struct XTilingConfig {
  enum class Feature { text, visual, concat };
  Feature modality = Feature::concat;
  std::size_t smoothing_width = 3;  // odd; 1 disables smoothing
  double depth_cutoff_sigmas = 0.5;
};

XTilingConfig::Feature xtiling_feature_from_string(const std::string& s);

// TextTiling generalized to embedding features: gap score = cosine of the
// mean-pooled blocks flanking each gap, depth by climbing to the nearest
// score peaks, boundaries at strict depth maxima past mean - c*std.
// Needs at least 3 sentences.
metrics::BoundarySeq xtiling(const corpus::AlignedEpisode& ae,
                             const XTilingConfig& cfg);

}  // namespace topseg::baselines
