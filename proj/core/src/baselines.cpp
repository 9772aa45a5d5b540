#include "topseg/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "topseg/error.hpp"
#include "topseg/rng.hpp"

namespace topseg::baselines {

using metrics::BoundarySeq;
using numkit::Rng;

BoundarySeq random_segmenter(std::size_t n, std::uint64_t seed) {
  if (n < 2) throw DataError("random segmenter: needs at least 2 sentences");
  Rng rng(seed);
  const std::uint64_t b = rng.below(n);
  const double rate = static_cast<double>(b) / static_cast<double>(n);
  BoundarySeq labels(n - 1, 0);
  for (int& v : labels) v = rng.uniform() < rate ? 1 : 0;
  return labels;
}

XTilingConfig::Feature xtiling_feature_from_string(const std::string& s) {
  if (s == "text") return XTilingConfig::Feature::text;
  if (s == "visual") return XTilingConfig::Feature::visual;
  if (s == "concat") return XTilingConfig::Feature::concat;
  throw UsageError("unknown x-tiling modality '" + s + "' (text|visual|concat)");
}

namespace {

std::vector<std::vector<double>> sentence_features(
    const corpus::AlignedEpisode& ae, XTilingConfig::Feature modality) {
  const corpus::Episode& e = ae.episode;
  const std::size_t n = e.n_sentences();
  const bool want_text = modality != XTilingConfig::Feature::visual;
  const bool want_vis = modality != XTilingConfig::Feature::text;
  const std::size_t d_text = want_text ? e.sent_emb.cols() : 0;
  const std::size_t d_vis = want_vis ? e.frame_emb.cols() : 0;

  std::vector<std::vector<double>> feats(n, std::vector<double>(d_text + d_vis, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    if (want_text) {
      for (std::size_t c = 0; c < d_text; ++c) {
        feats[i][c] = static_cast<double>(e.sent_emb.at(i, c));
      }
    }
    if (want_vis) {
      const corpus::FrameRange r = ae.frame_ranges[i];
      if (!r.empty()) {
        for (std::size_t k = r.begin; k < r.end; ++k) {
          for (std::size_t c = 0; c < d_vis; ++c) {
            feats[i][d_text + c] += static_cast<double>(e.frame_emb.at(k, c));
          }
        }
        for (std::size_t c = 0; c < d_vis; ++c) {
          feats[i][d_text + c] /= static_cast<double>(r.size());
        }
      }
    }
  }
  return feats;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<double> block_mean(const std::vector<std::vector<double>>& feats,
                               std::size_t lo, std::size_t hi) {
  std::vector<double> mean(feats[0].size(), 0.0);
  for (std::size_t i = lo; i < hi; ++i) {
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += feats[i][c];
  }
  for (double& v : mean) v /= static_cast<double>(hi - lo);
  return mean;
}

std::vector<double> smooth(const std::vector<double>& scores, std::size_t width) {
  if (width <= 1) return scores;
  const std::size_t half = width / 2;
  std::vector<double> out(scores.size());
  for (std::size_t j = 0; j < scores.size(); ++j) {
    const std::size_t lo = j >= half ? j - half : 0;
    const std::size_t hi = std::min(scores.size(), j + half + 1);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += scores[i];
    out[j] = s / static_cast<double>(hi - lo);
  }
  return out;
}

}  // namespace

BoundarySeq xtiling(const corpus::AlignedEpisode& ae, const XTilingConfig& cfg) {
  const std::size_t n = ae.episode.n_sentences();
  if (n < 3) throw DataError("x-tiling: needs at least 3 sentences, episode " +
                             ae.episode.id + " has " + std::to_string(n));
  if (cfg.smoothing_width < 1 || cfg.smoothing_width % 2 == 0) {
    throw DataError("x-tiling: smoothing width must be odd and positive");
  }

  const auto feats = sentence_features(ae, cfg.modality);
  const std::size_t w = std::min<std::size_t>(5, n / 2);

  // Gap j sits after sentence j; blocks of up to w sentences flank it.
  std::vector<double> scores(n - 1);
  for (std::size_t j = 0; j + 1 < n; ++j) {
    const std::size_t gap = j + 1;
    const std::size_t lo = gap >= w ? gap - w : 0;
    const std::size_t hi = std::min(n, gap + w);
    scores[j] = cosine(block_mean(feats, lo, gap), block_mean(feats, gap, hi));
  }
  scores = smooth(scores, cfg.smoothing_width);

  std::vector<double> depth(scores.size(), 0.0);
  for (std::size_t j = 0; j < scores.size(); ++j) {
    double left = scores[j];
    for (std::size_t i = j; i > 0 && scores[i - 1] >= left; --i) left = scores[i - 1];
    double right = scores[j];
    for (std::size_t i = j + 1; i < scores.size() && scores[i] >= right; ++i) {
      right = scores[i];
    }
    depth[j] = (left - scores[j]) + (right - scores[j]);
  }

  double mean = 0.0;
  for (double d : depth) mean += d;
  mean /= static_cast<double>(depth.size());
  double var = 0.0;
  for (double d : depth) var += (d - mean) * (d - mean);
  var /= static_cast<double>(depth.size());
  const double stddev = std::sqrt(var);
  const double cutoff = mean - cfg.depth_cutoff_sigmas * stddev;

  // A flat depth profile carries no evidence; emit nothing rather than
  // marking every gap.
  BoundarySeq labels(depth.size(), 0);
  if (stddev > 0.0) {
    for (std::size_t j = 0; j < depth.size(); ++j) {
      const bool rises = j == 0 || depth[j] > depth[j - 1];
      const bool falls = j + 1 == depth.size() || depth[j] >= depth[j + 1];
      if (depth[j] > 0.0 && depth[j] >= cutoff && rises && falls) labels[j] = 1;
    }
  }
  return labels;
}

}  // namespace topseg::baselines
