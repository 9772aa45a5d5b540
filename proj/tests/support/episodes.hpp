#pragma once

// Hand-rolled random episodes at desk dimensions, for exercising model
// and inference paths without the synthesizer.

#include <algorithm>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "topseg/corpus.hpp"
#include "topseg/rng.hpp"

namespace testutil {

struct EpisodeSpec {
  std::size_t n = 6;
  std::size_t d_text = 5;
  std::size_t d_vis = 5;
  std::size_t frames_min = 1;
  std::size_t frames_max = 3;
  bool labeled = true;
};

inline topseg::corpus::AlignedEpisode make_episode(topseg::numkit::Rng& rng,
                                                   std::string id,
                                                   const EpisodeSpec& spec) {
  using namespace topseg;
  corpus::Episode e;
  e.id = std::move(id);
  e.sent_emb = corpus::EmbMatrix(spec.n, spec.d_text);
  for (float& v : e.sent_emb.data()) v = static_cast<float>(rng.normal());

  std::vector<double> times;
  for (std::size_t i = 0; i < spec.n; ++i) {
    corpus::Sentence s;
    s.index = i;
    s.begin_s = 5.0 * static_cast<double>(i);
    s.end_s = s.begin_s + 5.0;
    if (spec.labeled) {
      s.boundary = i + 1 == spec.n ? 1 : (rng.uniform() < 0.3 ? 1 : 0);
    }
    e.sentences.push_back(s);

    std::size_t m = spec.frames_min;
    if (spec.frames_max > spec.frames_min) {
      m += rng.below(spec.frames_max - spec.frames_min + 1);
    }
    std::vector<double> local(m);
    for (double& t : local) t = rng.uniform(s.begin_s, s.end_s);
    std::sort(local.begin(), local.end());
    times.insert(times.end(), local.begin(), local.end());
  }

  e.frame_emb = corpus::EmbMatrix(times.size(), spec.d_vis);
  for (float& v : e.frame_emb.data()) v = static_cast<float>(rng.normal());
  for (std::size_t k = 0; k < times.size(); ++k) {
    e.frames.push_back(corpus::Frame{k, times[k]});
  }

  corpus::validate_episode(e);
  return corpus::align_frames(std::move(e));
}

}  // namespace testutil
