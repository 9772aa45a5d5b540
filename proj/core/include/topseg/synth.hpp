#pragma once

#include <cstdint>
#include <vector>

#include "topseg/corpus.hpp"
#include "topseg/tensor.hpp"

namespace topseg::corpus {

enum class DomainShift { none, long_form };

struct SynthConfig {
  std::size_t n_episodes = 8;
  double mean_sentences_per_episode = 108.0;
  double mean_segments_per_episode = 6.7;
  std::size_t d_text = 768;
  std::size_t d_vis = 512;
  double noise_sigma = 0.1;
  double irrelevant_frame_frac = 0.0;
  std::size_t frames_per_sentence_min = 2;
  std::size_t frames_per_sentence_max = 6;
  DomainShift domain_shift = DomainShift::none;
  std::uint64_t seed = 0;
  // Fraction of latent coordinates each modality's projection passes
  // through: text keeps the leading ceil(frac*d_lat) coordinates, vision
  // the trailing ones. At 1.0 both modalities see the whole topic; lower
  // both to split the signal so neither modality suffices alone.
  double text_latent_frac = 1.0;
  double vis_latent_frac = 1.0;
  bool labeled = true;
};

void validate_config(const SynthConfig& cfg);

// Latent draws an episode consumes before projection. With equal seed and
// counts, shift none and long yield the same plans up to latent_rotation
// applied to every topic.
struct EpisodePlan {
  std::vector<std::size_t> segment_lengths;
  std::vector<std::vector<double>> topics;  // unit vectors, one per segment
};

std::vector<EpisodePlan> synth_plan(const SynthConfig& cfg);

// The fixed orthogonal map (a signed permutation with determinant +1)
// applied to topic vectors when domain_shift = long.
numkit::Tensor latent_rotation(const SynthConfig& cfg);

std::vector<Episode> synth_corpus(const SynthConfig& cfg);

}  // namespace topseg::corpus
