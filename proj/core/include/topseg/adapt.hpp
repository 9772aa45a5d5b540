#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "topseg/corpus.hpp"
#include "topseg/model.hpp"
#include "topseg/tensor.hpp"
#include "topseg/train.hpp"

namespace topseg::adapt {

struct AdaptConfig {
  double lr = 3e-2;               // plain SGD
  std::size_t pair_batch = 256;   // sentence/frame-set pairs per step
  double temperature = 0.1;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
};

void validate_config(const AdaptConfig& cfg);

enum class Objective { dual, intra, cross };
Objective objective_from_string(const std::string& s);
std::string to_string(Objective o);

// One sentence with its projected frame set, after the shared heads.
struct ProjectedPair {
  numkit::Tensor q;  // 1 x d_attn
  numkit::Tensor K;  // m_i x d_attn, m_i >= 1
};

ProjectedPair project(const numkit::Tensor& tr, const numkit::Tensor& fr,
                      const numkit::TensorMap& params);

// A raw sentence/frame-set pair before projection, with the anchor and
// positive frame choices already drawn for the intra term.
struct RawPair {
  numkit::Tensor tr;        // 1 x d_text
  numkit::Tensor fr;        // m_i x d_vis
  std::size_t anchor = 0;   // row of fr
  std::size_t positive = 0; // row of fr, distinct from anchor when m_i >= 2
};

// InfoNCE batch losses. Every vector is L2-normalized after projection
// (the pooled one after pooling); similarities divide by the temperature
// inside the exponent; the denominator of row i runs over the batch's
// sampled representatives.
double intra_loss(const std::vector<RawPair>& batch, double temperature,
                  const numkit::TensorMap& params);
double cross_loss(const std::vector<RawPair>& batch, double temperature,
                  const numkit::TensorMap& params);
double dual_loss(const std::vector<RawPair>& batch, double temperature,
                 const numkit::TensorMap& params);

struct AdaptEpochStats {
  std::size_t epoch = 0;      // 1-based
  double mean_pair_loss = 0;  // training loss per pair across the epoch
  double probe_loss = 0;      // loss on a fixed probe batch after the epoch
};

struct AdaptResult {
  train::TrainResult retrain;               // step 2 output
  std::vector<AdaptEpochStats> step1_history;
};

// Step 1: SGD on the contrastive objective over target pairs mixed across
// episodes, touching only the projection heads. Step 2: supervised
// re-training on source from the step-1 parameters.
AdaptResult adapt(numkit::TensorMap params,
                  const std::vector<corpus::AlignedEpisode>& target,
                  const std::vector<corpus::AlignedEpisode>& source_train,
                  const std::vector<corpus::AlignedEpisode>& source_val,
                  const AdaptConfig& acfg, const train::TrainConfig& tcfg,
                  Objective objective = Objective::dual);

void write_step1_csv(const std::vector<AdaptEpochStats>& history,
                     const std::filesystem::path& path);

}  // namespace topseg::adapt
