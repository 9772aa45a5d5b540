#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "topseg/corpus.hpp"
#include "topseg/model.hpp"
#include "topseg/tape.hpp"
#include "topseg/tensor.hpp"

namespace topseg::train {

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_episodes = 16;
  std::size_t epochs = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  model::Modality mode = model::Modality::multimodal;
};

void validate_config(const TrainConfig& cfg);

struct ThresholdedModel {
  numkit::TensorMap params;
  double tau = 0.5;
};

// Mean over positions of -log p(label). The value-level form for tests
// and reporting; training computes the same quantity from logits through
// log-sum-exp on the tape.
double xent_loss(std::span<const double> probs, std::span<const int> labels);

// Extends an episode's forward graph with its cross-entropy loss node.
numkit::Tape::Id build_episode_loss(numkit::Tape& tape,
                                    const model::ParamIds& params,
                                    const corpus::AlignedEpisode& ae,
                                    model::Modality mode);

struct AdamState {
  numkit::TensorMap m;
  numkit::TensorMap v;
  std::size_t t = 0;
};

AdamState init_adam(const numkit::TensorMap& params);

// Standard bias-corrected Adam. Keys of params and grads must agree.
void adam_step(numkit::TensorMap& params, const numkit::GradMap& grads,
               AdamState& state, const TrainConfig& cfg);

inline std::vector<double> default_tau_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 19; ++i) grid.push_back(static_cast<double>(i) / 20.0);
  return grid;
}

// Grid value maximizing corpus-mean boundary F1 of plain inference; ties
// resolved toward 0.5, then toward the smaller value.
double tune_threshold(const std::vector<corpus::AlignedEpisode>& val,
                      const numkit::TensorMap& params, model::Modality mode,
                      std::span<const double> grid);

struct EpochStats {
  std::size_t epoch = 0;    // 1-based
  double mean_loss = 0.0;   // mean per-episode training loss
  double val_f1 = 0.0;      // corpus-mean F1 on val at the epoch's tau
  double tau = 0.0;
};

struct TrainResult {
  ThresholdedModel model;
  std::vector<EpochStats> history;
};

// Epochs of shuffled episode batches; gradients of a batch are averaged
// and applied in one Adam step. Deterministic in cfg.seed, including the
// shuffle order, for any thread count.
TrainResult train_supervised(const std::vector<corpus::AlignedEpisode>& train_eps,
                             const std::vector<corpus::AlignedEpisode>& val_eps,
                             const TrainConfig& cfg, numkit::TensorMap params);

void write_history_csv(const std::vector<EpochStats>& history,
                       const std::filesystem::path& path);

}  // namespace topseg::train
