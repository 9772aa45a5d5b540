#include "topseg/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "topseg/error.hpp"
#include "topseg/metrics.hpp"
#include "topseg/parallel.hpp"
#include "topseg/rng.hpp"

namespace topseg::train {

using corpus::AlignedEpisode;
using numkit::GradMap;
using numkit::Rng;
using numkit::Tape;
using numkit::Tensor;
using numkit::TensorMap;

void validate_config(const TrainConfig& cfg) {
  if (cfg.lr <= 0) throw DataError("train config: lr must be positive");
  if (cfg.epochs < 1) throw DataError("train config: epochs must be at least 1");
  if (cfg.batch_episodes < 1) {
    throw DataError("train config: batch_episodes must be at least 1");
  }
  if (cfg.beta1 < 0 || cfg.beta1 >= 1 || cfg.beta2 < 0 || cfg.beta2 >= 1 ||
      cfg.eps <= 0) {
    throw DataError("train config: invalid optimizer constants");
  }
}

double xent_loss(std::span<const double> probs, std::span<const int> labels) {
  if (probs.size() != labels.size()) {
    throw DataError("xent: " + std::to_string(probs.size()) + " probabilities vs " +
                    std::to_string(labels.size()) + " labels");
  }
  if (probs.empty()) throw DataError("xent: empty sequence");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = labels[i] == 1 ? probs[i] : 1.0 - probs[i];
    total -= std::log(p);
  }
  return total / static_cast<double>(probs.size());
}

Tape::Id build_episode_loss(Tape& tape, const model::ParamIds& params,
                            const AlignedEpisode& ae, model::Modality mode) {
  const model::ForwardGraph g = model::build_forward(tape, params, ae, mode);
  const std::vector<int> gold = ae.episode.gold_labels();
  const std::size_t positions = gold.size();

  Tensor onehot(positions, 2);
  for (std::size_t i = 0; i < positions; ++i) onehot.at(i, gold[i]) = 1.0;

  // Mean over positions of LSE(logits) - logit[label].
  const Tape::Id lse = tape.log_sum_exp_rows(g.logits);
  const Tape::Id picked = tape.row_sums(tape.mul(g.logits, tape.input(onehot)));
  return tape.scale(tape.sum_all(tape.sub(lse, picked)),
                    1.0 / static_cast<double>(positions));
}

AdamState init_adam(const TensorMap& params) {
  AdamState state;
  for (const auto& [name, t] : params) {
    state.m[name] = Tensor(t.rows(), t.cols());
    state.v[name] = Tensor(t.rows(), t.cols());
  }
  return state;
}

void adam_step(TensorMap& params, const GradMap& grads, AdamState& state,
               const TrainConfig& cfg) {
  if (grads.size() != params.size()) {
    throw DataError("adam: gradient map does not match parameters");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (auto& [name, p] : params) {
    const auto it = grads.find(name);
    if (it == grads.end()) throw DataError("adam: no gradient for '" + name + "'");
    const Tensor& g = it->second;
    Tensor& m = state.m.at(name);
    Tensor& v = state.v.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g.data()[i];
      m.data()[i] = cfg.beta1 * m.data()[i] + (1.0 - cfg.beta1) * gi;
      v.data()[i] = cfg.beta2 * v.data()[i] + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = m.data()[i] / bc1;
      const double vhat = v.data()[i] / bc2;
      p.data()[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

namespace {

struct TunedResult {
  double tau = 0.5;
  double f1 = 0.0;
};

TunedResult tune_on_probs(const std::vector<std::vector<double>>& probs,
                          const std::vector<std::vector<int>>& gold,
                          std::span<const double> grid) {
  TunedResult best;
  best.tau = grid[0];
  best.f1 = -1.0;
  for (const double tau : grid) {
    double f1_sum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      metrics::BoundarySeq hyp(probs[i].size());
      for (std::size_t j = 0; j < probs[i].size(); ++j) {
        hyp[j] = probs[i][j] > tau ? 1 : 0;
      }
      f1_sum += metrics::f1_boundary(gold[i], hyp);
    }
    const double f1 = f1_sum / static_cast<double>(probs.size());
    const bool better =
        f1 > best.f1 ||
        (f1 == best.f1 && (std::abs(tau - 0.5) < std::abs(best.tau - 0.5) ||
                           (std::abs(tau - 0.5) == std::abs(best.tau - 0.5) &&
                            tau < best.tau)));
    if (better) best = {tau, f1};
  }
  return best;
}

TunedResult tune_on_corpus(const std::vector<AlignedEpisode>& val,
                           const TensorMap& params, model::Modality mode,
                           std::span<const double> grid) {
  if (val.empty()) throw DataError("threshold tuning: empty validation corpus");
  if (grid.empty()) throw DataError("threshold tuning: empty grid");
  std::vector<std::vector<double>> probs(val.size());
  std::vector<std::vector<int>> gold(val.size());
  numkit::parallel_for(val.size(), [&](std::size_t i) {
    probs[i] = model::forward(params, val[i], mode).probs;
    gold[i] = val[i].episode.gold_labels();
  });
  return tune_on_probs(probs, gold, grid);
}

}  // namespace

double tune_threshold(const std::vector<AlignedEpisode>& val,
                      const TensorMap& params, model::Modality mode,
                      std::span<const double> grid) {
  return tune_on_corpus(val, params, mode, grid).tau;
}

namespace {

// Per-batch gradients, computed in parallel and reduced in episode order.
struct BatchResult {
  GradMap grads;
  double loss_sum = 0.0;
};

BatchResult batch_gradients(const std::vector<AlignedEpisode>& eps,
                            std::span<const std::size_t> batch,
                            const TensorMap& params, model::Modality mode) {
  std::vector<GradMap> grads(batch.size());
  std::vector<double> losses(batch.size());
  numkit::parallel_for(batch.size(), [&](std::size_t slot) {
    Tape tape;
    const model::ParamIds ids = model::register_params(tape, params);
    const Tape::Id loss = build_episode_loss(tape, ids, eps[batch[slot]], mode);
    losses[slot] = tape.value(loss).item();
    grads[slot] = tape.backward(loss);
  });

  BatchResult out;
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.grads = std::move(grads[0]);
  for (auto& [name, g] : out.grads) {
    for (std::size_t slot = 1; slot < batch.size(); ++slot) {
      const Tensor& other = grads[slot].at(name);
      for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += other.data()[i];
    }
    for (double& v : g.data()) v *= inv;
  }
  for (double l : losses) out.loss_sum += l;
  return out;
}

}  // namespace

TrainResult train_supervised(const std::vector<AlignedEpisode>& train_eps,
                             const std::vector<AlignedEpisode>& val_eps,
                             const TrainConfig& cfg, TensorMap params) {
  validate_config(cfg);
  if (train_eps.empty()) throw DataError("training corpus is empty");
  for (const AlignedEpisode& ae : train_eps) {
    if (!ae.episode.labeled()) {
      throw DataError("episode " + ae.episode.id + " is unlabeled");
    }
  }

  AdamState state = init_adam(params);
  Rng shuffle_rng(Rng(cfg.seed).next() ^ 0x7261696e);
  std::vector<std::size_t> order(train_eps.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    }

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_episodes) {
      const std::size_t stop =
          std::min(order.size(), start + cfg.batch_episodes);
      const std::span<const std::size_t> batch(order.data() + start,
                                               stop - start);
      BatchResult br = batch_gradients(train_eps, batch, params, cfg.mode);
      loss_sum += br.loss_sum;
      adam_step(params, br.grads, state, cfg);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = loss_sum / static_cast<double>(train_eps.size());
    if (!val_eps.empty()) {
      const auto grid = default_tau_grid();
      const TunedResult tuned = tune_on_corpus(val_eps, params, cfg.mode, grid);
      stats.tau = tuned.tau;
      stats.val_f1 = tuned.f1;
    }
    result.history.push_back(stats);
  }

  result.model.params = std::move(params);
  result.model.tau =
      val_eps.empty() ? 0.5 : result.history.back().tau;
  return result;
}

void write_history_csv(const std::vector<EpochStats>& history,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << "epoch,mean_loss,val_f1,tau\n";
  out.precision(17);
  for (const EpochStats& s : history) {
    out << s.epoch << ',' << s.mean_loss << ',' << s.val_f1 << ',' << s.tau << '\n';
  }
}

}  // namespace topseg::train
