#include <benchmark/benchmark.h>

#include <cstdint>

#include "topseg/corpus.hpp"
#include "topseg/metrics.hpp"
#include "topseg/model.hpp"
#include "topseg/rng.hpp"
#include "topseg/synth.hpp"
#include "topseg/tape.hpp"
#include "topseg/train.hpp"

namespace {

using namespace topseg;

corpus::SynthConfig bench_synth(std::size_t sentences) {
  corpus::SynthConfig cfg;
  cfg.n_episodes = 1;
  cfg.mean_sentences_per_episode = static_cast<double>(sentences);
  cfg.mean_segments_per_episode = 6.0;
  cfg.d_text = 64;
  cfg.d_vis = 48;
  cfg.seed = 7;
  return cfg;
}

model::ModelConfig bench_model() {
  model::ModelConfig m;
  m.d_text = 64;
  m.d_vis = 48;
  m.d_attn = 32;
  m.lstm_layers = 2;
  m.lstm_hidden = 32;
  m.mlp_hidden = 16;
  return m;
}

const corpus::AlignedEpisode& episode() {
  static const corpus::AlignedEpisode ae =
      corpus::align_frames(corpus::synth_corpus(bench_synth(64))[0]);
  return ae;
}

const numkit::TensorMap& params() {
  static const numkit::TensorMap p = model::init_params(bench_model(), 3);
  return p;
}

void BM_attention(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  numkit::Rng rng(11);
  numkit::Tensor q(1, 32), K(rows, 32), V(rows, 32);
  for (std::size_t i = 0; i < q.size(); ++i) q.data()[i] = rng.normal();
  for (std::size_t i = 0; i < K.size(); ++i) K.data()[i] = rng.normal();
  for (std::size_t i = 0; i < V.size(); ++i) V.data()[i] = rng.normal();
  for (auto _ : state) {
    benchmark::DoNotOptimize(model::cross_modal_attention(q, K, V));
  }
}
BENCHMARK(BM_attention)->Arg(8)->Arg(64);

void BM_forward(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        model::forward(params(), episode(), model::Modality::multimodal));
  }
}
BENCHMARK(BM_forward);

void BM_backward(benchmark::State& state) {
  for (auto _ : state) {
    numkit::Tape tape;
    const model::ParamIds ids = model::register_params(tape, params());
    const numkit::Tape::Id loss = train::build_episode_loss(
        tape, ids, episode(), model::Modality::multimodal);
    benchmark::DoNotOptimize(tape.backward(loss));
  }
}
BENCHMARK(BM_backward);

void BM_metrics(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  numkit::Rng rng(5);
  metrics::BoundarySeq gold(n - 1), hyp(n - 1);
  for (auto& b : gold) b = rng.uniform() < 0.1 ? 1 : 0;
  for (auto& b : hyp) b = rng.uniform() < 0.1 ? 1 : 0;
  const std::size_t k = metrics::default_window(gold);
  for (auto _ : state) {
    benchmark::DoNotOptimize(metrics::pk(gold, hyp, k));
    benchmark::DoNotOptimize(metrics::window_diff(gold, hyp, k));
    benchmark::DoNotOptimize(metrics::pr_error(gold, hyp, k));
    benchmark::DoNotOptimize(metrics::f1_boundary(gold, hyp));
  }
}
BENCHMARK(BM_metrics)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
