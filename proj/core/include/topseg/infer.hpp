#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "topseg/corpus.hpp"
#include "topseg/model.hpp"
#include "topseg/tensor.hpp"

namespace topseg::infer {

struct Prediction {
  std::string episode_id;
  std::vector<double> probs;  // one per position 0..n-2
  std::vector<int> labels;    // labels[i] = 1 iff probs[i] > tau_used
  double tau_used = 0.5;
  std::size_t window = 0;     // effective window; plain inference records n
};

Prediction plain_infer(const corpus::AlignedEpisode& ae,
                       const numkit::TensorMap& params, model::Modality mode,
                       double tau);

// Half-open sentence range [begin, end).
struct Snippet {
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct WindowPlan {
  std::size_t window = 0;
  std::size_t stride = 1;
  std::vector<Snippet> snippets;
};

// Ranges [i, i+k) for i = 0, stride, 2*stride, ... with a final range
// starting at n-k whether or not the stepping lands on it, so every
// position keeps at least one covering snippet; single [0, n) when n <= k.
// Requires n >= 2, k >= 2 and 1 <= stride <= k-1.
WindowPlan make_snippets(std::size_t n, std::size_t k, std::size_t stride = 1);

// Runs the forward pass on each snippet's sub-episode (frames re-sliced to
// the snippet) and averages, per position, the probabilities of the
// snippets that predict it. A snippet of length L predicts its first L-1
// positions; the boundary after its last sentence is not scored by it.
// k >= n reproduces plain_infer bit-for-bit. Snippet forwards run through
// parallel_for; aggregation is ordered.
Prediction sliding_infer(const corpus::AlignedEpisode& ae,
                         const numkit::TensorMap& params, model::Modality mode,
                         std::size_t k, std::size_t stride, double tau);

// JSONL: one {"index", "prob", "label"} record per position, then a
// summary line {"tau_used", "k"}.
void write_predictions(const Prediction& p, const std::filesystem::path& path);
Prediction read_predictions(const std::filesystem::path& path);

}  // namespace topseg::infer
