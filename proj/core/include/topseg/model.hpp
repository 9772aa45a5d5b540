#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "topseg/corpus.hpp"
#include "topseg/tape.hpp"
#include "topseg/tensor.hpp"

namespace topseg::model {

struct ModelConfig {
  std::size_t d_text = 768;
  std::size_t d_vis = 512;
  std::size_t d_attn = 768;
  std::size_t lstm_layers = 2;
  std::size_t lstm_hidden = 256;
  std::size_t mlp_hidden = 128;
};

void validate_config(const ModelConfig& cfg);

enum class Modality { text, visual, multimodal };
Modality modality_from_string(const std::string& s);
std::string to_string(Modality m);

// Parameter names, in construction order:
//   qffn.W (d_text x d_attn), qffn.b (1 x d_attn)
//   kvffn.W (d_vis x d_attn), kvffn.b (1 x d_attn)   — K and V share these
//   lstm<L>.<fwd|bwd>.Wx (in x 4H), .Wh (H x 4H), .b (1 x 4H)
//     gate column blocks in order [input, forget, cell, output]
//   mlp.W1 (2H x mlp_hidden), mlp.b1, mlp.W2 (mlp_hidden x 2), mlp.b2
// Weights ~ Uniform(-a, a), a = sqrt(6 / (fan_in + fan_out)); biases zero.
numkit::TensorMap init_params(const ModelConfig& cfg, std::uint64_t seed);

// Recovers the dimensions a parameter set was built with.
ModelConfig config_from_params(const numkit::TensorMap& params);
void check_params(const numkit::TensorMap& params);

using ParamIds = std::map<std::string, numkit::Tape::Id>;
ParamIds register_params(numkit::Tape& tape, const numkit::TensorMap& params);

// Scaled dot-product attention over one sentence's frame set, returned as
// {A, vr} with A = softmax(q K^T / sqrt(d_k)) and vr = A V. Value-level,
// for callers that need the op in isolation; fuse() builds the same math
// onto a tape. Requires at least one key row.
std::pair<numkit::Tensor, numkit::Tensor> cross_modal_attention(
    const numkit::Tensor& q, const numkit::Tensor& K, const numkit::Tensor& V);

struct FusionOutput {
  numkit::Tape::Id vr = -1;  // n x d_attn text-aware visual representations
  // Attention row values per sentence; empty tensor for a sentence whose
  // frame range is empty (its vr row is zero).
  std::vector<numkit::Tensor> attention;
};

FusionOutput fuse(numkit::Tape& tape, const ParamIds& params,
                  const corpus::AlignedEpisode& ae);

// Stacked BiLSTM, zero initial states, final layer's directions
// concatenated per position: n x in -> n x 2H.
numkit::Tape::Id contextualize(numkit::Tape& tape, const ParamIds& params,
                               numkit::Tape::Id feats, std::size_t layers);

struct ForwardGraph {
  numkit::Tape::Id logits = -1;  // (n-1) x 2
  numkit::Tape::Id probs = -1;   // (n-1) x 1, boundary-class probability
  std::vector<numkit::Tensor> attention;
};

// fuse -> concat with raw sentence rows -> contextualize -> MLP head.
// The last sentence has no prediction position. Modality text zeroes the
// visual channel without running fusion; visual zeroes the sentence rows
// everywhere they enter (queries included).
ForwardGraph build_forward(numkit::Tape& tape, const ParamIds& params,
                           const corpus::AlignedEpisode& ae, Modality mode);

struct ForwardResult {
  std::vector<double> probs;  // length n-1
  std::vector<numkit::Tensor> attention;
};

// Value-level forward on a private tape.
ForwardResult forward(const numkit::TensorMap& params,
                      const corpus::AlignedEpisode& ae, Modality mode);

}  // namespace topseg::model
