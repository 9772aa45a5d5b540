#include "topseg/model.hpp"

#include <cmath>

#include "topseg/error.hpp"
#include "topseg/rng.hpp"

namespace topseg::model {

using numkit::Rng;
using numkit::Tape;
using numkit::Tensor;
using numkit::TensorMap;

void validate_config(const ModelConfig& cfg) {
  if (cfg.d_text < 1 || cfg.d_vis < 1 || cfg.d_attn < 1 ||
      cfg.lstm_layers < 1 || cfg.lstm_hidden < 1 || cfg.mlp_hidden < 1) {
    throw DataError("model config: every dimension must be at least 1");
  }
}

Modality modality_from_string(const std::string& s) {
  if (s == "text") return Modality::text;
  if (s == "visual") return Modality::visual;
  if (s == "multimodal") return Modality::multimodal;
  throw UsageError("unknown modality '" + s + "' (text|visual|multimodal)");
}

std::string to_string(Modality m) {
  switch (m) {
    case Modality::text: return "text";
    case Modality::visual: return "visual";
    case Modality::multimodal: return "multimodal";
  }
  return "?";
}

namespace {

std::string lstm_key(std::size_t layer, bool fwd, const char* part) {
  return "lstm" + std::to_string(layer) + (fwd ? ".fwd." : ".bwd.") + part;
}

}  // namespace

numkit::TensorMap init_params(const ModelConfig& cfg, std::uint64_t seed) {
  validate_config(cfg);
  Rng rng(seed);
  auto xavier = [&rng](std::size_t fan_in, std::size_t fan_out) {
    Tensor t(fan_in, fan_out);
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : t.data()) v = rng.uniform(-a, a);
    return t;
  };

  TensorMap p;
  p["qffn.W"] = xavier(cfg.d_text, cfg.d_attn);
  p["qffn.b"] = Tensor(1, cfg.d_attn);
  p["kvffn.W"] = xavier(cfg.d_vis, cfg.d_attn);
  p["kvffn.b"] = Tensor(1, cfg.d_attn);

  const std::size_t h = cfg.lstm_hidden;
  std::size_t in_dim = cfg.d_text + cfg.d_attn;
  for (std::size_t l = 0; l < cfg.lstm_layers; ++l) {
    for (bool fwd : {true, false}) {
      p[lstm_key(l, fwd, "Wx")] = xavier(in_dim, 4 * h);
      p[lstm_key(l, fwd, "Wh")] = xavier(h, 4 * h);
      p[lstm_key(l, fwd, "b")] = Tensor(1, 4 * h);
    }
    in_dim = 2 * h;
  }

  p["mlp.W1"] = xavier(2 * h, cfg.mlp_hidden);
  p["mlp.b1"] = Tensor(1, cfg.mlp_hidden);
  p["mlp.W2"] = xavier(cfg.mlp_hidden, 2);
  p["mlp.b2"] = Tensor(1, 2);
  return p;
}

ModelConfig config_from_params(const numkit::TensorMap& params) {
  check_params(params);
  ModelConfig cfg;
  cfg.d_text = params.at("qffn.W").rows();
  cfg.d_vis = params.at("kvffn.W").rows();
  cfg.d_attn = params.at("qffn.W").cols();
  cfg.lstm_hidden = params.at("lstm0.fwd.Wh").rows();
  cfg.mlp_hidden = params.at("mlp.W1").cols();
  cfg.lstm_layers = 0;
  while (params.contains(lstm_key(cfg.lstm_layers, true, "Wx"))) {
    ++cfg.lstm_layers;
  }
  return cfg;
}

void check_params(const numkit::TensorMap& params) {
  for (const char* key : {"qffn.W", "qffn.b", "kvffn.W", "kvffn.b",
                          "lstm0.fwd.Wx", "mlp.W1", "mlp.b1", "mlp.W2",
                          "mlp.b2"}) {
    if (!params.contains(key)) {
      throw DataError("model parameters: missing tensor '" + std::string(key) + "'");
    }
  }
  for (const auto& [name, t] : params) {
    if (!t.all_finite()) {
      throw DataError("model parameters: tensor '" + name + "' is non-finite");
    }
  }
  if (params.at("qffn.W").cols() != params.at("kvffn.W").cols()) {
    throw DataError("model parameters: qffn and kvffn output widths differ");
  }
  if (params.at("mlp.W2").cols() != 2) {
    throw DataError("model parameters: boundary head must emit 2 logits");
  }
}

ParamIds register_params(Tape& tape, const numkit::TensorMap& params) {
  ParamIds ids;
  for (const auto& [name, t] : params) ids[name] = tape.param(name, t);
  return ids;
}

std::pair<Tensor, Tensor> cross_modal_attention(const Tensor& q,
                                                const Tensor& K,
                                                const Tensor& V) {
  if (K.rows() == 0) throw ShapeError("cross_modal_attention: empty key set");
  numkit::check_shapes(q.rows() == 1 && q.cols() == K.cols(),
                       "cross_modal_attention", q, K);
  numkit::check_shapes(K.rows() == V.rows(), "cross_modal_attention", K, V);
  Tape tape;
  const Tape::Id qi = tape.input(q);
  const Tape::Id ki = tape.input(K);
  const Tape::Id vi = tape.input(V);
  const Tape::Id scores = tape.scale(
      tape.matmul(qi, tape.transpose(ki)),
      1.0 / std::sqrt(static_cast<double>(q.cols())));
  const Tape::Id attn = tape.softmax_rows(scores);
  const Tape::Id vr = tape.weighted_rows_sum(attn, vi);
  return {tape.value(attn), tape.value(vr)};
}

FusionOutput fuse(Tape& tape, const ParamIds& params,
                  const corpus::AlignedEpisode& ae) {
  const std::size_t n = ae.episode.n_sentences();
  const std::size_t d_attn = tape.value(params.at("qffn.W")).cols();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(d_attn));

  const Tape::Id sent = tape.input(ae.episode.sent_emb.to_tensor());
  const Tape::Id q_all = tape.add_rowvec(
      tape.matmul(sent, params.at("qffn.W")), params.at("qffn.b"));

  // Project every frame once; per-sentence keys are row slices of this.
  Tape::Id kv_all = -1;
  if (ae.episode.n_frames() > 0) {
    const Tape::Id frames = tape.input(ae.episode.frame_emb.to_tensor());
    kv_all = tape.add_rowvec(tape.matmul(frames, params.at("kvffn.W")),
                             params.at("kvffn.b"));
  }

  FusionOutput out;
  out.attention.resize(n);
  std::vector<Tape::Id> vr_rows(n);
  const Tape::Id zero_row = tape.input(Tensor(1, d_attn));
  for (std::size_t i = 0; i < n; ++i) {
    const corpus::FrameRange r = ae.frame_ranges[i];
    if (r.empty()) {
      vr_rows[i] = zero_row;
      continue;
    }
    const Tape::Id kv = tape.slice_rows(kv_all, r.begin, r.end);
    const Tape::Id qi = tape.slice_rows(q_all, i, i + 1);
    const Tape::Id scores =
        tape.scale(tape.matmul(qi, tape.transpose(kv)), inv_sqrt_dk);
    const Tape::Id attn = tape.softmax_rows(scores);
    vr_rows[i] = tape.weighted_rows_sum(attn, kv);
    out.attention[i] = tape.value(attn);
  }
  out.vr = tape.stack_rows(vr_rows);
  return out;
}

Tape::Id contextualize(Tape& tape, const ParamIds& params, Tape::Id feats,
                       std::size_t layers) {
  const std::size_t n = tape.value(feats).rows();
  Tape::Id layer_in = feats;

  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t h =
        tape.value(params.at(lstm_key(l, true, "Wh"))).rows();
    std::vector<Tape::Id> fwd_h(n), bwd_h(n);

    for (bool fwd : {true, false}) {
      const Tape::Id wx = params.at(lstm_key(l, fwd, "Wx"));
      const Tape::Id wh = params.at(lstm_key(l, fwd, "Wh"));
      const Tape::Id b = params.at(lstm_key(l, fwd, "b"));
      Tape::Id h_prev = tape.input(Tensor(1, h));
      Tape::Id c_prev = tape.input(Tensor(1, h));
      for (std::size_t step = 0; step < n; ++step) {
        const std::size_t t = fwd ? step : n - 1 - step;
        const Tape::Id x_t = tape.slice_rows(layer_in, t, t + 1);
        const Tape::Id gates = tape.add_rowvec(
            tape.add(tape.matmul(x_t, wx), tape.matmul(h_prev, wh)), b);
        const Tape::Id gi = tape.sigmoid(tape.slice_cols(gates, 0, h));
        const Tape::Id gf = tape.sigmoid(tape.slice_cols(gates, h, 2 * h));
        const Tape::Id gg = tape.tanh(tape.slice_cols(gates, 2 * h, 3 * h));
        const Tape::Id go = tape.sigmoid(tape.slice_cols(gates, 3 * h, 4 * h));
        const Tape::Id c_t =
            tape.add(tape.mul(gf, c_prev), tape.mul(gi, gg));
        const Tape::Id h_t = tape.mul(go, tape.tanh(c_t));
        (fwd ? fwd_h : bwd_h)[t] = h_t;
        h_prev = h_t;
        c_prev = c_t;
      }
    }

    std::vector<Tape::Id> rows(n);
    for (std::size_t t = 0; t < n; ++t) {
      rows[t] = tape.concat_cols(fwd_h[t], bwd_h[t]);
    }
    layer_in = tape.stack_rows(rows);
  }
  return layer_in;
}

ForwardGraph build_forward(Tape& tape, const ParamIds& params,
                           const corpus::AlignedEpisode& ae, Modality mode) {
  const std::size_t n = ae.episode.n_sentences();
  if (n < 2) throw DataError("episode " + ae.episode.id + ": needs 2 sentences");
  const std::size_t d_text = tape.value(params.at("qffn.W")).rows();
  const std::size_t d_attn = tape.value(params.at("qffn.W")).cols();

  ForwardGraph out;
  Tape::Id tr;
  Tape::Id vr;
  if (mode == Modality::text) {
    tr = tape.input(ae.episode.sent_emb.to_tensor());
    vr = tape.input(Tensor(n, d_attn));
  } else if (mode == Modality::visual) {
    corpus::AlignedEpisode blanked = ae;
    blanked.episode.sent_emb = corpus::EmbMatrix(n, d_text);
    FusionOutput fused = fuse(tape, params, blanked);
    vr = fused.vr;
    out.attention = std::move(fused.attention);
    tr = tape.input(Tensor(n, d_text));
  } else {
    tr = tape.input(ae.episode.sent_emb.to_tensor());
    FusionOutput fused = fuse(tape, params, ae);
    vr = fused.vr;
    out.attention = std::move(fused.attention);
  }

  const Tape::Id feats = tape.concat_cols(tr, vr);
  std::size_t layers = 0;
  while (params.contains(lstm_key(layers, true, "Wx"))) ++layers;
  const Tape::Id hidden = contextualize(tape, params, feats, layers);

  const Tape::Id head_in = tape.slice_rows(hidden, 0, n - 1);
  const Tape::Id z1 = tape.tanh(tape.add_rowvec(
      tape.matmul(head_in, params.at("mlp.W1")), params.at("mlp.b1")));
  out.logits = tape.add_rowvec(tape.matmul(z1, params.at("mlp.W2")),
                               params.at("mlp.b2"));

  const Tape::Id lse = tape.log_sum_exp_rows(out.logits);
  const Tape::Id boundary_logit = tape.slice_cols(out.logits, 1, 2);
  out.probs = tape.exp(tape.sub(boundary_logit, lse));
  return out;
}

ForwardResult forward(const numkit::TensorMap& params,
                      const corpus::AlignedEpisode& ae, Modality mode) {
  Tape tape;
  const ParamIds ids = register_params(tape, params);
  ForwardGraph g = build_forward(tape, ids, ae, mode);
  ForwardResult res;
  res.attention = std::move(g.attention);
  const Tensor& p = tape.value(g.probs);
  res.probs.assign(p.data().begin(), p.data().end());
  return res;
}

}  // namespace topseg::model
