#include "topseg/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "topseg/error.hpp"
#include "topseg/rng.hpp"
#include "topseg/tape.hpp"

namespace topseg::adapt {

using corpus::AlignedEpisode;
using numkit::Rng;
using numkit::Tape;
using numkit::Tensor;
using numkit::TensorMap;

void validate_config(const AdaptConfig& cfg) {
  if (cfg.lr <= 0) throw DataError("adapt config: lr must be positive");
  if (cfg.temperature <= 0) {
    throw DataError("adapt config: temperature must be positive");
  }
  if (cfg.pair_batch < 2) {
    throw DataError("adapt config: pair_batch must be at least 2");
  }
}

Objective objective_from_string(const std::string& s) {
  if (s == "dual") return Objective::dual;
  if (s == "intra") return Objective::intra;
  if (s == "cross") return Objective::cross;
  throw UsageError("unknown objective '" + s + "' (dual|intra|cross)");
}

std::string to_string(Objective o) {
  switch (o) {
    case Objective::dual: return "dual";
    case Objective::intra: return "intra";
    case Objective::cross: return "cross";
  }
  return "?";
}

namespace {

const char* kHeadNames[] = {"qffn.W", "qffn.b", "kvffn.W", "kvffn.b"};

model::ParamIds register_heads(Tape& tape, const TensorMap& params) {
  model::ParamIds ids;
  for (const char* name : kHeadNames) {
    const auto it = params.find(name);
    if (it == params.end()) {
      throw DataError("adaptation: parameters lack tensor '" + std::string(name) + "'");
    }
    ids[name] = tape.param(name, it->second);
  }
  return ids;
}

// loss = sum_i [ LSE(S_i,:) - S_ii ] for S = rows * cols^T / T.
Tape::Id infonce(Tape& tape, std::span<const Tape::Id> rows,
                 std::span<const Tape::Id> cols, double temperature) {
  const std::size_t b = rows.size();
  const Tape::Id s = tape.scale(
      tape.matmul(tape.stack_rows(rows), tape.transpose(tape.stack_rows(cols))),
      1.0 / temperature);
  const Tape::Id lse = tape.log_sum_exp_rows(s);
  const Tape::Id diag =
      tape.row_sums(tape.mul(s, tape.input(Tensor::identity(b))));
  return tape.sum_all(tape.sub(lse, diag));
}

Tape::Id build_loss(Tape& tape, const model::ParamIds& ids,
                    const std::vector<RawPair>& batch, double temperature,
                    Objective objective) {
  if (batch.empty()) throw DataError("contrastive loss: empty batch");
  const bool want_intra = objective != Objective::cross;
  const bool want_cross = objective != Objective::intra;

  std::vector<Tape::Id> anchors, positives, queries, pooled;
  for (const RawPair& p : batch) {
    if (p.fr.rows() == 0) {
      throw DataError("contrastive loss: pair with no frames");
    }
    if (p.anchor >= p.fr.rows() || p.positive >= p.fr.rows()) {
      throw DataError("contrastive loss: sampled frame out of range");
    }
    const Tape::Id fr = tape.input(p.fr);
    const Tape::Id k_all = tape.add_rowvec(
        tape.matmul(fr, ids.at("kvffn.W")), ids.at("kvffn.b"));
    if (want_intra) {
      anchors.push_back(tape.l2_normalize_rows(
          tape.slice_rows(k_all, p.anchor, p.anchor + 1)));
      positives.push_back(tape.l2_normalize_rows(
          tape.slice_rows(k_all, p.positive, p.positive + 1)));
    }
    if (want_cross) {
      const Tape::Id tr = tape.input(p.tr);
      queries.push_back(tape.l2_normalize_rows(tape.add_rowvec(
          tape.matmul(tr, ids.at("qffn.W")), ids.at("qffn.b"))));
      pooled.push_back(tape.l2_normalize_rows(tape.mean_rows(k_all)));
    }
  }

  Tape::Id loss = -1;
  if (want_intra) loss = infonce(tape, anchors, positives, temperature);
  if (want_cross) {
    const Tape::Id cross = infonce(tape, queries, pooled, temperature);
    loss = want_intra ? tape.add(loss, cross) : cross;
  }
  return loss;
}

double loss_value(const std::vector<RawPair>& batch, double temperature,
                  const TensorMap& params, Objective objective) {
  Tape tape;
  const model::ParamIds ids = register_heads(tape, params);
  return tape.value(build_loss(tape, ids, batch, temperature, objective)).item();
}

struct PairRef {
  std::size_t episode = 0;
  std::size_t sentence = 0;
};

std::vector<PairRef> collect_pairs(const std::vector<AlignedEpisode>& target) {
  std::vector<PairRef> refs;
  for (std::size_t e = 0; e < target.size(); ++e) {
    for (std::size_t i = 0; i < target[e].episode.n_sentences(); ++i) {
      if (!target[e].frame_ranges[i].empty()) refs.push_back({e, i});
    }
  }
  return refs;
}

RawPair make_pair(const AlignedEpisode& ae, std::size_t sentence, Rng& rng) {
  const corpus::FrameRange r = ae.frame_ranges[sentence];
  RawPair p;
  p.tr = ae.episode.sent_emb.rows_tensor(sentence, sentence + 1);
  p.fr = ae.episode.frame_emb.rows_tensor(r.begin, r.end);
  const std::size_t m = r.size();
  if (m >= 2) {
    p.anchor = rng.below(m);
    p.positive = rng.below(m - 1);
    if (p.positive >= p.anchor) ++p.positive;
  }
  return p;
}

}  // namespace

ProjectedPair project(const Tensor& tr, const Tensor& fr, const TensorMap& params) {
  if (fr.rows() == 0) throw ShapeError("project: empty frame set");
  Tape tape;
  const model::ParamIds ids = register_heads(tape, params);
  const Tape::Id q = tape.add_rowvec(
      tape.matmul(tape.input(tr), ids.at("qffn.W")), ids.at("qffn.b"));
  const Tape::Id k = tape.add_rowvec(
      tape.matmul(tape.input(fr), ids.at("kvffn.W")), ids.at("kvffn.b"));
  return {tape.value(q), tape.value(k)};
}

double intra_loss(const std::vector<RawPair>& batch, double temperature,
                  const TensorMap& params) {
  return loss_value(batch, temperature, params, Objective::intra);
}

double cross_loss(const std::vector<RawPair>& batch, double temperature,
                  const TensorMap& params) {
  return loss_value(batch, temperature, params, Objective::cross);
}

double dual_loss(const std::vector<RawPair>& batch, double temperature,
                 const TensorMap& params) {
  return loss_value(batch, temperature, params, Objective::dual);
}

AdaptResult adapt(TensorMap params, const std::vector<AlignedEpisode>& target,
                  const std::vector<AlignedEpisode>& source_train,
                  const std::vector<AlignedEpisode>& source_val,
                  const AdaptConfig& acfg, const train::TrainConfig& tcfg,
                  Objective objective) {
  validate_config(acfg);
  const std::vector<PairRef> refs = collect_pairs(target);
  if (refs.empty()) {
    throw DataError("adaptation: target corpus has no sentence with aligned frames");
  }

  Rng seed_seq(acfg.seed);
  Rng probe_rng(seed_seq.next());
  Rng train_rng(seed_seq.next());

  // Fixed probe batch: the per-epoch loss diagnostic is measured on the
  // same pairs and frame choices throughout.
  std::vector<RawPair> probe;
  {
    std::vector<std::size_t> idx(refs.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = idx.size(); i > 1; --i) {
      std::swap(idx[i - 1], idx[probe_rng.below(i)]);
    }
    const std::size_t take = std::min(acfg.pair_batch, idx.size());
    for (std::size_t i = 0; i < take; ++i) {
      const PairRef& r = refs[idx[i]];
      probe.push_back(make_pair(target[r.episode], r.sentence, probe_rng));
    }
  }

  AdaptResult result;
  result.step1_history.push_back(
      {0, 0.0, loss_value(probe, acfg.temperature, params, objective)});

  std::vector<std::size_t> order(refs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 1; epoch <= acfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[train_rng.below(i)]);
    }

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += acfg.pair_batch) {
      const std::size_t stop = std::min(order.size(), start + acfg.pair_batch);
      std::vector<RawPair> batch;
      batch.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        const PairRef& r = refs[order[i]];
        batch.push_back(make_pair(target[r.episode], r.sentence, train_rng));
      }

      Tape tape;
      const model::ParamIds ids = register_heads(tape, params);
      const Tape::Id loss =
          build_loss(tape, ids, batch, acfg.temperature, objective);
      loss_sum += tape.value(loss).item();
      const numkit::GradMap grads = tape.backward(loss);
      for (const char* name : kHeadNames) {
        Tensor& p = params.at(name);
        const Tensor& g = grads.at(name);
        for (std::size_t i = 0; i < p.size(); ++i) {
          p.data()[i] -= acfg.lr * g.data()[i];
        }
      }
    }

    result.step1_history.push_back(
        {epoch, loss_sum / static_cast<double>(order.size()),
         loss_value(probe, acfg.temperature, params, objective)});
  }

  result.retrain =
      train::train_supervised(source_train, source_val, tcfg, std::move(params));
  return result;
}

void write_step1_csv(const std::vector<AdaptEpochStats>& history,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << "epoch,mean_pair_loss,probe_loss\n";
  out.precision(17);
  for (const AdaptEpochStats& s : history) {
    out << s.epoch << ',' << s.mean_pair_loss << ',' << s.probe_loss << '\n';
  }
}

}  // namespace topseg::adapt
