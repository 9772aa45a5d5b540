#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "support/episodes.hpp"
#include "support/tmpdir.hpp"
#include "topseg/adapt.hpp"
#include "topseg/error.hpp"
#include "topseg/model.hpp"
#include "topseg/rng.hpp"
#include "topseg/synth.hpp"
#include "topseg/tensor.hpp"

using namespace topseg::adapt;
using topseg::DataError;
using topseg::ShapeError;
using topseg::UsageError;
using topseg::corpus::AlignedEpisode;
using topseg::corpus::align_frames;
using topseg::model::ModelConfig;
using topseg::model::init_params;
using topseg::numkit::Rng;
using topseg::numkit::Tensor;
using topseg::numkit::TensorMap;
using topseg::train::TrainConfig;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.d_text = 6;
  cfg.d_vis = 4;
  cfg.d_attn = 4;
  cfg.lstm_layers = 1;
  cfg.lstm_hidden = 3;
  cfg.mlp_hidden = 4;
  return cfg;
}

std::vector<AlignedEpisode> tiny_corpus(Rng& rng, std::size_t count,
                                        bool labeled) {
  std::vector<AlignedEpisode> out;
  testutil::EpisodeSpec spec;
  spec.n = 6;
  spec.d_text = 6;
  spec.d_vis = 4;
  spec.labeled = labeled;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(testutil::make_episode(
        rng, (labeled ? "s" : "t") + std::to_string(i), spec));
  }
  return out;
}

// Step 2 at this rate cannot move any head entry by a representable amount
// relative to the step-1 values; residues sit many orders below (see the
// 1e-250 checks).
TrainConfig frozen_step2() {
  TrainConfig tcfg;
  tcfg.lr = 1e-300;
  tcfg.epochs = 1;
  tcfg.batch_episodes = 8;
  return tcfg;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  }
  return worst;
}

}  // namespace

TEST_CASE("objective names round-trip") {
  for (Objective o : {Objective::dual, Objective::intra, Objective::cross}) {
    CHECK(objective_from_string(to_string(o)) == o);
  }
  CHECK_THROWS_AS(objective_from_string("triple"), UsageError);
}

TEST_CASE("adapt config validation") {
  CHECK_NOTHROW(validate_config(AdaptConfig{}));
  auto broken = [](void (*break_it)(AdaptConfig&)) {
    AdaptConfig cfg;
    break_it(cfg);
    CHECK_THROWS_AS(validate_config(cfg), DataError);
  };
  broken([](AdaptConfig& c) { c.lr = 0.0; });
  broken([](AdaptConfig& c) { c.temperature = -0.5; });
  broken([](AdaptConfig& c) { c.pair_batch = 1; });
}

TEST_CASE("projection applies the shared heads") {
  TensorMap params;
  params["qffn.W"] = Tensor(2, 2);
  params["qffn.b"] = Tensor(1, 2, {3.0, 4.0});
  params["kvffn.W"] = Tensor::identity(2);
  params["kvffn.b"] = Tensor(1, 2, {1.0, 2.0});

  const Tensor tr(1, 2, {9.0, -9.0});
  const Tensor fr(2, 2, {1.0, 0.0, 0.0, 1.0});
  const ProjectedPair pp = project(tr, fr, params);
  CHECK(pp.q == Tensor(1, 2, {3.0, 4.0}));
  CHECK(pp.K == Tensor(2, 2, {2.0, 2.0, 1.0, 3.0}));

  CHECK_THROWS_AS(project(tr, Tensor(0, 2), params), ShapeError);
  params.erase("kvffn.b");
  CHECK_THROWS_AS(project(tr, fr, params), DataError);
}

TEST_CASE("a single pair carries no contrastive signal") {
  const TensorMap params = init_params(tiny_config(), 3);
  RawPair p;
  p.tr = Tensor(1, 6, {1, 2, 3, 4, 5, 6});
  p.fr = Tensor(1, 4, {0.5, -0.5, 0.25, 1.0});
  const std::vector<RawPair> batch{p};
  CHECK(intra_loss(batch, 0.1, params) == 0.0);
  CHECK(cross_loss(batch, 0.1, params) == 0.0);
  CHECK(dual_loss(batch, 0.1, params) == 0.0);
}

TEST_CASE("intra loss on orthogonal pairs hits the closed form") {
  TensorMap params;
  params["qffn.W"] = Tensor(2, 2);
  params["qffn.b"] = Tensor(1, 2);
  params["kvffn.W"] = Tensor::identity(2);
  params["kvffn.b"] = Tensor(1, 2);

  RawPair p1, p2;
  p1.tr = p2.tr = Tensor(1, 2);
  p1.fr = Tensor(2, 2, {1.0, 0.0, 1.0, 0.0});
  p2.fr = Tensor(2, 2, {0.0, 1.0, 0.0, 1.0});
  p1.anchor = p2.anchor = 0;
  p1.positive = p2.positive = 1;

  // Unit diagonal at temperature 0.1: loss = 2 log(1 + e^-10).
  CHECK(intra_loss({p1, p2}, 0.1, params) ==
        doctest::Approx(9.07977984337293e-05).epsilon(1e-9));
}

TEST_CASE("cross loss on an identity similarity block hits the closed form") {
  TensorMap params;
  params["qffn.W"] = Tensor::identity(3);
  params["qffn.b"] = Tensor(1, 3);
  params["kvffn.W"] = Tensor::identity(3);
  params["kvffn.b"] = Tensor(1, 3);

  std::vector<RawPair> batch(3);
  for (std::size_t i = 0; i < 3; ++i) {
    batch[i].tr = Tensor(1, 3);
    batch[i].tr.at(0, i) = 1.0;
    batch[i].fr = batch[i].tr;
  }

  // S = I at temperature 1: loss = 3 (log(e + 2) - 1).
  CHECK(cross_loss(batch, 1.0, params) ==
        doctest::Approx(1.6543341417961526).epsilon(1e-12));
  CHECK(dual_loss(batch, 1.0, params) ==
        doctest::Approx(cross_loss(batch, 1.0, params) +
                        intra_loss(batch, 1.0, params))
            .epsilon(1e-12));
}

TEST_CASE("the dual objective is the sum of its parts") {
  Rng rng(107);
  const TensorMap params = init_params(tiny_config(), 5);
  std::vector<RawPair> batch;
  for (int i = 0; i < 4; ++i) {
    RawPair p;
    p.tr = Tensor(1, 6);
    p.fr = Tensor(3, 4);
    for (double& v : p.tr.data()) v = rng.normal();
    for (double& v : p.fr.data()) v = rng.normal();
    p.anchor = rng.below(3);
    p.positive = rng.below(2);
    if (p.positive >= p.anchor) ++p.positive;
    batch.push_back(std::move(p));
  }

  const double dual = dual_loss(batch, 0.2, params);
  const double parts =
      intra_loss(batch, 0.2, params) + cross_loss(batch, 0.2, params);
  CHECK(dual == doctest::Approx(parts).epsilon(1e-12));
  CHECK(dual >= 0.0);

  SUBCASE("batch order does not matter") {
    std::vector<RawPair> reversed(batch.rbegin(), batch.rend());
    CHECK(dual_loss(reversed, 0.2, params) ==
          doctest::Approx(dual).epsilon(1e-12));
  }

  SUBCASE("power-of-two frame rescaling is invisible past normalization") {
    // Zero biases keep the projection linear, so the scaling is exact.
    std::vector<RawPair> scaled = batch;
    for (RawPair& p : scaled) {
      for (double& v : p.fr.data()) v *= 4.0;
    }
    CHECK(dual_loss(scaled, 0.2, params) == dual);
  }
}

TEST_CASE("losses reject unusable batches") {
  const TensorMap params = init_params(tiny_config(), 7);
  CHECK_THROWS_AS(dual_loss({}, 0.1, params), DataError);

  RawPair no_frames;
  no_frames.tr = Tensor(1, 6);
  no_frames.fr = Tensor(0, 4);
  CHECK_THROWS_AS(dual_loss({no_frames}, 0.1, params), DataError);

  RawPair bad_anchor;
  bad_anchor.tr = Tensor(1, 6);
  bad_anchor.fr = Tensor(2, 4);
  bad_anchor.anchor = 5;
  CHECK_THROWS_AS(dual_loss({bad_anchor}, 0.1, params), DataError);
}

TEST_CASE("zero adaptation epochs reduce to plain supervised training") {
  Rng rng(109);
  const auto target = tiny_corpus(rng, 2, false);
  const auto source = tiny_corpus(rng, 3, true);
  const auto val = tiny_corpus(rng, 1, true);
  const TensorMap params = init_params(tiny_config(), 11);

  AdaptConfig acfg;
  acfg.epochs = 0;
  acfg.pair_batch = 8;
  TrainConfig tcfg;
  tcfg.epochs = 2;
  tcfg.lr = 1e-3;
  tcfg.seed = 21;

  const AdaptResult res = adapt(params, target, source, val, acfg, tcfg);
  const auto plain = topseg::train::train_supervised(source, val, tcfg, params);

  CHECK(res.retrain.model.params == plain.model.params);
  CHECK(res.retrain.model.tau == plain.model.tau);
  REQUIRE(res.step1_history.size() == 1);
  CHECK(res.step1_history[0].epoch == 0);
  CHECK(res.step1_history[0].mean_pair_loss == 0.0);
  CHECK(res.step1_history[0].probe_loss > 0.0);
}

TEST_CASE("step 1 moves only the tensors its objective references") {
  Rng rng(113);
  const auto target = tiny_corpus(rng, 2, false);
  const auto source = tiny_corpus(rng, 2, true);
  const TensorMap params = init_params(tiny_config(), 13);

  AdaptConfig step;
  step.epochs = 2;
  step.pair_batch = 8;
  step.lr = 1e-2;
  AdaptConfig noop = step;
  noop.epochs = 0;

  auto run = [&](const AdaptConfig& acfg, Objective obj) {
    return adapt(params, target, source, {}, acfg, frozen_step2(), obj)
        .retrain.model.params;
  };

  const TensorMap base = run(noop, Objective::dual);
  const TensorMap dual = run(step, Objective::dual);
  const TensorMap intra = run(step, Objective::intra);
  const TensorMap cross = run(step, Objective::cross);

  for (const auto& [name, t] : dual) {
    const bool is_head = name.rfind("qffn.", 0) == 0 || name.rfind("kvffn.", 0) == 0;
    if (!is_head) {
      CHECK(max_abs_diff(t, base.at(name)) <= 1e-250);
      CHECK(max_abs_diff(intra.at(name), base.at(name)) <= 1e-250);
    }
  }
  CHECK(max_abs_diff(dual.at("kvffn.W"), base.at("kvffn.W")) > 1e-8);
  CHECK(max_abs_diff(dual.at("qffn.W"), base.at("qffn.W")) > 1e-8);

  // The intra term never touches the query head; the cross term moves both.
  CHECK(max_abs_diff(intra.at("qffn.W"), base.at("qffn.W")) <= 1e-250);
  CHECK(max_abs_diff(intra.at("kvffn.W"), base.at("kvffn.W")) > 1e-8);
  CHECK(max_abs_diff(cross.at("qffn.W"), base.at("qffn.W")) > 1e-8);
  CHECK(max_abs_diff(cross.at("kvffn.W"), dual.at("kvffn.W")) > 1e-12);
}

TEST_CASE("adaptation is deterministic and tracks a fixed probe") {
  using topseg::corpus::SynthConfig;
  SynthConfig scfg;
  scfg.n_episodes = 3;
  scfg.mean_sentences_per_episode = 10.0;
  scfg.mean_segments_per_episode = 3.0;
  scfg.d_text = 6;
  scfg.d_vis = 4;
  scfg.noise_sigma = 0.1;
  scfg.frames_per_sentence_min = 1;
  scfg.frames_per_sentence_max = 3;
  scfg.seed = 77;
  scfg.labeled = false;
  std::vector<AlignedEpisode> target;
  for (auto& e : synth_corpus(scfg)) target.push_back(align_frames(std::move(e)));

  Rng rng(127);
  const auto source = tiny_corpus(rng, 2, true);
  const TensorMap params = init_params(tiny_config(), 17);

  AdaptConfig acfg;
  acfg.epochs = 3;
  acfg.pair_batch = 16;
  acfg.lr = 3e-3;
  acfg.seed = 9;

  const AdaptResult a = adapt(params, target, source, {}, acfg, frozen_step2());
  const AdaptResult b = adapt(params, target, source, {}, acfg, frozen_step2());

  REQUIRE(a.step1_history.size() == acfg.epochs + 1);
  for (std::size_t i = 0; i < a.step1_history.size(); ++i) {
    CHECK(a.step1_history[i].epoch == i);
    CHECK(a.step1_history[i].mean_pair_loss == b.step1_history[i].mean_pair_loss);
    CHECK(a.step1_history[i].probe_loss == b.step1_history[i].probe_loss);
  }
  CHECK(a.retrain.model.params == b.retrain.model.params);

  // SGD on the heads should pay off on the fixed probe batch.
  CHECK(a.step1_history.back().probe_loss < a.step1_history.front().probe_loss);
}

TEST_CASE("adaptation needs at least one aligned sentence") {
  Rng rng(131);
  const auto source = tiny_corpus(rng, 1, true);
  const TensorMap params = init_params(tiny_config(), 19);

  topseg::corpus::Episode bare;
  bare.id = "frameless";
  bare.sentences = {{0, 0.0, 5.0, {}}, {1, 5.0, 10.0, {}}};
  bare.sent_emb = topseg::corpus::EmbMatrix(2, 6);
  bare.frame_emb = topseg::corpus::EmbMatrix(0, 4);
  const std::vector<AlignedEpisode> target{align_frames(std::move(bare))};

  CHECK_THROWS_AS(
      adapt(params, target, source, {}, AdaptConfig{}, frozen_step2()),
      DataError);
}

TEST_CASE("step-1 history serializes with its leading probe row") {
  testutil::ScopedDir dir("adapt");
  const std::vector<AdaptEpochStats> history{{0, 0.0, 2.5}, {1, 1.25, 2.0}};
  const auto path = dir / "step1.csv";
  write_step1_csv(history, path);
  const std::string text = testutil::slurp(path);
  CHECK(text.rfind("epoch,mean_pair_loss,probe_loss\n", 0) == 0);
  CHECK(text.find("\n0,0,2.5\n") != std::string::npos);
  CHECK(text.find("\n1,1.25,2\n") != std::string::npos);
}
