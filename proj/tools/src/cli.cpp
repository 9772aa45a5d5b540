#include "topseg_cli/cli.hpp"

#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "topseg/adapt.hpp"
#include "topseg/baselines.hpp"
#include "topseg/checkpoint.hpp"
#include "topseg/corpus.hpp"
#include "topseg/error.hpp"
#include "topseg/infer.hpp"
#include "topseg/metrics.hpp"
#include "topseg/model.hpp"
#include "topseg/parallel.hpp"
#include "topseg/rng.hpp"
#include "topseg/synth.hpp"
#include "topseg/train.hpp"

namespace topseg::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json load_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

template <class T>
void from_key(const json& j, const char* key, T& out, const fs::path& src) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw DataError(src.string() + ": key '" + std::string(key) + "': " + e.what());
  }
}

std::string hash_hex(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open for hashing: " + file.string());
  std::uint64_t h = 1469598103934665603ull;
  char buf[1 << 16];
  for (;;) {
    in.read(buf, sizeof buf);
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
    if (got < static_cast<std::streamsize>(sizeof buf)) break;
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

std::string timestamp_utc() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Every producing subcommand leaves a run_manifest.json beside its outputs:
// the command, its config and seed, the inputs it read, and a hash per
// artifact so a rerun can be checked for bit-identity.
void write_run_manifest(const fs::path& dir, const std::string& command,
                        const std::string& config_path, const json& seed,
                        const std::vector<std::string>& inputs,
                        const std::vector<std::string>& outputs) {
  json j;
  j["command"] = command;
  j["config"] = config_path.empty() ? json() : json(config_path);
  j["seed"] = seed;
  j["inputs"] = inputs;
  json outs = json::array();
  for (const std::string& rel : outputs) {
    outs.push_back({{"path", rel}, {"fnv1a", hash_hex(dir / rel)}});
  }
  j["outputs"] = outs;
  j["timestamp"] = timestamp_utc();
  const fs::path path = dir / "run_manifest.json";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
}

struct Sidecar {
  double tau = 0.5;
  model::Modality modality = model::Modality::multimodal;
  double source_mean_sentences = 0;  // 0 when unknown
};

fs::path sidecar_path(const fs::path& ckpt) {
  return fs::path(ckpt.string() + ".json");
}

Sidecar read_sidecar(const fs::path& ckpt) {
  const fs::path p = sidecar_path(ckpt);
  const json j = load_json(p);
  Sidecar s;
  from_key(j, "tau", s.tau, p);
  if (!j.contains("modality")) {
    throw DataError(p.string() + ": missing 'modality'");
  }
  try {
    s.modality = model::modality_from_string(j.at("modality").get<std::string>());
  } catch (const UsageError& e) {
    throw DataError(p.string() + ": " + e.what());
  }
  from_key(j, "source_mean_sentences", s.source_mean_sentences, p);
  return s;
}

void write_sidecar(const fs::path& ckpt, const Sidecar& s,
                   const numkit::TensorMap& params) {
  const model::ModelConfig mc = model::config_from_params(params);
  const json j{
      {"tau", s.tau},
      {"modality", model::to_string(s.modality)},
      {"model",
       {{"d_text", mc.d_text},
        {"d_vis", mc.d_vis},
        {"d_attn", mc.d_attn},
        {"lstm_layers", mc.lstm_layers},
        {"lstm_hidden", mc.lstm_hidden},
        {"mlp_hidden", mc.mlp_hidden}}},
      {"source_mean_sentences", s.source_mean_sentences},
  };
  const fs::path p = sidecar_path(ckpt);
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + p.string());
  out << j.dump(2) << '\n';
}

double mean_sentences(const std::vector<corpus::AlignedEpisode>& eps) {
  double s = 0;
  for (const corpus::AlignedEpisode& ae : eps) {
    s += static_cast<double>(ae.episode.n_sentences());
  }
  return s / static_cast<double>(eps.size());
}

std::vector<std::string> write_prediction_files(
    const fs::path& dir, const std::vector<infer::Prediction>& preds) {
  std::set<std::string> seen;
  std::vector<std::string> rels;
  for (const infer::Prediction& p : preds) {
    if (!seen.insert(p.episode_id).second) {
      throw DataError("duplicate episode id: " + p.episode_id);
    }
    const std::string rel = p.episode_id + ".jsonl";
    infer::write_predictions(p, dir / rel);
    rels.push_back(rel);
  }
  return rels;
}

std::vector<corpus::AlignedEpisode> load_nonempty_split(
    const corpus::Manifest& m, const std::string& split) {
  std::vector<corpus::AlignedEpisode> eps = corpus::load_split(m, split);
  if (eps.empty()) throw DataError("split '" + split + "' has no episodes");
  return eps;
}

corpus::DomainShift shift_from_string(const std::string& s) {
  if (s == "none") return corpus::DomainShift::none;
  if (s == "long") return corpus::DomainShift::long_form;
  throw UsageError("unknown domain shift '" + s + "' (none|long)");
}

// ---- synth ----------------------------------------------------------

struct SynthArgs {
  std::string out, config;
  corpus::SynthConfig cfg;
  std::string shift = "none";
  double val_frac = 0.2, test_frac = 0.2;
  bool unlabeled_train = false;
  CLI::App* sub = nullptr;
};

void add_synth(CLI::App& app, SynthArgs& a) {
  CLI::App* s = app.add_subcommand("synth", "generate a synthetic corpus");
  a.sub = s;
  s->add_option("--out", a.out, "output corpus directory")->required();
  s->add_option("--config", a.config, "SynthConfig JSON file");
  s->add_option("--episodes", a.cfg.n_episodes, "episode count");
  s->add_option("--mean-sentences", a.cfg.mean_sentences_per_episode,
                "mean sentences per episode");
  s->add_option("--mean-segments", a.cfg.mean_segments_per_episode,
                "mean segments per episode");
  s->add_option("--d-text", a.cfg.d_text, "sentence embedding width");
  s->add_option("--d-vis", a.cfg.d_vis, "frame embedding width");
  s->add_option("--noise-sigma", a.cfg.noise_sigma, "emission noise scale");
  s->add_option("--irrelevant-frame-frac", a.cfg.irrelevant_frame_frac,
                "fraction of frames drawn off-topic");
  s->add_option("--frames-min", a.cfg.frames_per_sentence_min,
                "min frames per sentence");
  s->add_option("--frames-max", a.cfg.frames_per_sentence_max,
                "max frames per sentence");
  s->add_option("--shift", a.shift, "domain shift: none|long")
      ->check(CLI::IsMember({"none", "long"}));
  s->add_option("--seed", a.cfg.seed, "generator seed");
  s->add_option("--text-latent-frac", a.cfg.text_latent_frac,
                "topic fraction visible to text");
  s->add_option("--vis-latent-frac", a.cfg.vis_latent_frac,
                "topic fraction visible to vision");
  s->add_option("--val-frac", a.val_frac, "fraction of episodes in the val split");
  s->add_option("--test-frac", a.test_frac, "fraction of episodes in the test split");
  s->add_flag("--unlabeled-train", a.unlabeled_train,
              "strip boundary labels from the train split");
}

int do_synth(SynthArgs& a) {
  if (!a.config.empty()) {
    const json j = load_json(a.config);
    const fs::path p = a.config;
    // Flags win over the file.
    auto unset = [&](const char* flag) { return a.sub->count(flag) == 0; };
    if (unset("--episodes")) from_key(j, "n_episodes", a.cfg.n_episodes, p);
    if (unset("--mean-sentences")) {
      from_key(j, "mean_sentences_per_episode", a.cfg.mean_sentences_per_episode, p);
    }
    if (unset("--mean-segments")) {
      from_key(j, "mean_segments_per_episode", a.cfg.mean_segments_per_episode, p);
    }
    if (unset("--d-text")) from_key(j, "d_text", a.cfg.d_text, p);
    if (unset("--d-vis")) from_key(j, "d_vis", a.cfg.d_vis, p);
    if (unset("--noise-sigma")) from_key(j, "noise_sigma", a.cfg.noise_sigma, p);
    if (unset("--irrelevant-frame-frac")) {
      from_key(j, "irrelevant_frame_frac", a.cfg.irrelevant_frame_frac, p);
    }
    if (unset("--frames-min")) {
      from_key(j, "frames_per_sentence_min", a.cfg.frames_per_sentence_min, p);
    }
    if (unset("--frames-max")) {
      from_key(j, "frames_per_sentence_max", a.cfg.frames_per_sentence_max, p);
    }
    if (unset("--shift")) from_key(j, "domain_shift", a.shift, p);
    if (unset("--seed")) from_key(j, "seed", a.cfg.seed, p);
    if (unset("--text-latent-frac")) {
      from_key(j, "text_latent_frac", a.cfg.text_latent_frac, p);
    }
    if (unset("--vis-latent-frac")) {
      from_key(j, "vis_latent_frac", a.cfg.vis_latent_frac, p);
    }
    if (unset("--val-frac")) from_key(j, "val_frac", a.val_frac, p);
    if (unset("--test-frac")) from_key(j, "test_frac", a.test_frac, p);
    if (unset("--unlabeled-train")) {
      from_key(j, "unlabeled_train", a.unlabeled_train, p);
    }
  }
  a.cfg.domain_shift = shift_from_string(a.shift);
  if (a.val_frac < 0 || a.test_frac < 0 || a.val_frac + a.test_frac > 1.0) {
    throw UsageError("val/test fractions must be nonnegative and sum to <= 1");
  }

  std::vector<corpus::Episode> episodes = corpus::synth_corpus(a.cfg);
  const std::size_t n = episodes.size();
  const auto n_val = static_cast<std::size_t>(std::llround(a.val_frac * static_cast<double>(n)));
  const auto n_test = static_cast<std::size_t>(std::llround(a.test_frac * static_cast<double>(n)));
  if (n_val + n_test > n) throw UsageError("val/test fractions leave no train episodes");
  const std::size_t n_train = n - n_val - n_test;

  const fs::path out = a.out;
  fs::create_directories(out);
  corpus::Manifest m;
  m.root = out;
  std::vector<std::string> outputs;
  for (std::size_t i = 0; i < n; ++i) {
    corpus::Episode& ep = episodes[i];
    const std::string split =
        i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
    if (a.unlabeled_train && split == "train") {
      for (corpus::Sentence& s : ep.sentences) s.boundary.reset();
    }
    corpus::save_episode(ep, out / ep.id);
    m.entries.push_back({ep.id, split});
    for (const char* f : {"meta.json", "sentences.jsonl", "frames.jsonl",
                          "sent_emb.bin", "frame_emb.bin"}) {
      outputs.push_back(ep.id + "/" + f);
    }
  }
  corpus::save_manifest(m, out / "corpus.json");
  outputs.push_back("corpus.json");
  write_run_manifest(out, "synth", a.config, json(a.cfg.seed), {}, outputs);
  return 0;
}

// ---- train ----------------------------------------------------------

struct TrainArgs {
  std::string corpus, out, config, mode = "multimodal";
  model::ModelConfig mcfg;
  train::TrainConfig tcfg;
  std::uint64_t init_seed = 0;
  CLI::App* sub = nullptr;
};

void add_train(CLI::App& app, TrainArgs& a) {
  CLI::App* s = app.add_subcommand("train", "supervised training on a labeled corpus");
  a.sub = s;
  s->add_option("--corpus", a.corpus, "corpus.json of the source corpus")->required();
  s->add_option("--out", a.out, "output directory")->required();
  s->add_option("--config", a.config, "train config JSON file");
  s->add_option("--d-attn", a.mcfg.d_attn, "attention width");
  s->add_option("--lstm-layers", a.mcfg.lstm_layers, "BiLSTM layer count");
  s->add_option("--lstm-hidden", a.mcfg.lstm_hidden, "BiLSTM hidden width");
  s->add_option("--mlp-hidden", a.mcfg.mlp_hidden, "head hidden width");
  s->add_option("--lr", a.tcfg.lr, "Adam learning rate");
  s->add_option("--batch", a.tcfg.batch_episodes, "episodes per Adam step");
  s->add_option("--epochs", a.tcfg.epochs, "training epochs");
  s->add_option("--seed", a.tcfg.seed, "shuffle seed");
  s->add_option("--init-seed", a.init_seed, "parameter init seed (default: --seed)");
  s->add_option("--mode", a.mode, "modality: text|visual|multimodal")
      ->check(CLI::IsMember({"text", "visual", "multimodal"}));
}

int do_train(TrainArgs& a) {
  bool init_seed_given = a.sub->count("--init-seed") > 0;
  if (!a.config.empty()) {
    const json j = load_json(a.config);
    const fs::path p = a.config;
    auto unset = [&](const char* flag) { return a.sub->count(flag) == 0; };
    if (unset("--d-attn")) from_key(j, "d_attn", a.mcfg.d_attn, p);
    if (unset("--lstm-layers")) from_key(j, "lstm_layers", a.mcfg.lstm_layers, p);
    if (unset("--lstm-hidden")) from_key(j, "lstm_hidden", a.mcfg.lstm_hidden, p);
    if (unset("--mlp-hidden")) from_key(j, "mlp_hidden", a.mcfg.mlp_hidden, p);
    if (unset("--lr")) from_key(j, "lr", a.tcfg.lr, p);
    if (unset("--batch")) from_key(j, "batch_episodes", a.tcfg.batch_episodes, p);
    if (unset("--epochs")) from_key(j, "epochs", a.tcfg.epochs, p);
    if (unset("--seed")) from_key(j, "seed", a.tcfg.seed, p);
    if (unset("--init-seed")) from_key(j, "init_seed", a.init_seed, p);
    if (unset("--mode")) from_key(j, "mode", a.mode, p);
    init_seed_given = init_seed_given || j.contains("init_seed");
  }
  a.tcfg.mode = model::modality_from_string(a.mode);
  if (!init_seed_given) a.init_seed = a.tcfg.seed;

  const corpus::Manifest m = corpus::load_manifest(a.corpus);
  auto train_eps = load_nonempty_split(m, "train");
  auto val_eps = corpus::load_split(m, "val");
  a.mcfg.d_text = train_eps[0].episode.sent_emb.cols();
  a.mcfg.d_vis = train_eps[0].episode.frame_emb.cols();
  model::validate_config(a.mcfg);

  numkit::TensorMap params = model::init_params(a.mcfg, a.init_seed);
  train::TrainResult result =
      train::train_supervised(train_eps, val_eps, a.tcfg, std::move(params));

  const fs::path out = a.out;
  fs::create_directories(out);
  numkit::save_checkpoint(out / "checkpoint.tsg", result.model.params);
  write_sidecar(out / "checkpoint.tsg",
                {result.model.tau, a.tcfg.mode, mean_sentences(train_eps)},
                result.model.params);
  train::write_history_csv(result.history, out / "history.csv");
  write_run_manifest(out, "train", a.config, json(a.tcfg.seed), {a.corpus},
                     {"checkpoint.tsg", "checkpoint.tsg.json", "history.csv"});
  return 0;
}

// ---- adapt ----------------------------------------------------------

struct AdaptArgs {
  std::string checkpoint, target, source, out, config, objective = "dual";
  adapt::AdaptConfig acfg;
  train::TrainConfig tcfg;
  bool retune_target_val = false;
  CLI::App* sub = nullptr;
};

void add_adapt(CLI::App& app, AdaptArgs& a) {
  CLI::App* s = app.add_subcommand(
      "adapt", "unsupervised adaptation to a target corpus, then source re-training");
  a.sub = s;
  s->add_option("--checkpoint", a.checkpoint, "input checkpoint")->required();
  s->add_option("--target", a.target, "corpus.json of the unlabeled target")->required();
  s->add_option("--source", a.source, "corpus.json of the labeled source")->required();
  s->add_option("--out", a.out, "output directory")->required();
  s->add_option("--config", a.config, "adapt config JSON file");
  s->add_option("--objective", a.objective, "contrastive objective: dual|intra|cross")
      ->check(CLI::IsMember({"dual", "intra", "cross"}));
  s->add_option("--lr", a.acfg.lr, "step-1 SGD learning rate");
  s->add_option("--pair-batch", a.acfg.pair_batch, "pairs per step-1 batch");
  s->add_option("--temperature", a.acfg.temperature, "InfoNCE temperature");
  s->add_option("--epochs", a.acfg.epochs, "step-1 epochs");
  s->add_option("--seed", a.acfg.seed, "step-1 sampling seed");
  s->add_option("--retrain-lr", a.tcfg.lr, "step-2 Adam learning rate");
  s->add_option("--retrain-batch", a.tcfg.batch_episodes, "step-2 episodes per batch");
  s->add_option("--retrain-epochs", a.tcfg.epochs, "step-2 epochs");
  s->add_option("--retrain-seed", a.tcfg.seed, "step-2 shuffle seed");
  s->add_flag("--retune-target-val", a.retune_target_val,
              "re-tune tau on the target val split after step 2");
}

int do_adapt(AdaptArgs& a) {
  if (!a.config.empty()) {
    const json j = load_json(a.config);
    const fs::path p = a.config;
    if (!a.sub->count("--lr")) from_key(j, "lr", a.acfg.lr, p);
    if (!a.sub->count("--pair-batch")) from_key(j, "pair_batch", a.acfg.pair_batch, p);
    if (!a.sub->count("--temperature")) from_key(j, "temperature", a.acfg.temperature, p);
    if (!a.sub->count("--epochs")) from_key(j, "epochs", a.acfg.epochs, p);
    if (!a.sub->count("--seed")) from_key(j, "seed", a.acfg.seed, p);
    if (!a.sub->count("--objective")) from_key(j, "objective", a.objective, p);
    if (j.contains("retrain")) {
      const json& r = j.at("retrain");
      if (!a.sub->count("--retrain-lr")) from_key(r, "lr", a.tcfg.lr, p);
      if (!a.sub->count("--retrain-batch")) from_key(r, "batch_episodes", a.tcfg.batch_episodes, p);
      if (!a.sub->count("--retrain-epochs")) from_key(r, "epochs", a.tcfg.epochs, p);
      if (!a.sub->count("--retrain-seed")) from_key(r, "seed", a.tcfg.seed, p);
    }
  }
  const adapt::Objective obj = adapt::objective_from_string(a.objective);

  numkit::TensorMap params = numkit::load_checkpoint(a.checkpoint);
  const Sidecar side = read_sidecar(a.checkpoint);
  a.tcfg.mode = side.modality;

  const corpus::Manifest target_m = corpus::load_manifest(a.target);
  const corpus::Manifest source_m = corpus::load_manifest(a.source);
  auto target_train = load_nonempty_split(target_m, "train");
  auto source_train = load_nonempty_split(source_m, "train");
  auto source_val = corpus::load_split(source_m, "val");

  adapt::AdaptResult res = adapt::adapt(std::move(params), target_train,
                                        source_train, source_val, a.acfg,
                                        a.tcfg, obj);

  double tau = res.retrain.model.tau;
  if (a.retune_target_val) {
    auto target_val = load_nonempty_split(target_m, "val");
    const std::vector<double> grid = train::default_tau_grid();
    tau = train::tune_threshold(target_val, res.retrain.model.params,
                                side.modality, grid);
  }

  const fs::path out = a.out;
  fs::create_directories(out);
  numkit::save_checkpoint(out / "checkpoint.tsg", res.retrain.model.params);
  write_sidecar(out / "checkpoint.tsg",
                {tau, side.modality, mean_sentences(source_train)},
                res.retrain.model.params);
  adapt::write_step1_csv(res.step1_history, out / "step1.csv");
  train::write_history_csv(res.retrain.history, out / "history.csv");
  write_run_manifest(out, "adapt", a.config, json(a.acfg.seed),
                     {a.checkpoint, a.target, a.source},
                     {"checkpoint.tsg", "checkpoint.tsg.json", "step1.csv",
                      "history.csv"});
  return 0;
}

// ---- infer ----------------------------------------------------------

struct InferArgs {
  std::string checkpoint, corpus, out, split = "test", mode = "plain";
  std::size_t window = 0, stride = 1;
  double tau = 0.5;
  CLI::App* sub = nullptr;
};

void add_infer(CLI::App& app, InferArgs& a) {
  CLI::App* s = app.add_subcommand("infer", "predict boundaries for one corpus split");
  a.sub = s;
  s->add_option("--checkpoint", a.checkpoint, "trained checkpoint")->required();
  s->add_option("--corpus", a.corpus, "corpus.json")->required();
  s->add_option("--out", a.out, "output directory")->required();
  s->add_option("--split", a.split, "corpus split to read")
      ->check(CLI::IsMember({"train", "val", "test"}));
  s->add_option("--mode", a.mode, "plain|window")
      ->check(CLI::IsMember({"plain", "window"}));
  s->add_option("--window", a.window,
                "snippet length k (default: source mean sentence count)");
  s->add_option("--stride", a.stride, "snippet stride");
  s->add_option("--tau", a.tau, "decision threshold (default: checkpoint tau)");
}

int do_infer(InferArgs& a) {
  const numkit::TensorMap params = numkit::load_checkpoint(a.checkpoint);
  const Sidecar side = read_sidecar(a.checkpoint);
  const double tau = a.sub->count("--tau") ? a.tau : side.tau;

  const corpus::Manifest m = corpus::load_manifest(a.corpus);
  const auto eps = load_nonempty_split(m, a.split);

  std::vector<infer::Prediction> preds(eps.size());
  if (a.mode == "plain") {
    numkit::parallel_for(eps.size(), [&](std::size_t i) {
      preds[i] = infer::plain_infer(eps[i], params, side.modality, tau);
    });
  } else {
    std::size_t k = a.window;
    if (!a.sub->count("--window")) {
      if (side.source_mean_sentences <= 0) {
        throw UsageError(
            "window mode needs --window: the checkpoint records no "
            "source_mean_sentences");
      }
      k = static_cast<std::size_t>(
          std::max<long long>(2, std::llround(side.source_mean_sentences)));
    }
    for (std::size_t i = 0; i < eps.size(); ++i) {
      preds[i] = infer::sliding_infer(eps[i], params, side.modality, k, a.stride, tau);
    }
  }

  const fs::path out = a.out;
  fs::create_directories(out);
  std::vector<std::string> outputs = write_prediction_files(out, preds);
  write_run_manifest(out, "infer", "", json(), {a.checkpoint, a.corpus}, outputs);
  return 0;
}

// ---- baseline -------------------------------------------------------

struct BaselineArgs {
  std::string which, corpus, out, split = "test", xt_modality = "concat";
  std::uint64_t seed = 0;
  std::size_t smoothing = 3;
  double cutoff = 0.5;
  CLI::App* sub = nullptr;
};

void add_baseline(CLI::App& app, BaselineArgs& a) {
  CLI::App* s = app.add_subcommand("baseline", "unsupervised segmenters");
  a.sub = s;
  s->add_option("--which", a.which, "random|xtiling")
      ->required()
      ->check(CLI::IsMember({"random", "xtiling"}));
  s->add_option("--corpus", a.corpus, "corpus.json")->required();
  s->add_option("--out", a.out, "output directory")->required();
  s->add_option("--split", a.split, "corpus split to read")
      ->check(CLI::IsMember({"train", "val", "test"}));
  s->add_option("--seed", a.seed, "random segmenter seed");
  s->add_option("--xt-modality", a.xt_modality, "x-tiling features: text|visual|concat")
      ->check(CLI::IsMember({"text", "visual", "concat"}));
  s->add_option("--smoothing", a.smoothing, "x-tiling smoothing width (odd)");
  s->add_option("--cutoff", a.cutoff, "x-tiling depth cutoff in sigmas");
}

int do_baseline(BaselineArgs& a) {
  const corpus::Manifest m = corpus::load_manifest(a.corpus);
  const auto eps = load_nonempty_split(m, a.split);

  std::vector<infer::Prediction> preds(eps.size());
  auto fill = [&](std::size_t i, const metrics::BoundarySeq& labels) {
    preds[i].episode_id = eps[i].episode.id;
    preds[i].labels = labels;
    preds[i].probs.assign(labels.begin(), labels.end());
    preds[i].tau_used = 0.5;
    preds[i].window = eps[i].episode.n_sentences();
  };
  if (a.which == "random") {
    numkit::Rng base(a.seed);
    std::vector<std::uint64_t> seeds(eps.size());
    for (std::uint64_t& s : seeds) s = base.next();
    numkit::parallel_for(eps.size(), [&](std::size_t i) {
      fill(i, baselines::random_segmenter(eps[i].episode.n_sentences(), seeds[i]));
    });
  } else {
    baselines::XTilingConfig cfg;
    cfg.modality = baselines::xtiling_feature_from_string(a.xt_modality);
    cfg.smoothing_width = a.smoothing;
    cfg.depth_cutoff_sigmas = a.cutoff;
    numkit::parallel_for(eps.size(), [&](std::size_t i) {
      fill(i, baselines::xtiling(eps[i], cfg));
    });
  }

  const fs::path out = a.out;
  fs::create_directories(out);
  std::vector<std::string> outputs = write_prediction_files(out, preds);
  write_run_manifest(out, "baseline", "",
                     a.which == "random" ? json(a.seed) : json(), {a.corpus},
                     outputs);
  return 0;
}

// ---- eval -----------------------------------------------------------

struct EvalArgs {
  std::string corpus, pred, out, split = "test", emit = "table";
  std::size_t k = 0;
  CLI::App* sub = nullptr;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  CLI::App* s = app.add_subcommand("eval", "score predictions against gold labels");
  a.sub = s;
  s->add_option("--corpus", a.corpus, "corpus.json with gold labels")->required();
  s->add_option("--pred", a.pred, "directory of prediction JSONL files")->required();
  s->add_option("--split", a.split, "corpus split to score")
      ->check(CLI::IsMember({"train", "val", "test"}));
  s->add_option("--emit", a.emit, "stdout format: table|csv")
      ->check(CLI::IsMember({"table", "csv"}));
  s->add_option("--k", a.k, "fixed window for pk/windowdiff/pr (default: per episode)");
  s->add_option("--out", a.out, "directory for report.csv");
}

int do_eval(EvalArgs& a) {
  const corpus::Manifest m = corpus::load_manifest(a.corpus);
  const auto eps = load_nonempty_split(m, a.split);

  std::vector<metrics::LabeledPrediction> pairs;
  pairs.reserve(eps.size());
  for (const corpus::AlignedEpisode& ae : eps) {
    const std::string& id = ae.episode.id;
    const fs::path file = fs::path(a.pred) / (id + ".jsonl");
    const infer::Prediction p = infer::read_predictions(file);
    if (p.labels.size() + 1 != ae.episode.n_sentences()) {
      throw DataError(file.string() + ": " + std::to_string(p.labels.size()) +
                      " predictions for an episode with " +
                      std::to_string(ae.episode.n_sentences()) + " sentences");
    }
    pairs.push_back({id, ae.episode.gold_labels(), p.labels});
  }

  std::optional<std::size_t> k;
  if (a.sub->count("--k")) k = a.k;
  const metrics::MetricReport report = metrics::evaluate_corpus(pairs, k);

  if (a.emit == "csv") {
    std::cout << metrics::to_csv(report);
  } else {
    std::cout << metrics::to_table(report);
  }
  if (!a.out.empty()) {
    const fs::path out = a.out;
    fs::create_directories(out);
    metrics::write_csv(report, out / "report.csv");
    write_run_manifest(out, "eval", "", json(), {a.corpus, a.pred},
                       {"report.csv"});
  }
  return 0;
}

// ---- tune-tau -------------------------------------------------------

struct TuneArgs {
  std::string checkpoint, corpus, split = "val";
  bool update_sidecar = false;
  CLI::App* sub = nullptr;
};

void add_tune(CLI::App& app, TuneArgs& a) {
  CLI::App* s = app.add_subcommand("tune-tau", "grid-search the decision threshold");
  a.sub = s;
  s->add_option("--checkpoint", a.checkpoint, "trained checkpoint")->required();
  s->add_option("--corpus", a.corpus, "corpus.json with a labeled split")->required();
  s->add_option("--split", a.split, "split to tune on (test is refused)")
      ->check(CLI::IsMember({"train", "val"}));
  s->add_flag("--update-sidecar", a.update_sidecar,
              "write the tuned tau back into the checkpoint sidecar");
}

int do_tune(TuneArgs& a) {
  const numkit::TensorMap params = numkit::load_checkpoint(a.checkpoint);
  Sidecar side = read_sidecar(a.checkpoint);
  const corpus::Manifest m = corpus::load_manifest(a.corpus);
  const auto eps = load_nonempty_split(m, a.split);
  const std::vector<double> grid = train::default_tau_grid();
  const double tau = train::tune_threshold(eps, params, side.modality, grid);
  std::cout << json{{"tau", tau}}.dump() << '\n';
  if (a.update_sidecar) {
    side.tau = tau;
    write_sidecar(a.checkpoint, side, params);
  }
  return 0;
}

}  // namespace

int run(std::vector<std::string> args) {
  CLI::App app{"multi-modal topic segmentation over precomputed embeddings"};
  app.require_subcommand(1);
  app.fallthrough();

  unsigned threads = 0;
  app.add_option("--threads", threads, "worker thread cap, 0 = hardware")
      ->envname("TOPSEG_THREADS");

  SynthArgs synth_args;
  TrainArgs train_args;
  AdaptArgs adapt_args;
  InferArgs infer_args;
  BaselineArgs baseline_args;
  EvalArgs eval_args;
  TuneArgs tune_args;
  add_synth(app, synth_args);
  add_train(app, train_args);
  add_adapt(app, adapt_args);
  add_infer(app, infer_args);
  add_baseline(app, baseline_args);
  add_eval(app, eval_args);
  add_tune(app, tune_args);

  std::vector<const char*> argv;
  argv.push_back("topseg");
  for (const std::string& s : args) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
    numkit::set_thread_count(threads);
    if (synth_args.sub->parsed()) return do_synth(synth_args);
    if (train_args.sub->parsed()) return do_train(train_args);
    if (adapt_args.sub->parsed()) return do_adapt(adapt_args);
    if (infer_args.sub->parsed()) return do_infer(infer_args);
    if (baseline_args.sub->parsed()) return do_baseline(baseline_args);
    if (eval_args.sub->parsed()) return do_eval(eval_args);
    if (tune_args.sub->parsed()) return do_tune(tune_args);
    throw UsageError("no subcommand given");
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace topseg::cli
