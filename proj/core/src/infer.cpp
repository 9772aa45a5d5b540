#include "topseg/infer.hpp"

#include <algorithm>
#include <fstream>
#include <string>

#include <json.hpp>

#include "topseg/error.hpp"
#include "topseg/parallel.hpp"

namespace topseg::infer {

using corpus::AlignedEpisode;
using nlohmann::json;

namespace {

std::vector<int> threshold(const std::vector<double>& probs, double tau) {
  std::vector<int> labels(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) labels[i] = probs[i] > tau ? 1 : 0;
  return labels;
}

corpus::EmbMatrix slice_rows(const corpus::EmbMatrix& m, std::size_t r0,
                             std::size_t r1) {
  corpus::EmbMatrix out(r1 - r0, m.cols());
  std::copy(m.data().begin() + static_cast<std::ptrdiff_t>(r0 * m.cols()),
            m.data().begin() + static_cast<std::ptrdiff_t>(r1 * m.cols()),
            out.data().begin());
  return out;
}

// Sentences [b, e) with their frames, indices rebased to the slice.
AlignedEpisode slice_episode(const AlignedEpisode& ae, std::size_t b,
                             std::size_t e) {
  const corpus::Episode& ep = ae.episode;
  const std::size_t f0 = ae.frame_ranges[b].begin;
  const std::size_t f1 = ae.frame_ranges[e - 1].end;

  AlignedEpisode sub;
  sub.episode.id = ep.id;
  sub.episode.sentences.assign(ep.sentences.begin() + static_cast<std::ptrdiff_t>(b),
                               ep.sentences.begin() + static_cast<std::ptrdiff_t>(e));
  for (std::size_t i = 0; i < sub.episode.sentences.size(); ++i) {
    sub.episode.sentences[i].index = static_cast<int>(i);
  }
  sub.episode.frames.assign(ep.frames.begin() + static_cast<std::ptrdiff_t>(f0),
                            ep.frames.begin() + static_cast<std::ptrdiff_t>(f1));
  for (std::size_t i = 0; i < sub.episode.frames.size(); ++i) {
    sub.episode.frames[i].index = static_cast<int>(i);
  }
  sub.episode.sent_emb = slice_rows(ep.sent_emb, b, e);
  sub.episode.frame_emb = slice_rows(ep.frame_emb, f0, f1);
  sub.frame_ranges.reserve(e - b);
  for (std::size_t i = b; i < e; ++i) {
    sub.frame_ranges.push_back(
        {ae.frame_ranges[i].begin - f0, ae.frame_ranges[i].end - f0});
  }
  return sub;
}

}  // namespace

Prediction plain_infer(const AlignedEpisode& ae, const numkit::TensorMap& params,
                       model::Modality mode, double tau) {
  Prediction p;
  p.episode_id = ae.episode.id;
  p.probs = model::forward(params, ae, mode).probs;
  p.labels = threshold(p.probs, tau);
  p.tau_used = tau;
  p.window = ae.episode.n_sentences();
  return p;
}

WindowPlan make_snippets(std::size_t n, std::size_t k, std::size_t stride) {
  if (n < 2) throw UsageError("snippets need at least 2 sentences");
  if (k < 2) throw UsageError("window must be at least 2 sentences");
  if (stride < 1 || stride > k - 1) {
    throw UsageError("stride must lie in [1, window-1]");
  }
  WindowPlan plan{k, stride, {}};
  if (n <= k) {
    plan.snippets.push_back({0, n});
    return plan;
  }
  for (std::size_t i = 0; i <= n - k; i += stride) {
    plan.snippets.push_back({i, i + k});
  }
  if (plan.snippets.back().begin != n - k) plan.snippets.push_back({n - k, n});
  return plan;
}

Prediction sliding_infer(const AlignedEpisode& ae, const numkit::TensorMap& params,
                         model::Modality mode, std::size_t k, std::size_t stride,
                         double tau) {
  const std::size_t n = ae.episode.n_sentences();
  const WindowPlan plan = make_snippets(n, k, stride);

  std::vector<std::vector<double>> per_snippet(plan.snippets.size());
  numkit::parallel_for(plan.snippets.size(), [&](std::size_t i) {
    const Snippet s = plan.snippets[i];
    per_snippet[i] =
        model::forward(params, slice_episode(ae, s.begin, s.end), mode).probs;
  });

  std::vector<double> sums(n - 1, 0.0);
  std::vector<std::size_t> counts(n - 1, 0);
  for (std::size_t i = 0; i < plan.snippets.size(); ++i) {
    const std::size_t base = plan.snippets[i].begin;
    for (std::size_t j = 0; j < per_snippet[i].size(); ++j) {
      sums[base + j] += per_snippet[i][j];
      counts[base + j] += 1;
    }
  }

  Prediction p;
  p.episode_id = ae.episode.id;
  p.probs.resize(n - 1);
  for (std::size_t m = 0; m < n - 1; ++m) {
    if (counts[m] == 0) throw Error("sliding inference left a position uncovered");
    p.probs[m] = sums[m] / static_cast<double>(counts[m]);
  }
  p.labels = threshold(p.probs, tau);
  p.tau_used = tau;
  p.window = std::min(k, n);
  return p;
}

void write_predictions(const Prediction& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  for (std::size_t i = 0; i < p.probs.size(); ++i) {
    out << json{{"index", i}, {"prob", p.probs[i]}, {"label", p.labels[i]}}.dump()
        << '\n';
  }
  out << json{{"tau_used", p.tau_used}, {"k", p.window}}.dump() << '\n';
}

Prediction read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  Prediction p;
  bool have_summary = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    if (have_summary) throw DataError(where + ": records after the summary line");
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    if (j.contains("tau_used")) {
      if (!j.contains("k")) throw DataError(where + ": summary line lacks k");
      p.tau_used = j.at("tau_used").get<double>();
      p.window = j.at("k").get<std::size_t>();
      have_summary = true;
      continue;
    }
    if (!j.contains("index") || !j.contains("prob") || !j.contains("label")) {
      throw DataError(where + ": record lacks index/prob/label");
    }
    if (j.at("index").get<std::size_t>() != p.probs.size()) {
      throw DataError(where + ": record out of order");
    }
    p.probs.push_back(j.at("prob").get<double>());
    p.labels.push_back(j.at("label").get<int>());
  }
  if (!have_summary) throw DataError(path.string() + ": missing summary line");
  if (p.probs.empty()) throw DataError(path.string() + ": no prediction records");
  for (std::size_t i = 0; i < p.probs.size(); ++i) {
    const int expect = p.probs[i] > p.tau_used ? 1 : 0;
    if (p.labels[i] != expect) {
      throw DataError(path.string() + ": label " + std::to_string(i) +
                      " inconsistent with prob and tau_used");
    }
  }
  return p;
}

}  // namespace topseg::infer
