#include "topseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <iomanip>
#include <sstream>

#include "topseg/error.hpp"
#include "topseg/rng.hpp"

namespace topseg::corpus {

using numkit::Rng;
using numkit::Tensor;

namespace {

constexpr double kSentenceSeconds = 5.0;

std::size_t latent_dim(const SynthConfig& cfg) {
  return std::min(cfg.d_text, cfg.d_vis);
}

// Seed derivation order is fixed: projections, rotation, then data. The
// rotation stream exists for every shift setting so the data stream is
// identical between them.
struct Streams {
  std::uint64_t proj;
  std::uint64_t rot;
  std::uint64_t data;
};

Streams derive_streams(std::uint64_t seed) {
  Rng seq(seed);
  Streams s{};
  s.proj = seq.next();
  s.rot = seq.next();
  s.data = seq.next();
  return s;
}

// d_lat x d_out projection with unit-norm latent input giving unit-variance
// output entries. Rows outside [row0, row1) are zeroed, hiding those latent
// coordinates from this modality.
Tensor projection(Rng& rng, std::size_t d_lat, std::size_t d_out,
                  std::size_t row0, std::size_t row1) {
  Tensor w(d_lat, d_out);
  for (std::size_t l = 0; l < d_lat; ++l) {
    for (std::size_t c = 0; c < d_out; ++c) {
      const double v = rng.normal();
      if (l >= row0 && l < row1) w.at(l, c) = v;
    }
  }
  return w;
}

std::vector<double> draw_topic(Rng& rng, std::size_t d_lat) {
  std::vector<double> u(d_lat);
  double norm2 = 0.0;
  for (double& v : u) {
    v = rng.normal();
    norm2 += v * v;
  }
  const double norm = std::sqrt(norm2);
  if (norm == 0.0) {
    u.assign(d_lat, 0.0);
    u[0] = 1.0;
  } else {
    for (double& v : u) v /= norm;
  }
  return u;
}

EpisodePlan draw_plan(Rng& rng, const SynthConfig& cfg, const Tensor* rot) {
  EpisodePlan plan;
  const std::size_t d_lat = latent_dim(cfg);
  const std::size_t n_segs =
      rng.poisson(cfg.mean_segments_per_episode) + 1;
  const double target_len = cfg.mean_sentences_per_episode /
                            (cfg.mean_segments_per_episode + 1.0);
  for (std::size_t j = 0; j < n_segs; ++j) {
    plan.segment_lengths.push_back(1 + rng.poisson(target_len - 1.0));
    std::vector<double> topic = draw_topic(rng, d_lat);
    if (rot != nullptr) {
      std::vector<double> rotated(d_lat, 0.0);
      for (std::size_t i = 0; i < d_lat; ++i) {
        for (std::size_t j2 = 0; j2 < d_lat; ++j2) {
          if (rot->at(i, j2) != 0.0) rotated[i] += rot->at(i, j2) * topic[j2];
        }
      }
      topic = std::move(rotated);
    }
    plan.topics.push_back(std::move(topic));
  }
  // An episode must expose at least one prediction position.
  const std::size_t total = std::accumulate(plan.segment_lengths.begin(),
                                            plan.segment_lengths.end(), std::size_t{0});
  if (total < 2) plan.segment_lengths.back() += 2 - total;
  return plan;
}

}  // namespace

void validate_config(const SynthConfig& cfg) {
  std::ostringstream bad;
  if (cfg.n_episodes == 0) bad << "n_episodes must be positive; ";
  if (cfg.mean_sentences_per_episode <= 0) bad << "mean_sentences_per_episode must be positive; ";
  if (cfg.mean_segments_per_episode <= 0) bad << "mean_segments_per_episode must be positive; ";
  if (cfg.d_text == 0 || cfg.d_vis == 0) bad << "embedding dims must be positive; ";
  if (cfg.noise_sigma < 0) bad << "noise_sigma must be non-negative; ";
  if (cfg.irrelevant_frame_frac < 0 || cfg.irrelevant_frame_frac >= 1) {
    bad << "irrelevant_frame_frac must lie in [0,1); ";
  }
  if (cfg.frames_per_sentence_min < 1 ||
      cfg.frames_per_sentence_max < cfg.frames_per_sentence_min) {
    bad << "frames_per_sentence range must satisfy 1 <= min <= max; ";
  }
  if (cfg.text_latent_frac <= 0 || cfg.text_latent_frac > 1 ||
      cfg.vis_latent_frac <= 0 || cfg.vis_latent_frac > 1) {
    bad << "latent fractions must lie in (0,1]; ";
  }
  const std::string msg = bad.str();
  if (!msg.empty()) throw DataError("synth config: " + msg);
}

Tensor latent_rotation(const SynthConfig& cfg) {
  const std::size_t d = latent_dim(cfg);
  Rng rng(derive_streams(cfg.seed).rot);

  std::vector<std::size_t> perm(d);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = d; i > 1; --i) {
    std::swap(perm[i - 1], perm[rng.below(i)]);
  }
  std::vector<double> sign(d);
  for (double& s : sign) s = rng.uniform() < 0.5 ? 1.0 : -1.0;

  // Force determinant +1: parity of the permutation times the sign product.
  std::vector<bool> seen(d, false);
  int det = 1;
  for (std::size_t i = 0; i < d; ++i) {
    if (seen[i]) continue;
    std::size_t len = 0;
    for (std::size_t j = i; !seen[j]; j = perm[j]) {
      seen[j] = true;
      ++len;
    }
    if (len % 2 == 0) det = -det;
  }
  for (double s : sign) det = s < 0 ? -det : det;
  if (det < 0) sign[0] = -sign[0];

  Tensor r(d, d);
  for (std::size_t j = 0; j < d; ++j) r.at(perm[j], j) = sign[j];
  return r;
}

std::vector<EpisodePlan> synth_plan(const SynthConfig& cfg) {
  validate_config(cfg);
  const Tensor rot = latent_rotation(cfg);
  const Tensor* rot_ptr =
      cfg.domain_shift == DomainShift::long_form ? &rot : nullptr;

  Rng data(derive_streams(cfg.seed).data);
  std::vector<EpisodePlan> plans;
  plans.reserve(cfg.n_episodes);
  for (std::size_t ep = 0; ep < cfg.n_episodes; ++ep) {
    Rng ep_rng(data.next());
    plans.push_back(draw_plan(ep_rng, cfg, rot_ptr));
  }
  return plans;
}

std::vector<Episode> synth_corpus(const SynthConfig& cfg) {
  validate_config(cfg);
  const std::size_t d_lat = latent_dim(cfg);
  const Streams streams = derive_streams(cfg.seed);

  Rng proj_rng(streams.proj);
  const std::size_t text_keep = static_cast<std::size_t>(
      std::ceil(cfg.text_latent_frac * static_cast<double>(d_lat)));
  const std::size_t vis_keep = static_cast<std::size_t>(
      std::ceil(cfg.vis_latent_frac * static_cast<double>(d_lat)));
  const Tensor w_text = projection(proj_rng, d_lat, cfg.d_text, 0, text_keep);
  const Tensor w_vis =
      projection(proj_rng, d_lat, cfg.d_vis, d_lat - vis_keep, d_lat);

  const Tensor rot = latent_rotation(cfg);
  const Tensor* rot_ptr =
      cfg.domain_shift == DomainShift::long_form ? &rot : nullptr;

  auto project_row = [d_lat](const std::vector<double>& topic, const Tensor& w,
                             std::size_t c) {
    double s = 0.0;
    for (std::size_t l = 0; l < d_lat; ++l) s += topic[l] * w.at(l, c);
    return s;
  };

  Rng data(streams.data);
  std::vector<Episode> corpus;
  corpus.reserve(cfg.n_episodes);

  for (std::size_t ep = 0; ep < cfg.n_episodes; ++ep) {
    Rng ep_rng(data.next());
    const EpisodePlan plan = draw_plan(ep_rng, cfg, rot_ptr);
    const std::size_t n = std::accumulate(plan.segment_lengths.begin(),
                                          plan.segment_lengths.end(), std::size_t{0});

    Episode e;
    {
      std::ostringstream id;
      id << "ep" << std::setw(4) << std::setfill('0') << ep;
      e.id = id.str();
    }
    e.sent_emb = EmbMatrix(n, cfg.d_text);

    std::vector<std::vector<float>> frame_rows;
    std::vector<double> frame_times;

    std::size_t i = 0;
    for (std::size_t seg = 0; seg < plan.segment_lengths.size(); ++seg) {
      const std::vector<double>& topic = plan.topics[seg];
      for (std::size_t pos = 0; pos < plan.segment_lengths[seg]; ++pos, ++i) {
        Sentence s;
        s.index = i;
        s.begin_s = kSentenceSeconds * static_cast<double>(i);
        s.end_s = s.begin_s + kSentenceSeconds;
        if (cfg.labeled) {
          s.boundary = pos + 1 == plan.segment_lengths[seg] ? 1 : 0;
        }
        e.sentences.push_back(s);

        for (std::size_t c = 0; c < cfg.d_text; ++c) {
          e.sent_emb.at(i, c) = static_cast<float>(
              project_row(topic, w_text, c) + cfg.noise_sigma * ep_rng.normal());
        }

        const std::size_t n_frames =
            cfg.frames_per_sentence_min +
            ep_rng.below(cfg.frames_per_sentence_max -
                         cfg.frames_per_sentence_min + 1);
        std::vector<std::pair<double, std::vector<float>>> local;
        local.reserve(n_frames);
        for (std::size_t f = 0; f < n_frames; ++f) {
          const double t = ep_rng.uniform(s.begin_s, s.end_s);
          const bool irrelevant = ep_rng.uniform() < cfg.irrelevant_frame_frac;
          std::vector<float> row(cfg.d_vis);
          for (std::size_t c = 0; c < cfg.d_vis; ++c) {
            row[c] = static_cast<float>(
                irrelevant ? ep_rng.normal()
                           : project_row(topic, w_vis, c) +
                                 cfg.noise_sigma * ep_rng.normal());
          }
          local.emplace_back(t, std::move(row));
        }
        std::stable_sort(local.begin(), local.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        for (auto& [t, row] : local) {
          frame_times.push_back(t);
          frame_rows.push_back(std::move(row));
        }
      }
    }

    e.frame_emb = EmbMatrix(frame_rows.size(), cfg.d_vis);
    for (std::size_t k = 0; k < frame_rows.size(); ++k) {
      e.frames.push_back(Frame{k, frame_times[k]});
      for (std::size_t c = 0; c < cfg.d_vis; ++c) {
        e.frame_emb.at(k, c) = frame_rows[k][c];
      }
    }

    validate_episode(e);
    corpus.push_back(std::move(e));
  }
  return corpus;
}

}  // namespace topseg::corpus
