#include "topseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "topseg/error.hpp"

namespace topseg::metrics {

namespace {

void check_labels(const BoundarySeq& s, const char* who) {
  for (int v : s) {
    if (v != 0 && v != 1) {
      throw DataError(std::string(who) + ": labels must be 0 or 1");
    }
  }
}

void check_pair(const BoundarySeq& gold, const BoundarySeq& hyp) {
  if (gold.size() != hyp.size()) {
    throw DataError("gold has " + std::to_string(gold.size()) +
                    " positions, hypothesis has " + std::to_string(hyp.size()));
  }
  check_labels(gold, "gold");
  check_labels(hyp, "hypothesis");
}

// units = n, window constraints shared by pk / window_diff / pr_error.
std::size_t check_window(const BoundarySeq& gold, std::size_t k) {
  const std::size_t n = gold.size() + 1;
  if (k < 1) throw DataError("window must be at least 1");
  if (n < k + 1) {
    throw DataError("sequence of " + std::to_string(n) +
                    " units is shorter than window " + std::to_string(k) + " + 1");
  }
  return n;
}

// segment_id[u] for each unit u: prefix count of boundaries before u.
std::vector<std::size_t> unit_segments(const BoundarySeq& b) {
  std::vector<std::size_t> seg(b.size() + 1, 0);
  for (std::size_t u = 1; u < seg.size(); ++u) {
    seg[u] = seg[u - 1] + static_cast<std::size_t>(b[u - 1]);
  }
  return seg;
}

std::vector<std::size_t> prefix_counts(const BoundarySeq& b) {
  std::vector<std::size_t> pre(b.size() + 1, 0);
  for (std::size_t i = 0; i < b.size(); ++i) {
    pre[i + 1] = pre[i] + static_cast<std::size_t>(b[i]);
  }
  return pre;
}

}  // namespace

SegmentList boundaries_to_segments(const BoundarySeq& b, std::size_t n) {
  if (n < 1) throw DataError("segment conversion: n must be positive");
  if (b.size() + 1 != n) {
    throw DataError("segment conversion: " + std::to_string(b.size()) +
                    " labels do not fit " + std::to_string(n) + " units");
  }
  check_labels(b, "labels");
  SegmentList segs;
  std::size_t begin = 0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (b[i] == 1) {
      segs.push_back({begin, i + 1});
      begin = i + 1;
    }
  }
  segs.push_back({begin, n});
  return segs;
}

BoundarySeq segments_to_boundaries(const SegmentList& segs) {
  if (segs.empty()) throw DataError("segment conversion: empty segment list");
  std::size_t expect = 0;
  for (const Segment& s : segs) {
    if (s.begin != expect || s.end <= s.begin) {
      throw DataError("segment conversion: segments must be contiguous and non-empty");
    }
    expect = s.end;
  }
  const std::size_t n = segs.back().end;
  BoundarySeq b(n - 1, 0);
  for (std::size_t j = 0; j + 1 < segs.size(); ++j) b[segs[j].end - 1] = 1;
  return b;
}

double f1_boundary(const BoundarySeq& gold, const BoundarySeq& hyp) {
  check_pair(gold, hyp);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    tp += static_cast<std::size_t>(gold[i] == 1 && hyp[i] == 1);
    fp += static_cast<std::size_t>(gold[i] == 0 && hyp[i] == 1);
    fn += static_cast<std::size_t>(gold[i] == 1 && hyp[i] == 0);
  }
  if (tp == 0 && fp == 0 && fn == 0) return 1.0;
  const double p = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double r = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (p + r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

std::size_t default_window(const BoundarySeq& gold) {
  check_labels(gold, "gold");
  const std::size_t n = gold.size() + 1;
  if (n < 2) return 1;
  std::size_t segments = 1;
  for (int v : gold) segments += static_cast<std::size_t>(v);
  const auto k = static_cast<std::size_t>(std::llround(
      static_cast<double>(n) / (2.0 * static_cast<double>(segments))));
  return std::clamp<std::size_t>(k, 1, n - 1);
}

double pk(const BoundarySeq& gold, const BoundarySeq& hyp, std::size_t k) {
  check_pair(gold, hyp);
  const std::size_t n = check_window(gold, k);
  const auto gseg = unit_segments(gold);
  const auto hseg = unit_segments(hyp);
  std::size_t disagree = 0;
  for (std::size_t i = 0; i + k < n; ++i) {
    const bool same_g = gseg[i] == gseg[i + k];
    const bool same_h = hseg[i] == hseg[i + k];
    disagree += static_cast<std::size_t>(same_g != same_h);
  }
  return static_cast<double>(disagree) / static_cast<double>(n - k);
}

double window_diff(const BoundarySeq& gold, const BoundarySeq& hyp, std::size_t k) {
  check_pair(gold, hyp);
  const std::size_t n = check_window(gold, k);
  const auto gpre = prefix_counts(gold);
  const auto hpre = prefix_counts(hyp);
  std::size_t differ = 0;
  for (std::size_t i = 0; i + k < n; ++i) {
    // Boundaries strictly between units i and i+k live at slots [i, i+k).
    const std::size_t g = gpre[i + k] - gpre[i];
    const std::size_t h = hpre[i + k] - hpre[i];
    differ += static_cast<std::size_t>(g != h);
  }
  return static_cast<double>(differ) / static_cast<double>(n - k);
}

double pr_error(const BoundarySeq& gold, const BoundarySeq& hyp, std::size_t k) {
  check_pair(gold, hyp);
  check_window(gold, k);
  const std::size_t slots = gold.size();
  const auto gpre = prefix_counts(gold);
  const auto hpre = prefix_counts(hyp);
  std::size_t gold_windows = 0, empty_windows = 0, miss = 0, alarm = 0;
  for (std::size_t i = 0; i + k <= slots; ++i) {
    const bool g = gpre[i + k] - gpre[i] > 0;
    const bool h = hpre[i + k] - hpre[i] > 0;
    if (g) {
      ++gold_windows;
      miss += static_cast<std::size_t>(!h);
    } else {
      ++empty_windows;
      alarm += static_cast<std::size_t>(h);
    }
  }
  const double p_miss = gold_windows == 0
                            ? 0.0
                            : static_cast<double>(miss) / static_cast<double>(gold_windows);
  const double p_fa = empty_windows == 0
                          ? 0.0
                          : static_cast<double>(alarm) / static_cast<double>(empty_windows);
  return (p_miss + p_fa) / 2.0;
}

double miou(const SegmentList& gold, const SegmentList& hyp) {
  if (gold.empty() || hyp.empty()) throw DataError("miou: empty segmentation");
  if (gold.back().end != hyp.back().end || gold.front().begin != 0 ||
      hyp.front().begin != 0) {
    throw DataError("miou: segmentations cover different ranges");
  }
  double total = 0.0;
  for (const Segment& g : gold) {
    double best = 0.0;
    for (const Segment& h : hyp) {
      const std::size_t lo = std::max(g.begin, h.begin);
      const std::size_t hi = std::min(g.end, h.end);
      if (hi <= lo) continue;
      const double inter = static_cast<double>(hi - lo);
      const double uni = static_cast<double>((g.end - g.begin) + (h.end - h.begin)) - inter;
      best = std::max(best, inter / uni);
    }
    total += best;
  }
  return total / static_cast<double>(gold.size());
}

MetricReport evaluate_corpus(const std::vector<LabeledPrediction>& pairs,
                             std::optional<std::size_t> window_override) {
  if (pairs.empty()) throw DataError("evaluate_corpus: no episodes");
  MetricReport report;
  for (const LabeledPrediction& p : pairs) {
    EpisodeMetrics em;
    em.id = p.id;
    em.k = window_override.value_or(default_window(p.gold));
    em.f1 = f1_boundary(p.gold, p.hyp);
    em.pr = pr_error(p.gold, p.hyp, em.k);
    const std::size_t n = p.gold.size() + 1;
    em.miou = miou(boundaries_to_segments(p.gold, n),
                   boundaries_to_segments(p.hyp, n));
    em.pk = pk(p.gold, p.hyp, em.k);
    em.window_diff = window_diff(p.gold, p.hyp, em.k);
    report.episodes.push_back(em);
  }
  EpisodeMetrics& mean = report.mean;
  mean.id = "mean";
  double ksum = 0.0;
  for (const EpisodeMetrics& em : report.episodes) {
    mean.f1 += em.f1;
    mean.pr += em.pr;
    mean.miou += em.miou;
    mean.pk += em.pk;
    mean.window_diff += em.window_diff;
    ksum += static_cast<double>(em.k);
  }
  const auto count = static_cast<double>(report.episodes.size());
  mean.f1 /= count;
  mean.pr /= count;
  mean.miou /= count;
  mean.pk /= count;
  mean.window_diff /= count;
  mean.k = static_cast<std::size_t>(std::llround(ksum / count));
  return report;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << std::fixed << v;
  return os.str();
}

}  // namespace

std::string to_csv(const MetricReport& report) {
  std::ostringstream os;
  os << "episode,f1,pr,miou,pk,windowdiff,k\n";
  auto row = [&os](const EpisodeMetrics& em) {
    os << em.id << ',' << fmt(em.f1) << ',' << fmt(em.pr) << ',' << fmt(em.miou)
       << ',' << fmt(em.pk) << ',' << fmt(em.window_diff) << ',' << em.k << '\n';
  };
  for (const EpisodeMetrics& em : report.episodes) row(em);
  row(report.mean);
  return os.str();
}

void write_csv(const MetricReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << to_csv(report);
}

std::string to_table(const MetricReport& report) {
  std::size_t idw = 7;
  for (const EpisodeMetrics& em : report.episodes) idw = std::max(idw, em.id.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(idw) + 2) << "episode" << std::right
     << std::setw(10) << "f1" << std::setw(10) << "pr" << std::setw(10) << "miou"
     << std::setw(10) << "pk" << std::setw(12) << "windowdiff" << std::setw(6) << "k"
     << '\n';
  auto row = [&](const EpisodeMetrics& em) {
    os << std::left << std::setw(static_cast<int>(idw) + 2) << em.id << std::right
       << std::setw(10) << fmt(em.f1) << std::setw(10) << fmt(em.pr) << std::setw(10)
       << fmt(em.miou) << std::setw(10) << fmt(em.pk) << std::setw(12)
       << fmt(em.window_diff) << std::setw(6) << em.k << '\n';
  };
  for (const EpisodeMetrics& em : report.episodes) row(em);
  row(report.mean);
  return os.str();
}

}  // namespace topseg::metrics
