#include <doctest.h>

#include <cstddef>
#include <string>
#include <vector>

#include "support/oracles.hpp"
#include "support/tmpdir.hpp"
#include "topseg/error.hpp"
#include "topseg/metrics.hpp"
#include "topseg/rng.hpp"

using namespace topseg::metrics;
using topseg::DataError;
using topseg::numkit::Rng;

namespace {

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n' ? 1 : 0;
  return n;
}

}  // namespace

TEST_CASE("boundary labels convert to segments and back") {
  SUBCASE("two segments") {
    const SegmentList segs = boundaries_to_segments({0, 1, 0, 0}, 5);
    CHECK(segs == SegmentList{{0, 2}, {2, 5}});
    CHECK(segments_to_boundaries(segs) == BoundarySeq{0, 1, 0, 0});
  }
  SUBCASE("no boundaries") {
    CHECK(boundaries_to_segments({0, 0}, 3) == SegmentList{{0, 3}});
  }
  SUBCASE("every position a boundary") {
    CHECK(boundaries_to_segments({1, 1}, 3) == SegmentList{{0, 1}, {1, 2}, {2, 3}});
  }
  SUBCASE("single unit") {
    CHECK(boundaries_to_segments({}, 1) == SegmentList{{0, 1}});
    CHECK(segments_to_boundaries({{0, 1}}) == BoundarySeq{});
  }
  SUBCASE("rejects impossible unit counts") {
    CHECK_THROWS_WITH_AS(boundaries_to_segments({0, 1}, 0),
                         doctest::Contains("n must be positive"), DataError);
    CHECK_THROWS_WITH_AS(boundaries_to_segments({0, 1, 0}, 5),
                         doctest::Contains("3 labels do not fit 5 units"), DataError);
  }
  SUBCASE("rejects non-binary labels") {
    CHECK_THROWS_WITH_AS(boundaries_to_segments({0, 2}, 3),
                         doctest::Contains("labels must be 0 or 1"), DataError);
  }
  SUBCASE("rejects broken segment lists") {
    CHECK_THROWS_WITH_AS(segments_to_boundaries({}),
                         doctest::Contains("empty segment list"), DataError);
    CHECK_THROWS_WITH_AS(segments_to_boundaries({{0, 2}, {3, 5}}),
                         doctest::Contains("contiguous and non-empty"), DataError);
    CHECK_THROWS_WITH_AS(segments_to_boundaries({{0, 2}, {2, 2}}),
                         doctest::Contains("contiguous and non-empty"), DataError);
    CHECK_THROWS_WITH_AS(segments_to_boundaries({{1, 4}}),
                         doctest::Contains("contiguous and non-empty"), DataError);
  }
}

TEST_CASE("boundary F1") {
  SUBCASE("worked example") {
    CHECK(f1_boundary({0, 1, 0, 0, 1}, {0, 1, 0, 1, 1}) == doctest::Approx(0.8));
  }
  SUBCASE("agreement on no boundaries is perfect") {
    CHECK(f1_boundary({0, 0, 0}, {0, 0, 0}) == 1.0);
  }
  SUBCASE("exact match is perfect") {
    CHECK(f1_boundary({1, 0, 1}, {1, 0, 1}) == 1.0);
  }
  SUBCASE("no overlap scores zero") {
    CHECK(f1_boundary({1, 0}, {0, 1}) == 0.0);
    CHECK(f1_boundary({0, 0, 1}, {0, 0, 0}) == 0.0);
    CHECK(f1_boundary({0, 0, 0}, {0, 0, 1}) == 0.0);
  }
  SUBCASE("rejects mismatched lengths") {
    CHECK_THROWS_WITH_AS(f1_boundary({0, 1, 0}, {0, 1}),
                         doctest::Contains("gold has 3 positions, hypothesis has 2"),
                         DataError);
  }
  SUBCASE("rejects non-binary labels") {
    CHECK_THROWS_WITH_AS(f1_boundary({0, 2}, {0, 1}),
                         doctest::Contains("gold: labels must be 0 or 1"), DataError);
    CHECK_THROWS_WITH_AS(f1_boundary({0, 1}, {-1, 1}),
                         doctest::Contains("hypothesis: labels must be 0 or 1"),
                         DataError);
  }
  SUBCASE("claiming a missed boundary raises the score") {
    Rng rng(311);
    for (int rep = 0; rep < 200; ++rep) {
      const std::size_t n = 3 + rng.below(20);
      const auto gold = oracle::random_labels(rng, n, 0.4);
      auto hyp = oracle::random_labels(rng, n, 0.3);
      std::size_t pos = gold.size();
      for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] == 1 && hyp[i] == 0) {
          pos = i;
          break;
        }
      }
      if (pos == gold.size()) continue;
      const double before = f1_boundary(gold, hyp);
      hyp[pos] = 1;
      CHECK(f1_boundary(gold, hyp) > before);
    }
  }
}

TEST_CASE("default evaluation window is half the mean segment length") {
  CHECK(default_window({0, 0, 1, 0, 0}) == 2);  // 6 units, 2 segments
  CHECK(default_window({0, 0, 0, 0}) == 3);     // 5 / 2 rounds up
  CHECK(default_window({0, 0, 0}) == 2);
  CHECK(default_window({1, 1, 1}) == 1);  // would round to 0.5, clamped up
  CHECK(default_window({0}) == 1);
  CHECK(default_window({1}) == 1);
  CHECK(default_window({}) == 1);  // single unit still yields a legal window
  CHECK_THROWS_WITH_AS(default_window({0, 3}),
                       doctest::Contains("labels must be 0 or 1"), DataError);
}

TEST_CASE("Pk") {
  SUBCASE("missing every boundary of a balanced pair of segments") {
    CHECK(pk({0, 0, 1, 0, 0}, {0, 0, 0, 0, 0}, 2) == 0.5);
  }
  SUBCASE("perfect hypothesis scores zero") {
    CHECK(pk({0, 1, 0, 1}, {0, 1, 0, 1}, 2) == 0.0);
  }
  SUBCASE("window bounds") {
    CHECK_THROWS_WITH_AS(pk({0, 1, 0}, {0, 0, 0}, 0),
                         doctest::Contains("window must be at least 1"), DataError);
    CHECK_THROWS_WITH_AS(pk({0, 1, 0}, {0, 0, 0}, 4),
                         doctest::Contains("sequence of 4 units is shorter than window 4 + 1"),
                         DataError);
    CHECK_NOTHROW(pk({0, 1, 0}, {0, 0, 0}, 3));
  }
  SUBCASE("mismatched pair is rejected") {
    CHECK_THROWS_WITH_AS(pk({0, 1}, {0, 1, 0}, 1),
                         doctest::Contains("positions"), DataError);
  }
}

TEST_CASE("WindowDiff") {
  SUBCASE("hand-counted case") {
    // Windows [0,2) and [1,3): gold counts 1,1 and hyp counts 1,0.
    CHECK(window_diff({0, 1, 0}, {1, 0, 0}, 2) == 0.5);
  }
  SUBCASE("perfect hypothesis scores zero") {
    CHECK(window_diff({1, 0, 1, 0}, {1, 0, 1, 0}, 2) == 0.0);
  }
  SUBCASE("near miss is penalised once per covering window") {
    // Boundary shifted by one slot; k=1 sees two differing windows.
    CHECK(window_diff({0, 1, 0, 0}, {0, 0, 1, 0}, 1) == 0.5);
  }
  SUBCASE("window bounds shared with Pk") {
    CHECK_THROWS_WITH_AS(window_diff({0, 1, 0}, {0, 0, 0}, 4),
                         doctest::Contains("shorter than window"), DataError);
  }
}

TEST_CASE("segmentation error rate") {
  SUBCASE("silent hypothesis misses every gold window") {
    CHECK(pr_error({0, 1, 0, 1}, {0, 0, 0, 0}, 2) == 0.5);
  }
  SUBCASE("perfect hypothesis scores zero") {
    CHECK(pr_error({0, 1, 0, 1}, {0, 1, 0, 1}, 2) == 0.0);
  }
  SUBCASE("both silent scores zero") {
    CHECK(pr_error({0, 0, 0}, {0, 0, 0}, 2) == 0.0);
  }
  SUBCASE("all-gold windows leave the false-alarm rate empty") {
    // Every window holds a gold boundary, so only misses can score.
    CHECK(pr_error({1, 1, 1}, {0, 0, 0}, 2) == 0.5);
    CHECK(pr_error({1, 1, 1}, {1, 1, 1}, 2) == 0.0);
  }
  SUBCASE("window bounds shared with Pk") {
    CHECK_THROWS_WITH_AS(pr_error({0, 1}, {0, 0}, 3),
                         doctest::Contains("shorter than window"), DataError);
  }
}

TEST_CASE("mean IoU over gold segments") {
  SUBCASE("one big hypothesis segment covers half of each gold half") {
    CHECK(miou({{0, 5}, {5, 10}}, {{0, 10}}) == 0.5);
  }
  SUBCASE("asymmetric counterpart") {
    CHECK(miou({{0, 10}}, {{0, 5}, {5, 10}}) == 0.5);
  }
  SUBCASE("identical segmentations are perfect") {
    CHECK(miou({{0, 3}, {3, 7}}, {{0, 3}, {3, 7}}) == 1.0);
  }
  SUBCASE("rejects empty segmentations") {
    CHECK_THROWS_WITH_AS(miou({}, {{0, 3}}),
                         doctest::Contains("empty segmentation"), DataError);
    CHECK_THROWS_WITH_AS(miou({{0, 3}}, {}),
                         doctest::Contains("empty segmentation"), DataError);
  }
  SUBCASE("rejects mismatched coverage") {
    CHECK_THROWS_WITH_AS(miou({{0, 10}}, {{0, 8}}),
                         doctest::Contains("different ranges"), DataError);
    CHECK_THROWS_WITH_AS(miou({{1, 10}}, {{1, 10}}),
                         doctest::Contains("different ranges"), DataError);
  }
}

TEST_CASE("metrics agree with the brute-force references") {
  Rng rng(2026);
  for (int rep = 0; rep < 400; ++rep) {
    const std::size_t n = 2 + rng.below(30);
    const auto gold = oracle::random_labels(rng, n, 0.3);
    const auto hyp = oracle::random_labels(rng, n, 0.35);
    const std::size_t k =
        rep % 2 == 0 ? default_window(gold) : 1 + rng.below(n - 1);
    CAPTURE(rep);
    CAPTURE(n);
    CAPTURE(k);

    CHECK(pk(gold, hyp, k) == oracle::pk(gold, hyp, k));
    CHECK(window_diff(gold, hyp, k) == oracle::window_diff(gold, hyp, k));
    CHECK(pr_error(gold, hyp, k) == oracle::pr_error(gold, hyp, k));
    CHECK(f1_boundary(gold, hyp) == oracle::f1(gold, hyp));

    const auto gsegs = boundaries_to_segments(gold, n);
    const auto hsegs = boundaries_to_segments(hyp, n);
    CHECK(miou(gsegs, hsegs) == oracle::miou(gold, hyp));

    CHECK(segments_to_boundaries(gsegs) == gold);
    CHECK(segments_to_boundaries(hsegs) == hyp);

    // Same-segment disagreement and slot-count comparison are symmetric.
    CHECK(pk(gold, hyp, k) == pk(hyp, gold, k));
    CHECK(window_diff(gold, hyp, k) == window_diff(hyp, gold, k));

    CHECK(pk(gold, gold, k) == 0.0);
    CHECK(window_diff(gold, gold, k) == 0.0);
    CHECK(pr_error(gold, gold, k) == 0.0);
    CHECK(f1_boundary(gold, gold) == 1.0);
    CHECK(miou(gsegs, gsegs) == 1.0);
  }
}

TEST_CASE("corpus evaluation") {
  SUBCASE("perfect predictions") {
    const std::vector<LabeledPrediction> pairs = {
        {"ep0000", {0, 1, 0, 0, 1}, {0, 1, 0, 0, 1}},
        {"ep0001", {0, 0, 1, 0}, {0, 0, 1, 0}},
    };
    const MetricReport report = evaluate_corpus(pairs);
    REQUIRE(report.episodes.size() == 2);
    for (const EpisodeMetrics& em : report.episodes) {
      CHECK(em.f1 == 1.0);
      CHECK(em.pr == 0.0);
      CHECK(em.miou == 1.0);
      CHECK(em.pk == 0.0);
      CHECK(em.window_diff == 0.0);
    }
    CHECK(report.episodes[0].id == "ep0000");
    CHECK(report.episodes[0].k == default_window(pairs[0].gold));
    CHECK(report.mean.id == "mean");
    CHECK(report.mean.f1 == 1.0);
    CHECK(report.mean.pr == 0.0);
    CHECK(report.mean.miou == 1.0);
  }
  SUBCASE("means are unweighted averages") {
    const std::vector<LabeledPrediction> pairs = {
        {"a", {0, 1, 0, 0, 1}, {0, 1, 0, 1, 1}},
        {"b", {0, 0, 0, 1, 0, 0, 0}, {0, 0, 1, 0, 0, 0, 1}},
    };
    const MetricReport report = evaluate_corpus(pairs);
    REQUIRE(report.episodes.size() == 2);
    const EpisodeMetrics& a = report.episodes[0];
    const EpisodeMetrics& b = report.episodes[1];
    CHECK(report.mean.f1 == (a.f1 + b.f1) / 2.0);
    CHECK(report.mean.pr == (a.pr + b.pr) / 2.0);
    CHECK(report.mean.miou == (a.miou + b.miou) / 2.0);
    CHECK(report.mean.pk == (a.pk + b.pk) / 2.0);
    CHECK(report.mean.window_diff == (a.window_diff + b.window_diff) / 2.0);
    // Episode windows 1 and 2; their mean rounds half away from zero.
    CHECK(a.k == 1);
    CHECK(b.k == 2);
    CHECK(report.mean.k == 2);
  }
  SUBCASE("window override pins every episode") {
    const std::vector<LabeledPrediction> pairs = {
        {"a", {0, 1, 0, 0, 1}, {0, 1, 0, 1, 1}},
        {"b", {0, 0, 0, 1, 0, 0, 0}, {0, 0, 1, 0, 0, 0, 1}},
    };
    const MetricReport report = evaluate_corpus(pairs, 3);
    for (const EpisodeMetrics& em : report.episodes) CHECK(em.k == 3);
    CHECK(report.mean.k == 3);
    CHECK(report.episodes[0].pk == pk(pairs[0].gold, pairs[0].hyp, 3));
  }
  SUBCASE("empty corpus is rejected") {
    CHECK_THROWS_WITH_AS(evaluate_corpus({}), doctest::Contains("no episodes"),
                         DataError);
  }
  SUBCASE("an override too large for an episode propagates the window error") {
    const std::vector<LabeledPrediction> pairs = {{"a", {0, 1}, {0, 0}}};
    CHECK_THROWS_WITH_AS(evaluate_corpus(pairs, 5),
                         doctest::Contains("shorter than window"), DataError);
  }
}

TEST_CASE("report rendering") {
  const std::vector<LabeledPrediction> pairs = {
      {"ep0000", {0, 1, 0, 0, 1}, {0, 1, 0, 1, 1}},
  };
  const MetricReport report = evaluate_corpus(pairs);

  SUBCASE("csv golden") {
    CHECK(to_csv(report) ==
          "episode,f1,pr,miou,pk,windowdiff,k\n"
          "ep0000,0.800000,0.166667,0.888889,0.200000,0.200000,1\n"
          "mean,0.800000,0.166667,0.888889,0.200000,0.200000,1\n");
  }
  SUBCASE("csv file matches the string form") {
    testutil::ScopedDir dir("topseg-metrics-csv");
    const auto path = dir.path() / "report.csv";
    write_csv(report, path);
    CHECK(testutil::slurp(path) == to_csv(report));
  }
  SUBCASE("csv write failure is reported") {
    CHECK_THROWS_WITH_AS(write_csv(report, "/nonexistent-dir-xyz/report.csv"),
                         doctest::Contains("cannot open for writing"), DataError);
  }
  SUBCASE("table layout") {
    const std::string table = to_table(report);
    CHECK(count_lines(table) == 3);
    CHECK(table.substr(0, 7) == "episode");
    CHECK(table.find("windowdiff") != std::string::npos);
    CHECK(table.find("ep0000") != std::string::npos);
    CHECK(table.find("0.800000") != std::string::npos);
    CHECK(table.find("mean") != std::string::npos);
    // Long ids widen the id column instead of truncating.
    MetricReport wide = report;
    wide.episodes[0].id = "an-episode-with-a-long-identifier";
    const std::string widetable = to_table(wide);
    CHECK(widetable.find("an-episode-with-a-long-identifier") != std::string::npos);
  }
}
