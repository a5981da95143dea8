#include "tad/segment.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace tad;

namespace {

Segmentd seg(double s, double e) { return Segmentd{s, e}; }

// Draws a random segment pair away from the subgradient kinks of diou_loss
// (shared endpoints, touching boundaries).
bool near_kink(const Segmentd& p, const Segmentd& g, double eps) {
  if (std::abs(p.start - g.start) < eps) return true;
  if (std::abs(p.end - g.end) < eps) return true;
  const double inter = std::min(p.end, g.end) - std::max(p.start, g.start);
  return std::abs(inter) < eps;
}

}  // namespace

TEST_CASE("tiou basic values") {
  CHECK(tiou(seg(1, 3), seg(1, 3)) == doctest::Approx(1.0));
  CHECK(tiou(seg(0, 1), seg(2, 3)) == doctest::Approx(0.0));
  CHECK(tiou(seg(0, 4), seg(2, 6)) == doctest::Approx(2.0 / 6.0));
}

TEST_CASE("tiou symmetry and bounds") {
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    const Segmentd a{rng.uniform(-10, 10), 0};
    const Segmentd b{rng.uniform(-10, 10), 0};
    Segmentd aa{a.start, a.start + rng.uniform(0.05, 8.0)};
    Segmentd bb{b.start, b.start + rng.uniform(0.05, 8.0)};
    const double t1 = tiou(aa, bb);
    const double t2 = tiou(bb, aa);
    CHECK(t1 == t2);
    CHECK(t1 >= 0.0);
    CHECK(t1 <= 1.0);
    CHECK(tiou(aa, aa) == doctest::Approx(1.0));
  }
}

TEST_CASE("diou_loss hand-derived values") {
  CHECK(diou_loss(seg(1, 3), seg(1, 3)).loss == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(diou_loss(seg(0, 2), seg(4, 6)).loss - (1.0 + 16.0 / 36.0)) < 1e-9);
  CHECK(std::abs(diou_loss(seg(0, 4), seg(2, 6)).loss - (1.0 - 1.0 / 3.0 + 4.0 / 36.0)) < 1e-9);
}

TEST_CASE("diou_loss range") {
  Rng rng(12);
  for (int i = 0; i < 5000; ++i) {
    Segmentd p{rng.uniform(-10, 10), 0};
    p.end = p.start + rng.uniform(0.05, 8.0);
    Segmentd g{rng.uniform(-10, 10), 0};
    g.end = g.start + rng.uniform(0.05, 8.0);
    const double loss = diou_loss(p, g).loss;
    CHECK(loss >= 0.0);
    CHECK(loss < 2.0);
  }
  CHECK(diou_loss(seg(2, 5), seg(2, 5)).loss == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("diou_loss gradient matches central finite differences") {
  Rng rng(13);
  const double h = 1e-5;
  int checked = 0;
  while (checked < 1000) {
    Segmentd p{rng.uniform(-10, 10), 0};
    p.end = p.start + rng.uniform(0.1, 8.0);
    Segmentd g{rng.uniform(-10, 10), 0};
    g.end = g.start + rng.uniform(0.1, 8.0);
    if (near_kink(p, g, 1e-3)) continue;
    ++checked;

    const auto res = diou_loss(p, g);
    const double fd_start =
        (diou_loss(seg(p.start + h, p.end), g).loss -
         diou_loss(seg(p.start - h, p.end), g).loss) /
        (2 * h);
    const double fd_end =
        (diou_loss(seg(p.start, p.end + h), g).loss -
         diou_loss(seg(p.start, p.end - h), g).loss) /
        (2 * h);

    const double rel_s = std::abs(res.d_start - fd_start) /
                         std::max({std::abs(res.d_start), std::abs(fd_start), 1e-6});
    const double rel_e = std::abs(res.d_end - fd_end) /
                         std::max({std::abs(res.d_end), std::abs(fd_end), 1e-6});
    CHECK(rel_s <= 1e-6);
    CHECK(rel_e <= 1e-6);
  }
}

TEST_CASE("suppress single candidate unchanged") {
  std::vector<Detection> in{{seg(3, 9), 0.7, 2}};
  for (auto mode : {SuppressMode::Nms, SuppressMode::Nmw}) {
    auto out = suppress(in, 0.5, mode);
    REQUIRE(out.size() == 1);
    CHECK(out[0].segment.start == 3);
    CHECK(out[0].segment.end == 9);
    CHECK(out[0].score == 0.7);
    CHECK(out[0].class_id == 2);
  }
}

TEST_CASE("suppress nmw merges identical segments") {
  std::vector<Detection> in{{seg(0, 10), 0.9, 0}, {seg(0, 10), 0.8, 0}};
  auto out = suppress(in, 0.5, SuppressMode::Nmw);
  REQUIRE(out.size() == 1);
  CHECK(out[0].segment.start == doctest::Approx(0.0));
  CHECK(out[0].segment.end == doctest::Approx(10.0));
  CHECK(out[0].score == 0.9);
}

TEST_CASE("suppress keeps disjoint clusters") {
  std::vector<Detection> in{{seg(0, 10), 0.9, 0}, {seg(100, 110), 0.8, 0}};
  for (auto mode : {SuppressMode::Nms, SuppressMode::Nmw}) {
    auto out = suppress(in, 0.5, mode);
    CHECK(out.size() == 2);
    CHECK(out[0].score == 0.9);
    CHECK(out[1].score == 0.8);
  }
}

TEST_CASE("suppress properties on random candidate sets") {
  Rng rng(14);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Detection> in;
    const int n = 1 + static_cast<int>(rng.uniform_int(12));
    for (int i = 0; i < n; ++i) {
      Detection d;
      d.segment.start = rng.uniform(0, 50);
      d.segment.end = d.segment.start + rng.uniform(0.5, 20.0);
      d.score = rng.uniform(0.01, 1.0);
      d.class_id = 0;
      in.push_back(d);
    }
    const double thr = rng.uniform(0.2, 0.8);

    auto nms1 = suppress(in, thr, SuppressMode::Nms);
    CHECK(nms1.size() <= in.size());
    // Output scores are a subset of input scores.
    for (const auto& d : nms1) {
      bool found = false;
      for (const auto& s : in) found = found || s.score == d.score;
      CHECK(found);
    }
    // Sorted by descending score.
    for (std::size_t i = 1; i < nms1.size(); ++i)
      CHECK(nms1[i - 1].score >= nms1[i].score);
    // Idempotent in nms mode.
    auto nms2 = suppress(nms1, thr, SuppressMode::Nms);
    REQUIRE(nms2.size() == nms1.size());
    for (std::size_t i = 0; i < nms1.size(); ++i) {
      CHECK(nms2[i].segment.start == nms1[i].segment.start);
      CHECK(nms2[i].segment.end == nms1[i].segment.end);
      CHECK(nms2[i].score == nms1[i].score);
    }

    auto nmw = suppress(in, thr, SuppressMode::Nmw);
    CHECK(nmw.size() == nms1.size());
    for (std::size_t i = 0; i < nmw.size(); ++i) {
      CHECK(nmw[i].score == nms1[i].score);  // nmw keeps seed scores
      CHECK(nmw[i].segment.valid());
    }
    CHECK(suppress(std::vector<Detection>{}, thr, SuppressMode::Nmw).empty());
  }
}
