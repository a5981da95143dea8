#include "tad/anchors.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace tad;

TEST_CASE("default anchor set over 768 frames") {
  AnchorConfig cfg;
  const AnchorSet anchors = generate_anchors(cfg, 768);
  CHECK(anchors.total() == 930);  // (96+48+24+12+6) positions x 5 scales
  CHECK(anchors.levels() == 5);
  CHECK(anchors.positions(0) == 96);
  CHECK(anchors.positions(4) == 6);

  // Level 0, position 0, scale 1: centered at 4 with length 16.
  const Segmentd& a = anchors.level(0)[0];
  CHECK(a.start == doctest::Approx(-4.0));
  CHECK(a.end == doctest::Approx(12.0));

  const double expected_scales[5] = {1.0, 1.1487, 1.3195, 1.5157, 1.7411};
  for (int s = 0; s < 5; ++s)
    CHECK(cfg.scales[s] == doctest::Approx(expected_scales[s]).epsilon(1e-4));
}

TEST_CASE("generate_anchors rejects misaligned clip length") {
  CHECK_THROWS_AS(generate_anchors(AnchorConfig{}, 700), ConfigError);
  CHECK_THROWS_AS(generate_anchors(AnchorConfig{}, 0), ConfigError);
}

TEST_CASE("anchor config validation") {
  AnchorConfig bad;
  bad.strides = {8, 8, 32, 64, 128};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = AnchorConfig{};
  bad.neg_thr = 0.7;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("assign basic cases") {
  AnchorConfig cfg;
  const AnchorSet anchors = generate_anchors(cfg, 768);

  SUBCASE("anchor equal to a gt is positive to it") {
    const Segmentd& a = anchors.level(2)[10];
    const Assignment r = assign(anchors, {{a, 1}}, cfg);
    int flat = anchors.level_offset(2) + 10;
    CHECK(r.labels[flat] == 0);
    CHECK(r.positives_per_gt[0] >= 1);
  }

  SUBCASE("no gts means all negative") {
    const Assignment r = assign(anchors, {}, cfg);
    CHECK(r.num_negative == anchors.total());
    CHECK(r.num_positive == 0);
    CHECK(r.num_ignored == 0);
    CHECK(r.positives_per_gt.empty());
  }

  SUBCASE("anchor with max tiou in [0.4, 0.6) is ignored") {
    // A gt twice as long as the largest anchor caps the best achievable
    // tiou near 445.7/900, inside the ignore band.
    const AnchorSet wide = generate_anchors(cfg, 1024);
    const Segmentd gt{0.0, 900.0};
    double best = 0.0;
    for (int level = 0; level < wide.levels(); ++level)
      for (const Segmentd& a : wide.level(level))
        best = std::max(best, tiou(a, gt));
    REQUIRE(best > 0.4);
    REQUIRE(best < 0.6);
    const Assignment r = assign(wide, {{gt, 0}}, cfg);
    CHECK(r.num_positive == 0);
    CHECK(r.num_ignored > 0);
  }
}

TEST_CASE("assignment partition is exhaustive") {
  AnchorConfig cfg;
  const AnchorSet anchors = generate_anchors(cfg, 768);
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<LabeledSegment> gts;
    const int n = 1 + static_cast<int>(rng.uniform_int(4));
    for (int i = 0; i < n; ++i) {
      const double start = rng.uniform(0, 700);
      gts.push_back({{start, start + rng.uniform(10, 260)}, 0});
    }
    const Assignment r = assign(anchors, gts, cfg);
    CHECK(r.num_positive + r.num_negative + r.num_ignored == anchors.total());
    int pos = 0, neg = 0, ign = 0;
    for (int label : r.labels) {
      if (label >= 0) ++pos;
      else if (label == Assignment::kNegative) ++neg;
      else ++ign;
    }
    CHECK(pos == r.num_positive);
    CHECK(neg == r.num_negative);
    CHECK(ign == r.num_ignored);
  }
}

TEST_CASE("assignment threshold monotonicity") {
  AnchorConfig cfg;
  const AnchorSet anchors = generate_anchors(cfg, 768);
  std::vector<LabeledSegment> gts{{{100, 190}, 0}, {{400, 560}, 1}};

  AnchorConfig stricter = cfg;
  stricter.pos_thr = 0.75;
  CHECK(assign(anchors, gts, stricter).num_positive <=
        assign(anchors, gts, cfg).num_positive);

  AnchorConfig looser_neg = cfg;
  looser_neg.neg_thr = 0.2;
  CHECK(assign(anchors, gts, looser_neg).num_negative <=
        assign(anchors, gts, cfg).num_negative);
}

TEST_CASE("translation invariance of positive pattern") {
  AnchorConfig cfg;
  const AnchorSet anchors = generate_anchors(cfg, 768);
  const int shift = cfg.strides.back();  // one full top-level stride

  std::vector<LabeledSegment> gts{{{200, 310}, 0}};
  std::vector<LabeledSegment> shifted{{{200.0 + shift, 310.0 + shift}, 0}};
  const Assignment a = assign(anchors, gts, cfg);
  const Assignment b = assign(anchors, shifted, cfg);
  CHECK(a.num_positive == b.num_positive);

  // Per level, positive indices shift by (stride_max / stride_L) positions.
  for (int level = 0; level < anchors.levels(); ++level) {
    const int per_pos = cfg.scales_per_level();
    const int pos_shift = shift / cfg.strides[level] * per_pos;
    const int offset = anchors.level_offset(level);
    const int count = static_cast<int>(anchors.level(level).size());
    for (int i = 0; i < count; ++i) {
      if (a.labels[offset + i] < 0) continue;
      REQUIRE(i + pos_shift < count);
      CHECK(b.labels[offset + i + pos_shift] >= 0);
    }
  }
}

TEST_CASE("decode") {
  const Segmentd anchor{0, 16};
  SUBCASE("zero offsets are the identity") {
    AnchorConfig cfg;
    const AnchorSet anchors = generate_anchors(cfg, 768);
    for (int level = 0; level < anchors.levels(); ++level)
      for (const Segmentd& a : anchors.level(level)) {
        const Segmentd d = decode(a, 0.0, 0.0);
        CHECK(d.start == doctest::Approx(a.start).epsilon(1e-12));
        CHECK(d.end == doctest::Approx(a.end).epsilon(1e-12));
      }
  }
  SUBCASE("center shift and length scaling") {
    const Segmentd d = decode(anchor, 0.5, std::log(2.0));
    CHECK(d.start == doctest::Approx(0.0));
    CHECK(d.end == doctest::Approx(32.0));
    const Segmentd h = decode(anchor, 0.0, std::log(0.5));
    CHECK(h.start == doctest::Approx(4.0));
    CHECK(h.end == doctest::Approx(12.0));
  }
  SUBCASE("non-finite offsets rejected") {
    CHECK_THROWS_AS(decode(anchor, std::nan(""), 0.0), Error);
    CHECK_THROWS_AS(decode(anchor, 0.0, INFINITY), Error);
  }
}

namespace {

// Brute-force mean positives per gt, counted from scratch.
double mean_positives(const std::vector<VideoAnnotation>& dataset,
                      const AnchorConfig& cfg) {
  int total = 0, gts = 0;
  for (const VideoAnnotation& v : dataset) {
    const int stride_max = cfg.strides.back();
    const int len = ((v.num_frames + stride_max - 1) / stride_max) * stride_max;
    const AnchorSet anchors = generate_anchors(cfg, len);
    for (const LabeledSegment& gt : v.instances) {
      ++gts;
      for (int level = 0; level < anchors.levels(); ++level)
        for (const Segmentd& a : anchors.level(level)) {
          // Positive iff this gt is the anchor's argmax and tiou >= pos_thr.
          const double t = tiou(a, gt.segment);
          if (t < cfg.pos_thr) continue;
          bool is_argmax = true;
          for (const LabeledSegment& other : v.instances) {
            if (&other == &gt) continue;
            if (tiou(a, other.segment) > t) is_argmax = false;
          }
          if (is_argmax) ++total;
        }
    }
  }
  return gts == 0 ? 0.0 : static_cast<double>(total) / gts;
}

}  // namespace

TEST_CASE("assignment histogram") {
  Rng rng(22);
  std::vector<VideoAnnotation> dataset;
  for (int v = 0; v < 12; ++v) {
    VideoAnnotation video;
    video.id = "v" + std::to_string(v);
    video.num_frames = 1024;
    video.fps = 25.0;
    double cursor = 10.0;
    for (int i = 0; i < 3; ++i) {
      const double len = rng.uniform(20, 220);
      if (cursor + len > video.num_frames) break;
      video.instances.push_back({{cursor, cursor + len}, 0});
      cursor += len + rng.uniform(30, 120);
    }
    dataset.push_back(video);
  }

  SUBCASE("single gt identical to an anchor gets counted") {
    AnchorConfig cfg;
    const AnchorSet anchors = generate_anchors(cfg, 768);
    VideoAnnotation video;
    video.id = "x";
    video.num_frames = 768;
    video.instances.push_back({anchors.level(2)[25], 0});
    const auto rows = assignment_histogram({video}, cfg);
    REQUIRE(!rows.empty());
    bool nonzero = false;
    for (const auto& row : rows) nonzero = nonzero || row.positives >= 1;
    CHECK(nonzero);
  }

  SUBCASE("empty dataset yields empty histogram") {
    CHECK(assignment_histogram({}, AnchorConfig{}).empty());
  }

  SUBCASE("five scales assign at least as many positives as three") {
    AnchorConfig five;
    AnchorConfig three = five;
    three.scales = {1.0, std::pow(2.0, 1.0 / 3.0), std::pow(2.0, 2.0 / 3.0)};
    CHECK(mean_positives(dataset, five) >= mean_positives(dataset, three));
  }

  SUBCASE("cdf reaches 1 per bucket and csv has header") {
    AnchorConfig cfg;
    const auto rows = assignment_histogram(dataset, cfg);
    REQUIRE(!rows.empty());
    std::set<std::string> buckets;
    for (const auto& row : rows) buckets.insert(row.bucket);
    for (const auto& bucket : buckets) {
      double last_cdf = 0.0;
      for (const auto& row : rows)
        if (row.bucket == bucket) last_cdf = row.cdf;
      CHECK(last_cdf == doctest::Approx(1.0));
    }
    const std::string csv = histogram_csv(rows);
    CHECK(csv.rfind("scale_bucket,positives_per_gt,pdf,cdf\n", 0) == 0);
  }
}
