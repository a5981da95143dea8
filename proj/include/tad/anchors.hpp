#pragma once

#include "tad/annotations.hpp"
#include "tad/core.hpp"
#include "tad/segment.hpp"

#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace tad {

struct AnchorConfig {
  std::vector<int> strides{8, 16, 32, 64, 128};
  std::vector<double> base_sizes{16, 32, 64, 128, 256};
  std::vector<double> scales{std::pow(2.0, 0.0), std::pow(2.0, 1.0 / 5.0),
                             std::pow(2.0, 2.0 / 5.0), std::pow(2.0, 3.0 / 5.0),
                             std::pow(2.0, 4.0 / 5.0)};
  double pos_thr = 0.6;
  double neg_thr = 0.4;

  int levels() const { return static_cast<int>(strides.size()); }
  int scales_per_level() const { return static_cast<int>(scales.size()); }

  void validate() const {
    if (strides.empty() || strides.size() != base_sizes.size())
      throw ConfigError("anchor config: strides and base_sizes must be "
                        "non-empty and equally sized");
    for (std::size_t i = 1; i < strides.size(); ++i)
      if (strides[i] <= strides[i - 1])
        throw ConfigError("anchor config: strides must be strictly increasing");
    if (scales.empty()) throw ConfigError("anchor config: scales empty");
    if (!(0.0 <= neg_thr && neg_thr < pos_thr && pos_thr <= 1.0))
      throw ConfigError("anchor config: need 0 <= neg_thr < pos_thr <= 1");
  }
};

/// Translation-invariant anchor segments over a fixed-length clip. Level L has
/// floor(clip_len / stride_L) positions, each carrying one anchor per scale,
/// centered at (i + 0.5) * stride_L with length base_size_L * scale. Anchors
/// are not clipped to the clip bounds.
///
/// Flat index order: level-major, then position, then scale. The prediction
/// head emits values in the same order.
class AnchorSet {
 public:
  AnchorSet() = default;
  AnchorSet(const AnchorConfig& cfg, int clip_len) : cfg_(cfg), clip_len_(clip_len) {
    cfg.validate();
    if (clip_len <= 0 || clip_len % cfg.strides.back() != 0)
      throw ConfigError("clip_len " + std::to_string(clip_len) +
                        " is not divisible by the largest stride " +
                        std::to_string(cfg.strides.back()));
    const int num_scales = cfg.scales_per_level();
    int offset = 0;
    for (int level = 0; level < cfg.levels(); ++level) {
      level_offsets_.push_back(offset);
      const int positions = clip_len / cfg.strides[level];
      std::vector<Segmentd> anchors;
      anchors.reserve(static_cast<std::size_t>(positions) * num_scales);
      for (int pos = 0; pos < positions; ++pos) {
        const double center = (pos + 0.5) * cfg.strides[level];
        for (int s = 0; s < num_scales; ++s) {
          const double len = cfg.base_sizes[level] * cfg.scales[s];
          anchors.push_back(Segmentd{center - len / 2, center + len / 2});
        }
      }
      offset += positions * num_scales;
      per_level_.push_back(std::move(anchors));
    }
    total_ = offset;
  }

  const AnchorConfig& config() const { return cfg_; }
  int clip_len() const { return clip_len_; }
  int total() const { return total_; }
  int levels() const { return static_cast<int>(per_level_.size()); }
  int positions(int level) const {
    return static_cast<int>(per_level_[level].size()) / cfg_.scales_per_level();
  }
  int level_offset(int level) const { return level_offsets_[level]; }

  int flat_index(int level, int pos, int scale) const {
    return level_offsets_[level] + pos * cfg_.scales_per_level() + scale;
  }

  const Segmentd& at(int flat) const {
    int level = levels() - 1;
    while (level > 0 && flat < level_offsets_[level]) --level;
    return per_level_[level][flat - level_offsets_[level]];
  }

  const std::vector<Segmentd>& level(int l) const { return per_level_[l]; }

 private:
  AnchorConfig cfg_;
  int clip_len_ = 0;
  std::vector<std::vector<Segmentd>> per_level_;
  std::vector<int> level_offsets_;
  int total_ = 0;
};

inline AnchorSet generate_anchors(const AnchorConfig& cfg, int clip_len) {
  return AnchorSet(cfg, clip_len);
}

/// Per-anchor labels: the matched ground-truth index for positives, or one of
/// the two sentinel values below. The partition is exhaustive and exclusive.
struct Assignment {
  static constexpr int kNegative = -1;
  static constexpr int kIgnored = -2;

  std::vector<int> labels;            // flat, one entry per anchor
  std::vector<int> positives_per_gt;  // one entry per ground truth
  int num_positive = 0;
  int num_negative = 0;
  int num_ignored = 0;
};

/// Max-tIoU assignment with two thresholds: an anchor is positive (assigned to
/// its argmax gt) when its best tIoU >= pos_thr, negative when < neg_thr, and
/// ignored in between. Argmax ties resolve to the earlier gt index. With zero
/// gts every anchor is negative.
inline Assignment assign(const AnchorSet& anchors,
                         const std::vector<LabeledSegment>& gts,
                         const AnchorConfig& cfg) {
  Assignment out;
  out.labels.assign(anchors.total(), Assignment::kNegative);
  out.positives_per_gt.assign(gts.size(), 0);
  if (gts.empty()) {
    out.num_negative = anchors.total();
    return out;
  }
  int flat = 0;
  for (int level = 0; level < anchors.levels(); ++level) {
    for (const Segmentd& anchor : anchors.level(level)) {
      double best = -1.0;
      int best_gt = -1;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        const double t = tiou(anchor, gts[g].segment);
        if (t > best) {
          best = t;
          best_gt = static_cast<int>(g);
        }
      }
      if (best >= cfg.pos_thr) {
        out.labels[flat] = best_gt;
        ++out.positives_per_gt[best_gt];
        ++out.num_positive;
      } else if (best < cfg.neg_thr) {
        ++out.num_negative;
      } else {
        out.labels[flat] = Assignment::kIgnored;
        ++out.num_ignored;
      }
      ++flat;
    }
  }
  return out;
}

/// Regression offsets relative to an anchor: the center moves by dc anchor
/// lengths and the length is scaled by exp(dl).
inline Segmentd decode(const Segmentd& anchor, double dc, double dl) {
  if (!std::isfinite(dc) || !std::isfinite(dl))
    throw Error("decode: non-finite regression offsets");
  const double center = anchor.center() + dc * anchor.length();
  const double len = anchor.length() * std::exp(dl);
  return Segmentd{center - len / 2, center + len / 2};
}

/// One row of the positives-per-gt distribution, bucketed by ground-truth
/// duration in seconds: small (0, 2.5], medium (2.5, 6], large (6, inf).
struct HistogramRow {
  std::string bucket;
  int positives = 0;
  double pdf = 0.0;
  double cdf = 0.0;
};

inline const char* scale_bucket(double seconds) {
  if (seconds <= 2.5) return "small";
  if (seconds <= 6.0) return "medium";
  return "large";
}

/// Distribution of positive-anchor counts per ground truth over a dataset,
/// one pdf/cdf table per duration bucket. Anchors are generated per video for
/// its frame count rounded up to a multiple of the largest stride.
inline std::vector<HistogramRow> assignment_histogram(
    const std::vector<VideoAnnotation>& dataset, const AnchorConfig& cfg) {
  std::map<std::string, std::map<int, int>> counts;  // bucket -> count -> n
  std::map<std::string, int> totals;
  for (const VideoAnnotation& video : dataset) {
    if (video.instances.empty()) continue;
    const int stride_max = cfg.strides.back();
    const int len =
        ((video.num_frames + stride_max - 1) / stride_max) * stride_max;
    const AnchorSet anchors = generate_anchors(cfg, len);
    const Assignment result = assign(anchors, video.instances, cfg);
    for (std::size_t g = 0; g < video.instances.size(); ++g) {
      const double seconds = video.instances[g].segment.length() / video.fps;
      const std::string bucket = scale_bucket(seconds);
      ++counts[bucket][result.positives_per_gt[g]];
      ++totals[bucket];
    }
  }
  std::vector<HistogramRow> rows;
  for (const auto& [bucket, table] : counts) {
    double cdf = 0.0;
    for (const auto& [positives, n] : table) {
      HistogramRow row;
      row.bucket = bucket;
      row.positives = positives;
      row.pdf = static_cast<double>(n) / totals[bucket];
      cdf += row.pdf;
      row.cdf = cdf;
      rows.push_back(row);
    }
  }
  return rows;
}

inline std::string histogram_csv(const std::vector<HistogramRow>& rows) {
  std::string csv = "scale_bucket,positives_per_gt,pdf,cdf\n";
  char line[128];
  for (const HistogramRow& row : rows) {
    std::snprintf(line, sizeof(line), "%s,%d,%.6f,%.6f\n", row.bucket.c_str(),
                  row.positives, row.pdf, row.cdf);
    csv += line;
  }
  return csv;
}

}  // namespace tad
