#pragma once

#include "tad/core.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace tad {

/// Half-open temporal interval [start, end) in frame units. The one geometric
/// object shared by anchors, ground truths and detections.
template <class Scalar>
struct Segment {
  Scalar start{};
  Scalar end{};

  Scalar length() const { return end - start; }
  Scalar center() const { return (start + end) / Scalar(2); }
  bool valid() const {
    return std::isfinite(start) && std::isfinite(end) && end > start;
  }
};

using Segmentd = Segment<double>;

template <class Scalar>
struct ScoredSegment {
  Segment<Scalar> segment;
  Scalar score{};
  int class_id = 0;
};

using Detection = ScoredSegment<double>;

/// Ground-truth instance: segment plus class label.
struct LabeledSegment {
  Segmentd segment;
  int class_id = 0;
};

/// Temporal intersection-over-union of two valid segments. Symmetric, in
/// [0, 1], and 1 iff the segments coincide.
template <class Scalar>
Scalar tiou(const Segment<Scalar>& a, const Segment<Scalar>& b) {
  const Scalar inter =
      std::min(a.end, b.end) - std::max(a.start, b.start);
  if (inter <= Scalar(0)) return Scalar(0);
  const Scalar uni = a.length() + b.length() - inter;
  return inter / uni;
}

template <class Scalar>
struct DiouResult {
  Scalar loss{};
  Scalar d_start{};  // d loss / d pred.start
  Scalar d_end{};    // d loss / d pred.end
};

/// Temporal DIoU loss: 1 - tIoU + (c_pred - c_gt)^2 / u^2, where u is the
/// length of the smallest segment enclosing both. Returns the loss and its
/// analytic gradient with respect to the predicted endpoints. At the tIoU
/// kinks (shared endpoints, touching segments) the gradient is the one-sided
/// subgradient of the branch selected by the comparisons below; ties resolve
/// to the predicted segment's side.
template <class Scalar>
DiouResult<Scalar> diou_loss(const Segment<Scalar>& pred,
                             const Segment<Scalar>& gt) {
  const Scalar sp = pred.start, ep = pred.end;
  const Scalar sg = gt.start, eg = gt.end;

  // Intersection and its branch derivatives.
  const bool lo_is_pred = sp >= sg;  // max(sp, sg) taken from pred
  const bool hi_is_pred = ep <= eg;  // min(ep, eg) taken from pred
  const Scalar inter_raw = std::min(ep, eg) - std::max(sp, sg);
  const bool overlapping = inter_raw > Scalar(0);
  const Scalar inter = overlapping ? inter_raw : Scalar(0);
  const Scalar di_dsp = (overlapping && lo_is_pred) ? Scalar(-1) : Scalar(0);
  const Scalar di_dep = (overlapping && hi_is_pred) ? Scalar(1) : Scalar(0);

  const Scalar uni = pred.length() + gt.length() - inter;
  const Scalar du_dsp = Scalar(-1) - di_dsp;
  const Scalar du_dep = Scalar(1) - di_dep;

  const Scalar iou = inter / uni;
  const Scalar diou_dsp = (di_dsp * uni - inter * du_dsp) / (uni * uni);
  const Scalar diou_dep = (di_dep * uni - inter * du_dep) / (uni * uni);

  // Center-distance penalty over the squared enclosing length.
  const bool enc_lo_is_pred = sp <= sg;  // min(sp, sg) taken from pred
  const bool enc_hi_is_pred = ep >= eg;  // max(ep, eg) taken from pred
  const Scalar enclose = std::max(ep, eg) - std::min(sp, sg);
  const Scalar denc_dsp = enc_lo_is_pred ? Scalar(-1) : Scalar(0);
  const Scalar denc_dep = enc_hi_is_pred ? Scalar(1) : Scalar(0);

  const Scalar dc = pred.center() - gt.center();
  const Scalar penalty = dc * dc / (enclose * enclose);
  const Scalar dpen_dc = Scalar(2) * dc / (enclose * enclose);
  const Scalar dpen_denc =
      Scalar(-2) * dc * dc / (enclose * enclose * enclose);

  DiouResult<Scalar> out;
  out.loss = Scalar(1) - iou + penalty;
  out.d_start = -diou_dsp + dpen_dc * Scalar(0.5) + dpen_denc * denc_dsp;
  out.d_end = -diou_dep + dpen_dc * Scalar(0.5) + dpen_denc * denc_dep;
  return out;
}

enum class SuppressMode { Nms, Nmw };

/// Greedy suppression over one class of candidates. Seeds are taken in
/// descending score order (ties: lower start, then lower class id). In Nms
/// mode the seed is kept and cluster members (tIoU with the seed >= threshold)
/// are dropped. In Nmw mode the output segment is the weighted mean of the
/// cluster boundaries, weights w_i = score_i * tIoU(seed, i), and the output
/// keeps the seed's score. Output is sorted by descending score.
template <class Scalar>
std::vector<ScoredSegment<Scalar>> suppress(
    std::vector<ScoredSegment<Scalar>> candidates, Scalar threshold,
    SuppressMode mode) {
  std::sort(candidates.begin(), candidates.end(),
            [](const ScoredSegment<Scalar>& a, const ScoredSegment<Scalar>& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.segment.start != b.segment.start)
                return a.segment.start < b.segment.start;
              if (a.class_id != b.class_id) return a.class_id < b.class_id;
              return a.segment.end < b.segment.end;
            });

  std::vector<ScoredSegment<Scalar>> kept;
  std::vector<bool> alive(candidates.size(), true);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!alive[i]) continue;
    alive[i] = false;
    const ScoredSegment<Scalar>& seed = candidates[i];

    Scalar w_sum = seed.score;  // seed weight: score * tIoU(seed, seed) = score
    Scalar start_sum = seed.score * seed.segment.start;
    Scalar end_sum = seed.score * seed.segment.end;
    std::size_t members = 0;
    for (std::size_t j = i + 1; j < candidates.size(); ++j) {
      if (!alive[j]) continue;
      const Scalar t = tiou(seed.segment, candidates[j].segment);
      if (t < threshold) continue;
      alive[j] = false;
      ++members;
      const Scalar w = candidates[j].score * t;
      w_sum += w;
      start_sum += w * candidates[j].segment.start;
      end_sum += w * candidates[j].segment.end;
    }

    // Singleton clusters degenerate to plain NMS (seed kept verbatim).
    ScoredSegment<Scalar> out = seed;
    if (mode == SuppressMode::Nmw && members > 0 && w_sum > Scalar(0)) {
      out.segment.start = start_sum / w_sum;
      out.segment.end = end_sum / w_sum;
    }
    kept.push_back(out);
  }
  return kept;
}

}  // namespace tad
