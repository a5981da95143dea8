#pragma once

#include "tad/anchors.hpp"
#include "tad/core.hpp"
#include "tad/net.hpp"
#include "tad/segment.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace tad {

struct LossConfig {
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double reg_weight = 1.0;  // lambda between the two loss terms

  void validate() const {
    if (!(focal_alpha > 0.0 && focal_alpha < 1.0))
      throw ConfigError("loss config: focal_alpha must be in (0,1)");
    if (focal_gamma < 0.0)
      throw ConfigError("loss config: focal_gamma must be >= 0");
    if (reg_weight <= 0.0)
      throw ConfigError("loss config: reg_weight must be positive");
  }
};

template <class Scalar>
struct FocalResult {
  Scalar loss{};
  Scalar d_logit{};
};

namespace detail {
template <class Scalar>
Scalar softplus(Scalar x) {  // log(1 + e^x), stable for large |x|
  return std::max(x, Scalar(0)) + std::log1p(std::exp(-std::abs(x)));
}
}  // namespace detail

/// Binary focal loss on a logit: -alpha_t (1 - p_t)^gamma log(p_t) with
/// p = sigmoid(logit). Stable for |logit| up to ~700; returns the analytic
/// d loss / d logit.
template <class Scalar>
FocalResult<Scalar> focal_loss(Scalar logit, bool target,
                               const LossConfig& cfg) {
  const Scalar alpha = static_cast<Scalar>(cfg.focal_alpha);
  const Scalar gamma = static_cast<Scalar>(cfg.focal_gamma);
  // Mirror the target=0 case onto the target=1 formulas via logit negation.
  const Scalar x = target ? logit : -logit;
  const Scalar a = target ? alpha : Scalar(1) - alpha;
  const Scalar p = Scalar(1) / (Scalar(1) + std::exp(-x));  // p_t
  const Scalar u = Scalar(1) - p;
  const Scalar log_p = -detail::softplus(-x);
  const Scalar u_pow = std::pow(u, gamma);
  FocalResult<Scalar> out;
  out.loss = -a * u_pow * log_p;
  // d/dx [a u^g (-log p)] = -a u^g (g p (-log p) + u)
  const Scalar dx = -a * u_pow * (gamma * p * (-log_p) + u);
  out.d_logit = target ? dx : -dx;
  return out;
}

/// Scalar detection loss for one clip plus gradients with respect to the raw
/// head outputs. Classification: focal over every non-ignored anchor and
/// every class (target 1 only at the matched class of a positive anchor).
/// Regression: temporal DIoU between the decoded positive anchors and their
/// matched gts. Both sums are normalized by max(1, positive count); the
/// regression term is weighted by reg_weight.
template <class Scalar>
struct DetectionLoss {
  Scalar total{};
  Scalar cls{};
  Scalar reg{};
  int num_positive = 0;
  NetOutput<Scalar> grads;  // same shapes as the head outputs
};

template <class Scalar>
DetectionLoss<Scalar> detection_loss(const NetOutput<Scalar>& pred,
                                     const AnchorSet& anchors,
                                     const Assignment& assignment,
                                     const std::vector<LabeledSegment>& gts,
                                     int num_classes, const LossConfig& cfg) {
  const int num_scales = anchors.config().scales_per_level();
  if (static_cast<int>(pred.cls.size()) != anchors.levels())
    throw ShapeError("detection_loss: level count mismatch");
  DetectionLoss<Scalar> out;
  out.grads.cls.resize(pred.cls.size());
  out.grads.reg.resize(pred.reg.size());
  for (std::size_t l = 0; l < pred.cls.size(); ++l) {
    if (pred.cls[l].rows() != num_classes * num_scales ||
        pred.reg[l].rows() != 2 * num_scales ||
        pred.cls[l].cols() != anchors.positions(static_cast<int>(l)))
      throw ShapeError("detection_loss: head output shape does not match the "
                       "anchor set");
    out.grads.cls[l] = MatrixX<Scalar>::Zero(pred.cls[l].rows(), pred.cls[l].cols());
    out.grads.reg[l] = MatrixX<Scalar>::Zero(pred.reg[l].rows(), pred.reg[l].cols());
  }

  out.num_positive = assignment.num_positive;
  const Scalar norm = Scalar(1) / std::max(assignment.num_positive, 1);

  Scalar cls_sum = 0, reg_sum = 0;
  for (int level = 0; level < anchors.levels(); ++level) {
    const int positions = anchors.positions(level);
    for (int pos = 0; pos < positions; ++pos) {
      for (int a = 0; a < num_scales; ++a) {
        const int flat = anchors.flat_index(level, pos, a);
        const int label = assignment.labels[flat];
        if (label == Assignment::kIgnored) continue;

        for (int k = 0; k < num_classes; ++k) {
          const bool target = label >= 0 && gts[label].class_id == k;
          const int row = a * num_classes + k;
          const auto f =
              focal_loss(pred.cls[level](row, pos), target, cfg);
          cls_sum += f.loss;
          out.grads.cls[level](row, pos) = f.d_logit * norm;
        }

        if (label >= 0) {
          const Segmentd& anchor = anchors.level(level)[pos * num_scales + a];
          const Scalar dc = pred.reg[level](2 * a, pos);
          const Scalar dl = pred.reg[level](2 * a + 1, pos);
          const Segmentd decoded =
              decode(anchor, static_cast<double>(dc), static_cast<double>(dl));
          const auto d = diou_loss(decoded, gts[label].segment);
          reg_sum += static_cast<Scalar>(d.loss);
          // Chain through the decode parameterization:
          //   start = c + dc*len_a - len_a*e^dl / 2,  end = ... + len_a*e^dl / 2
          const Scalar len_a = static_cast<Scalar>(anchor.length());
          const Scalar half_len = static_cast<Scalar>(decoded.length() / 2.0);
          const Scalar gs = static_cast<Scalar>(d.d_start);
          const Scalar ge = static_cast<Scalar>(d.d_end);
          const Scalar w = static_cast<Scalar>(cfg.reg_weight) * norm;
          out.grads.reg[level](2 * a, pos) = (gs + ge) * len_a * w;
          out.grads.reg[level](2 * a + 1, pos) = (ge - gs) * half_len * w;
        }
      }
    }
  }
  out.cls = cls_sum * norm;
  out.reg = static_cast<Scalar>(cfg.reg_weight) * reg_sum * norm;
  out.total = out.cls + out.reg;
  return out;
}

}  // namespace tad
