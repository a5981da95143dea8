#pragma once

#include "tad/anchors.hpp"
#include "tad/core.hpp"
#include "tad/losses.hpp"
#include "tad/net.hpp"
#include "tad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace tad {

/// Central finite differences (step 1e-5 on f64) against an analytic
/// gradient over one flat buffer. `f` recomputes the scalar objective from
/// the buffer's current contents.
template <class F>
double max_rel_error_fd(double* data, Eigen::Index n, const double* analytic,
                        F&& f, double step = 1e-5) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double orig = data[i];
    data[i] = orig + step;
    const double fp = f();
    data[i] = orig - step;
    const double fm = f();
    data[i] = orig;
    const double fd = (fp - fm) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(fd), 1e-6});
    worst = std::max(worst, std::abs(analytic[i] - fd) / denom);
  }
  return worst;
}

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_rel_error <= tolerance; }
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool passed() const {
    for (const auto& e : entries)
      if (!e.passed()) return false;
    return !entries.empty();
  }
};

namespace detail {

inline MatrixXd random_matrix(int rows, int cols, Rng& rng, double lo = -1.0,
                              double hi = 1.0) {
  MatrixXd m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = rng.uniform(lo, hi);
  return m;
}

// Scalar objective over a head output: a fixed random weighting, so the
// seeded backward gradient is just the weight matrix.
struct Weighting {
  MatrixXd r;
  double operator()(const MatrixXd& y) const { return (y.array() * r.array()).sum(); }
};

}  // namespace detail

/// Finite-difference verification of every reverse-mode gradient in the
/// detector: the conv primitive, backbone projection, the three SRM modes,
/// the TDM/TFPN/TPM stacks, focal loss, and the detection loss through the
/// full network (feature path for the neck/head parameters, pixel path for
/// the backbone/SRM parameters). Deterministic; seeds are fixed.
inline GradCheckReport gradcheck_suite(int num_classes = 3,
                                       int anchors_per_position = 5) {
  GradCheckReport report;
  Rng rng(2024);

  auto check_params =
      [&report](const std::string& name, std::vector<Param<double>*> params,
                const std::function<double()>& objective, double tol) {
        double worst = 0.0;
        for (Param<double>* p : params)
          worst = std::max(worst, max_rel_error_fd(p->value.data(),
                                                   p->value.size(),
                                                   p->grad.data(), objective));
        report.entries.push_back({name, worst, tol});
      };
  auto check_buffer = [&report](const std::string& name, MatrixXd& x,
                                const MatrixXd& analytic,
                                const std::function<double()>& objective,
                                double tol) {
    const double worst = max_rel_error_fd(x.data(), x.size(), analytic.data(),
                                          objective);
    report.entries.push_back({name, worst, tol});
  };

  // conv1d, stride 1, no activation: weights, bias and input.
  {
    nn::Conv1d<double> conv("c", 3, 4, 3, 1, false);
    conv.init(rng);
    MatrixXd x = detail::random_matrix(3, 12, rng);
    detail::Weighting obj{detail::random_matrix(4, 12, rng)};
    auto run = [&]() { return obj(conv.forward(x, false)); };
    conv.forward(x, true);
    MatrixXd gx = conv.backward(obj.r);
    check_params("conv1d.stride1.params",
                 {&conv.weight(), &conv.bias()}, run, 1e-6);
    check_buffer("conv1d.stride1.input", x, gx, run, 1e-6);
  }

  // conv1d, stride 2, ReLU (bias offset keeps preactivations off the kink).
  {
    nn::Conv1d<double> conv("c", 3, 4, 3, 2, true);
    conv.init(rng);
    conv.bias().value.flat().setConstant(0.35);
    MatrixXd x = detail::random_matrix(3, 16, rng);
    detail::Weighting obj{detail::random_matrix(4, 8, rng)};
    auto run = [&]() { return obj(conv.forward(x, false)); };
    conv.forward(x, true);
    MatrixXd gx = conv.backward(obj.r);
    check_params("conv1d.stride2.relu.params",
                 {&conv.weight(), &conv.bias()}, run, 1e-6);
    check_buffer("conv1d.stride2.relu.input", x, gx, run, 1e-6);
  }

  // Pointwise projection (1x1 conv + ReLU), as used on pooled pixels.
  {
    nn::Conv1d<double> proj("p", 3, 6, 1, 1, true);
    proj.init(rng);
    proj.bias().value.flat().setConstant(0.4);
    MatrixXd x = detail::random_matrix(3, 20, rng);
    detail::Weighting obj{detail::random_matrix(6, 20, rng)};
    auto run = [&]() { return obj(proj.forward(x, false)); };
    proj.forward(x, true);
    MatrixXd gx = proj.backward(obj.r);
    check_params("projection.params", {&proj.weight(), &proj.bias()}, run, 1e-6);
    check_buffer("projection.input", x, gx, run, 1e-6);
  }

  // SRM, all three reduction modes, over a 4x4 grid.
  for (SrmMode mode : {SrmMode::Avg, SrmMode::Max, SrmMode::Conv}) {
    const int channels = 5, t = 6;
    Srm<double> srm(mode, channels, 4, 4);
    if (mode == SrmMode::Conv)
      for (Eigen::Index i = 0; i < srm.weight().value.size(); ++i)
        srm.weight().value(static_cast<int>(i)) = rng.uniform(-0.5, 0.5);
    SpatialSeq<double> in;
    in.t = t;
    in.h = 4;
    in.w = 4;
    in.feat = detail::random_matrix(channels, 16 * t, rng);
    detail::Weighting obj{detail::random_matrix(channels, t, rng)};
    auto run = [&]() { return obj(srm.forward(in, false)); };
    srm.forward(in, true);
    SpatialSeq<double> gx = srm.backward(obj.r);
    const std::string name = std::string("srm.") + to_string(mode);
    if (mode == SrmMode::Conv)
      check_params(name + ".weight", {&srm.weight()}, run, 1e-6);
    check_buffer(name + ".input", in.feat, gx.feat, run, 1e-6);
  }

  // TDM: four stacked stride-2 convs.
  {
    const int cb = 4, ch = 5, t = 32;
    std::vector<nn::Conv1d<double>> tdm;
    for (int i = 0; i < 4; ++i) {
      tdm.emplace_back("t" + std::to_string(i), i == 0 ? cb : ch, ch, 3, 2, true);
      tdm.back().init(rng);
      tdm.back().bias().value.flat().setConstant(0.3);
    }
    MatrixXd x = detail::random_matrix(cb, t, rng, -0.6, 0.6);
    detail::Weighting obj{detail::random_matrix(ch, t / 16, rng)};
    auto run = [&]() {
      MatrixXd h = x;
      for (auto& c : tdm) h = c.forward(h, false);
      return obj(h);
    };
    MatrixXd h = x;
    for (auto& c : tdm) h = c.forward(h, true);
    MatrixXd g = obj.r;
    for (int i = 3; i >= 0; --i) g = tdm[i].backward(g);
    std::vector<Param<double>*> params;
    for (auto& c : tdm) {
      params.push_back(&c.weight());
      params.push_back(&c.bias());
    }
    check_params("tdm.params", params, run, 1e-5);
    check_buffer("tdm.input", x, g, run, 1e-5);
  }

  // TFPN: laterals, top-down merge, smoothing convs; objective sums all levels.
  {
    const int cb = 4, ch = 5, fpn = 4, t = 32;
    std::vector<nn::Conv1d<double>> tdm, lateral, smooth;
    for (int i = 0; i < 4; ++i) {
      tdm.emplace_back("t" + std::to_string(i), i == 0 ? cb : ch, ch, 3, 2, true);
      tdm.back().init(rng);
      tdm.back().bias().value.flat().setConstant(0.3);
    }
    for (int l = 0; l < 5; ++l) {
      lateral.emplace_back("l" + std::to_string(l), l == 0 ? cb : ch, fpn, 1, 1, false);
      lateral.back().init(rng);
      smooth.emplace_back("s" + std::to_string(l), fpn, fpn, 3, 1, false);
      smooth.back().init(rng);
    }
    MatrixXd x = detail::random_matrix(cb, t, rng, -0.6, 0.6);
    std::vector<detail::Weighting> objs;
    for (int l = 0; l < 5; ++l)
      objs.push_back({detail::random_matrix(fpn, t >> l, rng)});
    auto run_levels = [&](bool cache) {
      std::vector<MatrixXd> outs(5);
      std::vector<MatrixXd> td(5);
      td[0] = x;
      for (int i = 0; i < 4; ++i) td[i + 1] = tdm[i].forward(td[i], cache);
      std::vector<MatrixXd> p(5);
      for (int l = 0; l < 5; ++l) p[l] = lateral[l].forward(td[l], cache);
      for (int l = 3; l >= 0; --l) p[l] += nn::upsample2(p[l + 1]);
      for (int l = 0; l < 5; ++l) outs[l] = smooth[l].forward(p[l], cache);
      return outs;
    };
    auto run = [&]() {
      auto outs = run_levels(false);
      double sum = 0;
      for (int l = 0; l < 5; ++l) sum += objs[l](outs[l]);
      return sum;
    };
    run_levels(true);
    std::vector<MatrixXd> gp(5);
    for (int l = 4; l >= 0; --l) gp[l] = smooth[l].backward(objs[l].r);
    for (int l = 0; l < 4; ++l) gp[l + 1] += nn::upsample2_backward(gp[l]);
    std::vector<MatrixXd> gtd(5);
    for (int l = 4; l >= 0; --l) gtd[l] = lateral[l].backward(gp[l]);
    MatrixXd g = gtd[4];
    for (int i = 3; i >= 0; --i) {
      g = tdm[i].backward(g);
      g += gtd[i];
    }
    std::vector<Param<double>*> params;
    for (auto& c : lateral) {
      params.push_back(&c.weight());
      params.push_back(&c.bias());
    }
    for (auto& c : smooth) {
      params.push_back(&c.weight());
      params.push_back(&c.bias());
    }
    check_params("tfpn.params", params, run, 1e-5);
    check_buffer("tfpn.input", x, g, run, 1e-5);
  }

  // TPM: one shared two-conv branch applied to two pyramid levels.
  {
    const int fpn = 4, outc = 6;
    nn::Conv1d<double> hidden("h", fpn, fpn, 3, 1, true);
    nn::Conv1d<double> out("o", fpn, outc, 3, 1, false);
    hidden.init(rng);
    hidden.bias().value.flat().setConstant(0.3);
    out.init(rng);
    MatrixXd x0 = detail::random_matrix(fpn, 12, rng);
    MatrixXd x1 = detail::random_matrix(fpn, 6, rng);
    detail::Weighting o0{detail::random_matrix(outc, 12, rng)};
    detail::Weighting o1{detail::random_matrix(outc, 6, rng)};
    auto run = [&]() {
      return o0(out.forward(hidden.forward(x0, false), false)) +
             o1(out.forward(hidden.forward(x1, false), false));
    };
    out.forward(hidden.forward(x0, true), true);
    out.forward(hidden.forward(x1, true), true);
    MatrixXd g1 = hidden.backward(out.backward(o1.r));
    MatrixXd g0 = hidden.backward(out.backward(o0.r));
    check_params("tpm.shared_params",
                 {&hidden.weight(), &hidden.bias(), &out.weight(), &out.bias()},
                 run, 1e-5);
    check_buffer("tpm.input0", x0, g0, run, 1e-5);
    check_buffer("tpm.input1", x1, g1, run, 1e-5);
  }

  // Focal loss gradient on a logit grid.
  {
    double worst = 0.0;
    LossConfig lcfg;
    for (int ti = 0; ti < 2; ++ti) {
      for (double logit = -10.0; logit <= 10.0; logit += 0.25) {
        double x = logit;
        const auto res = focal_loss(x, ti == 1, lcfg);
        auto f = [&]() { return focal_loss(x, ti == 1, lcfg).loss; };
        worst = std::max(worst,
                         max_rel_error_fd(&x, 1, &res.d_logit, f));
      }
    }
    report.entries.push_back({"focal_loss", worst, 1e-8});
  }

  // Detection loss through the full net, feature path: every neck and head
  // parameter of a micro detector.
  {
    NetConfig cfg;
    cfg.backbone_channels = 4;
    cfg.tdm_channels = 5;
    cfg.fpn_channels = 4;
    cfg.head_convs = 1;
    cfg.num_classes = std::min(num_classes, 3);
    cfg.anchors_per_position = std::min(anchors_per_position, 3);

    AnchorConfig acfg;
    acfg.scales.resize(cfg.anchors_per_position);
    for (int i = 0; i < cfg.anchors_per_position; ++i)
      acfg.scales[i] = std::pow(2.0, i / double(cfg.anchors_per_position));

    const int clip_len = 256;  // T/8 = 32 positions at level 0
    const AnchorSet anchors = generate_anchors(acfg, clip_len);
    std::vector<LabeledSegment> gts{{{40.0, 90.0}, 0},
                                    {{130.0, 260.0}, cfg.num_classes - 1}};
    const Assignment assignment = assign(anchors, gts, acfg);

    DetectorNet<double> net(cfg);
    Rng netrng(77);
    net.init(netrng);
    MatrixXd seq = detail::random_matrix(cfg.backbone_channels, 32, rng, -0.6, 0.6);
    LossConfig lcfg;

    auto run = [&]() {
      net.set_training(false);
      const auto out = net.forward(seq);
      net.set_training(true);
      return detection_loss(out, anchors, assignment, gts, cfg.num_classes, lcfg)
          .total;
    };
    net.zero_grads();
    const auto out = net.forward(seq);
    const auto loss =
        detection_loss(out, anchors, assignment, gts, cfg.num_classes, lcfg);
    net.backward(loss.grads);
    check_params("detection_loss.feature_path.all_params", net.params(), run,
                 1e-4);
  }

  // Detection loss through the pixel path: backbone projection and SRM
  // parameters (conv reduction mode) against the same full objective.
  {
    NetConfig cfg;
    cfg.backbone_channels = 4;
    cfg.tdm_channels = 4;
    cfg.fpn_channels = 4;
    cfg.head_convs = 1;
    cfg.num_classes = 2;
    cfg.anchors_per_position = 2;
    cfg.srm_mode = SrmMode::Conv;

    AnchorConfig acfg;
    acfg.scales = {1.0, 1.3};

    const int clip_len = 128;
    const AnchorSet anchors = generate_anchors(acfg, clip_len);
    std::vector<LabeledSegment> gts{{{30.0, 80.0}, 1}};
    const Assignment assignment = assign(anchors, gts, acfg);

    DetectorNet<double> net(cfg);
    Rng netrng(78);
    net.init(netrng);
    Tensor<double> clip({3, clip_len, 112, 112});
    for (Eigen::Index i = 0; i < clip.size(); ++i)
      clip(static_cast<int>(i)) = rng.uniform(0.0, 1.0);
    LossConfig lcfg;

    auto run = [&]() {
      net.set_training(false);
      const auto out = net.forward(clip);
      net.set_training(true);
      return detection_loss(out, anchors, assignment, gts, cfg.num_classes, lcfg)
          .total;
    };
    net.zero_grads();
    const auto out = net.forward(clip);
    const auto loss =
        detection_loss(out, anchors, assignment, gts, cfg.num_classes, lcfg);
    net.backward(loss.grads);
    std::vector<Param<double>*> backbone_params;
    for (Param<double>* p : net.params())
      if (p->name.rfind("backbone.", 0) == 0 || p->name.rfind("srm.", 0) == 0)
        backbone_params.push_back(p);
    check_params("detection_loss.pixel_path.backbone_params", backbone_params,
                 run, 1e-4);
  }

  return report;
}

}  // namespace tad
