#pragma once

#include "tad/core.hpp"
#include "tad/tensor.hpp"

#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace tad {

enum class SrmMode { Avg, Max, Conv };

inline const char* to_string(SrmMode mode) {
  switch (mode) {
    case SrmMode::Avg: return "avg";
    case SrmMode::Max: return "max";
    case SrmMode::Conv: return "conv";
  }
  return "avg";
}

struct NetConfig {
  int backbone_channels = 64;   // channel width of the 1D backbone sequence
  int tdm_channels = 512;
  int fpn_channels = 256;
  int head_convs = 4;
  int num_classes = 0;          // K, must be set
  int anchors_per_position = 5; // A, must match the anchor scale count
  SrmMode srm_mode = SrmMode::Avg;
  bool frozen_backbone = false; // freeze the backbone projection weights
  double prior_pi = 0.01;       // foreground prior for the cls bias init

  void validate() const {
    if (backbone_channels <= 0 || tdm_channels <= 0 || fpn_channels <= 0 ||
        head_convs <= 0 || num_classes <= 0 || anchors_per_position <= 0)
      throw ConfigError("net config: all sizes must be positive");
    if (!(prior_pi > 0.0 && prior_pi < 1.0))
      throw ConfigError("net config: prior_pi must be in (0,1)");
  }
};

namespace nn {

template <class Scalar>
MatrixX<Scalar> pad_cols(const MatrixX<Scalar>& x, int pad) {
  if (pad == 0) return x;
  MatrixX<Scalar> out = MatrixX<Scalar>::Zero(x.rows(), x.cols() + 2 * pad);
  out.middleCols(pad, x.cols()) = x;
  return out;
}

/// 1D cross-correlation with bias and optional ReLU. Padding (ksize-1)/2 so
/// stride-1 convs preserve the temporal size and stride-2 convs halve it.
/// Forward pushes onto an internal cache stack; backward pops, so a layer
/// shared across pyramid levels must be walked back in reverse level order.
template <class Scalar>
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(std::string name, int in_ch, int out_ch, int ksize, int stride,
         bool relu)
      : in_ch_(in_ch), out_ch_(out_ch), ksize_(ksize), stride_(stride),
        pad_((ksize - 1) / 2), relu_(relu),
        w_(name + ".weight", {out_ch, in_ch, ksize}),
        b_(name + ".bias", {out_ch}) {}

  Param<Scalar>& weight() { return w_; }
  Param<Scalar>& bias() { return b_; }
  int out_channels() const { return out_ch_; }

  void init(Rng& rng) {
    const double fan_in = static_cast<double>(in_ch_) * ksize_;
    const double limit = std::sqrt(6.0 / fan_in);
    for (Eigen::Index i = 0; i < w_.value.size(); ++i)
      w_.value(static_cast<int>(i)) =
          static_cast<Scalar>(rng.uniform(-limit, limit));
    b_.value.set_zero();
  }

  void set_frozen(bool frozen) {
    w_.frozen = frozen;
    b_.frozen = frozen;
  }

  int out_len(int t_in) const {
    return (t_in + 2 * pad_ - ksize_) / stride_ + 1;
  }

  MatrixX<Scalar> forward(const MatrixX<Scalar>& x, bool cache) {
    if (x.rows() != in_ch_)
      throw ShapeError("conv1d " + w_.name + ": expected " +
                       std::to_string(in_ch_) + " input channels, got " +
                       std::to_string(x.rows()));
    const int t_out = out_len(static_cast<int>(x.cols()));
    if (t_out <= 0) throw ShapeError("conv1d " + w_.name + ": input too short");
    MatrixX<Scalar> xp = pad_cols(x, pad_);
    MatrixX<Scalar> y = MatrixX<Scalar>::Zero(out_ch_, t_out);
    for (int k = 0; k < ksize_; ++k) {
      if (stride_ == 1) {
        y.noalias() += w_.value.slice(k) * xp.middleCols(k, t_out);
      } else {
        const MatrixX<Scalar> xs =
            xp(Eigen::all, Eigen::seqN(k, t_out, stride_));
        y.noalias() += w_.value.slice(k) * xs;
      }
    }
    y.colwise() += b_.value.flat();
    if (relu_) y = y.cwiseMax(Scalar(0));
    if (cache) {
      x_cache_.push_back(std::move(xp));
      y_cache_.push_back(y);
    }
    return y;
  }

  /// Pops the matching forward cache, accumulates parameter gradients (unless
  /// frozen) and returns the gradient with respect to the layer input.
  MatrixX<Scalar> backward(const MatrixX<Scalar>& gy_in) {
    if (x_cache_.empty()) throw Error("conv1d " + w_.name + ": no cached forward");
    MatrixX<Scalar> xp = std::move(x_cache_.back());
    x_cache_.pop_back();
    MatrixX<Scalar> y = std::move(y_cache_.back());
    y_cache_.pop_back();

    MatrixX<Scalar> gy = gy_in;
    if (relu_)
      gy.array() *= (y.array() > Scalar(0)).template cast<Scalar>();

    const int t_out = static_cast<int>(gy.cols());
    MatrixX<Scalar> gxp = MatrixX<Scalar>::Zero(xp.rows(), xp.cols());
    for (int k = 0; k < ksize_; ++k) {
      if (stride_ == 1) {
        if (!w_.frozen)
          w_.grad.slice(k).noalias() += gy * xp.middleCols(k, t_out).transpose();
        gxp.middleCols(k, t_out).noalias() += w_.value.slice(k).transpose() * gy;
      } else {
        const MatrixX<Scalar> xs =
            xp(Eigen::all, Eigen::seqN(k, t_out, stride_));
        if (!w_.frozen) w_.grad.slice(k).noalias() += gy * xs.transpose();
        const MatrixX<Scalar> contrib = w_.value.slice(k).transpose() * gy;
        for (int o = 0; o < t_out; ++o)
          gxp.col(k + o * stride_) += contrib.col(o);
      }
    }
    if (!w_.frozen) b_.grad.flat() += gy.rowwise().sum();
    return gxp.middleCols(pad_, gxp.cols() - 2 * pad_);
  }

  void clear_cache() {
    x_cache_.clear();
    y_cache_.clear();
  }

 private:
  int in_ch_ = 0, out_ch_ = 0, ksize_ = 0, stride_ = 1, pad_ = 0;
  bool relu_ = false;
  Param<Scalar> w_, b_;
  std::vector<MatrixX<Scalar>> x_cache_, y_cache_;
};

/// Nearest-neighbor x2 temporal upsample.
template <class Scalar>
MatrixX<Scalar> upsample2(const MatrixX<Scalar>& x) {
  MatrixX<Scalar> y(x.rows(), x.cols() * 2);
  for (int i = 0; i < x.cols(); ++i) {
    y.col(2 * i) = x.col(i);
    y.col(2 * i + 1) = x.col(i);
  }
  return y;
}

template <class Scalar>
MatrixX<Scalar> upsample2_backward(const MatrixX<Scalar>& gy) {
  MatrixX<Scalar> gx(gy.rows(), gy.cols() / 2);
  for (int i = 0; i < gx.cols(); ++i)
    gx.col(i) = gy.col(2 * i) + gy.col(2 * i + 1);
  return gx;
}

}  // namespace nn

/// A spatio-temporally pooled clip laid out as a (C, spatial * t) matrix.
/// Column index = s + spatial * ti with s = hi * w + wi.
template <class Scalar>
struct SpatialSeq {
  MatrixX<Scalar> feat;
  int t = 0;
  int h = 0;
  int w = 0;
  int spatial() const { return h * w; }
};

/// Fixed spatio-temporal average pooling of a pixel clip (3, T, H, W):
/// factor 8 in time (T must divide), factor 32 in space with ceil mode
/// (trailing partial windows average over their actual extent).
template <class Scalar>
SpatialSeq<Scalar> backbone_pool(const Tensor<Scalar>& clip) {
  if (clip.rank() != 4 || clip.dim(0) != 3)
    throw ShapeError("backbone_pool: expected clip of shape (3, T, H, W)");
  const int t_in = clip.dim(1), h_in = clip.dim(2), w_in = clip.dim(3);
  if (t_in % 8 != 0)
    throw ShapeError("backbone_pool: T=" + std::to_string(t_in) +
                     " not divisible by 8");
  SpatialSeq<Scalar> out;
  out.t = t_in / 8;
  out.h = (h_in + 31) / 32;
  out.w = (w_in + 31) / 32;
  out.feat.resize(3, out.spatial() * out.t);
  for (int ti = 0; ti < out.t; ++ti) {
    for (int hi = 0; hi < out.h; ++hi) {
      const int h0 = hi * 32, h1 = std::min(h0 + 32, h_in);
      for (int wi = 0; wi < out.w; ++wi) {
        const int w0 = wi * 32, w1 = std::min(w0 + 32, w_in);
        const Scalar inv =
            Scalar(1) / (Scalar(8) * (h1 - h0) * (w1 - w0));
        Scalar acc[3] = {Scalar(0), Scalar(0), Scalar(0)};
        for (int t = ti * 8; t < ti * 8 + 8; ++t)
          for (int h = h0; h < h1; ++h)
            for (int w = w0; w < w1; ++w)
              for (int c = 0; c < 3; ++c) acc[c] += clip(c, t, h, w);
        const int col = hi * out.w + wi + out.spatial() * ti;
        for (int c = 0; c < 3; ++c) out.feat(c, col) = acc[c] * inv;
      }
    }
  }
  return out;
}

/// Spatial reduction: collapses the (h, w) grid of a SpatialSeq to one value
/// per (channel, time step). Conv mode is a learned per-channel linear map
/// over the flattened grid and requires a 4x4 grid.
template <class Scalar>
class Srm {
 public:
  Srm() = default;
  Srm(SrmMode mode, int channels, int grid_h, int grid_w)
      : mode_(mode), channels_(channels), grid_h_(grid_h), grid_w_(grid_w) {
    if (mode == SrmMode::Conv) {
      if (grid_h != 4 || grid_w != 4)
        throw ConfigError("srm conv mode requires a 4x4 spatial grid");
      w_ = Param<Scalar>("srm.weight", {channels, grid_h * grid_w});
      // Uniform weights reproduce average pooling at initialization.
      w_.value.flat().setConstant(Scalar(1) / Scalar(grid_h * grid_w));
    }
  }

  SrmMode mode() const { return mode_; }
  bool has_params() const { return mode_ == SrmMode::Conv; }
  Param<Scalar>& weight() { return w_; }

  MatrixX<Scalar> forward(const SpatialSeq<Scalar>& in, bool cache) {
    const int s = in.spatial();
    if (in.feat.rows() != channels_)
      throw ShapeError("srm: channel mismatch");
    if (mode_ == SrmMode::Conv && (in.h != grid_h_ || in.w != grid_w_))
      throw ShapeError("srm conv mode requires a 4x4 spatial grid, got " +
                       std::to_string(in.h) + "x" + std::to_string(in.w));
    MatrixX<Scalar> y(channels_, in.t);
    std::vector<int> argmax;
    if (mode_ == SrmMode::Max) argmax.resize(static_cast<size_t>(channels_) * in.t);
    for (int t = 0; t < in.t; ++t) {
      const auto block = in.feat.middleCols(s * t, s);
      switch (mode_) {
        case SrmMode::Avg:
          y.col(t) = block.rowwise().mean();
          break;
        case SrmMode::Max:
          for (int c = 0; c < channels_; ++c) {
            int idx = 0;
            y(c, t) = block.row(c).maxCoeff(&idx);
            argmax[static_cast<size_t>(c) + static_cast<size_t>(channels_) * t] = idx;
          }
          break;
        case SrmMode::Conv:
          y.col(t) = (block.array() * w_.value.mat(channels_, s).array())
                         .rowwise()
                         .sum();
          break;
      }
    }
    if (cache) {
      cached_in_ = in;
      cached_argmax_ = std::move(argmax);
      has_cache_ = true;
    }
    return y;
  }

  SpatialSeq<Scalar> backward(const MatrixX<Scalar>& gy) {
    if (!has_cache_) throw Error("srm: no cached forward");
    const SpatialSeq<Scalar>& in = cached_in_;
    const int s = in.spatial();
    SpatialSeq<Scalar> gx;
    gx.t = in.t;
    gx.h = in.h;
    gx.w = in.w;
    gx.feat = MatrixX<Scalar>::Zero(channels_, in.feat.cols());
    for (int t = 0; t < in.t; ++t) {
      auto gblock = gx.feat.middleCols(s * t, s);
      switch (mode_) {
        case SrmMode::Avg:
          gblock = (gy.col(t) / Scalar(s)).replicate(1, s);
          break;
        case SrmMode::Max:
          for (int c = 0; c < channels_; ++c)
            gblock(c, cached_argmax_[static_cast<size_t>(c) +
                                     static_cast<size_t>(channels_) * t]) =
                gy(c, t);
          break;
        case SrmMode::Conv: {
          const auto block = in.feat.middleCols(s * t, s);
          if (!w_.frozen)
            w_.grad.mat(channels_, s).array() +=
                gy.col(t).replicate(1, s).array() * block.array();
          gblock.array() =
              gy.col(t).replicate(1, s).array() *
              w_.value.mat(channels_, s).array();
          break;
        }
      }
    }
    has_cache_ = false;
    return gx;
  }

  void clear_cache() { has_cache_ = false; }

 private:
  SrmMode mode_ = SrmMode::Avg;
  int channels_ = 0, grid_h_ = 0, grid_w_ = 0;
  Param<Scalar> w_;
  SpatialSeq<Scalar> cached_in_;
  std::vector<int> cached_argmax_;
  bool has_cache_ = false;
};

/// Per-level head outputs: classification logits (K*A, T') and regression
/// offsets (2*A, T'). Channel layout is scale-major: logit for scale a, class
/// k lives in row a*K + k; offsets (dc, dl) for scale a in rows 2a, 2a+1.
template <class Scalar>
struct NetOutput {
  std::vector<MatrixX<Scalar>> cls;
  std::vector<MatrixX<Scalar>> reg;
};

/// The detector: backbone projection + SRM over pooled pixels (or a direct
/// feature-sequence bypass), a 4-conv temporal downsample chain, a top-down
/// feature pyramid, and a shared two-branch prediction head.
template <class Scalar>
class DetectorNet {
 public:
  static constexpr int kLevels = 5;

  DetectorNet() = default;
  explicit DetectorNet(const NetConfig& cfg, int grid_h = 4, int grid_w = 4)
      : cfg_(cfg) {
    cfg.validate();
    proj_ = nn::Conv1d<Scalar>("backbone.proj", 3, cfg.backbone_channels, 1, 1,
                               /*relu=*/true);
    proj_.set_frozen(cfg.frozen_backbone);
    srm_ = Srm<Scalar>(cfg.srm_mode, cfg.backbone_channels, grid_h, grid_w);
    for (int i = 0; i < 4; ++i) {
      const int in_ch = i == 0 ? cfg.backbone_channels : cfg.tdm_channels;
      tdm_.emplace_back("tdm." + std::to_string(i), in_ch, cfg.tdm_channels, 3,
                        2, /*relu=*/true);
    }
    for (int l = 0; l < kLevels; ++l) {
      const int in_ch = l == 0 ? cfg.backbone_channels : cfg.tdm_channels;
      lateral_.emplace_back("fpn.lateral." + std::to_string(l), in_ch,
                            cfg.fpn_channels, 1, 1, /*relu=*/false);
      smooth_.emplace_back("fpn.smooth." + std::to_string(l), cfg.fpn_channels,
                           cfg.fpn_channels, 3, 1, /*relu=*/false);
    }
    for (int i = 0; i < cfg.head_convs; ++i) {
      cls_head_.emplace_back("head.cls." + std::to_string(i), cfg.fpn_channels,
                             cfg.fpn_channels, 3, 1, /*relu=*/true);
      reg_head_.emplace_back("head.reg." + std::to_string(i), cfg.fpn_channels,
                             cfg.fpn_channels, 3, 1, /*relu=*/true);
    }
    cls_out_ = nn::Conv1d<Scalar>("head.cls_out", cfg.fpn_channels,
                                  cfg.num_classes * cfg.anchors_per_position, 3,
                                  1, /*relu=*/false);
    reg_out_ = nn::Conv1d<Scalar>("head.reg_out", cfg.fpn_channels,
                                  2 * cfg.anchors_per_position, 3, 1,
                                  /*relu=*/false);
  }

  const NetConfig& config() const { return cfg_; }

  void init(Rng& rng) {
    proj_.init(rng);
    for (auto& c : tdm_) c.init(rng);
    for (auto& c : lateral_) c.init(rng);
    for (auto& c : smooth_) c.init(rng);
    for (auto& c : cls_head_) c.init(rng);
    for (auto& c : reg_head_) c.init(rng);
    cls_out_.init(rng);
    reg_out_.init(rng);
    // Focal-loss prior: start every anchor-class score near prior_pi.
    const Scalar bias =
        static_cast<Scalar>(-std::log((1.0 - cfg_.prior_pi) / cfg_.prior_pi));
    cls_out_.bias().value.flat().setConstant(bias);
    proj_.set_frozen(cfg_.frozen_backbone);
  }

  void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }

  std::vector<Param<Scalar>*> params() {
    std::vector<Param<Scalar>*> out;
    auto add = [&out](nn::Conv1d<Scalar>& c) {
      out.push_back(&c.weight());
      out.push_back(&c.bias());
    };
    add(proj_);
    if (srm_.has_params()) out.push_back(&srm_.weight());
    for (auto& c : tdm_) add(c);
    for (auto& c : lateral_) add(c);
    for (auto& c : smooth_) add(c);
    for (auto& c : cls_head_) add(c);
    add(cls_out_);
    for (auto& c : reg_head_) add(c);
    add(reg_out_);
    return out;
  }

  void zero_grads() {
    for (Param<Scalar>* p : params()) p->zero_grad();
  }

  /// Backbone encode: pooled pixels -> projection -> spatial reduction.
  MatrixX<Scalar> encode_clip(const Tensor<Scalar>& clip, bool cache) {
    SpatialSeq<Scalar> pooled = backbone_pool(clip);
    SpatialSeq<Scalar> projected;
    projected.t = pooled.t;
    projected.h = pooled.h;
    projected.w = pooled.w;
    projected.feat = proj_.forward(pooled.feat, cache);
    return srm_.forward(projected, cache);
  }

  /// Pixel-clip entry: (3, T, H, W) -> head outputs.
  NetOutput<Scalar> forward(const Tensor<Scalar>& clip) {
    MatrixX<Scalar> seq = encode_clip(clip, training_);
    clip_path_ = true;
    return forward_sequence_internal(seq);
  }

  /// Feature-sequence bypass: (C_b, T/8) -> head outputs, skipping the
  /// backbone and SRM entirely.
  NetOutput<Scalar> forward(const MatrixX<Scalar>& feature_seq) {
    clip_path_ = false;
    return forward_sequence_internal(feature_seq);
  }

  /// Reverse pass from head-output gradients. Accumulates parameter
  /// gradients; call zero_grads() between optimizer steps.
  void backward(const NetOutput<Scalar>& grads) {
    if (!training_) throw Error("detector backward called in inference mode");
    // Shared heads: walk levels in reverse of the forward order.
    std::vector<MatrixX<Scalar>> gout(kLevels);
    for (int l = kLevels - 1; l >= 0; --l) {
      MatrixX<Scalar> greg = reg_out_.backward(grads.reg[l]);
      for (int i = cfg_.head_convs - 1; i >= 0; --i)
        greg = reg_head_[i].backward(greg);
      MatrixX<Scalar> gcls = cls_out_.backward(grads.cls[l]);
      for (int i = cfg_.head_convs - 1; i >= 0; --i)
        gcls = cls_head_[i].backward(gcls);
      gout[l] = gcls + greg;
    }
    // Smoothing convs.
    std::vector<MatrixX<Scalar>> gp(kLevels);
    for (int l = kLevels - 1; l >= 0; --l) gp[l] = smooth_[l].backward(gout[l]);
    // Top-down merges in reverse: level l fed upsample(level l+1).
    for (int l = 0; l + 1 < kLevels; ++l)
      gp[l + 1] += nn::upsample2_backward(gp[l]);
    // Laterals and the downsample chain.
    std::vector<MatrixX<Scalar>> gtdm(kLevels);
    for (int l = kLevels - 1; l >= 0; --l)
      gtdm[l] = lateral_[l].backward(gp[l]);
    MatrixX<Scalar> g = std::move(gtdm[kLevels - 1]);
    for (int i = 3; i >= 0; --i) {
      g = tdm_[i].backward(g);
      g += gtdm[i];
    }
    if (clip_path_) {
      SpatialSeq<Scalar> gproj = srm_.backward(g);
      proj_.backward(gproj.feat);
    }
  }

  void clear_caches() {
    proj_.clear_cache();
    srm_.clear_cache();
    for (auto& c : tdm_) c.clear_cache();
    for (auto& c : lateral_) c.clear_cache();
    for (auto& c : smooth_) c.clear_cache();
    for (auto& c : cls_head_) c.clear_cache();
    for (auto& c : reg_head_) c.clear_cache();
    cls_out_.clear_cache();
    reg_out_.clear_cache();
  }

 private:
  NetOutput<Scalar> forward_sequence_internal(const MatrixX<Scalar>& seq) {
    if (seq.rows() != cfg_.backbone_channels)
      throw ShapeError("detector: expected " +
                       std::to_string(cfg_.backbone_channels) +
                       " feature channels, got " + std::to_string(seq.rows()));
    if (seq.cols() % 16 != 0)
      throw ShapeError("detector: sequence length " +
                       std::to_string(seq.cols()) +
                       " not divisible by 16 (four stride-2 halvings)");
    std::vector<MatrixX<Scalar>> tdm_out(kLevels);
    tdm_out[0] = seq;
    for (int i = 0; i < 4; ++i)
      tdm_out[i + 1] = tdm_[i].forward(tdm_out[i], training_);

    std::vector<MatrixX<Scalar>> p(kLevels);
    for (int l = 0; l < kLevels; ++l)
      p[l] = lateral_[l].forward(tdm_out[l], training_);
    for (int l = kLevels - 2; l >= 0; --l) p[l] += nn::upsample2(p[l + 1]);

    NetOutput<Scalar> out;
    out.cls.resize(kLevels);
    out.reg.resize(kLevels);
    for (int l = 0; l < kLevels; ++l) {
      MatrixX<Scalar> feat = smooth_[l].forward(p[l], training_);
      MatrixX<Scalar> h = feat;
      for (auto& c : cls_head_) h = c.forward(h, training_);
      out.cls[l] = cls_out_.forward(h, training_);
      h = feat;
      for (auto& c : reg_head_) h = c.forward(h, training_);
      out.reg[l] = reg_out_.forward(h, training_);
    }
    return out;
  }

  NetConfig cfg_;
  nn::Conv1d<Scalar> proj_;
  Srm<Scalar> srm_;
  std::vector<nn::Conv1d<Scalar>> tdm_;
  std::vector<nn::Conv1d<Scalar>> lateral_;
  std::vector<nn::Conv1d<Scalar>> smooth_;
  std::vector<nn::Conv1d<Scalar>> cls_head_;
  std::vector<nn::Conv1d<Scalar>> reg_head_;
  nn::Conv1d<Scalar> cls_out_;
  nn::Conv1d<Scalar> reg_out_;
  bool training_ = true;
  bool clip_path_ = false;
};

}  // namespace tad
