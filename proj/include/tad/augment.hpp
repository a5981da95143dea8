#pragma once

#include "tad/core.hpp"
#include "tad/segment.hpp"
#include "tad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace tad {

/// Pixel clip: (3, T, H, W) values in [0, 255].
struct Clip {
  Tensor<double> pixels;
  double fps = 25.0;

  int frames() const { return pixels.dim(1); }
  int height() const { return pixels.dim(2); }
  int width() const { return pixels.dim(3); }
};

/// Precomputed backbone feature sequence: (C, num_frames / frame_stride).
struct FeatureSeq {
  MatrixXd seq;
  int frame_stride = 8;
};

/// A fixed-length training sample: pixel clip or feature sequence plus the
/// class-labeled ground truths in frame units. `fps` is authoritative here;
/// a pixel clip carries a copy.
struct AnnotatedClip {
  std::optional<Clip> clip;
  std::optional<FeatureSeq> features;
  std::vector<LabeledSegment> gts;
  int num_frames = 0;
  double fps = 25.0;
};

struct DistortParams {
  double brightness_delta = 32.0;  // additive, sampled in [-delta, delta]
  double contrast_lo = 0.5, contrast_hi = 1.5;
  double saturation_lo = 0.5, saturation_hi = 1.5;
  double hue_delta = 18.0;  // degrees, sampled in [-delta, delta]
  double channel_swap_prob = 0.5;
  double apply_prob = 0.5;  // chance of applying each sub-transform
};

struct AugmentPolicy {
  bool enable_crop = true;
  bool enable_distort = true;
  bool enable_rotation = true;
  bool enable_flip = true;
  int crop_h = 112, crop_w = 112;
  double rotation_min = -45.0, rotation_max = 45.0;
  double flip_prob = 0.5;
  DistortParams distort;
  std::uint64_t seed = 0;

  void validate() const {
    if (crop_h <= 0 || crop_w <= 0)
      throw ConfigError("augment policy: crop size must be positive");
    if (rotation_min < -180.0 || rotation_max > 180.0 ||
        rotation_min > rotation_max)
      throw ConfigError("augment policy: rotation range must lie in [-180,180]");
    if (flip_prob < 0.0 || flip_prob > 1.0)
      throw ConfigError("augment policy: flip_prob must be in [0,1]");
  }
};

// ---------------------------------------------------------------------------
// Temporal crop
// ---------------------------------------------------------------------------

namespace detail {

inline double retained_length(const Segmentd& gt, double lo, double hi) {
  return std::max(0.0, std::min(gt.end, hi) - std::max(gt.start, lo));
}

inline int crop_step(const AnnotatedClip& video) {
  return video.features ? video.features->frame_stride : 1;
}

}  // namespace detail

/// Window starts (aligned to the feature grid in feature mode) for which at
/// least one gt keeps >= 75% of its length inside the window.
inline std::vector<int> valid_crop_starts(const AnnotatedClip& video,
                                          int window) {
  std::vector<int> starts;
  const int step = detail::crop_step(video);
  for (int s = 0; s + window <= video.num_frames; s += step) {
    for (const LabeledSegment& gt : video.gts) {
      const double kept =
          detail::retained_length(gt.segment, s, s + window);
      if (kept >= 0.75 * gt.segment.length()) {
        starts.push_back(s);
        break;
      }
    }
  }
  return starts;
}

/// Extracts the window [start, start+window), right-padding with zeros when
/// the video is shorter. Ground truths keeping >= 75% of their length are
/// clipped to the window and re-expressed in window coordinates; the rest are
/// dropped.
inline AnnotatedClip apply_temporal_window(const AnnotatedClip& video,
                                           int start, int window) {
  AnnotatedClip out;
  out.num_frames = window;
  out.fps = video.fps;
  const double lo = start, hi = start + window;
  for (const LabeledSegment& gt : video.gts) {
    const double kept = detail::retained_length(gt.segment, lo, hi);
    if (kept < 0.75 * gt.segment.length()) continue;
    LabeledSegment moved = gt;
    moved.segment.start = std::max(gt.segment.start, lo) - lo;
    moved.segment.end = std::min(gt.segment.end, hi) - lo;
    out.gts.push_back(moved);
  }
  if (video.clip) {
    const Clip& src = *video.clip;
    Clip dst;
    dst.fps = src.fps;
    dst.pixels = Tensor<double>({3, window, src.height(), src.width()});
    const int copy = std::min(window, src.frames() - start);
    for (int c = 0; c < 3; ++c)
      for (int t = 0; t < copy; ++t)
        for (int h = 0; h < src.height(); ++h)
          for (int w = 0; w < src.width(); ++w)
            dst.pixels(c, t, h, w) = src.pixels(c, t + start, h, w);
    out.clip = std::move(dst);
  }
  if (video.features) {
    const FeatureSeq& src = *video.features;
    const int stride = src.frame_stride;
    if (start % stride != 0 || window % stride != 0)
      throw ConfigError("temporal window not aligned to the feature stride");
    FeatureSeq dst;
    dst.frame_stride = stride;
    const int cols = window / stride;
    dst.seq = MatrixXd::Zero(src.seq.rows(), cols);
    const int copy =
        std::min(cols, static_cast<int>(src.seq.cols()) - start / stride);
    if (copy > 0) dst.seq.leftCols(copy) = src.seq.middleCols(start / stride, copy);
    out.features = std::move(dst);
  }
  return out;
}

/// Temporal random crop with the 75% retention guarantee: samples uniformly
/// among the starts where some gt keeps >= 75% of its length. When no such
/// start exists, falls back to the start maximizing the best retained
/// fraction (ties: smallest start). Videos shorter than the window are
/// right-padded at start 0.
inline AnnotatedClip temporal_random_crop(const AnnotatedClip& video,
                                          int window, Rng& rng) {
  if (video.num_frames <= window) return apply_temporal_window(video, 0, window);
  const std::vector<int> starts = valid_crop_starts(video, window);
  int chosen = 0;
  if (!starts.empty()) {
    chosen = starts[static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(starts.size())))];
  } else {
    const int step = detail::crop_step(video);
    double best = -1.0;
    for (int s = 0; s + window <= video.num_frames; s += step) {
      double frac = 0.0;
      for (const LabeledSegment& gt : video.gts)
        frac = std::max(frac, detail::retained_length(gt.segment, s, s + window) /
                                  gt.segment.length());
      if (frac > best) {
        best = frac;
        chosen = s;
      }
    }
  }
  return apply_temporal_window(video, chosen, window);
}

// ---------------------------------------------------------------------------
// Image-level transforms. One parameter draw per clip; every frame gets the
// same treatment. Ground-truth annotations are untouched by all of these.
// ---------------------------------------------------------------------------

enum class CropMode { Random, Center };

inline Clip spatial_crop(const Clip& clip, int out_h, int out_w, CropMode mode,
                         Rng& rng) {
  const int in_h = clip.height(), in_w = clip.width();
  if (out_h > in_h || out_w > in_w)
    throw ConfigError("spatial_crop: crop size exceeds the frame size");
  int off_h = (in_h - out_h) / 2;
  int off_w = (in_w - out_w) / 2;
  if (mode == CropMode::Random) {
    off_h = static_cast<int>(rng.uniform_int(in_h - out_h + 1));
    off_w = static_cast<int>(rng.uniform_int(in_w - out_w + 1));
  }
  Clip out;
  out.fps = clip.fps;
  out.pixels = Tensor<double>({3, clip.frames(), out_h, out_w});
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < clip.frames(); ++t)
      for (int h = 0; h < out_h; ++h)
        for (int w = 0; w < out_w; ++w)
          out.pixels(c, t, h, w) = clip.pixels(c, t, h + off_h, w + off_w);
  return out;
}

inline Clip horizontal_flip(const Clip& clip, Rng& rng, double p = 0.5) {
  if (!rng.bernoulli(p)) return clip;
  Clip out;
  out.fps = clip.fps;
  out.pixels = Tensor<double>({3, clip.frames(), clip.height(), clip.width()});
  const int w_max = clip.width() - 1;
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < clip.frames(); ++t)
      for (int h = 0; h < clip.height(); ++h)
        for (int w = 0; w <= w_max; ++w)
          out.pixels(c, t, h, w) = clip.pixels(c, t, h, w_max - w);
  return out;
}

/// Rotation by `degrees` about the frame center, nearest-neighbor sampling,
/// zero fill outside the support, output dims equal input dims.
inline Clip rotate_clip_by(const Clip& clip, double degrees) {
  const int height = clip.height(), width = clip.width();
  const double cy = (height - 1) / 2.0, cx = (width - 1) / 2.0;
  const double rad = degrees * M_PI / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  // Inverse mapping: source coordinates for each output pixel.
  std::vector<int> src(static_cast<std::size_t>(height) * width);
  for (int h = 0; h < height; ++h)
    for (int w = 0; w < width; ++w) {
      const double dy = h - cy, dx = w - cx;
      const int sh = static_cast<int>(std::lround(cs * dy + sn * dx + cy));
      const int sw = static_cast<int>(std::lround(-sn * dy + cs * dx + cx));
      src[static_cast<std::size_t>(h) * width + w] =
          (sh >= 0 && sh < height && sw >= 0 && sw < width) ? sh * width + sw
                                                            : -1;
    }
  Clip out;
  out.fps = clip.fps;
  out.pixels = Tensor<double>({3, clip.frames(), height, width});
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < clip.frames(); ++t)
      for (int h = 0; h < height; ++h)
        for (int w = 0; w < width; ++w) {
          const int s = src[static_cast<std::size_t>(h) * width + w];
          out.pixels(c, t, h, w) =
              s < 0 ? 0.0 : clip.pixels(c, t, s / width, s % width);
        }
  return out;
}

inline Clip rotate_clip(const Clip& clip, Rng& rng, double deg_min = -45.0,
                        double deg_max = 45.0) {
  return rotate_clip_by(clip, rng.uniform(deg_min, deg_max));
}

namespace detail {

inline void rgb_to_hsv(double r, double g, double b, double& h, double& s,
                       double& v) {
  const double maxc = std::max({r, g, b});
  const double minc = std::min({r, g, b});
  v = maxc;
  const double d = maxc - minc;
  s = maxc <= 0.0 ? 0.0 : d / maxc;
  if (d <= 0.0) {
    h = 0.0;
    return;
  }
  if (maxc == r)
    h = 60.0 * std::fmod((g - b) / d + 6.0, 6.0);
  else if (maxc == g)
    h = 60.0 * ((b - r) / d + 2.0);
  else
    h = 60.0 * ((r - g) / d + 4.0);
}

inline void hsv_to_rgb(double h, double s, double v, double& r, double& g,
                       double& b) {
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  const double m = v - c;
  double rp = 0, gp = 0, bp = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: rp = c; gp = x; break;
    case 1: rp = x; gp = c; break;
    case 2: gp = c; bp = x; break;
    case 3: gp = x; bp = c; break;
    case 4: rp = x; bp = c; break;
    default: rp = c; bp = x; break;
  }
  r = rp + m;
  g = gp + m;
  b = bp + m;
}

inline void clamp_pixels(Clip& clip) {
  clip.pixels.flat() = clip.pixels.flat().cwiseMax(0.0).cwiseMin(255.0);
}

}  // namespace detail

inline void adjust_brightness(Clip& clip, double delta) {
  clip.pixels.flat().array() += delta;
  detail::clamp_pixels(clip);
}

inline void adjust_contrast(Clip& clip, double scale) {
  clip.pixels.flat() *= scale;
  detail::clamp_pixels(clip);
}

inline void adjust_saturation_hue(Clip& clip, double sat_scale,
                                  double hue_shift) {
  if (sat_scale == 1.0 && hue_shift == 0.0) return;
  for (int t = 0; t < clip.frames(); ++t)
    for (int h = 0; h < clip.height(); ++h)
      for (int w = 0; w < clip.width(); ++w) {
        double hh, ss, vv;
        detail::rgb_to_hsv(clip.pixels(0, t, h, w), clip.pixels(1, t, h, w),
                           clip.pixels(2, t, h, w), hh, ss, vv);
        ss = std::clamp(ss * sat_scale, 0.0, 1.0);
        hh = std::fmod(hh + hue_shift + 360.0, 360.0);
        detail::hsv_to_rgb(hh, ss, vv, clip.pixels(0, t, h, w),
                           clip.pixels(1, t, h, w), clip.pixels(2, t, h, w));
      }
  detail::clamp_pixels(clip);
}

inline void swap_channels(Clip& clip, const int perm[3]) {
  Clip swapped = clip;
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < clip.frames(); ++t)
      for (int h = 0; h < clip.height(); ++h)
        for (int w = 0; w < clip.width(); ++w)
          swapped.pixels(c, t, h, w) = clip.pixels(perm[c], t, h, w);
  clip = std::move(swapped);
}

/// Photometric distortion: brightness shift, contrast scale, saturation
/// scale, hue shift, then an optional channel permutation, each triggered
/// with params.apply_prob (swap with its own probability). One parameter set
/// per clip; values clamped to [0, 255] after every step.
inline Clip photometric_distort(const Clip& clip, Rng& rng,
                                const DistortParams& params = {}) {
  Clip out = clip;
  if (rng.bernoulli(params.apply_prob))
    adjust_brightness(
        out, rng.uniform(-params.brightness_delta, params.brightness_delta));
  if (rng.bernoulli(params.apply_prob))
    adjust_contrast(out, rng.uniform(params.contrast_lo, params.contrast_hi));
  double sat_scale = 1.0, hue_shift = 0.0;
  if (rng.bernoulli(params.apply_prob))
    sat_scale = rng.uniform(params.saturation_lo, params.saturation_hi);
  if (rng.bernoulli(params.apply_prob))
    hue_shift = rng.uniform(-params.hue_delta, params.hue_delta);
  adjust_saturation_hue(out, sat_scale, hue_shift);
  if (rng.bernoulli(params.channel_swap_prob)) {
    static const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                    {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    swap_channels(out, perms[rng.uniform_int(6)]);
  }
  return out;
}

/// Training-time image pipeline: crop (random when enabled, center
/// otherwise), photometric distortion, rotation, horizontal flip. The policy
/// flags gate each transform; the crop to (crop_h, crop_w) always happens so
/// the network input size stays fixed.
inline Clip apply_image_augments(const Clip& clip, const AugmentPolicy& policy,
                                 Rng& rng) {
  policy.validate();
  Clip out = spatial_crop(clip, policy.crop_h, policy.crop_w,
                          policy.enable_crop ? CropMode::Random : CropMode::Center,
                          rng);
  if (policy.enable_distort) out = photometric_distort(out, rng, policy.distort);
  if (policy.enable_rotation)
    out = rotate_clip(out, rng, policy.rotation_min, policy.rotation_max);
  if (policy.enable_flip) out = horizontal_flip(out, rng, policy.flip_prob);
  return out;
}

}  // namespace tad
