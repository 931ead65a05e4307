#pragma once

#include <vector>

#include "lgvi/video.hpp"

namespace lgvi::metrics {

// Evaluation suite. All four metrics are pure functions of their inputs; the
// VFID feature net is a fixed random spatiotemporal conv net pinned at build
// time, so its absolute values are not comparable to published numbers.

struct MetricReport {
  double psnr = 0;    // dB, higher better, capped at 100
  double ssim = 0;    // [-1, 1], higher better
  double vfid = 0;    // >= 0, lower better
  double e_warp = 0;  // >= 0, lower better (reported x1e-2 in tables)
};

inline constexpr double kPsnrCap = 100.0;

double psnr(const VideoClip& a, const VideoClip& b);

// Single-scale SSIM on grayscale frames: 11x11 Gaussian window, sigma 1.5,
// K1=0.01, K2=0.03, L=1, averaged over frames.
double ssim(const VideoClip& a, const VideoClip& b);

// 64-dim pooled features from the pinned random feature net.
std::vector<double> vfid_features(const VideoClip& clip);

// Frechet distance between Gaussian fits of two feature sets [n][d].
double frechet_from_features(const std::vector<std::vector<double>>& a,
                             const std::vector<std::vector<double>>& b);

double vfid(const std::vector<VideoClip>& set_a, const std::vector<VideoClip>& set_b);

// Mean L1 between frame t and frame t+1 warped backward by the flow
// (bilinear), excluding a 1-pixel border and pixels warped from outside.
double e_warp(const VideoClip& clip, const FlowField& flow);

}  // namespace lgvi::metrics
