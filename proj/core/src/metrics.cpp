#include "lgvi/metrics.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

#include "lgvi/rng.hpp"

namespace lgvi::metrics {

namespace {

void check_dims(const VideoClip& a, const VideoClip& b, const char* where) {
  if (!a.same_dims(b)) throw std::invalid_argument(std::string(where) + ": shape mismatch");
}

double mse(const VideoClip& a, const VideoClip& b) {
  double s = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    double d = static_cast<double>(a.data[i]) - b.data[i];
    s += d * d;
  }
  return s / static_cast<double>(a.data.size());
}

std::vector<double> to_gray(const VideoClip& c, int64_t t) {
  std::vector<double> g(static_cast<size_t>(c.height * c.width));
  for (int64_t y = 0; y < c.height; ++y)
    for (int64_t x = 0; x < c.width; ++x)
      g[y * c.width + x] = 0.299 * c.at(t, y, x, 0) + 0.587 * c.at(t, y, x, 1) +
                           0.114 * c.at(t, y, x, 2);
  return g;
}

std::vector<double> gaussian_kernel11() {
  std::vector<double> k(11);
  double sum = 0;
  for (int i = 0; i < 11; ++i) {
    double d = i - 5;
    k[i] = std::exp(-d * d / (2 * 1.5 * 1.5));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// separable valid-region filter: output (H-10) x (W-10)
std::vector<double> filter_valid(const std::vector<double>& img, int64_t H, int64_t W,
                                 const std::vector<double>& k) {
  int64_t OH = H - 10, OW = W - 10;
  std::vector<double> tmp(static_cast<size_t>(H * OW));
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < OW; ++x) {
      double s = 0;
      for (int i = 0; i < 11; ++i) s += k[i] * img[y * W + x + i];
      tmp[y * OW + x] = s;
    }
  std::vector<double> out(static_cast<size_t>(OH * OW));
  for (int64_t y = 0; y < OH; ++y)
    for (int64_t x = 0; x < OW; ++x) {
      double s = 0;
      for (int i = 0; i < 11; ++i) s += k[i] * tmp[(y + i) * OW + x];
      out[y * OW + x] = s;
    }
  return out;
}

// Fixed random spatiotemporal feature net: two strided spatial convs, global
// average pooling per frame, one temporal conv, mean over frames. Weights are
// derived from a compile-time seed.
constexpr uint64_t kVfidSeed = 0x5eedf00d;
constexpr int kC1 = 12, kC2 = 24, kFeat = 64;

struct VfidNet {
  std::vector<double> w1, b1;  // [12,3,3,3]
  std::vector<double> w2, b2;  // [24,12,3,3]
  std::vector<double> wt, bt;  // [64,24,3]

  VfidNet() {
    Rng rng(kVfidSeed);
    auto fill = [&](std::vector<double>& v, size_t n, double std) {
      v.resize(n);
      for (auto& x : v) x = rng.normal() * std;
    };
    fill(w1, kC1 * 3 * 9, 1.0 / std::sqrt(27.0));
    fill(b1, kC1, 0.1);
    fill(w2, kC2 * kC1 * 9, 1.0 / std::sqrt(kC1 * 9.0));
    fill(b2, kC2, 0.1);
    fill(wt, kFeat * kC2 * 3, 1.0 / std::sqrt(kC2 * 3.0));
    fill(bt, kFeat, 0.1);
  }
};

const VfidNet& vfid_net() {
  static const VfidNet net;
  return net;
}

// stride-2 3x3 conv + relu on a [C,H,W] plane stack
std::vector<double> conv_s2_relu(const std::vector<double>& x, int64_t C, int64_t H, int64_t W,
                                 const std::vector<double>& w, const std::vector<double>& b,
                                 int64_t O, int64_t& OH, int64_t& OW) {
  OH = (H + 1) / 2;
  OW = (W + 1) / 2;
  std::vector<double> y(static_cast<size_t>(O * OH * OW));
  for (int64_t o = 0; o < O; ++o)
    for (int64_t i = 0; i < OH; ++i)
      for (int64_t j = 0; j < OW; ++j) {
        double acc = b[o];
        for (int64_t c = 0; c < C; ++c)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              int64_t iy = 2 * i - 1 + ky, ix = 2 * j - 1 + kx;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              acc += x[(c * H + iy) * W + ix] * w[((o * C + c) * 3 + ky) * 3 + kx];
            }
        y[(o * OH + i) * OW + j] = acc > 0 ? acc : 0;
      }
  return y;
}

}  // namespace

double psnr(const VideoClip& a, const VideoClip& b) {
  check_dims(a, b, "psnr");
  double m = mse(a, b);
  if (m <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

double ssim(const VideoClip& a, const VideoClip& b) {
  check_dims(a, b, "ssim");
  if (a.height < 11 || a.width < 11)
    throw std::invalid_argument("ssim: frames smaller than the 11x11 window");
  const double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  auto k = gaussian_kernel11();
  double total = 0;
  for (int64_t t = 0; t < a.frames; ++t) {
    auto ga = to_gray(a, t), gb = to_gray(b, t);
    auto gaa = ga, gbb = gb, gab = ga;
    for (size_t i = 0; i < ga.size(); ++i) {
      gaa[i] = ga[i] * ga[i];
      gbb[i] = gb[i] * gb[i];
      gab[i] = ga[i] * gb[i];
    }
    auto mu_a = filter_valid(ga, a.height, a.width, k);
    auto mu_b = filter_valid(gb, a.height, a.width, k);
    auto m_aa = filter_valid(gaa, a.height, a.width, k);
    auto m_bb = filter_valid(gbb, a.height, a.width, k);
    auto m_ab = filter_valid(gab, a.height, a.width, k);
    double s = 0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
      double va = m_aa[i] - mu_a[i] * mu_a[i];
      double vb = m_bb[i] - mu_b[i] * mu_b[i];
      double cov = m_ab[i] - mu_a[i] * mu_b[i];
      s += (2 * mu_a[i] * mu_b[i] + C1) * (2 * cov + C2) /
           ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + C1) * (va + vb + C2));
    }
    total += s / static_cast<double>(mu_a.size());
  }
  return total / static_cast<double>(a.frames);
}

std::vector<double> vfid_features(const VideoClip& clip) {
  const VfidNet& net = vfid_net();
  int64_t T = clip.frames, H = clip.height, W = clip.width;
  // per-frame pooled activations [T, kC2]
  std::vector<double> frame_feats(static_cast<size_t>(T * kC2));
  for (int64_t t = 0; t < T; ++t) {
    std::vector<double> x(static_cast<size_t>(3 * H * W));
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t y = 0; y < H; ++y)
        for (int64_t xx = 0; xx < W; ++xx)
          x[(c * H + y) * W + xx] = clip.at(t, y, xx, c) * 2.0 - 1.0;
    int64_t h1, w1, h2, w2;
    auto a1 = conv_s2_relu(x, 3, H, W, net.w1, net.b1, kC1, h1, w1);
    auto a2 = conv_s2_relu(a1, kC1, h1, w1, net.w2, net.b2, kC2, h2, w2);
    for (int64_t c = 0; c < kC2; ++c) {
      double s = 0;
      for (int64_t i = 0; i < h2 * w2; ++i) s += a2[c * h2 * w2 + i];
      frame_feats[t * kC2 + c] = s / static_cast<double>(h2 * w2);
    }
  }
  // temporal conv (k=3, zero pad) + relu, then mean over frames
  std::vector<double> out(kFeat, 0.0);
  for (int64_t t = 0; t < T; ++t)
    for (int o = 0; o < kFeat; ++o) {
      double acc = net.bt[o];
      for (int dt = -1; dt <= 1; ++dt) {
        int64_t tt = t + dt;
        if (tt < 0 || tt >= T) continue;
        for (int c = 0; c < kC2; ++c)
          acc += frame_feats[tt * kC2 + c] * net.wt[(o * kC2 + c) * 3 + dt + 1];
      }
      out[o] += (acc > 0 ? acc : 0) / static_cast<double>(T);
    }
  return out;
}

double frechet_from_features(const std::vector<std::vector<double>>& a,
                             const std::vector<std::vector<double>>& b) {
  if (a.size() < 2 || b.size() < 2)
    throw std::invalid_argument("frechet_from_features: need >= 2 items per set");
  const int64_t d = static_cast<int64_t>(a[0].size());
  auto fit = [&](const std::vector<std::vector<double>>& f, Eigen::VectorXd& mu,
                 Eigen::MatrixXd& cov) {
    const int64_t n = static_cast<int64_t>(f.size());
    Eigen::MatrixXd X(n, d);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < d; ++j) X(i, j) = f[i][j];
    mu = X.colwise().mean();
    Eigen::MatrixXd c = X.rowwise() - mu.transpose();
    cov = (c.adjoint() * c) / static_cast<double>(n - 1);
    cov.diagonal().array() += 1e-6;  // keep sqrtm well-posed
  };
  Eigen::VectorXd mu1, mu2;
  Eigen::MatrixXd s1, s2;
  fit(a, mu1, s1);
  fit(b, mu2, s2);

  // Tr((S1 S2)^{1/2}) via the symmetric form sqrt(S1)^T S2 sqrt(S1)
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es1(s1);
  Eigen::MatrixXd root1 = es1.operatorSqrt();
  Eigen::MatrixXd inner = root1 * s2 * root1;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2(inner);
  double tr_sqrt = 0;
  for (int64_t i = 0; i < d; ++i) tr_sqrt += std::sqrt(std::max(0.0, es2.eigenvalues()[i]));

  double diff2 = (mu1 - mu2).squaredNorm();
  return diff2 + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
}

double vfid(const std::vector<VideoClip>& set_a, const std::vector<VideoClip>& set_b) {
  if (set_a.size() < 2 || set_b.size() < 2)
    throw std::invalid_argument("vfid: need >= 2 clips per set");
  std::vector<std::vector<double>> fa, fb;
  for (const auto& c : set_a) fa.push_back(vfid_features(c));
  for (const auto& c : set_b) fb.push_back(vfid_features(c));
  return frechet_from_features(fa, fb);
}

double e_warp(const VideoClip& clip, const FlowField& flow) {
  if (flow.frames != clip.frames - 1 || flow.height != clip.height || flow.width != clip.width)
    throw std::invalid_argument("e_warp: flow dims do not match clip");
  const int64_t H = clip.height, W = clip.width;
  double total = 0;
  for (int64_t t = 0; t < flow.frames; ++t) {
    double frame_err = 0;
    int64_t count = 0;
    for (int64_t y = 1; y < H - 1; ++y)
      for (int64_t x = 1; x < W - 1; ++x) {
        double sx = x + flow.at(t, y, x, 0);
        double sy = y + flow.at(t, y, x, 1);
        if (sx < 0 || sx > W - 1 || sy < 0 || sy > H - 1) continue;
        int64_t x0 = static_cast<int64_t>(std::floor(sx));
        int64_t y0 = static_cast<int64_t>(std::floor(sy));
        int64_t x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
        double fx = sx - x0, fy = sy - y0;
        double err = 0;
        for (int c = 0; c < 3; ++c) {
          double v00 = clip.at(t + 1, y0, x0, c), v01 = clip.at(t + 1, y0, x1, c);
          double v10 = clip.at(t + 1, y1, x0, c), v11 = clip.at(t + 1, y1, x1, c);
          double warped = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                          fy * ((1 - fx) * v10 + fx * v11);
          err += std::abs(clip.at(t, y, x, c) - warped);
        }
        frame_err += err / 3.0;
        ++count;
      }
    if (count > 0) total += frame_err / static_cast<double>(count);
  }
  return total / static_cast<double>(flow.frames);
}

}  // namespace lgvi::metrics
