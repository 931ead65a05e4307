#pragma once

#include <stdexcept>

#include "lgvi/tensor.hpp"
#include "lgvi/video.hpp"

namespace lgvi::codec {

// Invertible pixel<->latent transform: a fixed space-to-depth rearrangement
// standing in for a learned autoencoder. Each f x f pixel block folds into
// channels, so the diffusion runs on an (H/f) x (W/f) grid while staying
// losslessly mapped to pixel space.
//
// Channel order: out[t, Y, X, c*f*f + by*f + bx] = in[t, Y*f+by, X*f+bx, c].

template <class S>
struct LatentClip {
  Tensor<S> values;  // [T, h, w, c_lat], c_lat = 3*f*f
  int f = 1;

  int64_t frames() const { return values.shape[0]; }
  int64_t h() const { return values.shape[1]; }
  int64_t w() const { return values.shape[2]; }
  int64_t channels() const { return values.shape[3]; }
};

// [0,1] pixels -> [-1,1].
template <class S>
Tensor<S> normalize_pixels(const VideoClip& clip) {
  Tensor<S> t({clip.frames, clip.height, clip.width, 3});
  for (int64_t i = 0; i < t.numel(); ++i)
    t.data[i] = static_cast<S>(clip.data[i] * 2.0f - 1.0f);
  return t;
}

// [-1,1] -> [0,1] pixels, clamped.
template <class S>
VideoClip denormalize_pixels(const Tensor<S>& t) {
  if (t.shape.size() != 4 || t.shape[3] != 3)
    throw std::invalid_argument("denormalize_pixels: expected [T,H,W,3]");
  VideoClip clip(t.shape[0], t.shape[1], t.shape[2]);
  for (int64_t i = 0; i < t.numel(); ++i) {
    double v = (static_cast<double>(t.data[i]) + 1.0) * 0.5;
    clip.data[i] = static_cast<float>(v < 0 ? 0 : (v > 1 ? 1 : v));
  }
  return clip;
}

template <class S>
LatentClip<S> encode(const Tensor<S>& clip, int f) {
  if (clip.shape.size() != 4 || clip.shape[3] != 3)
    throw std::invalid_argument("encode: expected [T,H,W,3]");
  int64_t T = clip.shape[0], H = clip.shape[1], W = clip.shape[2];
  if (f < 1 || H % f || W % f)
    throw std::invalid_argument("encode: H and W must be divisible by f");
  int64_t h = H / f, w = W / f, cl = 3 * f * f;

  LatentClip<S> out;
  out.f = f;
  out.values = Tensor<S>({T, h, w, cl});
  for (int64_t t = 0; t < T; ++t)
    for (int64_t Y = 0; Y < h; ++Y)
      for (int64_t X = 0; X < w; ++X)
        for (int c = 0; c < 3; ++c)
          for (int by = 0; by < f; ++by)
            for (int bx = 0; bx < f; ++bx)
              out.values.data[((t * h + Y) * w + X) * cl + (c * f + by) * f + bx] =
                  clip.data[((t * H + Y * f + by) * W + X * f + bx) * 3 + c];
  return out;
}

template <class S>
Tensor<S> decode(const LatentClip<S>& latent) {
  int f = latent.f;
  int64_t T = latent.frames(), h = latent.h(), w = latent.w(), cl = latent.channels();
  if (cl != 3 * static_cast<int64_t>(f) * f)
    throw std::invalid_argument("decode: c_lat inconsistent with f");
  int64_t H = h * f, W = w * f;
  Tensor<S> clip({T, H, W, 3});
  for (int64_t t = 0; t < T; ++t)
    for (int64_t Y = 0; Y < h; ++Y)
      for (int64_t X = 0; X < w; ++X)
        for (int c = 0; c < 3; ++c)
          for (int by = 0; by < f; ++by)
            for (int bx = 0; bx < f; ++bx)
              clip.data[((t * H + Y * f + by) * W + X * f + bx) * 3 + c] =
                  latent.values.data[((t * h + Y) * w + X) * cl + (c * f + by) * f + bx];
  return clip;
}

// Decode a sampled latent: same rearrangement, then clamp to [-1,1].
template <class S>
Tensor<S> decode_clamped(const LatentClip<S>& latent) {
  Tensor<S> t = decode(latent);
  for (auto& v : t.data) v = v < S(-1) ? S(-1) : (v > S(1) ? S(1) : v);
  return t;
}

}  // namespace lgvi::codec
