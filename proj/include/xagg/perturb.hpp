#pragma once

// Perturbation machinery shared by the metrics: uniform input noise, binary
// region masks (square or scattered), baseline images and the replacement map
// h(x, x_b, I).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "xagg/core.hpp"
#include "xagg/rng.hpp"

namespace xagg {

struct NoiseSpec {
  double delta = 0.1;  // uniform corruption bound, eps ~ U[-delta, delta)
};

struct RegionMaskSpec {
  enum class Mode { square, scattered };
  Mode mode = Mode::square;
  double fraction = 0.2;  // selected image area, in (0, 1)
};

struct BaselineSpec {
  enum class Kind { blur, zeros, mean };
  Kind kind = Kind::blur;
  double blur_sigma = 2.0;
};

inline std::vector<double> sample_noise(const NoiseSpec& spec, const Shape& shape, Rng& rng) {
  if (!(spec.delta > 0.0)) throw InvalidInput("sample_noise: delta must be > 0");
  return rng_uniform(rng, -spec.delta, spec.delta, shape.d());
}

namespace detail {

// Half-sample symmetric extension: x[-1] = x[0], x[n] = x[n-1], folded as
// often as needed. Keeps a normalized symmetric kernel mean-preserving.
inline std::size_t mirror_index(long i, long n) {
  const long m = 2 * n;
  i = ((i % m) + m) % m;
  if (i >= n) i = m - 1 - i;
  return static_cast<std::size_t>(i);
}

inline std::vector<double> gaussian_kernel(double sigma) {
  const long radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (long t = -radius; t <= radius; ++t) {
    const double v = std::exp(-0.5 * (static_cast<double>(t) * t) / (sigma * sigma));
    k[t + radius] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

}  // namespace detail

// Binary pixel mask broadcast to all channels. Square mode places one random
// axis-aligned square of side round(sqrt(fraction*H*W)); scattered mode picks
// exactly round(fraction*H*W) pixels without replacement.
inline std::vector<double> sample_mask(const RegionMaskSpec& spec, const Shape& shape, Rng& rng) {
  if (!(spec.fraction > 0.0 && spec.fraction < 1.0))
    throw InvalidInput("sample_mask: fraction must be in (0, 1)");
  const std::size_t H = shape.height, W = shape.width, C = shape.channels;
  const double target = spec.fraction * static_cast<double>(H * W);
  const auto count = static_cast<std::size_t>(std::llround(target));
  if (count < 1) throw InvalidInput("sample_mask: fraction*H*W rounds below 1");

  std::vector<double> mask(shape.d(), 0.0);
  auto set_pixel = [&](std::size_t py, std::size_t px) {
    const std::size_t base = (py * W + px) * C;
    for (std::size_t c = 0; c < C; ++c) mask[base + c] = 1.0;
  };

  if (spec.mode == RegionMaskSpec::Mode::square) {
    std::size_t side = static_cast<std::size_t>(std::llround(std::sqrt(target)));
    side = std::clamp<std::size_t>(side, 1, std::min(H, W));
    const std::size_t top = rng.next_index(H - side + 1);
    const std::size_t left = rng.next_index(W - side + 1);
    for (std::size_t y = top; y < top + side; ++y)
      for (std::size_t x = left; x < left + side; ++x) set_pixel(y, x);
  } else {
    std::vector<std::size_t> pix(H * W);
    std::iota(pix.begin(), pix.end(), 0);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = i + rng.next_index(pix.size() - i);
      std::swap(pix[i], pix[j]);
      set_pixel(pix[i] / W, pix[i] % W);
    }
  }
  return mask;
}

// Separable Gaussian blur per channel, kernel radius ceil(3*sigma).
inline std::vector<double> gaussian_blur(const std::vector<double>& x, const Shape& shape,
                                         double sigma) {
  if (!(sigma > 0.0)) throw InvalidInput("gaussian_blur: sigma must be > 0");
  if (x.size() != shape.d()) throw InvalidInput("gaussian_blur: size mismatch");
  const long H = static_cast<long>(shape.height), W = static_cast<long>(shape.width);
  const std::size_t C = shape.channels;
  const auto kernel = detail::gaussian_kernel(sigma);
  const long radius = (static_cast<long>(kernel.size()) - 1) / 2;

  auto at = [&](const std::vector<double>& img, long y, long xx, std::size_t c) {
    return img[(static_cast<std::size_t>(y) * shape.width + static_cast<std::size_t>(xx)) * C + c];
  };

  std::vector<double> tmp(x.size()), out(x.size());
  for (std::size_t c = 0; c < C; ++c) {
    for (long y = 0; y < H; ++y)
      for (long xx = 0; xx < W; ++xx) {
        double acc = 0.0;
        for (long t = -radius; t <= radius; ++t)
          acc += kernel[t + radius] * at(x, y, static_cast<long>(detail::mirror_index(xx + t, W)), c);
        tmp[(static_cast<std::size_t>(y) * shape.width + static_cast<std::size_t>(xx)) * C + c] = acc;
      }
    for (long y = 0; y < H; ++y)
      for (long xx = 0; xx < W; ++xx) {
        double acc = 0.0;
        for (long t = -radius; t <= radius; ++t)
          acc += kernel[t + radius] * at(tmp, static_cast<long>(detail::mirror_index(y + t, H)), xx, c);
        out[(static_cast<std::size_t>(y) * shape.width + static_cast<std::size_t>(xx)) * C + c] = acc;
      }
  }
  return out;
}

inline std::vector<double> make_baseline(const BaselineSpec& spec, const std::vector<double>& x,
                                         const Shape& shape) {
  if (x.size() != shape.d()) throw InvalidInput("make_baseline: size mismatch");
  switch (spec.kind) {
    case BaselineSpec::Kind::zeros:
      return std::vector<double>(x.size(), 0.0);
    case BaselineSpec::Kind::mean: {
      std::vector<double> out(x.size());
      const std::size_t C = shape.channels;
      for (std::size_t c = 0; c < C; ++c) {
        double sum = 0.0;
        for (std::size_t p = 0; p < shape.pixels(); ++p) sum += x[p * C + c];
        const double mean = sum / static_cast<double>(shape.pixels());
        for (std::size_t p = 0; p < shape.pixels(); ++p) out[p * C + c] = mean;
      }
      return out;
    }
    case BaselineSpec::Kind::blur:
      return gaussian_blur(x, shape, spec.blur_sigma);
  }
  throw InvalidInput("make_baseline: unknown kind");
}

// h(x, x_b, I)_i = (x_b)_i if I_i = 1 else x_i.
inline std::vector<double> apply_h(const std::vector<double>& x, const std::vector<double>& xb,
                                   const std::vector<double>& mask) {
  if (x.size() != xb.size() || x.size() != mask.size())
    throw InvalidInput("apply_h: size mismatch");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = mask[i] != 0.0 ? xb[i] : x[i];
  return out;
}

}  // namespace xagg
