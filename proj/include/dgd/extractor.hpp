#pragma once

// Frozen two-layer convolutional filter bank producing the C x H x W activation
// tensor consumed by the pooling head.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dgd/error.hpp"
#include "dgd/image.hpp"
#include "dgd/rng.hpp"

namespace dgd {

// Channel-major 3-D tensor; a 2-D map is a FeatureMap with one channel.
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;

  FeatureMap() = default;
  FeatureMap(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w), values(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  double* channel(int c) { return values.data() + c * plane(); }
  const double* channel(int c) const { return values.data() + c * plane(); }
  double& at(int c, int y, int x) { return values[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  double at(int c, int y, int x) const { return values[c * plane() + static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

// A convolution kernel spanning `channels` input planes.
using Kernel = FeatureMap;

struct FilterBank {
  int kernel_size = 5;
  std::vector<Kernel> layer1;  // 1 x k x k each
  std::vector<Kernel> layer2;  // K1 x k x k each
  std::uint64_t seed = 0;

  int output_channels() const { return static_cast<int>(layer2.size()); }
  friend bool operator==(const FilterBank&, const FilterBank&) = default;
};

// Gaussian draws, then zero mean and unit Frobenius norm per kernel.
inline FilterBank make_filter_bank(std::uint64_t seed, int k1 = 16, int k2 = 32, int k = 5) {
  require(k1 >= 1 && k2 >= 1 && k >= 1 && k % 2 == 1, Errc::InvalidConfig, "filter bank shape");
  FilterBank bank;
  bank.kernel_size = k;
  bank.seed = seed;
  Rng rng(derive_seed(seed, {0xf11e}));
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto draw = [&](int channels) {
    Kernel ker(channels, k, k);
    for (auto& v : ker.values) v = gauss(rng);
    double mean = 0.0;
    for (double v : ker.values) mean += v;
    mean /= static_cast<double>(ker.values.size());
    double norm = 0.0;
    for (auto& v : ker.values) {
      v -= mean;
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : ker.values) v /= norm;
    return ker;
  };
  for (int i = 0; i < k1; ++i) bank.layer1.push_back(draw(1));
  for (int i = 0; i < k2; ++i) bank.layer2.push_back(draw(k1));
  return bank;
}

// Stride-1 zero-padded correlation; sums over input channels. Output is H x W.
inline FeatureMap conv2d_same(const FeatureMap& input, const Kernel& kernel) {
  require(kernel.height % 2 == 1 && kernel.width % 2 == 1, Errc::KernelTooLarge, "kernel must be odd-sized");
  require(kernel.channels == input.channels, Errc::DimensionMismatch, "kernel/input channel count");
  require(kernel.height <= input.height && kernel.width <= input.width, Errc::KernelTooLarge,
          "kernel larger than input");
  const int H = input.height, W = input.width;
  const int ry = kernel.height / 2, rx = kernel.width / 2;
  FeatureMap out(1, H, W);
  double* o = out.values.data();
  for (int c = 0; c < input.channels; ++c) {
    const double* in = input.channel(c);
    for (int ky = 0; ky < kernel.height; ++ky) {
      const int dy = ky - ry;
      const int y_lo = std::max(0, -dy), y_hi = std::min(H, H - dy);
      for (int kx = 0; kx < kernel.width; ++kx) {
        const int dx = kx - rx;
        const double w = kernel.at(c, ky, kx);
        if (w == 0.0) continue;
        const int x_lo = std::max(0, -dx), x_hi = std::min(W, W - dx);
        for (int y = y_lo; y < y_hi; ++y) {
          double* orow = o + static_cast<std::size_t>(y) * W;
          const double* irow = in + static_cast<std::size_t>(y + dy) * W + dx;
          for (int x = x_lo; x < x_hi; ++x) orow[x] += w * irow[x];
        }
      }
    }
  }
  return out;
}

inline FeatureMap avg_pool(const FeatureMap& map, int factor) {
  require(factor >= 1, Errc::IndivisibleExtent, "pool factor must be >= 1");
  require(map.height % factor == 0 && map.width % factor == 0, Errc::IndivisibleExtent,
          std::to_string(map.height) + "x" + std::to_string(map.width) + " by " + std::to_string(factor));
  if (factor == 1) return map;
  const int h = map.height / factor, w = map.width / factor;
  const double inv = 1.0 / (factor * factor);
  FeatureMap out(map.channels, h, w);
  for (int c = 0; c < map.channels; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx) s += map.at(c, y * factor + dy, x * factor + dx);
        out.at(c, y, x) = s * inv;
      }
  return out;
}

inline constexpr int kExtractorInputSize = 224;
inline constexpr int kExtractorPool = 4;

// Runs one conv layer (every kernel + ReLU) and stacks the outputs.
inline FeatureMap conv_relu_layer(const FeatureMap& input, const std::vector<Kernel>& kernels) {
  FeatureMap out(static_cast<int>(kernels.size()), input.height, input.width);
  for (std::size_t k = 0; k < kernels.size(); ++k) {
    FeatureMap m = conv2d_same(input, kernels[k]);
    double* dst = out.channel(static_cast<int>(k));
    for (std::size_t i = 0; i < m.values.size(); ++i) dst[i] = std::max(0.0, m.values[i]);
  }
  return out;
}

// Pixel intensities are taken as given (already in [0,1] for images).
inline FeatureMap extract_features(const FeatureMap& normalized, const FilterBank& bank) {
  require(normalized.channels == 1 && normalized.height == kExtractorInputSize &&
              normalized.width == kExtractorInputSize,
          Errc::WrongInputSize, "extractor input must be 224x224");
  FeatureMap h = avg_pool(conv_relu_layer(normalized, bank.layer1), kExtractorPool);
  return avg_pool(conv_relu_layer(h, bank.layer2), kExtractorPool);
}

inline FeatureMap to_unit_map(const Image& img) {
  FeatureMap m(1, img.height, img.width);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) m.values[i] = img.pixels[i] / 255.0;
  return m;
}

inline FeatureMap extract_features(const Image& img, const FilterBank& bank) {
  require(img.width == kExtractorInputSize && img.height == kExtractorInputSize, Errc::WrongInputSize,
          "image is " + std::to_string(img.width) + "x" + std::to_string(img.height) + ", expected 224x224");
  return extract_features(to_unit_map(img), bank);
}

}  // namespace dgd
