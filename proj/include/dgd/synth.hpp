#pragma once

// Deterministic synthetic "nose print" textures. Each identity is a band-limited
// mixture of sinusoidal gratings; each photograph of it is a small affine and
// photometric perturbation of that base texture.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dgd/augment.hpp"
#include "dgd/error.hpp"
#include "dgd/image.hpp"
#include "dgd/manifest.hpp"
#include "dgd/rng.hpp"

namespace dgd {

struct Jitter {
  double rotation = 0.05;    // radians, symmetric
  double translation = 3.0;  // pixels, per axis, symmetric
  double scale = 0.05;       // relative, symmetric around 1
};

struct SynthConfig {
  int identities = 50;
  int images_per_identity = 4;
  int image_size = 224;
  int gratings = 24;
  Jitter jitter;
  double brightness = 10.0;                    // beta in [-brightness, brightness]
  std::pair<double, double> contrast{0.9, 1.1};  // alpha range
  std::pair<double, double> frequency{4.0, 40.0};  // cycles per image, log-uniform
  double blur_sigma = 0.0;  // per-image Gaussian defocus, sigma in [0, blur_sigma] pixels
  double noise = 0.0;       // per-image additive Gaussian noise, std in [0, noise] grey levels
  std::uint64_t seed = 0;

  void validate() const {
    require(identities >= 2, Errc::InvalidConfig, "identities must be >= 2");
    require(images_per_identity >= 2, Errc::InvalidConfig, "images_per_identity must be >= 2");
    require(image_size >= 32, Errc::InvalidConfig, "image_size must be >= 32");
    require(gratings >= 1, Errc::InvalidConfig, "gratings must be >= 1");
    require(jitter.rotation >= 0 && jitter.translation >= 0 && jitter.scale >= 0 && jitter.scale < 1,
            Errc::InvalidConfig, "jitter bounds");
    require(brightness >= 0, Errc::InvalidConfig, "brightness must be >= 0");
    require(contrast.first > 0 && contrast.first <= contrast.second, Errc::InvalidConfig, "contrast range");
    require(frequency.first > 0 && frequency.first <= frequency.second, Errc::InvalidConfig, "frequency band");
    require(blur_sigma >= 0 && noise >= 0, Errc::InvalidConfig, "blur_sigma and noise must be >= 0");
  }
};

struct SynthDataset {
  std::vector<Image> images;  // identity-major, image-minor
  std::vector<std::string> paths;
  TrainManifest manifest;
};

inline std::string synth_image_name(int identity, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d_%02d.pgm", identity, index);
  return buf;
}

// Base texture of one identity. Depends only on (seed, identity).
inline Image synth_base_texture(const SynthConfig& cfg, int identity) {
  Rng rng(derive_seed(cfg.seed, {0xba5e, static_cast<std::uint64_t>(identity)}));
  struct Grating {
    double kx, ky, phase, amp;
  };
  const double two_pi = 2.0 * std::numbers::pi;
  const double n = cfg.image_size;
  std::vector<Grating> g(cfg.gratings);
  double power = 0.0;
  for (auto& gr : g) {
    const double f = std::exp(uniform(rng, std::log(cfg.frequency.first), std::log(cfg.frequency.second)));
    const double theta = uniform(rng, 0.0, std::numbers::pi);
    gr.kx = two_pi * f * std::cos(theta) / n;
    gr.ky = two_pi * f * std::sin(theta) / n;
    gr.phase = uniform(rng, 0.0, two_pi);
    gr.amp = uniform(rng, 0.5, 1.0);
    power += 0.5 * gr.amp * gr.amp;
  }
  const double gain = 50.0 / std::sqrt(power);  // ~50 grey levels standard deviation

  Image img(cfg.image_size, cfg.image_size);
  for (int y = 0; y < cfg.image_size; ++y)
    for (int x = 0; x < cfg.image_size; ++x) {
      double s = 0.0;
      for (const auto& gr : g) s += gr.amp * std::sin(gr.kx * x + gr.ky * y + gr.phase);
      img.at(x, y) = clamp_round(128.0 + gain * s);
    }
  return img;
}

namespace detail {

// Separable Gaussian blur of an n x n raster, border-clamped, radius ceil(3 sigma).
inline std::vector<double> gaussian_blur(const std::vector<double>& src, int n, double sigma) {
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& w : k) w /= sum;
  auto idx = [n](int v) { return std::clamp(v, 0, n - 1); };
  std::vector<double> tmp(src.size()), out(src.size());
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double a = 0.0;
      for (int i = -r; i <= r; ++i) a += k[i + r] * src[static_cast<std::size_t>(y) * n + idx(x + i)];
      tmp[static_cast<std::size_t>(y) * n + x] = a;
    }
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double a = 0.0;
      for (int i = -r; i <= r; ++i) a += k[i + r] * tmp[static_cast<std::size_t>(idx(y + i)) * n + x];
      out[static_cast<std::size_t>(y) * n + x] = a;
    }
  return out;
}

}  // namespace detail

// Bilinear sample at a real-valued position, border-clamped.
inline double sample_bilinear(const Image& img, double x, double y) {
  x = std::clamp(x, 0.0, img.width - 1.0);
  y = std::clamp(y, 0.0, img.height - 1.0);
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - x0, fy = y - y0;
  const double top = (1 - fx) * img.at(x0, y0) + fx * img.at(x1, y0);
  const double bot = (1 - fx) * img.at(x0, y1) + fx * img.at(x1, y1);
  return (1 - fy) * top + fy * bot;
}

// One photograph of `identity`. Depends only on (seed, identity, index).
inline Image synth_view(const SynthConfig& cfg, const Image& base, int identity, int index) {
  Rng rng(derive_seed(cfg.seed, {0x1e7, static_cast<std::uint64_t>(identity), static_cast<std::uint64_t>(index)}));
  const auto& j = cfg.jitter;
  const double rot = uniform(rng, -j.rotation, j.rotation);
  const double tx = uniform(rng, -j.translation, j.translation);
  const double ty = uniform(rng, -j.translation, j.translation);
  const double sc = uniform(rng, 1.0 - j.scale, 1.0 + j.scale);
  const double alpha = uniform(rng, cfg.contrast.first, cfg.contrast.second);
  const double beta = uniform(rng, -cfg.brightness, cfg.brightness);

  const double sigma = uniform(rng, 0.0, cfg.blur_sigma);
  const double noise_std = uniform(rng, 0.0, cfg.noise);

  // Output pixel p maps to source R(-rot) (p - c - t) / sc + c.
  const int n = cfg.image_size;
  const double c = (n - 1) / 2.0;
  const double cr = std::cos(rot), sr = std::sin(rot);
  std::vector<double> raster(static_cast<std::size_t>(n) * n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double u = (x - c - tx) / sc, v = (y - c - ty) / sc;
      raster[static_cast<std::size_t>(y) * n + x] = sample_bilinear(base, cr * u + sr * v + c, -sr * u + cr * v + c);
    }
  if (sigma > 0.0) raster = detail::gaussian_blur(raster, n, sigma);

  std::normal_distribution<double> gauss(0.0, 1.0);
  Image out(n, n);
  for (std::size_t i = 0; i < raster.size(); ++i) {
    const double e = noise_std > 0.0 ? noise_std * gauss(rng) : 0.0;
    out.pixels[i] = clamp_round(alpha * (raster[i] - 128.0) + 128.0 + beta + e);
  }
  return out;
}

inline SynthDataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  SynthDataset ds;
  ds.images.reserve(static_cast<std::size_t>(cfg.identities) * cfg.images_per_identity);
  for (int id = 0; id < cfg.identities; ++id) {
    const Image base = synth_base_texture(cfg, id);
    auto& group = ds.manifest.groups[id];
    for (int k = 0; k < cfg.images_per_identity; ++k) {
      ds.images.push_back(synth_view(cfg, base, id, k));
      ds.paths.push_back(synth_image_name(id, k));
      group.push_back(ds.paths.back());
    }
  }
  return ds;
}

}  // namespace dgd
