#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dgd/error.hpp"
#include "dgd/image.hpp"
#include "dgd/rng.hpp"

namespace dgd {

struct AugmentProfile {
  std::string name = "none";
  double small_resize_prob = 0.0;
  std::vector<int> small_sizes{60};
  int final_size = 224;
  std::pair<double, double> brightness_delta_range{0.0, 0.0};
  std::pair<double, double> contrast_range{1.0, 1.0};
  double blur_prob = 0.0;
  std::vector<int> blur_lengths{3};
  double crop_prob = 0.0;
  std::pair<double, double> crop_fraction_range{1.0, 1.0};

  void validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    require(prob(small_resize_prob) && prob(blur_prob) && prob(crop_prob), Errc::InvalidConfig,
            name + ": probability outside [0,1]");
    require(final_size >= 1, Errc::InvalidConfig, name + ": final_size");
    require(!small_sizes.empty(), Errc::InvalidConfig, name + ": small_sizes empty");
    for (int s : small_sizes)
      require(s >= 1 && s < final_size, Errc::InvalidConfig, name + ": small size must be below final_size");
    require(brightness_delta_range.first <= brightness_delta_range.second, Errc::InvalidConfig,
            name + ": brightness range");
    require(contrast_range.first > 0.0 && contrast_range.first <= contrast_range.second,
            Errc::InvalidConfig, name + ": contrast range");
    require(!blur_lengths.empty(), Errc::InvalidConfig, name + ": blur_lengths empty");
    for (int l : blur_lengths)
      require(l >= 1 && l % 2 == 1, Errc::InvalidConfig, name + ": blur lengths must be odd");
    require(crop_fraction_range.first > 0.0 && crop_fraction_range.first <= crop_fraction_range.second &&
                crop_fraction_range.second <= 1.0,
            Errc::InvalidConfig, name + ": crop fractions must lie in (0,1]");
  }

  bool has_brightness_contrast() const {
    return brightness_delta_range != std::pair{0.0, 0.0} || contrast_range != std::pair{1.0, 1.0};
  }
};

// Built-in profiles: none, stage1, stage1_multi, stage2.
inline std::optional<AugmentProfile> builtin_profile(const std::string& name) {
  AugmentProfile p;
  p.name = name;
  if (name == "none") return p;
  if (name == "stage1") {
    p.small_resize_prob = 0.5;
    p.small_sizes = {60};
    return p;
  }
  if (name == "stage1_multi") {
    p.small_resize_prob = 0.45;
    p.small_sizes = {50, 60, 70, 80};
    return p;
  }
  if (name == "stage2") {
    p.small_resize_prob = 0.5;
    p.small_sizes = {60};
    p.brightness_delta_range = {-20.0, 20.0};
    p.contrast_range = {0.8, 1.2};
    p.blur_prob = 0.3;
    p.blur_lengths = {3, 5, 7};
    return p;
  }
  return std::nullopt;
}

// Half-pixel-centre bilinear resampling:
//   xs = (xd + 0.5) * (w_in / w_out) - 0.5, clamped to [0, w_in - 1]
// then a bilinear blend of the four neighbours, rounded and clamped.
inline Image bilinear_resize(const Image& img, int out_w, int out_h) {
  require(out_w >= 1 && out_h >= 1, Errc::InvalidConfig, "resize target must be positive");
  const double sx = static_cast<double>(img.width) / out_w;
  const double sy = static_cast<double>(img.height) / out_h;

  struct Tap {
    int i0, i1;
    double f;
  };
  auto taps = [](int n_out, int n_in, double scale) {
    std::vector<Tap> t(n_out);
    for (int d = 0; d < n_out; ++d) {
      double s = (d + 0.5) * scale - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(n_in - 1));
      const int i0 = static_cast<int>(std::floor(s));
      const int i1 = std::min(i0 + 1, n_in - 1);
      t[d] = {i0, i1, s - i0};
    }
    return t;
  };
  const auto tx = taps(out_w, img.width, sx);
  const auto ty = taps(out_h, img.height, sy);

  Image out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    const auto& [y0, y1, fy] = ty[y];
    for (int x = 0; x < out_w; ++x) {
      const auto& [x0, x1, fx] = tx[x];
      const double top = (1.0 - fx) * img.at(x0, y0) + fx * img.at(x1, y0);
      const double bot = (1.0 - fx) * img.at(x0, y1) + fx * img.at(x1, y1);
      out.at(x, y) = clamp_round((1.0 - fy) * top + fy * bot);
    }
  }
  return out;
}

// Picks the small-resize side length, or nothing for the direct branch.
// Always consumes two draws so the stream position does not depend on the branch.
inline std::optional<int> small_resize_branch(const AugmentProfile& profile, Rng& rng) {
  const double u = uniform(rng, 0.0, 1.0);
  const std::size_t k = uniform_index(rng, profile.small_sizes.size());
  if (u < profile.small_resize_prob) return profile.small_sizes[k];
  return std::nullopt;
}

inline Image small_resize(const Image& img, const AugmentProfile& profile, Rng& rng) {
  const int f = profile.final_size;
  if (auto s = small_resize_branch(profile, rng)) return bilinear_resize(bilinear_resize(img, *s, *s), f, f);
  return bilinear_resize(img, f, f);
}

inline Image brightness_contrast(const Image& img, double alpha, double beta) {
  require(alpha > 0.0, Errc::InvalidConfig, "contrast factor must be positive");
  Image out(img.width, img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    out.pixels[i] = clamp_round(alpha * (img.pixels[i] - 128.0) + 128.0 + beta);
  return out;
}

enum class BlurAngle { Deg0, Deg45, Deg90, Deg135 };

// Line kernel of `length` taps, weight 1/length, zero padding.
inline Image motion_blur(const Image& img, int length, BlurAngle angle) {
  require(length >= 1 && length % 2 == 1, Errc::BadLength, "blur length " + std::to_string(length));
  int dx = 1, dy = 0;
  switch (angle) {
    case BlurAngle::Deg0: dx = 1, dy = 0; break;
    case BlurAngle::Deg45: dx = 1, dy = -1; break;
    case BlurAngle::Deg90: dx = 0, dy = 1; break;
    case BlurAngle::Deg135: dx = 1, dy = 1; break;
  }
  const int r = (length - 1) / 2;
  Image out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      int acc = 0;
      for (int k = -r; k <= r; ++k) {
        const int xs = x + k * dx, ys = y + k * dy;
        if (xs >= 0 && xs < img.width && ys >= 0 && ys < img.height) acc += img.at(xs, ys);
      }
      out.at(x, y) = clamp_round(static_cast<double>(acc) / length);
    }
  }
  return out;
}

inline Image crop(const Image& img, int x0, int y0, int w, int h) {
  require(x0 >= 0 && y0 >= 0 && w >= 1 && h >= 1 && x0 + w <= img.width && y0 + h <= img.height,
          Errc::OutOfRange, "crop window outside image");
  Image out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(x, y) = img.at(x0 + x, y0 + y);
  return out;
}

// Square crop of side f * min(w, h) at a uniform position; f drawn from `fraction`.
inline Image square_crop(const Image& img, std::pair<double, double> fraction, int final_size, Rng& rng) {
  const double f = fraction.first == fraction.second ? fraction.first : uniform(rng, fraction.first, fraction.second);
  const int side = std::max(1, static_cast<int>(std::lround(f * std::min(img.width, img.height))));
  const int x0 = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(img.width - side + 1)));
  const int y0 = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(img.height - side + 1)));
  return bilinear_resize(crop(img, x0, y0, side, side), final_size, final_size);
}

inline Image random_crop(const Image& img, const AugmentProfile& profile, Rng& rng) {
  const int f = profile.final_size;
  if (uniform(rng, 0.0, 1.0) < profile.crop_prob) return square_crop(img, profile.crop_fraction_range, f, rng);
  return bilinear_resize(img, f, f);
}

// Full training-time pipeline: small resize, brightness/contrast, motion blur, crop.
inline Image augment_image(const Image& img, const AugmentProfile& profile, Rng& rng) {
  Image out = small_resize(img, profile, rng);
  if (profile.has_brightness_contrast()) {
    const auto [a_lo, a_hi] = profile.contrast_range;
    const auto [b_lo, b_hi] = profile.brightness_delta_range;
    const double alpha = a_lo == a_hi ? a_lo : uniform(rng, a_lo, a_hi);
    const double beta = b_lo == b_hi ? b_lo : uniform(rng, b_lo, b_hi);
    out = brightness_contrast(out, alpha, beta);
  }
  if (profile.blur_prob > 0.0 && uniform(rng, 0.0, 1.0) < profile.blur_prob) {
    const int len = profile.blur_lengths[uniform_index(rng, profile.blur_lengths.size())];
    const auto angle = static_cast<BlurAngle>(uniform_index(rng, 4));
    out = motion_blur(out, len, angle);
  }
  if (profile.crop_prob > 0.0) out = random_crop(out, profile, rng);
  return out;
}

// Test-time views.
struct ViewRecipe {
  enum class Kind { Identity, Scale, Crop, Contrast } kind = Kind::Identity;
  int scale_size = 0;                      // Scale: intermediate side length
  std::pair<double, double> range{1.0, 1.0};  // Crop: side fraction; Contrast: alpha
};

struct TtaConfig {
  int final_size = 224;
  std::vector<ViewRecipe> views;
};

inline TtaConfig tta_default() {
  using K = ViewRecipe::Kind;
  return TtaConfig{224,
                   {{K::Identity, 0, {1.0, 1.0}},
                    {K::Scale, 160, {1.0, 1.0}},
                    {K::Scale, 96, {1.0, 1.0}},
                    {K::Crop, 0, {0.8, 0.9}},
                    {K::Contrast, 0, {0.8, 1.2}}}};
}

inline std::vector<Image> tta_views(const Image& img, const TtaConfig& cfg, std::uint64_t seed) {
  using K = ViewRecipe::Kind;
  const int f = cfg.final_size;
  const Image base = img.width == f && img.height == f ? img : bilinear_resize(img, f, f);
  std::vector<Image> views;
  views.reserve(cfg.views.size());
  for (std::size_t v = 0; v < cfg.views.size(); ++v) {
    const auto& r = cfg.views[v];
    Rng rng(derive_seed(seed, {v}));
    switch (r.kind) {
      case K::Identity: views.push_back(base); break;
      case K::Scale: views.push_back(bilinear_resize(bilinear_resize(base, r.scale_size, r.scale_size), f, f)); break;
      case K::Crop: views.push_back(square_crop(base, r.range, f, rng)); break;
      case K::Contrast: {
        const double alpha = r.range.first == r.range.second ? r.range.first : uniform(rng, r.range.first, r.range.second);
        views.push_back(brightness_contrast(base, alpha, 0.0));
        break;
      }
    }
  }
  return views;
}

}  // namespace dgd
