#pragma once

// Dual global descriptor head. Each branch pools the activation tensor with a
// power mean (SPoC, MAC or GeM), l2-normalises, applies an affine projection;
// the two branch outputs are concatenated and l2-normalised once more.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "dgd/error.hpp"
#include "dgd/extractor.hpp"
#include "dgd/rng.hpp"

namespace dgd {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kNormEps = 1e-12;

struct PoolSpec {
  enum class Kind { Spoc, Mac, Gem } kind = Kind::Spoc;
  double p = 1.0;  // GeM exponent

  static PoolSpec spoc() { return {Kind::Spoc, 1.0}; }
  static PoolSpec mac() { return {Kind::Mac, 1.0}; }
  static PoolSpec gem(double p) { return {Kind::Gem, p}; }

  friend bool operator==(const PoolSpec&, const PoolSpec&) = default;
};

inline std::string to_string(PoolSpec s) {
  switch (s.kind) {
    case PoolSpec::Kind::Spoc: return "spoc";
    case PoolSpec::Kind::Mac: return "mac";
    case PoolSpec::Kind::Gem: return "gem";
  }
  return "?";
}

inline Vec gem_pool(const FeatureMap& v, double p) {
  require(p >= 1.0, Errc::BadExponent, "p = " + std::to_string(p));
  const std::size_t n = v.plane();
  Vec f(v.channels);
  for (int c = 0; c < v.channels; ++c) {
    const double* a = v.channel(c);
    double s = 0.0;
    if (p == 1.0) {
      for (std::size_t i = 0; i < n; ++i) {
        require(a[i] >= 0.0, Errc::NegativeActivation, "channel " + std::to_string(c));
        s += a[i];
      }
      f[c] = s / static_cast<double>(n);
      continue;
    }
    // Scale by the channel max so v^p cannot overflow for large p.
    double mx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      require(a[i] >= 0.0, Errc::NegativeActivation, "channel " + std::to_string(c));
      mx = std::max(mx, a[i]);
    }
    if (mx == 0.0) {
      f[c] = 0.0;
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) s += std::pow(a[i] / mx, p);
    f[c] = mx * std::pow(s / static_cast<double>(n), 1.0 / p);
  }
  return f;
}

inline Vec mac_pool(const FeatureMap& v) {
  const std::size_t n = v.plane();
  Vec f(v.channels);
  for (int c = 0; c < v.channels; ++c) {
    const double* a = v.channel(c);
    f[c] = *std::max_element(a, a + n);
  }
  return f;
}

inline Vec pool(const FeatureMap& v, PoolSpec spec) {
  switch (spec.kind) {
    case PoolSpec::Kind::Spoc: return gem_pool(v, 1.0);
    case PoolSpec::Kind::Mac: return mac_pool(v);
    case PoolSpec::Kind::Gem: return gem_pool(v, spec.p);
  }
  return {};
}

inline Vec l2_normalize(const Vec& v) {
  const double n = v.norm();
  require(n > kNormEps, Errc::ZeroVector, "norm " + std::to_string(n));
  return v / n;
}

struct HeadParams {
  PoolSpec branch_a = PoolSpec::spoc();
  PoolSpec branch_b = PoolSpec::mac();
  Mat W_a, W_b;  // d x C
  Vec b_a, b_b;  // d
  bool cgd_order = false;  // FC before normalisation instead of after

  int in_dim() const { return static_cast<int>(W_a.cols()); }
  int branch_dim() const { return static_cast<int>(W_a.rows()); }
  int embedding_dim() const { return 2 * branch_dim(); }

  bool same_shape(const HeadParams& o) const {
    return W_a.rows() == o.W_a.rows() && W_a.cols() == o.W_a.cols() && W_b.rows() == o.W_b.rows() &&
           W_b.cols() == o.W_b.cols() && b_a.size() == o.b_a.size() && b_b.size() == o.b_b.size();
  }

  void validate() const {
    require(W_a.rows() >= 1 && W_a.cols() >= 1, Errc::DimensionMismatch, "empty projection");
    require(W_b.rows() == W_a.rows() && W_b.cols() == W_a.cols(), Errc::DimensionMismatch, "branch shapes differ");
    require(b_a.size() == W_a.rows() && b_b.size() == W_b.rows(), Errc::DimensionMismatch, "bias size");
    require(W_a.allFinite() && W_b.allFinite() && b_a.allFinite() && b_b.allFinite(), Errc::InvalidConfig,
            "non-finite head parameters");
    for (auto s : {branch_a, branch_b})
      if (s.kind == PoolSpec::Kind::Gem) require(s.p >= 1.0, Errc::BadExponent, "GeM p < 1");
  }

  friend bool operator==(const HeadParams& x, const HeadParams& y);
};

// Bitwise equality including shape; Eigen's operator== requires equal sizes.
template <typename A, typename B>
bool same_values(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) return false;
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      if (x(i, j) != y(i, j)) return false;
  return true;
}

inline bool operator==(const HeadParams& x, const HeadParams& y) {
  return x.branch_a == y.branch_a && x.branch_b == y.branch_b && x.cgd_order == y.cgd_order &&
         same_values(x.W_a, y.W_a) && same_values(x.W_b, y.W_b) && same_values(x.b_a, y.b_a) &&
         same_values(x.b_b, y.b_b);
}

// Gaussian weights scaled by 1/sqrt(C), zero biases.
inline HeadParams init_head(int channels, int branch_dim, std::uint64_t seed, PoolSpec a = PoolSpec::spoc(),
                            PoolSpec b = PoolSpec::mac(), bool cgd_order = false) {
  require(channels >= 1 && branch_dim >= 1, Errc::InvalidConfig, "head dimensions");
  Rng rng(derive_seed(seed, {0x4ead}));
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(channels)));
  HeadParams h;
  h.branch_a = a;
  h.branch_b = b;
  h.cgd_order = cgd_order;
  h.W_a.resize(branch_dim, channels);
  h.W_b.resize(branch_dim, channels);
  for (Eigen::Index i = 0; i < h.W_a.size(); ++i) h.W_a.data()[i] = gauss(rng);
  for (Eigen::Index i = 0; i < h.W_b.size(); ++i) h.W_b.data()[i] = gauss(rng);
  h.b_a = Vec::Zero(branch_dim);
  h.b_b = Vec::Zero(branch_dim);
  return h;
}

enum class EmbedMode { WithFc, NoFc };

// Forward intermediates kept for backpropagation.
struct HeadCache {
  Vec pooled_a, pooled_b;    // pool outputs (C)
  Vec unit_a, unit_b;        // l2-normalised pooled vectors (C); CGD order: unused
  Vec branch_a, branch_b;    // branch outputs before concatenation (d)
  Vec pre_norm_a, pre_norm_b;  // CGD order only: affine outputs before normalisation
  Vec concat;                // before the final normalisation (2d)
  Vec embedding;             // unit vector (2d)
};

namespace detail {

inline void branch_forward(const Vec& pooled, const Mat& W, const Vec& b, bool cgd_order, Vec& unit, Vec& pre,
                           Vec& out) {
  if (cgd_order) {
    pre = W * pooled + b;
    out = l2_normalize(pre);
  } else {
    unit = l2_normalize(pooled);
    out = W * unit + b;
  }
}

}  // namespace detail

inline HeadCache embed_with_cache(const FeatureMap& v, const HeadParams& params) {
  require(v.channels == params.in_dim(), Errc::DimensionMismatch,
          "feature map has " + std::to_string(v.channels) + " channels, head expects " +
              std::to_string(params.in_dim()));
  HeadCache c;
  c.pooled_a = pool(v, params.branch_a);
  c.pooled_b = pool(v, params.branch_b);
  detail::branch_forward(c.pooled_a, params.W_a, params.b_a, params.cgd_order, c.unit_a, c.pre_norm_a, c.branch_a);
  detail::branch_forward(c.pooled_b, params.W_b, params.b_b, params.cgd_order, c.unit_b, c.pre_norm_b, c.branch_b);
  c.concat.resize(c.branch_a.size() + c.branch_b.size());
  c.concat << c.branch_a, c.branch_b;
  c.embedding = l2_normalize(c.concat);
  return c;
}

inline Vec embed(const FeatureMap& v, const HeadParams& params, EmbedMode mode = EmbedMode::WithFc) {
  if (mode == EmbedMode::WithFc) return embed_with_cache(v, params).embedding;
  require(v.channels == params.in_dim(), Errc::DimensionMismatch, "feature map channel count");
  const Vec a = l2_normalize(pool(v, params.branch_a));
  const Vec b = l2_normalize(pool(v, params.branch_b));
  Vec cat(a.size() + b.size());
  cat << a, b;
  return l2_normalize(cat);
}

}  // namespace dgd
