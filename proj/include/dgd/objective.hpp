#pragma once

// Supervised contrastive loss, optional softmax classifier, and the chain rule
// through the descriptor head.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dgd/descriptor.hpp"
#include "dgd/error.hpp"

namespace dgd {

// Rows of `z` are embeddings; labels index identities (or classes).
struct Batch {
  Mat z;
  std::vector<std::int64_t> labels;
};

struct LossConfig {
  double tau = 0.07;
  double lambda_cr = 1.0;
  double lambda_ce = 0.0;
  // Literal form with j == i kept in the softmax denominator.
  bool denominator_includes_self = false;

  void validate() const {
    require(tau > 0.0 && std::isfinite(tau), Errc::BadTemperature, "tau = " + std::to_string(tau));
    require(lambda_cr >= 0.0 && lambda_ce >= 0.0, Errc::InvalidConfig, "loss weights must be >= 0");
    require(lambda_cr + lambda_ce > 0.0, Errc::InvalidConfig, "at least one loss weight must be positive");
  }
};

struct LossGrad {
  double loss = 0.0;
  Mat grad;  // same shape as Batch::z
};

// Mean over anchors i of
//   -1/|P(i)| sum_{p in P(i)} log( exp(z_i.z_p/tau) / sum_{j != i} exp(z_i.z_j/tau) )
inline LossGrad supcon_loss(const Batch& batch, double tau, bool denominator_includes_self = false) {
  require(tau > 0.0 && std::isfinite(tau), Errc::BadTemperature, "tau = " + std::to_string(tau));
  const auto n = static_cast<Eigen::Index>(batch.labels.size());
  require(n >= 2 && batch.z.rows() == n, Errc::DimensionMismatch, "batch needs >= 2 rows with one label each");

  const Mat s = (batch.z * batch.z.transpose()) / tau;
  // coeff(i, j) = dL/ds_ij
  Mat coeff = Mat::Zero(n, n);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    int positives = 0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i && batch.labels[j] == batch.labels[i]) ++positives;
    if (positives == 0) fail(Errc::NoPositive, "anchor " + std::to_string(i));

    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i || denominator_includes_self) m = std::max(m, s(i, j));
    double denom = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i || denominator_includes_self) denom += std::exp(s(i, j) - m);
    const double lse = m + std::log(denom);

    double pos_sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i && batch.labels[j] == batch.labels[i]) pos_sum += s(i, j);
    total += lse - pos_sum / positives;

    for (Eigen::Index j = 0; j < n; ++j) {
      double c = 0.0;
      if (j != i || denominator_includes_self) c += std::exp(s(i, j) - m) / denom;
      if (j != i && batch.labels[j] == batch.labels[i]) c -= 1.0 / positives;
      coeff(i, j) = c / static_cast<double>(n);
    }
  }
  LossGrad out;
  out.loss = total / static_cast<double>(n);
  out.grad = ((coeff + coeff.transpose()) * batch.z) / tau;
  return out;
}

struct ClassifierLossGrad {
  double loss = 0.0;
  Mat grad_z;           // N x D
  Mat grad_classifier;  // K x D
};

// Mean softmax cross-entropy of logits W z_i against labels in [0, K).
inline ClassifierLossGrad cross_entropy(const Batch& batch, const Mat& classifier) {
  const auto n = static_cast<Eigen::Index>(batch.labels.size());
  require(n >= 1 && batch.z.rows() == n, Errc::DimensionMismatch, "batch rows/labels");
  require(classifier.cols() == batch.z.cols() && classifier.rows() >= 1, Errc::DimensionMismatch,
          "classifier must be K x D");
  const auto k = classifier.rows();
  for (auto l : batch.labels)
    if (l < 0 || l >= k) fail(Errc::LabelOutOfRange, "label " + std::to_string(l) + " with K = " + std::to_string(k));

  const Mat logits = batch.z * classifier.transpose();  // N x K
  Mat dlogits(n, k);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
    const double denom = e.sum();
    const auto y = static_cast<Eigen::Index>(batch.labels[i]);
    total += -(logits(i, y) - m - std::log(denom));
    dlogits.row(i) = e / denom;
    dlogits(i, y) -= 1.0;
  }
  dlogits /= static_cast<double>(n);
  ClassifierLossGrad out;
  out.loss = total / static_cast<double>(n);
  out.grad_z = dlogits * classifier;
  out.grad_classifier = dlogits.transpose() * batch.z;
  return out;
}

struct CombinedLossGrad {
  double loss = 0.0;
  double supcon = 0.0;
  double cross_entropy = 0.0;
  Mat grad_z;
  Mat grad_classifier;  // empty when lambda_ce == 0
};

// lambda_cr * supcon + lambda_ce * cross-entropy. The classifier is only read
// when lambda_ce > 0.
inline CombinedLossGrad combined_loss(const Batch& batch, const LossConfig& cfg, const Mat& classifier = Mat()) {
  cfg.validate();
  CombinedLossGrad out;
  out.grad_z = Mat::Zero(batch.z.rows(), batch.z.cols());
  if (cfg.lambda_cr > 0.0) {
    auto sc = supcon_loss(batch, cfg.tau, cfg.denominator_includes_self);
    out.supcon = sc.loss;
    out.loss += cfg.lambda_cr * sc.loss;
    out.grad_z += cfg.lambda_cr * sc.grad;
  }
  if (cfg.lambda_ce > 0.0) {
    require(classifier.size() > 0, Errc::InvalidConfig, "lambda_ce > 0 needs a classifier");
    auto ce = cross_entropy(batch, classifier);
    out.cross_entropy = ce.loss;
    out.loss += cfg.lambda_ce * ce.loss;
    out.grad_z += cfg.lambda_ce * ce.grad_z;
    out.grad_classifier = cfg.lambda_ce * ce.grad_classifier;
  }
  return out;
}

struct HeadGrads {
  Mat W_a, W_b;
  Vec b_a, b_b;

  static HeadGrads zeros_like(const HeadParams& p) {
    return {Mat::Zero(p.W_a.rows(), p.W_a.cols()), Mat::Zero(p.W_b.rows(), p.W_b.cols()),
            Vec::Zero(p.b_a.size()), Vec::Zero(p.b_b.size())};
  }

  HeadGrads& operator+=(const HeadGrads& o) {
    W_a += o.W_a;
    W_b += o.W_b;
    b_a += o.b_a;
    b_b += o.b_b;
    return *this;
  }
};

// Jacobian-vector product of x -> x / |x| at x: (I - u u^T) g / |x|.
inline Vec normalize_backward(const Vec& x, const Vec& unit, const Vec& g) {
  return (g - unit * unit.dot(g)) / x.norm();
}

// Gradient of the loss w.r.t. head parameters for one image, given dL/dz.
inline HeadGrads backprop_head(const Vec& grad_embedding, const HeadCache& cache, const HeadParams& params) {
  require(grad_embedding.size() == cache.embedding.size() && cache.concat.size() == params.embedding_dim(),
          Errc::DimensionMismatch, "gradient/cache/params dimensions disagree");
  const Eigen::Index d = params.branch_dim();
  const Vec g_cat = normalize_backward(cache.concat, cache.embedding, grad_embedding);
  Vec g_a = g_cat.head(d), g_b = g_cat.tail(d);

  HeadGrads out;
  if (params.cgd_order) {
    g_a = normalize_backward(cache.pre_norm_a, cache.branch_a, g_a);
    g_b = normalize_backward(cache.pre_norm_b, cache.branch_b, g_b);
    out.W_a = g_a * cache.pooled_a.transpose();
    out.W_b = g_b * cache.pooled_b.transpose();
  } else {
    out.W_a = g_a * cache.unit_a.transpose();
    out.W_b = g_b * cache.unit_b.transpose();
  }
  out.b_a = g_a;
  out.b_b = g_b;
  return out;
}

}  // namespace dgd
