#pragma once

// Two-stage head training: PK batches, supervised contrastive objective,
// Adam under a cosine learning-rate schedule, EMA shadow weights.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dgd/augment.hpp"
#include "dgd/descriptor.hpp"
#include "dgd/error.hpp"
#include "dgd/extractor.hpp"
#include "dgd/feature_cache.hpp"
#include "dgd/image.hpp"
#include "dgd/manifest.hpp"
#include "dgd/objective.hpp"
#include "dgd/optim.hpp"
#include "dgd/rng.hpp"

namespace dgd {

using ImageStore = std::map<std::string, Image>;

struct StageConfig {
  int stage = 1;
  int epochs = 30;
  double lr_max = 1e-2;
  double lr_min = 1e-6;
  int t_max = 29;
  int batch_P = 8;
  int batch_K = 4;
  double ema_decay = 0.999;
  // Shadow decay follows min(ema_decay, (1 + step) / (10 + step)).
  bool ema_warmup = true;
  std::uint64_t seed = 0;
  AugmentProfile augment = *builtin_profile("stage1");
  LossConfig loss;

  void validate() const {
    require(epochs >= 1, Errc::InvalidConfig, "epochs must be >= 1");
    require(lr_min > 0.0 && lr_min <= lr_max, Errc::InvalidConfig, "need 0 < lr_min <= lr_max");
    require(t_max >= 1, Errc::InvalidConfig, "t_max must be >= 1");
    require(batch_P >= 2 && batch_K >= 2, Errc::InvalidConfig, "batch_P and batch_K must be >= 2");
    require(ema_decay >= 0.0 && ema_decay < 1.0, Errc::InvalidConfig, "ema_decay must lie in [0,1)");
    augment.validate();
    loss.validate();
  }
};

inline StageConfig default_stage_config(int stage) {
  StageConfig c;
  c.stage = stage;
  if (stage == 2) {
    c.epochs = 20;
    c.t_max = 19;
    c.lr_max = 3e-5;
    c.augment = *builtin_profile("stage2");
  }
  return c;
}

inline double cosine_lr(int epoch, const StageConfig& cfg) {
  return cosine_lr(static_cast<double>(epoch), static_cast<double>(cfg.t_max), cfg.lr_max, cfg.lr_min);
}

struct ExtractorSpec {
  std::uint64_t seed = 7;
  int k1 = 16;
  int k2 = 32;
  int kernel = 5;

  friend bool operator==(const ExtractorSpec&, const ExtractorSpec&) = default;
};

inline FilterBank make_filter_bank(const ExtractorSpec& s) { return make_filter_bank(s.seed, s.k1, s.k2, s.kernel); }

struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::uint32_t format_version = kFormatVersion;
  HeadParams head;
  HeadParams ema_head;
  Mat classifier;  // K x D, empty when the classification loss is off
  AdamState adam;
  StageConfig stage;
  ExtractorSpec extractor;
  std::uint32_t epochs_done = 0;

  friend bool operator==(const Checkpoint& a, const Checkpoint& b) {
    auto same_stage = [](const StageConfig& x, const StageConfig& y) {
      return x.stage == y.stage && x.epochs == y.epochs && x.lr_max == y.lr_max && x.lr_min == y.lr_min &&
             x.t_max == y.t_max && x.batch_P == y.batch_P && x.batch_K == y.batch_K &&
             x.ema_decay == y.ema_decay && x.ema_warmup == y.ema_warmup && x.seed == y.seed &&
             x.augment.name == y.augment.name && x.loss.tau == y.loss.tau &&
             x.loss.lambda_cr == y.loss.lambda_cr && x.loss.lambda_ce == y.loss.lambda_ce &&
             x.loss.denominator_includes_self == y.loss.denominator_includes_self;
    };
    return a.format_version == b.format_version && a.head == b.head && a.ema_head == b.ema_head &&
           same_values(a.classifier, b.classifier) && a.adam == b.adam && same_stage(a.stage, b.stage) &&
           a.extractor == b.extractor && a.epochs_done == b.epochs_done;
  }
};

struct HeadSpec {
  int branch_dim = 64;
  PoolSpec branch_a = PoolSpec::spoc();
  PoolSpec branch_b = PoolSpec::mac();
  bool cgd_order = false;
};

// Untrained checkpoint: seeded head, EMA shadow equal to it.
inline Checkpoint fresh_checkpoint(const ExtractorSpec& ex, const HeadSpec& hs, std::uint64_t seed) {
  Checkpoint ck;
  ck.extractor = ex;
  ck.head = init_head(ex.k2, hs.branch_dim, seed, hs.branch_a, hs.branch_b, hs.cgd_order);
  ck.ema_head = ck.head;
  return ck;
}

// Parameter tensors in a fixed order: W_a, b_a, W_b, b_b[, classifier].
inline std::vector<std::span<double>> param_views(HeadParams& h, Mat* classifier = nullptr) {
  std::vector<std::span<double>> v{{h.W_a.data(), static_cast<std::size_t>(h.W_a.size())},
                                   {h.b_a.data(), static_cast<std::size_t>(h.b_a.size())},
                                   {h.W_b.data(), static_cast<std::size_t>(h.W_b.size())},
                                   {h.b_b.data(), static_cast<std::size_t>(h.b_b.size())}};
  if (classifier && classifier->size() > 0)
    v.emplace_back(classifier->data(), static_cast<std::size_t>(classifier->size()));
  return v;
}

inline std::vector<std::span<const double>> grad_views(const HeadGrads& g, const Mat* classifier = nullptr) {
  std::vector<std::span<const double>> v{{g.W_a.data(), static_cast<std::size_t>(g.W_a.size())},
                                         {g.b_a.data(), static_cast<std::size_t>(g.b_a.size())},
                                         {g.W_b.data(), static_cast<std::size_t>(g.W_b.size())},
                                         {g.b_b.data(), static_cast<std::size_t>(g.b_b.size())}};
  if (classifier && classifier->size() > 0)
    v.emplace_back(classifier->data(), static_cast<std::size_t>(classifier->size()));
  return v;
}

struct Sample {
  std::string path;
  std::int64_t label;
};

// K images of one group: without replacement when the group is large enough.
inline std::vector<std::string> sample_group(const std::vector<std::string>& group, int k, Rng& rng) {
  std::vector<std::string> out;
  if (static_cast<int>(group.size()) >= k) {
    std::vector<std::size_t> idx(group.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (int i = 0; i < k; ++i) {
      const std::size_t j = i + uniform_index(rng, idx.size() - i);
      std::swap(idx[i], idx[j]);
      out.push_back(group[idx[i]]);
    }
  } else {
    for (int i = 0; i < k; ++i) out.push_back(group[uniform_index(rng, group.size())]);
  }
  return out;
}

inline std::vector<Sample> batch_for(const TrainManifest& m, const std::vector<std::int64_t>& ids, int k, Rng& rng) {
  std::vector<Sample> out;
  for (auto id : ids)
    for (auto& p : sample_group(m.groups.at(id), k, rng)) out.push_back({std::move(p), id});
  return out;
}

// P distinct identities uniformly at random, K images each.
inline std::vector<Sample> pk_sample(const TrainManifest& m, int p, int k, Rng& rng) {
  require(p >= 1 && k >= 1, Errc::InvalidConfig, "P and K must be positive");
  require(static_cast<int>(m.groups.size()) >= p, Errc::TooFewIdentities,
          std::to_string(m.groups.size()) + " identities for P = " + std::to_string(p));
  std::vector<std::int64_t> ids;
  for (const auto& [id, g] : m.groups) ids.push_back(id);
  for (int i = 0; i < p; ++i) std::swap(ids[i], ids[i + uniform_index(rng, ids.size() - i)]);
  ids.resize(p);
  return batch_for(m, ids, k, rng);
}

// One epoch: shuffled identities cut into chunks of P; the last chunk is topped
// up with identities drawn from outside it. Every identity appears at least once.
inline std::vector<std::vector<Sample>> epoch_batches(const TrainManifest& m, int p, int k, Rng& rng) {
  require(static_cast<int>(m.groups.size()) >= p, Errc::TooFewIdentities,
          std::to_string(m.groups.size()) + " identities for P = " + std::to_string(p));
  std::vector<std::int64_t> ids;
  for (const auto& [id, g] : m.groups) ids.push_back(id);
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<std::vector<Sample>> batches;
  for (std::size_t start = 0; start < ids.size(); start += p) {
    std::vector<std::int64_t> chunk(ids.begin() + start, ids.begin() + std::min(ids.size(), start + p));
    if (static_cast<int>(chunk.size()) < p) {
      std::vector<std::int64_t> rest(ids.begin(), ids.begin() + start);
      for (std::size_t i = 0; chunk.size() < static_cast<std::size_t>(p); ++i) {
        std::swap(rest[i], rest[i + uniform_index(rng, rest.size() - i)]);
        chunk.push_back(rest[i]);
      }
    }
    batches.push_back(batch_for(m, chunk, k, rng));
  }
  return batches;
}

struct TrainOptions {
  // Continue the init checkpoint's own stage from its epochs_done instead of
  // starting a new stage from its EMA weights.
  bool resume = false;
  std::ostream* log = nullptr;  // receives "epoch,lr,mean_loss" lines
  FeatureCache* cache = nullptr;
  std::vector<double>* epoch_losses = nullptr;
};

inline Mat init_classifier(int classes, int dim, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0xc1a5}));
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  Mat w(classes, dim);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = gauss(rng);
  return w;
}

inline Checkpoint train_stage(const TrainManifest& manifest, const ImageStore& images, const FilterBank& bank,
                              const Checkpoint& init, const StageConfig& cfg, const TrainOptions& opts = {}) {
  cfg.validate();
  require(!manifest.groups.empty(), Errc::InvalidConfig, "empty training manifest");
  init.head.validate();
  require(init.head.in_dim() == bank.output_channels(), Errc::DimensionMismatch,
          "head expects " + std::to_string(init.head.in_dim()) + " channels, extractor gives " +
              std::to_string(bank.output_channels()));
  for (const auto& [id, paths] : manifest.groups)
    for (const auto& p : paths) require(images.contains(p), Errc::Io, "no image loaded for " + p);

  Checkpoint ck = init;
  ck.stage = cfg;
  if (!opts.resume) {
    ck.head = init.ema_head;
    ck.ema_head = init.ema_head;
    ck.adam = {};
    ck.epochs_done = 0;
  }
  require(static_cast<int>(ck.epochs_done) <= cfg.epochs, Errc::InvalidConfig, "checkpoint is past the last epoch");

  // Contiguous class indices for the classifier; same partition as the ids.
  std::map<std::int64_t, std::int64_t> class_of;
  for (const auto& [id, g] : manifest.groups) class_of.emplace(id, static_cast<std::int64_t>(class_of.size()));
  const int classes = static_cast<int>(class_of.size());
  const int dim = ck.head.embedding_dim();
  if (cfg.loss.lambda_ce > 0.0) {
    if (ck.classifier.rows() != classes || ck.classifier.cols() != dim) {
      require(!opts.resume, Errc::ShapeMismatch, "classifier shape changed on resume");
      ck.classifier = init_classifier(classes, dim, cfg.seed);
    }
  } else {
    ck.classifier = Mat();
  }

  FeatureCache local_cache(bank);
  FeatureCache& cache = opts.cache ? *opts.cache : local_cache;

  for (int epoch = static_cast<int>(ck.epochs_done); epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(std::min(epoch, cfg.t_max), cfg);
    Rng rng(derive_seed(cfg.seed, {0xe90c, static_cast<std::uint64_t>(epoch)}));
    const auto batches = epoch_batches(manifest, cfg.batch_P, cfg.batch_K, rng);

    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& samples = batches[b];
      const auto n = static_cast<Eigen::Index>(samples.size());
      std::vector<HeadCache> caches;
      caches.reserve(samples.size());
      Batch batch;
      batch.z.resize(n, dim);
      for (Eigen::Index i = 0; i < n; ++i) {
        Rng aug(derive_seed(cfg.seed, {0xa09, static_cast<std::uint64_t>(epoch), b, static_cast<std::uint64_t>(i)}));
        const Image view = augment_image(images.at(samples[i].path), cfg.augment, aug);
        caches.push_back(embed_with_cache(cache.get(view), ck.head));
        batch.z.row(i) = caches.back().embedding.transpose();
        batch.labels.push_back(class_of.at(samples[i].label));
      }

      const auto lg = combined_loss(batch, cfg.loss, ck.classifier);
      loss_sum += lg.loss;

      HeadGrads grads = HeadGrads::zeros_like(ck.head);
      for (Eigen::Index i = 0; i < n; ++i) grads += backprop_head(lg.grad_z.row(i).transpose(), caches[i], ck.head);

      const auto pv = param_views(ck.head, &ck.classifier);
      const auto gv = grad_views(grads, &lg.grad_classifier);
      adam_step(pv, gv, ck.adam, lr);

      double decay = cfg.ema_decay;
      if (cfg.ema_warmup) decay = std::min(decay, (1.0 + ck.adam.step) / (10.0 + ck.adam.step));
      const auto live = param_views(ck.head);
      const auto shadow = param_views(ck.ema_head);
      for (std::size_t t = 0; t < live.size(); ++t) ema_update(shadow[t], live[t], decay);
    }

    const double mean_loss = loss_sum / static_cast<double>(batches.size());
    if (opts.epoch_losses) opts.epoch_losses->push_back(mean_loss);
    if (opts.log) *opts.log << (epoch + 1) << ',' << lr << ',' << mean_loss << '\n';
    ck.epochs_done = static_cast<std::uint32_t>(epoch + 1);
  }
  return ck;
}

}  // namespace dgd
