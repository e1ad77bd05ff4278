#pragma once

// Glue used by the CLI and the acceptance suite: synthetic train/eval splits,
// batch embedding, AUC evaluation.

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dgd/augment.hpp"
#include "dgd/descriptor.hpp"
#include "dgd/evalfuse.hpp"
#include "dgd/feature_cache.hpp"
#include "dgd/manifest.hpp"
#include "dgd/synth.hpp"
#include "dgd/trainer.hpp"

namespace dgd {

struct SplitConfig {
  SynthConfig synth;            // identities / images_per_identity describe the train part
  int eval_identities = 20;     // unseen identities appended after the train ones
  int eval_images_per_identity = 5;
  int eval_positive_pairs = 100;
  int eval_negative_pairs = 100;

  void validate() const {
    synth.validate();
    require(eval_identities >= 2, Errc::InvalidConfig, "eval_identities must be >= 2");
    require(eval_images_per_identity >= 2, Errc::InvalidConfig, "eval_images_per_identity must be >= 2");
    const long long possible_pos =
        static_cast<long long>(eval_identities) * eval_images_per_identity * (eval_images_per_identity - 1) / 2;
    require(eval_positive_pairs >= 1 && eval_positive_pairs <= possible_pos, Errc::InvalidConfig,
            "eval_positive_pairs exceeds the available same-identity pairs");
    require(eval_negative_pairs >= 1, Errc::InvalidConfig, "eval_negative_pairs must be >= 1");
  }
};

struct SyntheticSplit {
  TrainManifest train;
  ImageStore train_images;
  ImageStore eval_images;
  std::vector<std::string> eval_paths;  // generation order
  PairManifest eval_pairs;
};

// Train identities 0..n-1, eval identities n..n+m-1. Each image depends only on
// (seed, identity, index), so the split is stable under changes to the other part.
inline SyntheticSplit make_synthetic_split(const SplitConfig& cfg) {
  cfg.validate();
  SyntheticSplit out;
  const auto& sc = cfg.synth;
  for (int id = 0; id < sc.identities + cfg.eval_identities; ++id) {
    const bool train = id < sc.identities;
    const Image base = synth_base_texture(sc, id);
    const int count = train ? sc.images_per_identity : cfg.eval_images_per_identity;
    for (int k = 0; k < count; ++k) {
      const auto path = synth_image_name(id, k);
      Image img = synth_view(sc, base, id, k);
      if (train) {
        out.train.groups[id].push_back(path);
        out.train_images.emplace(path, std::move(img));
      } else {
        out.eval_paths.push_back(path);
        out.eval_images.emplace(path, std::move(img));
      }
    }
  }

  Rng rng(derive_seed(sc.seed, {0x9a125}));
  std::vector<Pair> positives;
  for (int e = 0; e < cfg.eval_identities; ++e) {
    const int id = sc.identities + e;
    for (int i = 0; i < cfg.eval_images_per_identity; ++i)
      for (int j = i + 1; j < cfg.eval_images_per_identity; ++j)
        positives.push_back({synth_image_name(id, i), synth_image_name(id, j), 1});
  }
  std::shuffle(positives.begin(), positives.end(), rng);
  positives.resize(cfg.eval_positive_pairs);

  std::vector<Pair> negatives;
  std::set<std::pair<std::string, std::string>> seen;
  const auto n_eval = static_cast<std::size_t>(cfg.eval_identities);
  const auto per = static_cast<std::size_t>(cfg.eval_images_per_identity);
  const std::size_t max_neg = n_eval * per * (n_eval - 1) * per / 2;
  require(static_cast<std::size_t>(cfg.eval_negative_pairs) <= max_neg, Errc::InvalidConfig,
          "eval_negative_pairs exceeds the available cross-identity pairs");
  while (negatives.size() < static_cast<std::size_t>(cfg.eval_negative_pairs)) {
    const auto ia = uniform_index(rng, n_eval), ib = uniform_index(rng, n_eval);
    if (ia == ib) continue;
    auto a = synth_image_name(sc.identities + static_cast<int>(ia), static_cast<int>(uniform_index(rng, per)));
    auto b = synth_image_name(sc.identities + static_cast<int>(ib), static_cast<int>(uniform_index(rng, per)));
    if (!seen.insert(std::minmax(a, b)).second) continue;
    negatives.push_back({std::move(a), std::move(b), 0});
  }

  out.eval_pairs.pairs = std::move(positives);
  out.eval_pairs.pairs.insert(out.eval_pairs.pairs.end(), negatives.begin(), negatives.end());
  std::shuffle(out.eval_pairs.pairs.begin(), out.eval_pairs.pairs.end(), rng);
  return out;
}

// Resize to the extractor's input size unless already there.
inline Image to_input_size(const Image& img) {
  if (img.width == kExtractorInputSize && img.height == kExtractorInputSize) return img;
  return bilinear_resize(img, kExtractorInputSize, kExtractorInputSize);
}

inline EmbeddingTable embed_images(const ImageStore& images, FeatureCache& cache, const HeadParams& head,
                                   EmbedMode mode = EmbedMode::WithFc) {
  EmbeddingTable out;
  for (const auto& [path, img] : images) out.emplace(path, embed(cache.get(to_input_size(img)), head, mode));
  return out;
}

inline ViewEmbeddingTable embed_images_tta(const ImageStore& images, FeatureCache& cache, const HeadParams& head,
                                           const TtaConfig& tta, std::uint64_t seed,
                                           EmbedMode mode = EmbedMode::WithFc) {
  ViewEmbeddingTable out;
  for (const auto& [path, img] : images) {
    auto& v = out[path];
    for (const auto& view : tta_views(img, tta, derive_seed(seed, {hash_string(path)})))
      v.push_back(embed(cache.get(view), head, mode));
  }
  return out;
}

inline double evaluate_auc(const ImageStore& images, const PairManifest& pairs, FeatureCache& cache,
                           const HeadParams& head, EmbedMode mode = EmbedMode::WithFc) {
  return auc(score_pairs(embed_images(images, cache, head, mode), pairs));
}

// Applies fn to every image.
template <typename Fn>
ImageStore transform_images(const ImageStore& images, Fn&& fn) {
  ImageStore out;
  for (const auto& [path, img] : images) out.emplace(path, fn(img));
  return out;
}

}  // namespace dgd
