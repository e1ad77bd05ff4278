#pragma once

// Pair scoring, rank AUC, pseudo-label mining, score fusion and TTA scoring.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "dgd/descriptor.hpp"
#include "dgd/error.hpp"
#include "dgd/manifest.hpp"

namespace dgd {

struct PairScore {
  std::size_t index = 0;  // row in the pair manifest
  std::string a, b;
  double score = 0.0;
  std::optional<int> label;

  friend bool operator==(const PairScore&, const PairScore&) = default;
};

using EmbeddingTable = std::map<std::string, Vec>;

inline double cosine_similarity(const Vec& a, const Vec& b) {
  require(a.size() == b.size(), Errc::DimensionMismatch,
          std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  return a.dot(b);
}

inline const Vec& lookup(const EmbeddingTable& table, const std::string& path) {
  auto it = table.find(path);
  if (it == table.end()) fail(Errc::MissingEmbedding, path);
  return it->second;
}

inline std::vector<PairScore> score_pairs(const EmbeddingTable& emb, const PairManifest& manifest) {
  std::vector<PairScore> out;
  out.reserve(manifest.pairs.size());
  for (std::size_t i = 0; i < manifest.pairs.size(); ++i) {
    const auto& p = manifest.pairs[i];
    out.push_back({i, p.a, p.b, cosine_similarity(lookup(emb, p.a), lookup(emb, p.b)), p.label});
  }
  return out;
}

// Mann-Whitney AUC via midranks: ties between a positive and a negative count 1/2.
inline double auc(const std::vector<PairScore>& scores) {
  std::vector<std::pair<double, int>> v;
  v.reserve(scores.size());
  std::size_t pos = 0, neg = 0;
  for (const auto& s : scores) {
    require(s.label.has_value(), Errc::OneClassOnly, "pair " + std::to_string(s.index) + " has no label");
    require(std::isfinite(s.score), Errc::InvalidConfig, "non-finite score at pair " + std::to_string(s.index));
    v.emplace_back(s.score, *s.label);
    (*s.label == 1 ? pos : neg) += 1;
  }
  if (pos == 0 || neg == 0) fail(Errc::OneClassOnly, std::to_string(pos) + " positives, " + std::to_string(neg) + " negatives");
  std::sort(v.begin(), v.end(), [](const auto& x, const auto& y) { return x.first < y.first; });

  // Sum of positive ranks (1-based, ties share the average rank), doubled to stay integral.
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    std::size_t pos_in_run = 0;
    while (j < v.size() && v[j].first == v[i].first) pos_in_run += v[j++].second == 1;
    twice_rank_sum += pos_in_run * (i + 1 + j);  // 2 * midrank = (i+1) + j
    i = j;
  }
  const double u = static_cast<double>(twice_rank_sum) / 2.0 - static_cast<double>(pos) * (pos + 1) / 2.0;
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

// Union-find over image paths.
class DisjointSets {
 public:
  std::size_t add(const std::string& key) {
    auto [it, inserted] = index_.emplace(key, parent_.size());
    if (inserted) {
      parent_.push_back(parent_.size());
      keys_.push_back(key);
    }
    return it->second;
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  void unite(std::size_t x, std::size_t y) {
    x = find(x), y = find(y);
    if (x == y) return;
    if (y < x) std::swap(x, y);
    parent_[y] = x;  // smaller index (earlier first appearance) stays the root
  }
  std::size_t size() const { return parent_.size(); }
  const std::string& key(std::size_t i) const { return keys_[i]; }

 private:
  std::map<std::string, std::size_t> index_;
  std::vector<std::size_t> parent_;
  std::vector<std::string> keys_;
};

// The K highest scoring pairs (ties: lower manifest index first) are taken as
// same-identity and merged transitively. Groups get ids first_id, first_id+1, ...
// in order of their earliest image; images keep first-appearance order.
inline TrainManifest mine_pseudo(const std::vector<PairScore>& scores, std::size_t k, std::int64_t first_id = 0) {
  if (k > scores.size())
    fail(Errc::KTooLarge, "K = " + std::to_string(k) + " with " + std::to_string(scores.size()) + " pairs");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    if (scores[x].score != scores[y].score) return scores[x].score > scores[y].score;
    return scores[x].index < scores[y].index;
  });

  DisjointSets sets;
  for (std::size_t r = 0; r < k; ++r) {
    const auto& s = scores[order[r]];
    const auto ia = sets.add(s.a);
    const auto ib = sets.add(s.b);
    sets.unite(ia, ib);
  }
  std::map<std::size_t, std::int64_t> group_of_root;
  TrainManifest out;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto root = sets.find(i);
    auto [it, inserted] = group_of_root.emplace(root, first_id + static_cast<std::int64_t>(group_of_root.size()));
    out.groups[it->second].push_back(sets.key(i));
  }
  return out;
}

// Weighted mean of per-pair scores; inputs must list the same pairs in the same order.
inline std::vector<PairScore> fuse(const std::vector<std::vector<PairScore>>& inputs,
                                   std::vector<double> weights = {}) {
  require(!inputs.empty(), Errc::InvalidConfig, "fusion needs at least one input");
  if (weights.empty()) weights.assign(inputs.size(), 1.0);
  require(weights.size() == inputs.size(), Errc::LengthMismatch, "weight count differs from input count");
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  require(wsum > 0.0, Errc::InvalidConfig, "weights must sum to a positive value");

  const auto& first = inputs.front();
  for (std::size_t f = 1; f < inputs.size(); ++f) {
    require(inputs[f].size() == first.size(), Errc::LengthMismatch,
            "input " + std::to_string(f) + " has " + std::to_string(inputs[f].size()) + " pairs, expected " +
                std::to_string(first.size()));
    for (std::size_t i = 0; i < first.size(); ++i) {
      const auto& x = inputs[f][i];
      if (x.index != first[i].index || x.a != first[i].a || x.b != first[i].b)
        fail(Errc::OrderMismatch, "input " + std::to_string(f) + " row " + std::to_string(i));
    }
  }

  std::vector<PairScore> out = first;
  for (std::size_t i = 0; i < out.size(); ++i) {
    double s = 0.0;
    for (std::size_t f = 0; f < inputs.size(); ++f) s += (weights[f] / wsum) * inputs[f][i].score;
    out[i].score = s;
  }
  return out;
}

enum class TtaMode { MeanSim, MeanEmb };

// Per image, one embedding per view (all images must have the same view count).
using ViewEmbeddingTable = std::map<std::string, std::vector<Vec>>;

inline std::vector<PairScore> tta_score(const ViewEmbeddingTable& views, const PairManifest& manifest, TtaMode mode) {
  std::optional<std::size_t> count;
  for (const auto& [path, v] : views) {
    if (!count) count = v.size();
    if (v.empty() || v.size() != *count)
      fail(Errc::ViewCountMismatch, path + " has " + std::to_string(v.size()) + " views");
  }
  auto get = [&views](const std::string& path) -> const std::vector<Vec>& {
    auto it = views.find(path);
    if (it == views.end()) fail(Errc::MissingEmbedding, path);
    return it->second;
  };
  auto mean_embedding = [](const std::vector<Vec>& v) {
    Vec m = Vec::Zero(v.front().size());
    for (const auto& e : v) m += e;
    return l2_normalize(m / static_cast<double>(v.size()));
  };

  std::vector<PairScore> out;
  out.reserve(manifest.pairs.size());
  for (std::size_t i = 0; i < manifest.pairs.size(); ++i) {
    const auto& p = manifest.pairs[i];
    const auto& va = get(p.a);
    const auto& vb = get(p.b);
    double s = 0.0;
    if (mode == TtaMode::MeanSim) {
      for (std::size_t v = 0; v < va.size(); ++v) s += cosine_similarity(va[v], vb[v]);
      s /= static_cast<double>(va.size());
    } else {
      s = cosine_similarity(mean_embedding(va), mean_embedding(vb));
    }
    out.push_back({i, p.a, p.b, s, p.label});
  }
  return out;
}

// Score file: index,imageA,imageB,score[,label]
inline void write_scores(std::ostream& os, const std::vector<PairScore>& scores) {
  const bool labeled = !scores.empty() && scores.front().label.has_value();
  os << (labeled ? "index,imageA,imageB,score,label\n" : "index,imageA,imageB,score\n");
  char buf[40];
  for (const auto& s : scores) {
    std::snprintf(buf, sizeof buf, "%.17g", s.score);
    os << s.index << ',' << s.a << ',' << s.b << ',' << buf;
    if (labeled) os << ',' << *s.label;
    os << '\n';
  }
}

inline std::vector<PairScore> parse_scores(std::string_view text) {
  const auto lines = csv::split_lines(text);
  if (lines.empty()) fail(Errc::MissingColumn, "empty score file");
  const auto header = csv::split_fields(lines[0]);
  const int ci = csv::column(header, "index"), ca = csv::column(header, "imageA"),
            cb = csv::column(header, "imageB"), cs = csv::column(header, "score"),
            cl = csv::column(header, "label");
  for (auto [col, name] : {std::pair{ci, "index"}, {ca, "imageA"}, {cb, "imageB"}, {cs, "score"}})
    if (col < 0) fail(Errc::MissingColumn, name);
  std::vector<PairScore> out;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto f = csv::split_fields(lines[r]);
    const auto row = "row " + std::to_string(r);
    if (f.size() != header.size()) fail(Errc::MissingColumn, row + " has " + std::to_string(f.size()) + " fields");
    PairScore s;
    const auto idx = csv::parse_number<std::size_t>(f[ci]);
    if (!idx) fail(Errc::NonIntegerId, row + ": index '" + f[ci] + "'");
    s.index = *idx;
    s.a = f[ca];
    s.b = f[cb];
    const auto sc = csv::parse_number<double>(f[cs]);
    if (!sc || !std::isfinite(*sc)) fail(Errc::InvalidConfig, row + ": score '" + f[cs] + "'");
    s.score = *sc;
    if (cl >= 0) {
      if (f[cl] == "0") s.label = 0;
      else if (f[cl] == "1") s.label = 1;
      else fail(Errc::BadLabel, row + ": '" + f[cl] + "'");
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline std::string format_auc(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "auc=%.6f", value);
  return buf;
}

}  // namespace dgd
