#pragma once

#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dgd/extractor.hpp"
#include "dgd/image.hpp"

namespace dgd {

// Memoises extract_features by image content. Many augmentation draws
// reproduce the same raster (e.g. the direct-resize branch), and extraction
// dominates the cost of a training step.
class FeatureCache {
 public:
  explicit FeatureCache(const FilterBank& bank, std::size_t max_entries = 4096)
      : bank_(&bank), max_entries_(max_entries) {}

  const FilterBank& bank() const { return *bank_; }

  FeatureMap get(const Image& img) {
    const std::uint64_t key = hash(img);
    auto& bucket = entries_[key];
    for (const auto& [stored, features] : bucket)
      if (stored == img) {
        ++hits_;
        return features;
      }
    ++misses_;
    FeatureMap f = extract_features(img, *bank_);
    if (size_ < max_entries_) {
      bucket.emplace_back(img, f);
      ++size_;
    }
    return f;
  }

  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

  static std::uint64_t hash(const Image& img) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    auto feed = [&h](std::uint8_t b) {
      h ^= b;
      h *= 0x100000001b3ULL;
    };
    for (int s = 0; s < 32; s += 8) feed(static_cast<std::uint8_t>(img.width >> s));
    for (int s = 0; s < 32; s += 8) feed(static_cast<std::uint8_t>(img.height >> s));
    for (auto p : img.pixels) feed(p);
    return h;
  }

 private:
  const FilterBank* bank_;
  std::size_t max_entries_;
  std::size_t size_ = 0;
  std::size_t hits_ = 0, misses_ = 0;
  std::unordered_map<std::uint64_t, std::vector<std::pair<Image, FeatureMap>>> entries_;
};

}  // namespace dgd
