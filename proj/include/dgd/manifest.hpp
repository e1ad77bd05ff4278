#pragma once

// CSV manifests: comma separated, no quoting, '\n' or "\r\n" line ends.
//   train:  dog_id,image
//   pairs:  imageA,imageB[,label]

#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dgd/error.hpp"

namespace dgd {

struct TrainManifest {
  // identity id -> image paths in file order
  std::map<std::int64_t, std::vector<std::string>> groups;

  std::size_t image_count() const {
    std::size_t n = 0;
    for (const auto& [id, paths] : groups) n += paths.size();
    return n;
  }
  std::int64_t next_id() const { return groups.empty() ? 0 : groups.rbegin()->first + 1; }

  friend bool operator==(const TrainManifest&, const TrainManifest&) = default;
};

struct Pair {
  std::string a;
  std::string b;
  std::optional<int> label;

  friend bool operator==(const Pair&, const Pair&) = default;
};

struct PairManifest {
  std::vector<Pair> pairs;

  bool labeled() const { return !pairs.empty() && pairs.front().label.has_value(); }
  friend bool operator==(const PairManifest&, const PairManifest&) = default;
};

namespace csv {

inline std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line);
    start = end + 1;
  }
  // trailing newline leaves one empty line; blank lines carry no rows
  std::vector<std::string> out;
  for (auto& l : lines)
    if (!l.empty()) out.push_back(std::move(l));
  return out;
}

inline std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> f;
  std::size_t start = 0;
  for (;;) {
    auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      f.emplace_back(line.substr(start));
      return f;
    }
    f.emplace_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline int column(const std::vector<std::string>& header, std::string_view name) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace csv

inline TrainManifest parse_train_manifest(std::string_view text) {
  const auto lines = csv::split_lines(text);
  if (lines.empty()) fail(Errc::MissingColumn, "empty manifest");
  const auto header = csv::split_fields(lines[0]);
  const int id_col = csv::column(header, "dog_id");
  const int img_col = csv::column(header, "image");
  if (id_col < 0) fail(Errc::MissingColumn, "dog_id");
  if (img_col < 0) fail(Errc::MissingColumn, "image");

  TrainManifest m;
  std::set<std::string> seen;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto f = csv::split_fields(lines[r]);
    const auto row = "row " + std::to_string(r);
    if (f.size() != header.size()) fail(Errc::MissingColumn, row + " has " + std::to_string(f.size()) + " fields");
    const auto id = csv::parse_number<std::int64_t>(f[id_col]);
    if (!id || *id < 0) fail(Errc::NonIntegerId, row + ": '" + f[id_col] + "'");
    const auto& path = f[img_col];
    if (path.empty()) fail(Errc::MissingColumn, row + ": empty image path");
    if (!seen.insert(path).second) fail(Errc::DuplicatePath, row + ": " + path);
    m.groups[*id].push_back(path);
  }
  return m;
}

inline PairManifest parse_pair_manifest(std::string_view text) {
  const auto lines = csv::split_lines(text);
  if (lines.empty()) fail(Errc::MissingColumn, "empty manifest");
  const auto header = csv::split_fields(lines[0]);
  const int a_col = csv::column(header, "imageA");
  const int b_col = csv::column(header, "imageB");
  const int l_col = csv::column(header, "label");
  if (a_col < 0) fail(Errc::MissingColumn, "imageA");
  if (b_col < 0) fail(Errc::MissingColumn, "imageB");

  PairManifest m;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto f = csv::split_fields(lines[r]);
    const auto row = "row " + std::to_string(r);
    if (f.size() != header.size()) fail(Errc::MissingColumn, row + " has " + std::to_string(f.size()) + " fields");
    Pair p{f[a_col], f[b_col], std::nullopt};
    if (p.a == p.b) fail(Errc::SelfPair, row + ": " + p.a);
    if (l_col >= 0) {
      if (f[l_col] == "0") p.label = 0;
      else if (f[l_col] == "1") p.label = 1;
      else fail(Errc::BadLabel, row + ": '" + f[l_col] + "'");
    }
    m.pairs.push_back(std::move(p));
  }
  return m;
}

inline void write_train_manifest(std::ostream& os, const TrainManifest& m) {
  os << "dog_id,image\n";
  for (const auto& [id, paths] : m.groups)
    for (const auto& p : paths) os << id << ',' << p << '\n';
}

inline void write_pair_manifest(std::ostream& os, const PairManifest& m) {
  const bool labeled = m.labeled();
  os << (labeled ? "imageA,imageB,label\n" : "imageA,imageB\n");
  for (const auto& p : m.pairs) {
    os << p.a << ',' << p.b;
    if (labeled) os << ',' << *p.label;
    os << '\n';
  }
}

// Appends `extra` groups to `base`; ids and paths must stay unique.
inline TrainManifest merge_manifests(TrainManifest base, const TrainManifest& extra) {
  std::set<std::string> seen;
  for (const auto& [id, paths] : base.groups) seen.insert(paths.begin(), paths.end());
  for (const auto& [id, paths] : extra.groups) {
    if (base.groups.contains(id)) fail(Errc::InvalidConfig, "identity " + std::to_string(id) + " already present");
    for (const auto& p : paths)
      if (!seen.insert(p).second) fail(Errc::DuplicatePath, p);
    base.groups[id] = paths;
  }
  return base;
}

}  // namespace dgd
