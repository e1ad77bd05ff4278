#pragma once

// DGCK checkpoint container:
//   "DGCK" | u32 format_version | records...
// where each record is  u16 name_length | name bytes | DGT1 tensor.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "dgd/error.hpp"
#include "dgd/tensor.hpp"
#include "dgd/trainer.hpp"

namespace dgd {

namespace detail {

inline TensorRecord matrix_record(const Mat& m) {
  TensorRecord t;
  t.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  t.data.reserve(m.size());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) t.data.push_back(m(i, j));
  return t;
}

inline TensorRecord vector_record(std::vector<double> v) {
  TensorRecord t;
  t.dims = {static_cast<std::uint64_t>(v.size())};
  t.data = std::move(v);
  return t;
}

inline Mat record_matrix(const TensorRecord& t, const std::string& name) {
  require(t.dims.size() == 2, Errc::ShapeMismatch, name + " is not a matrix");
  Mat m(static_cast<Eigen::Index>(t.dims[0]), static_cast<Eigen::Index>(t.dims[1]));
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = t.data[k++];
  return m;
}

inline Vec record_vector(const TensorRecord& t) {
  return Eigen::Map<const Vec>(t.data.data(), static_cast<Eigen::Index>(t.data.size()));
}

inline double hi32(std::uint64_t v) { return static_cast<double>(v >> 32); }
inline double lo32(std::uint64_t v) { return static_cast<double>(v & 0xffffffffULL); }
inline std::uint64_t join32(double hi, double lo) {
  return (static_cast<std::uint64_t>(hi) << 32) | static_cast<std::uint64_t>(lo);
}

inline double pool_code(PoolSpec::Kind k) { return static_cast<double>(static_cast<int>(k)); }

inline PoolSpec::Kind pool_kind(double code) {
  const int c = static_cast<int>(code);
  require(c >= 0 && c <= 2 && c == code, Errc::UnsupportedFormat, "pool kind code");
  return static_cast<PoolSpec::Kind>(c);
}

}  // namespace detail

using TensorMap = std::map<std::string, TensorRecord>;

inline TensorMap checkpoint_tensors(const Checkpoint& ck) {
  using namespace detail;
  TensorMap t;
  const auto& ex = ck.extractor;
  t["meta"] = vector_record({static_cast<double>(ck.epochs_done), hi32(ex.seed), lo32(ex.seed),
                             static_cast<double>(ex.k1), static_cast<double>(ex.k2),
                             static_cast<double>(ex.kernel)});
  auto put_head = [&t](const std::string& prefix, const HeadParams& h) {
    t[prefix + ".pool"] = vector_record({pool_code(h.branch_a.kind), h.branch_a.p, pool_code(h.branch_b.kind),
                                         h.branch_b.p, h.cgd_order ? 1.0 : 0.0});
    t[prefix + ".W_a"] = matrix_record(h.W_a);
    t[prefix + ".b_a"] = vector_record({h.b_a.data(), h.b_a.data() + h.b_a.size()});
    t[prefix + ".W_b"] = matrix_record(h.W_b);
    t[prefix + ".b_b"] = vector_record({h.b_b.data(), h.b_b.data() + h.b_b.size()});
  };
  put_head("head", ck.head);
  put_head("ema", ck.ema_head);
  if (ck.classifier.size() > 0) t["classifier"] = matrix_record(ck.classifier);

  t["adam.step"] = vector_record({hi32(ck.adam.step), lo32(ck.adam.step)});
  for (std::size_t i = 0; i < ck.adam.m.size(); ++i) {
    t["adam.m." + std::to_string(i)] = vector_record(ck.adam.m[i]);
    t["adam.v." + std::to_string(i)] = vector_record(ck.adam.v[i]);
  }

  const auto& s = ck.stage;
  t["stage.config"] = vector_record({static_cast<double>(s.stage), static_cast<double>(s.epochs), s.lr_max, s.lr_min,
                                     static_cast<double>(s.t_max), static_cast<double>(s.batch_P),
                                     static_cast<double>(s.batch_K), s.ema_decay, s.ema_warmup ? 1.0 : 0.0,
                                     hi32(s.seed), lo32(s.seed), s.loss.tau, s.loss.lambda_cr, s.loss.lambda_ce,
                                     s.loss.denominator_includes_self ? 1.0 : 0.0});
  std::vector<double> name(s.augment.name.begin(), s.augment.name.end());
  if (name.empty()) name.push_back(0.0);
  t["stage.augment"] = vector_record(std::move(name));
  return t;
}

inline void save_checkpoint(std::ostream& os, const Checkpoint& ck) {
  os.write("DGCK", 4);
  detail::put_le<std::uint32_t>(os, ck.format_version);
  for (const auto& [name, rec] : checkpoint_tensors(ck)) {
    detail::put_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(os, rec);
  }
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  // Serialise fully before touching the destination.
  std::ostringstream buf(std::ios::binary);
  save_checkpoint(buf, ck);
  std::ofstream os(path, std::ios::binary);
  require(bool(os), Errc::Io, "cannot open " + path);
  const auto bytes = buf.str();
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(bool(os), Errc::Io, "write failed: " + path);
}

inline Checkpoint load_checkpoint(std::istream& is) {
  using namespace detail;
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "DGCK", 4) != 0) fail(Errc::BadMagic, "expected DGCK");
  std::uint32_t version = 0;
  if (!get_le(is, version)) fail(Errc::LengthMismatch, "missing format version");
  if (version != Checkpoint::kFormatVersion) fail(Errc::UnknownVersion, "format version " + std::to_string(version));

  TensorMap t;
  for (;;) {
    std::uint16_t len = 0;
    if (!get_le(is, len)) {
      if (is.gcount() == 0) break;  // clean end of file
      fail(Errc::LengthMismatch, "truncated record name length");
    }
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) fail(Errc::LengthMismatch, "truncated record name");
    t[name] = read_tensor(is);
  }

  auto need = [&t](const std::string& name, std::size_t min_len = 1) -> const TensorRecord& {
    auto it = t.find(name);
    if (it == t.end()) fail(Errc::MissingTensor, name);
    require(it->second.data.size() >= min_len, Errc::LengthMismatch, name + " too short");
    return it->second;
  };

  Checkpoint ck;
  ck.format_version = version;
  const auto& meta = need("meta", 6).data;
  ck.epochs_done = static_cast<std::uint32_t>(meta[0]);
  ck.extractor = {join32(meta[1], meta[2]), static_cast<int>(meta[3]), static_cast<int>(meta[4]),
                  static_cast<int>(meta[5])};

  auto get_head = [&](const std::string& prefix) {
    HeadParams h;
    const auto& pool = need(prefix + ".pool", 5).data;
    h.branch_a = {pool_kind(pool[0]), pool[1]};
    h.branch_b = {pool_kind(pool[2]), pool[3]};
    h.cgd_order = pool[4] != 0.0;
    h.W_a = record_matrix(need(prefix + ".W_a"), prefix + ".W_a");
    h.b_a = record_vector(need(prefix + ".b_a"));
    h.W_b = record_matrix(need(prefix + ".W_b"), prefix + ".W_b");
    h.b_b = record_vector(need(prefix + ".b_b"));
    h.validate();
    return h;
  };
  ck.head = get_head("head");
  ck.ema_head = get_head("ema");
  require(ck.head.same_shape(ck.ema_head), Errc::ShapeMismatch, "EMA head shape differs from head");
  if (auto it = t.find("classifier"); it != t.end()) ck.classifier = record_matrix(it->second, "classifier");

  const auto& step = need("adam.step", 2).data;
  ck.adam.step = join32(step[0], step[1]);
  for (std::size_t i = 0; t.contains("adam.m." + std::to_string(i)); ++i) {
    ck.adam.m.push_back(need("adam.m." + std::to_string(i)).data);
    ck.adam.v.push_back(need("adam.v." + std::to_string(i)).data);
  }

  const auto& s = need("stage.config", 15).data;
  auto& st = ck.stage;
  st.stage = static_cast<int>(s[0]);
  st.epochs = static_cast<int>(s[1]);
  st.lr_max = s[2];
  st.lr_min = s[3];
  st.t_max = static_cast<int>(s[4]);
  st.batch_P = static_cast<int>(s[5]);
  st.batch_K = static_cast<int>(s[6]);
  st.ema_decay = s[7];
  st.ema_warmup = s[8] != 0.0;
  st.seed = join32(s[9], s[10]);
  st.loss.tau = s[11];
  st.loss.lambda_cr = s[12];
  st.loss.lambda_ce = s[13];
  st.loss.denominator_includes_self = s[14] != 0.0;
  std::string profile;
  for (double c : need("stage.augment").data)
    if (c != 0.0) profile.push_back(static_cast<char>(c));
  if (auto p = builtin_profile(profile)) st.augment = *p;
  st.augment.name = profile;
  return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(bool(is), Errc::Io, "cannot open " + path);
  return load_checkpoint(is);
}

}  // namespace dgd
