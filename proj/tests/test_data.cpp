#include "test_helpers.hpp"

#include <bit>
#include <cmath>
#include <set>

#include "dgd/image.hpp"
#include "dgd/manifest.hpp"
#include "dgd/synth.hpp"
#include "dgd/tensor.hpp"
#include "dgd/config.hpp"

using namespace dgd;

namespace {

Image parse_image(const std::string& bytes) {
  std::istringstream is(bytes, std::ios::binary);
  return read_image(is);
}

std::string pnm(const std::string& magic, int w, int h, std::initializer_list<int> payload) {
  std::string s = magic + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (int b : payload) s.push_back(static_cast<char>(b));
  return s;
}

double mean_abs_diff(const Image& a, const Image& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) s += std::abs(int(a.pixels[i]) - int(b.pixels[i]));
  return s / static_cast<double>(a.pixels.size());
}

}  // namespace

TEST_CASE("read_image decodes P5 directly") {
  const auto img = parse_image(pnm("P5", 2, 2, {0, 64, 128, 255}));
  CHECK(img == Image(2, 2, {0, 64, 128, 255}));
}

TEST_CASE("read_image converts P6 through luma") {
  // round(0.299 * 255) = 76
  CHECK(parse_image(pnm("P6", 1, 1, {255, 0, 0})) == Image(1, 1, {76}));
  CHECK(parse_image(pnm("P6", 1, 1, {255, 255, 255})).pixels[0] == 255);
}

TEST_CASE("read_image skips header comments") {
  const std::string bytes = std::string("P5\n# made by hand\n1 2\n# max\n255\n") + char(7) + char(9);
  CHECK(parse_image(bytes) == Image(1, 2, {7, 9}));
}

TEST_CASE("read_image rejects other formats and truncation") {
  REQUIRE_ERRC(parse_image(pnm("P4", 1, 1, {0})), Errc::UnsupportedFormat);
  REQUIRE_ERRC(parse_image("P5\n1 1\n65535\n\x01\x02"), Errc::UnsupportedFormat);
  REQUIRE_ERRC(parse_image(pnm("P5", 2, 2, {1, 2, 3})), Errc::TruncatedFile);
  REQUIRE_ERRC(parse_image(pnm("P6", 1, 1, {1, 2})), Errc::TruncatedFile);
  REQUIRE_ERRC(parse_image("P5\n2"), Errc::TruncatedFile);
}

TEST_CASE("PGM write/read is lossless for generated images") {
  SynthConfig cfg;
  cfg.identities = 2;
  cfg.images_per_identity = 2;
  cfg.image_size = 48;
  cfg.noise = 20;
  const auto ds = generate_synthetic(cfg);
  for (const auto& img : ds.images) {
    std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
    write_pgm(ss, img);
    CHECK(read_image(ss) == img);
  }
}

TEST_CASE("DGT1 layout and roundtrip") {
  TensorRecord t{{1}, {0.5}};
  std::ostringstream os(std::ios::binary);
  write_tensor(os, t);
  const auto bytes = os.str();
  CHECK(bytes.size() == 4 + 4 + 8 + 8);
  CHECK(bytes.substr(0, 4) == "DGT1");
  CHECK(bytes[4] == 1);
  CHECK(bytes[8] == 1);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t(static_cast<unsigned char>(bytes[16 + i])) << (8 * i);
  CHECK(std::bit_cast<double>(bits) == 0.5);

  TensorRecord m{{2, 3}, {1, 2, 3, 4, 5, 6}};
  std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
  write_tensor(ss, m);
  CHECK(read_tensor(ss) == m);
}

TEST_CASE("DGT1 roundtrip is bit-exact for random payloads") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    TensorRecord t;
    const int nd = 1 + int(rng() % 4);
    for (int d = 0; d < nd; ++d) t.dims.push_back(1 + rng() % 5);
    t.data.resize(t.size());
    for (auto& v : t.data) {
      double x;
      do x = std::bit_cast<double>(rng()); while (!std::isfinite(x));
      v = x;
    }
    std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
    write_tensor(ss, t);
    const auto back = read_tensor(ss);
    REQUIRE(back.dims == t.dims);
    for (std::size_t i = 0; i < t.data.size(); ++i)
      REQUIRE(std::bit_cast<std::uint64_t>(back.data[i]) == std::bit_cast<std::uint64_t>(t.data[i]));
  }
}

TEST_CASE("DGT1 rejects bad magic and short payloads") {
  std::ostringstream os(std::ios::binary);
  write_tensor(os, TensorRecord{{3}, {1, 2, 3}});
  auto bytes = os.str();

  auto bad = bytes;
  bad[3] = '2';
  std::istringstream a(bad, std::ios::binary);
  REQUIRE_ERRC(read_tensor(a), Errc::BadMagic);

  std::istringstream b(bytes.substr(0, bytes.size() - 3), std::ios::binary);
  REQUIRE_ERRC(read_tensor(b), Errc::LengthMismatch);

  std::ostringstream sink;
  REQUIRE_ERRC(write_tensor(sink, TensorRecord{{2}, {1.0}}), Errc::LengthMismatch);
}

TEST_CASE("parse_train_manifest groups rows by identity") {
  const auto m = parse_train_manifest("dog_id,image\n0,a.pgm\n0,b.pgm\n1,c.pgm\n");
  REQUIRE(m.groups.size() == 2);
  CHECK(m.groups.at(0) == std::vector<std::string>{"a.pgm", "b.pgm"});
  CHECK(m.groups.at(1) == std::vector<std::string>{"c.pgm"});

  // column order and CRLF are both accepted
  const auto crlf = parse_train_manifest("image,dog_id\r\nx.pgm,4\r\ny.pgm,4\r\n");
  CHECK(crlf.groups.at(4) == std::vector<std::string>{"x.pgm", "y.pgm"});
}

TEST_CASE("parse_train_manifest handles a 6000-identity table") {
  std::string text = "dog_id,image\n";
  for (int id = 0; id < 6000; ++id)
    for (int k = 0; k < 2 + id % 3; ++k) text += std::to_string(id) + ",img_" + std::to_string(id) + "_" + std::to_string(k) + ".jpg\n";
  const auto m = parse_train_manifest(text);
  REQUIRE(m.groups.size() == 6000);
  CHECK(m.groups.begin()->first == 0);
  CHECK(m.groups.rbegin()->first == 5999);
  for (const auto& [id, g] : m.groups) REQUIRE(g.size() >= 2);
}

TEST_CASE("parse_train_manifest errors") {
  REQUIRE_ERRC(parse_train_manifest("id,image\n0,a\n"), Errc::MissingColumn);
  REQUIRE_ERRC(parse_train_manifest("dog_id,image\nx,a\n"), Errc::NonIntegerId);
  REQUIRE_ERRC(parse_train_manifest("dog_id,image\n-1,a\n"), Errc::NonIntegerId);
  REQUIRE_ERRC(parse_train_manifest("dog_id,image\n0,a\n1,a\n"), Errc::DuplicatePath);
  REQUIRE_ERRC(parse_train_manifest("dog_id,image\n0\n"), Errc::MissingColumn);
}

TEST_CASE("parse_pair_manifest") {
  const auto u = parse_pair_manifest("imageA,imageB\na,b\nc,d\n");
  REQUIRE(u.pairs.size() == 2);
  CHECK_FALSE(u.labeled());
  CHECK(u.pairs[1] == Pair{"c", "d", std::nullopt});

  std::string text = "imageA,imageB,label\n";
  for (int i = 0; i < 1000; ++i) text += "p" + std::to_string(i) + "a,p" + std::to_string(i) + "b,1\n";
  for (int i = 0; i < 1000; ++i) text += "n" + std::to_string(i) + "a,n" + std::to_string(i) + "b,0\n";
  const auto l = parse_pair_manifest(text);
  REQUIRE(l.pairs.size() == 2000);
  CHECK(l.labeled());
  CHECK(l.pairs[0].label == 1);
  CHECK(l.pairs[1999].label == 0);
}

TEST_CASE("parse_pair_manifest errors") {
  REQUIRE_ERRC(parse_pair_manifest("imageA,other\na,b\n"), Errc::MissingColumn);
  REQUIRE_ERRC(parse_pair_manifest("imageA,imageB,label\na,b,2\n"), Errc::BadLabel);
  REQUIRE_ERRC(parse_pair_manifest("imageA,imageB,label\na,b,\n"), Errc::BadLabel);
  REQUIRE_ERRC(parse_pair_manifest("imageA,imageB\nx.pgm,x.pgm\n"), Errc::SelfPair);
}

TEST_CASE("manifest writers round trip through the parsers") {
  const auto m = parse_train_manifest("dog_id,image\n3,a\n3,b\n9,c\n");
  std::ostringstream os;
  write_train_manifest(os, m);
  CHECK(parse_train_manifest(os.str()) == m);

  const auto p = parse_pair_manifest("imageA,imageB,label\na,b,1\nc,d,0\n");
  std::ostringstream ps;
  write_pair_manifest(ps, p);
  CHECK(parse_pair_manifest(ps.str()) == p);
}

TEST_CASE("merge_manifests appends and rejects collisions") {
  const auto base = parse_train_manifest("dog_id,image\n0,a\n0,b\n");
  const auto extra = parse_train_manifest("dog_id,image\n1,c\n1,d\n");
  const auto merged = merge_manifests(base, extra);
  CHECK(merged.groups.size() == 2);
  REQUIRE_ERRC(merge_manifests(base, parse_train_manifest("dog_id,image\n5,a\n")), Errc::DuplicatePath);
  REQUIRE_ERRC(merge_manifests(base, parse_train_manifest("dog_id,image\n0,z\n")), Errc::InvalidConfig);
}

TEST_CASE("generate_synthetic is deterministic and counts match") {
  SynthConfig cfg;
  cfg.identities = 50;
  cfg.images_per_identity = 4;
  cfg.image_size = 32;
  cfg.seed = 5;
  const auto a = generate_synthetic(cfg);
  const auto b = generate_synthetic(cfg);
  REQUIRE(a.images.size() == 200);
  REQUIRE(a.manifest.groups.size() == 50);
  for (const auto& [id, g] : a.manifest.groups) CHECK(g.size() == 4);
  CHECK(a.images == b.images);
  CHECK(a.paths == b.paths);

  cfg.seed = 6;
  const auto c = generate_synthetic(cfg);
  CHECK(a.images != c.images);
}

TEST_CASE("generate_synthetic validates its config") {
  SynthConfig cfg;
  cfg.identities = 1;
  REQUIRE_ERRC(generate_synthetic(cfg), Errc::InvalidConfig);
  cfg = {};
  cfg.images_per_identity = 1;
  REQUIRE_ERRC(generate_synthetic(cfg), Errc::InvalidConfig);
  cfg = {};
  cfg.image_size = 31;
  REQUIRE_ERRC(generate_synthetic(cfg), Errc::InvalidConfig);
}

TEST_CASE("synthetic identities differ more than views of one identity") {
  const SynthConfig cfg = RunConfig::default_split().synth;
  double between = 0.0, within = 0.0;
  for (int i = 0; i < 20; ++i) {
    const auto a = synth_base_texture(cfg, 2 * i);
    const auto b = synth_base_texture(cfg, 2 * i + 1);
    between += mean_abs_diff(a, b);
    within += mean_abs_diff(synth_view(cfg, a, 2 * i, 0), synth_view(cfg, a, 2 * i, 1));
  }
  INFO("between " << between / 20 << " within " << within / 20);
  CHECK(between > within);
}
