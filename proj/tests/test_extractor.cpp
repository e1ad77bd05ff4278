#include "test_helpers.hpp"

#include <cmath>

#include "dgd/extractor.hpp"

using namespace dgd;
using Catch::Approx;

TEST_CASE("filter bank is deterministic and normalised") {
  const auto a = make_filter_bank(42);
  const auto b = make_filter_bank(42);
  CHECK(a == b);
  REQUIRE(a.layer1.size() == 16);
  REQUIRE(a.layer2.size() == 32);
  CHECK(a.layer2.front().channels == 16);

  for (const auto* layer : {&a.layer1, &a.layer2})
    for (const auto& k : *layer) {
      double sum = 0.0, sq = 0.0;
      for (double v : k.values) sum += v, sq += v * v;
      CHECK(std::abs(sum / k.values.size()) < 1e-12);
      CHECK(std::abs(std::sqrt(sq) - 1.0) < 1e-12);
    }

  const auto c = make_filter_bank(1);
  const auto d = make_filter_bank(2);
  CHECK_FALSE(c == d);
}

TEST_CASE("conv2d_same with the identity kernel") {
  std::mt19937_64 rng(1);
  const auto x = testing::random_map(rng, 1, 6, 7, -1, 1);
  Kernel one(1, 1, 1, 1.0);
  CHECK(conv2d_same(x, one) == x);
}

TEST_CASE("conv2d_same zero padding by hand") {
  FeatureMap ones(1, 3, 3, 1.0);
  Kernel box(1, 3, 3, 1.0);
  const auto out = conv2d_same(ones, box);
  CHECK(out.at(0, 1, 1) == 9.0);
  CHECK(out.at(0, 0, 0) == 4.0);
  CHECK(out.at(0, 0, 1) == 6.0);

  Kernel zero(1, 3, 3, 0.0);
  for (double v : conv2d_same(ones, zero).values) CHECK(v == 0.0);
}

TEST_CASE("conv2d_same sums over channels") {
  FeatureMap x(2, 3, 3);
  for (int i = 0; i < 9; ++i) x.values[i] = 1.0, x.values[9 + i] = 2.0;
  Kernel k(2, 1, 1);
  k.values = {1.0, 10.0};
  for (double v : conv2d_same(x, k).values) CHECK(v == 21.0);
}

TEST_CASE("conv2d_same errors") {
  FeatureMap small(1, 3, 3, 1.0);
  REQUIRE_ERRC(conv2d_same(small, Kernel(1, 5, 5, 1.0)), Errc::KernelTooLarge);
  REQUIRE_ERRC(conv2d_same(small, Kernel(1, 2, 2, 1.0)), Errc::KernelTooLarge);
  REQUIRE_ERRC(conv2d_same(small, Kernel(2, 1, 1, 1.0)), Errc::DimensionMismatch);
}

TEST_CASE("conv2d_same is linear") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = testing::random_map(rng, 3, 9, 8, -1, 1);
    const auto y = testing::random_map(rng, 3, 9, 8, -1, 1);
    const auto k = testing::random_map(rng, 3, 5, 5, -1, 1);
    const double a = 1.7, b = -0.3;
    FeatureMap mix(3, 9, 8);
    for (std::size_t i = 0; i < mix.values.size(); ++i) mix.values[i] = a * x.values[i] + b * y.values[i];
    const auto lhs = conv2d_same(mix, k);
    const auto cx = conv2d_same(x, k), cy = conv2d_same(y, k);
    for (std::size_t i = 0; i < lhs.values.size(); ++i)
      REQUIRE(std::abs(lhs.values[i] - (a * cx.values[i] + b * cy.values[i])) < 1e-12);
  }
}

TEST_CASE("avg_pool") {
  FeatureMap m(1, 2, 2);
  m.values = {1, 2, 3, 4};
  CHECK(avg_pool(m, 1) == m);
  const auto p = avg_pool(m, 2);
  REQUIRE(p.values.size() == 1);
  CHECK(p.values[0] == 2.5);

  FeatureMap c(2, 8, 4, 0.75);
  const auto q = avg_pool(c, 4);
  CHECK(q.channels == 2);
  CHECK(q.height == 2);
  CHECK(q.width == 1);
  for (double v : q.values) CHECK(v == 0.75);

  REQUIRE_ERRC(avg_pool(FeatureMap(1, 6, 6), 4), Errc::IndivisibleExtent);
}

TEST_CASE("extract_features shape, sign and determinism") {
  const auto bank = make_filter_bank(42);
  std::mt19937_64 rng(8);
  Image img(224, 224);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() & 0xff);

  const auto f = extract_features(img, bank);
  CHECK(f.channels == 32);
  CHECK(f.height == 14);
  CHECK(f.width == 14);
  for (double v : f.values) {
    REQUIRE(std::isfinite(v));
    REQUIRE(v >= 0.0);
  }
  CHECK(extract_features(img, bank) == f);

  REQUIRE_ERRC(extract_features(Image(100, 224), bank), Errc::WrongInputSize);
}

TEST_CASE("extract_features is positively homogeneous") {
  const auto bank = make_filter_bank(4);
  std::mt19937_64 rng(2);
  const auto x = testing::random_map(rng, 1, 224, 224);
  const auto fx = extract_features(x, bank);
  for (double alpha : {2.0, 3.7, 0.25}) {
    FeatureMap scaled = x;
    for (auto& v : scaled.values) v *= alpha;
    const auto fs = extract_features(scaled, bank);
    for (std::size_t i = 0; i < fx.values.size(); ++i)
      REQUIRE(fs.values[i] == Approx(alpha * fx.values[i]).epsilon(1e-12).margin(1e-15));
    if (alpha == 2.0)  // power-of-two scaling is exact in binary floating point
      for (std::size_t i = 0; i < fx.values.size(); ++i) REQUIRE(fs.values[i] == alpha * fx.values[i]);
  }
}

TEST_CASE("extract_features is translation covariant in the interior") {
  const auto bank = make_filter_bank(9);
  std::mt19937_64 rng(5);
  const auto wide = testing::random_map(rng, 1, 224, 240);
  FeatureMap left(1, 224, 224), right(1, 224, 224);
  for (int y = 0; y < 224; ++y)
    for (int x = 0; x < 224; ++x) {
      left.at(0, y, x) = wide.at(0, y, x);
      right.at(0, y, x) = wide.at(0, y, x + 16);
    }
  const auto fl = extract_features(left, bank);
  const auto fr = extract_features(right, bank);
  // A 16-pixel shift is one output cell. Cells touching either image's
  // padded border (first/last column or row of each map) are excluded.
  int compared = 0;
  for (int c = 0; c < 32; ++c)
    for (int y = 1; y <= 12; ++y)
      for (int x = 1; x <= 11; ++x) {
        REQUIRE(std::abs(fr.at(c, y, x) - fl.at(c, y, x + 1)) < 1e-9);
        ++compared;
      }
  CHECK(compared == 32 * 12 * 11);
}
