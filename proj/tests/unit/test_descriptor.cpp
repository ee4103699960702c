#include "automerge/descriptor.hpp"
#include "automerge/errors.hpp"
#include "automerge/random.hpp"

#include <doctest.h>

#include <array>
#include <cmath>
#include <numbers>

using namespace automerge;

namespace {

Descriptor vec(std::vector<double> v) { return Descriptor(std::move(v)); }

Descriptor random_descriptor(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return Descriptor(v);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("cosine_distance fixed points") {
  const Descriptor f = vec({1, 2, 3});
  CHECK(cosine_distance(f, f) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(cosine_distance(vec({1, 0}), vec({0, 1})) == 1.0);
  CHECK(cosine_distance(vec({1, 2}), vec({-1, -2})) == doctest::Approx(2.0));
  CHECK_THROWS_AS(cosine_distance(vec({0, 0}), vec({1, 0})), Error);
  CHECK_THROWS_AS(cosine_distance(vec({1, 0, 0}), vec({1, 0})), Error);
}

TEST_CASE("cosine_distance is symmetric, bounded and scale invariant") {
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    const Descriptor a = random_descriptor(rng, 16), b = random_descriptor(rng, 16);
    const double d = cosine_distance(a, b);
    CHECK(d >= 0.0);
    CHECK(d <= 2.0);
    CHECK(d == cosine_distance(b, a));
    Descriptor s = a;
    for (auto& x : s.values) x *= 7.5;
    CHECK(std::abs(cosine_distance(s, b) - d) < 1e-12);
  }
}

TEST_CASE("self_attention") {
  SUBCASE("gamma zero is the identity") {
    Rng rng(2);
    for (int i = 0; i < 50; ++i) {
      const Descriptor v = random_descriptor(rng, 9);
      CHECK(self_attention(v, 0.0).values == v.values);
    }
  }
  SUBCASE("scalar case") {
    const Descriptor out = self_attention(vec({2.5}), 0.3);
    CHECK(out.values[0] == doctest::Approx(1.3 * 2.5).epsilon(1e-15));
  }
  SUBCASE("dense oracle for C = 3") {
    const std::vector<double> v = {1, 0, -1};
    const double gamma = 0.5;
    double a[3][3];
    for (int r = 0; r < 3; ++r) {
      double z = 0;
      for (int c = 0; c < 3; ++c) z += std::exp(v[r] * v[c]);
      for (int c = 0; c < 3; ++c) a[r][c] = std::exp(v[r] * v[c]) / z;
    }
    const Descriptor out = self_attention(vec(v), gamma);
    for (int r = 0; r < 3; ++r) {
      double acc = 0;
      for (int c = 0; c < 3; ++c) acc += a[c][r] * v[c];
      CHECK(out.values[r] == doctest::Approx(v[r] + gamma * acc).epsilon(1e-14));
    }
  }
  SUBCASE("softmax rows sum to one") {
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
      Eigen::MatrixXd m = Eigen::MatrixXd::NullaryExpr(12, 12, [&] { return rng.normal(0, 30); });
      const Eigen::MatrixXd s = softmax_rows(m);
      for (int r = 0; r < 12; ++r) CHECK(std::abs(s.row(r).sum() - 1.0) <= 1e-12);
      CHECK((s.array() >= 0.0).all());
    }
  }
}

TEST_CASE("cross_attention_fuse") {
  SUBCASE("zero input") {
    FusionTrace t;
    const Descriptor out = cross_attention_fuse(vec({0, 0, 0}), vec({0, 0, 0}), FusionParams::identity(3), &t);
    CHECK(t.correlation.isZero());
    CHECK(t.alpha_corr.isZero());
    for (double w : t.alpha_w) CHECK(w == 0.5);
    for (double x : out.values) CHECK(x == 0.0);
  }
  SUBCASE("dense 4x4 oracle") {
    const std::vector<double> cat = {1, 0, 0, 1};
    double e[4][4], mean[4], corr[4];
    for (int r = 0; r < 4; ++r) {
      mean[r] = 0;
      for (int c = 0; c < 4; ++c) {
        e[r][c] = cat[r] * cat[c];
        mean[r] += e[r][c] / 4;
      }
    }
    for (int r = 0; r < 4; ++r) {
      corr[r] = 0;
      for (int c = 0; c < 4; ++c) corr[r] += e[r][c] * mean[c];
    }
    FusionTrace t;
    const Descriptor out = cross_attention_fuse(vec({1, 0}), vec({0, 1}), FusionParams::identity(2), &t);
    REQUIRE(out.size() == 4);
    for (int r = 0; r < 4; ++r) {
      CHECK(t.alpha_corr[r] == doctest::Approx(corr[r]).epsilon(1e-15));
      CHECK(t.alpha_w[r] == doctest::Approx(sigmoid(corr[r])).epsilon(1e-15));
      CHECK(out.values[r] == doctest::Approx(sigmoid(corr[r]) * cat[r]).epsilon(1e-15));
    }
  }
  SUBCASE("weights stay inside (0, 1) and shrink every channel") {
    Rng rng(4);
    for (int i = 0; i < 1000; ++i) {
      const std::size_t c = 1 + rng.below(8);
      const Descriptor p = random_descriptor(rng, c), s = random_descriptor(rng, c);
      FusionTrace t;
      const Descriptor out = cross_attention_fuse(p, s, FusionParams::random(c, rng.next(), 3.0), &t);
      for (Eigen::Index k = 0; k < t.alpha_w.size(); ++k) {
        CHECK(t.alpha_w[k] > 0.0);
        CHECK(t.alpha_w[k] < 1.0);
        if (t.v_cat[k] != 0.0) CHECK(std::abs(out.values[static_cast<std::size_t>(k)]) < std::abs(t.v_cat[k]));
      }
    }
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(cross_attention_fuse(vec({1, 2}), vec({1}), FusionParams::identity(2)), Error);
    CHECK_THROWS_AS(cross_attention_fuse(vec({1, 2}), vec({1, 2}), FusionParams::identity(3)), Error);
  }
}

TEST_CASE("lazy_quadruplet_loss") {
  SUBCASE("margins satisfied") {
    QuadrupletTuple t;
    t.anchor = vec({1, 0, 0});
    t.positives = {vec({2, 0, 0}), vec({0.5, 0, 0})};
    t.negatives = {vec({-1, 0, 0}), vec({-3, 0, 0})};
    t.hard_negative = vec({1, 0, 0});
    CHECK(lazy_quadruplet_loss(t, 0.5, 0.2) == 0.0);
  }
  SUBCASE("hand-evaluated fixture") {
    // d(a, pos) = 1 - 3/5, d(a, neg) = 1 - 1/2, d(neg*, neg) = 1 - 6/10, all exact in binary.
    QuadrupletTuple t;
    t.anchor = vec({1, 0, 0, 0, 0, 0});
    t.positives = {vec({3, 4, 0, 0, 0, 0})};
    t.negatives = {vec({1, 1, 1, 1, 0, 0})};
    t.hard_negative = vec({2, 2, 2, 0, 2, 3});
    CHECK(cosine_distance(t.anchor, t.positives[0]) == 0.4);
    CHECK(cosine_distance(t.anchor, t.negatives[0]) == 0.5);
    CHECK(cosine_distance(t.hard_negative, t.negatives[0]) == 0.4);
    CHECK(lazy_quadruplet_loss(t, 0.5, 0.0) == 0.4);
  }
  SUBCASE("non-negative, scale invariant, monotone in negatives") {
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
      QuadrupletTuple t;
      t.anchor = random_descriptor(rng, 6);
      t.hard_negative = random_descriptor(rng, 6);
      for (int k = 0; k < 3; ++k) t.positives.push_back(random_descriptor(rng, 6));
      for (int k = 0; k < 3; ++k) t.negatives.push_back(random_descriptor(rng, 6));
      const double loss = lazy_quadruplet_loss(t);
      CHECK(loss >= 0.0);
      QuadrupletTuple scaled = t;
      for (auto* d : {&scaled.anchor, &scaled.hard_negative, &scaled.positives[1], &scaled.negatives[2]})
        for (auto& x : d->values) x *= 4.0;
      CHECK(std::abs(lazy_quadruplet_loss(scaled) - loss) < 1e-12);
      QuadrupletTuple more = t;
      more.negatives.push_back(random_descriptor(rng, 6));
      CHECK(lazy_quadruplet_loss(more) >= loss);
    }
  }
  SUBCASE("empty sets") {
    QuadrupletTuple t;
    t.anchor = vec({1, 0});
    t.hard_negative = vec({0, 1});
    t.positives = {vec({1, 0})};
    CHECK_THROWS_AS(lazy_quadruplet_loss(t), Error);
  }
}

TEST_CASE("polar_histogram_descriptor") {
  const PolarLayout layout{4, 16, 50.0};
  SUBCASE("single point") {
    PointCloud2 c;
    c.points.emplace_back(1, 0);
    const Descriptor d = polar_histogram_descriptor(c, layout);
    int nonzero = 0;
    for (double v : d.values) {
      if (v != 0.0) {
        ++nonzero;
        CHECK(v == 1.0);
      }
    }
    CHECK(nonzero == 1);
  }
  SUBCASE("rotation by one bin shifts the angular axis") {
    Rng rng(6);
    const double width = 2 * std::numbers::pi / layout.bins_angular;
    PointCloud2 c;
    for (int i = 0; i < 60; ++i) {
      const double r = rng.uniform(1, 49);
      const double a = width * (static_cast<double>(rng.below(16)) + rng.uniform(0.1, 0.9));
      c.points.emplace_back(r * std::cos(a), r * std::sin(a));
    }
    const PointCloud2 rotated = transform_cloud({0, 0, width}, c);
    const Descriptor d0 = polar_histogram_descriptor(c, layout);
    const Descriptor d1 = polar_histogram_descriptor(rotated, layout);
    const Descriptor shifted = shift_angular(d0, layout.bins_angular, 1);
    for (std::size_t i = 0; i < d1.size(); ++i) CHECK(d1.values[i] == doctest::Approx(shifted.values[i]));
  }
  SUBCASE("dense ring is angularly uniform") {
    PointCloud2 c;
    const int n = 16 * 50;
    for (int i = 0; i < n; ++i) {
      const double a = 2 * std::numbers::pi * (i + 0.5) / n;
      c.points.emplace_back(20 * std::cos(a), 20 * std::sin(a));
    }
    const Descriptor d = polar_histogram_descriptor(c, layout);
    double ref = -1;
    for (double v : d.values) {
      if (v == 0.0) continue;
      if (ref < 0) ref = v;
      CHECK(std::abs(v - ref) < 1e-9);
    }
  }
  SUBCASE("point order does not matter") {
    Rng rng(7);
    PointCloud2 c;
    for (int i = 0; i < 100; ++i) c.points.emplace_back(rng.uniform(-40, 40), rng.uniform(-40, 40));
    PointCloud2 p = c;
    rng.shuffle(p.points);
    CHECK(polar_histogram_descriptor(c, layout).values == polar_histogram_descriptor(p, layout).values);
  }
  SUBCASE("empty cloud") { CHECK_THROWS_AS(polar_histogram_descriptor(PointCloud2{}, layout), Error); }
}

TEST_CASE("rotation_search_distance") {
  Rng rng(8);
  const int bins = 16;
  std::vector<double> v(64);
  for (auto& x : v) x = rng.uniform();
  const Descriptor f(v);
  const ShiftMatch self = rotation_search_distance(f, f, bins);
  CHECK(self.distance < 1e-12);
  CHECK(self.shift == 0);
  for (int k = 0; k < bins; ++k) {
    const ShiftMatch m = rotation_search_distance(f, shift_angular(f, bins, k), bins);
    CHECK(m.distance < 1e-12);
    CHECK(m.shift == k);
  }
  SUBCASE("noisy half turn") {
    Descriptor g = shift_angular(f, bins, bins / 2);
    for (auto& x : g.values) x += rng.normal(0, 0.01);
    const ShiftMatch m = rotation_search_distance(f, g, bins);
    const int err = std::abs(m.shift - bins / 2);
    CHECK(std::min(err, bins - err) <= 1);
  }
  CHECK_THROWS_AS(rotation_search_distance(f, Descriptor(std::vector<double>(48, 1.0)), bins), Error);
  CHECK_THROWS_AS(rotation_search_distance(Descriptor(std::vector<double>(60, 1.0)),
                                           Descriptor(std::vector<double>(60, 1.0)), bins),
                  Error);
}

TEST_CASE("synthetic_descriptor") {
  const Vec2 p(120.0, -40.0);
  CHECK(synthetic_descriptor(9, p, 0.3, 0.0, std::nullopt).values ==
        synthetic_descriptor(9, p, 0.3, 0.0, std::nullopt).values);
  CHECK(synthetic_descriptor(9, p, 0.3, 0.1, std::nullopt, 4).values ==
        synthetic_descriptor(9, p, 0.3, 0.1, std::nullopt, 4).values);
  CHECK(cosine_distance(synthetic_descriptor(9, p, 0.0, 0.0, std::nullopt),
                        synthetic_descriptor(9, p + Vec2(1.0, 0.5), 0.0, 0.0, std::nullopt)) < 0.1);
  CHECK(cosine_distance(synthetic_descriptor(9, p, 0.0, 0.0, 17),
                        synthetic_descriptor(9, Vec2(5000, 5000), 2.0, 0.0, 17)) < 1e-12);

  const auto band = [](std::size_t dim) {
    SyntheticDescriptorConfig cfg;
    cfg.dim = dim;
    Rng rng(10);
    double lo = 2, hi = 0, sum = 0;
    for (int i = 0; i < 1000; ++i) {
      const Vec2 a(rng.uniform(-5000, 5000), rng.uniform(-5000, 5000));
      const double ang = rng.uniform(0, 2 * std::numbers::pi);
      const Vec2 b = a + 1000.0 * Vec2(std::cos(ang), std::sin(ang));
      const double d = cosine_distance(synthetic_descriptor(3, a, 0, 0, std::nullopt, 0, cfg),
                                       synthetic_descriptor(3, b, 0, 0, std::nullopt, 0, cfg));
      lo = std::min(lo, d);
      hi = std::max(hi, d);
      sum += d;
    }
    return std::array<double, 3>{lo, hi, sum / 1000};
  };
  SUBCASE("distant places at the deployed width") {
    const auto [lo, hi, mean] = band(1024);
    CHECK(lo >= 0.8);
    CHECK(hi <= 1.2);
    CHECK(std::abs(mean - 1.0) < 0.01);
  }
  SUBCASE("distant places at the default width") {
    const auto [lo, hi, mean] = band(64);
    CHECK(lo >= 0.5);
    CHECK(hi <= 1.5);
    CHECK(std::abs(mean - 1.0) < 0.02);
  }
}
