#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "rfcruise/manifold.hpp"

using namespace rfcruise;

namespace {

BareLevel level(std::string id, double e0, double mu, int l = 0) {
  BareLevel b;
  b.id = std::move(id);
  b.labels.l = l;
  b.energy_at_zero = e0;
  b.magnetic_moment = mu;
  return b;
}

std::string data(const char* name) { return std::string(RFCRUISE_DATA_DIR) + "/" + name; }

// Sign change of E_a - E_b on a dense grid, then bisection on the grid cell.
double grid_crossing(const BareLevel& a, const BareLevel& b, double lo, double hi) {
  const int n = 20000;
  auto g = [&](double x) { return a.energy(x) - b.energy(x); };
  for (int i = 0; i < n; ++i) {
    double x0 = lo + (hi - lo) * i / n, x1 = lo + (hi - lo) * (i + 1) / n;
    if (g(x0) * g(x1) <= 0.0) {
      for (int k = 0; k < 200; ++k) {
        const double m = 0.5 * (x0 + x1);
        (g(x0) * g(m) <= 0.0 ? x1 : x0) = m;
      }
      return 0.5 * (x0 + x1);
    }
  }
  return std::nan("");
}

} // namespace

TEST(Manifold, FindCrossingsMatchesGridSearch) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> mu(-3.0, 3.0), b0(50.0, 950.0), e(-4000.0, -10.0);
  for (int trial = 0; trial < 200; ++trial) {
    auto a = level("a", e(rng), mu(rng));
    auto b0v = b0(rng);
    double mub = mu(rng);
    if (std::abs(mub - a.magnetic_moment) < 0.05) mub += 0.5;
    // choose b's offset so the pair intersects at b0v
    auto b = level("b", a.energy(b0v) - mub * b0v, mub);
    const auto found = find_crossings({a, b}, 0.0, 1000.0);
    ASSERT_EQ(found.size(), 1u);
    EXPECT_NEAR(found[0].b0, grid_crossing(a, b, 0.0, 1000.0), 1e-9);
  }
}

TEST(Manifold, ParallelLevelsNeverCross) {
  EXPECT_TRUE(find_crossings({level("a", -10, 1.0), level("b", -20, 1.0)}, 0, 1000).empty());
}

TEST(Manifold, CrossingsSortedDescending) {
  const auto m = load_manifold(data("fig1_path.cfg"));
  ASSERT_EQ(m.crossings().size(), 11u);
  for (std::size_t i = 1; i < m.crossings().size(); ++i)
    EXPECT_GT(m.crossings()[i - 1].b0, m.crossings()[i].b0);
  EXPECT_EQ(m.crossings().front().id, "A");
  EXPECT_EQ(m.crossings().back().id, "K");
  ASSERT_TRUE(m.lifetime_ms());
  EXPECT_EQ(*m.lifetime_ms(), 280.0);
}

TEST(Manifold, SaveLoadRoundTrip) {
  for (const char* f : {"crossing_a.cfg", "crossing_bc.cfg", "fig1_path.cfg"}) {
    const auto m = load_manifold(data(f));
    const auto path = std::filesystem::temp_directory_path() / (std::string("rt_") + f);
    save_manifold(m, path.string());
    EXPECT_EQ(load_manifold(path.string()), m) << f;
    std::filesystem::remove(path);
  }
}

TEST(Manifold, RejectsWrongCrossingField) {
  auto a = level("a", -100.0, 2.0), b = level("b", -10.0, 1.0); // meet at 90 G
  EXPECT_NO_THROW(make_manifold({a, b}, {{"X", "b", "a", 1.0, 90.0}}));
  EXPECT_THROW(make_manifold({a, b}, {{"X", "b", "a", 1.0, 91.0}}), ValidationError);
}

TEST(Manifold, RejectsBadInput) {
  auto a = level("a", -100.0, 2.0), b = level("b", -10.0, 1.0);
  EXPECT_THROW(make_manifold({a, a}, {}), ValidationError);
  EXPECT_THROW(make_manifold({a, level("c", -5, 0.1, 3)}, {}), ValidationError);
  EXPECT_THROW(make_manifold({a, level("c", 5, 0.1)}, {}), ValidationError);
  EXPECT_THROW(make_manifold({a, b}, {{"X", "b", "zz", 1.0, 90.0}}), ValidationError);
  EXPECT_THROW(make_manifold({a, b}, {{"X", "b", "a", 0.0, 90.0}}), ValidationError);
  EXPECT_THROW(make_manifold({a, b}, {}, -1.0), ValidationError);
  EXPECT_THROW(parse_manifold("{ not json"), ParseError);
  EXPECT_THROW(parse_manifold(R"({"levels": [{"id": "a"}]})"), ParseError);
}

TEST(Manifold, UnknownKeysStrictOrLax) {
  const std::string doc = R"({"levels": [], "crossings": [], "comment": "x"})";
  EXPECT_THROW(parse_manifold(doc), ParseError);
  std::vector<std::string> warnings;
  EXPECT_NO_THROW(parse_manifold(doc, LoadOptions{false}, &warnings));
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("comment"), std::string::npos);
}

TEST(Manifold, LevelWithZeroSlopeIsAccepted) {
  // a field-independent level (a deeply bound state) still crosses a sloped one
  auto flat = level("deep", -3600.0, 0.0);
  auto sloped = level("s", -3600.0 - 2.0 * 300.0, 2.0);
  const auto m = make_manifold({flat, sloped}, {{"Z", "s", "deep", 0.5, 300.0}});
  EXPECT_EQ(m.crossing("Z").b0, 300.0);
  EXPECT_THROW(m.level("nope"), ValidationError);
  EXPECT_THROW(m.crossing("nope"), ValidationError);
}
