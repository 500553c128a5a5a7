#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "hjcl/hier_metric.hpp"
#include "hjcl/rng.hpp"

using namespace hjcl;

namespace {

Taxonomy fig1() {
  std::ifstream in(std::string(HJCL_FIXTURE_DIR) + "/fig1_taxonomy.tsv");
  REQUIRE(in.good());
  return Taxonomy::load(in);
}

// Levels (1, 2, 2): A at level 1 with children B, C.
Taxonomy small() {
  std::istringstream in("A\tROOT\nB\tA\nC\tA\n");
  return Taxonomy::load(in);
}

LabelVector vec(std::initializer_list<int> bits) {
  LabelVector y;
  for (int b : bits) y.push_back(static_cast<std::uint8_t>(b));
  return y;
}

// Direct per-coordinate summation, independent of MetricContext caching.
double oracle_rho(const Taxonomy& t, const LabelVector& a, const LabelVector& b) {
  double d = 0.0;
  for (int k = 0; k < t.size(); ++k) {
    if (a[static_cast<std::size_t>(k)] != b[static_cast<std::size_t>(k)]) {
      d += t.max_depth() - t.depth(k) + 1;
    }
  }
  return d;
}

LabelVector random_vec(Rng& rng, int n) {
  LabelVector y(static_cast<std::size_t>(n), 0);
  for (auto& b : y) b = rng.uniform() < 0.5 ? 1 : 0;
  return y;
}

}  // namespace

TEST_CASE("context weights and normalizer") {
  const Taxonomy t = small();
  const MetricContext ctx = MetricContext::make(t);
  CHECK(ctx.level_weight[t.index_of("A")] == 2.0);
  CHECK(ctx.level_weight[t.index_of("B")] == 1.0);
  CHECK(ctx.level_weight.minCoeff() >= 1.0);
  CHECK(ctx.C == 4.0);
  // C is the distance between the empty and the full set.
  CHECK(rho(ctx, vec({0, 0, 0}), vec({1, 1, 1})) == ctx.C);
}

TEST_CASE("rho spot values") {
  const Taxonomy t = small();
  const MetricContext ctx = MetricContext::make(t);
  CHECK(rho(ctx, vec({1, 0, 1}), vec({1, 0, 1})) == 0.0);
  CHECK(rho(ctx, vec({0, 0, 0}), vec({1, 1, 1})) == 4.0);
  CHECK_THROWS_AS(rho(ctx, vec({1, 0}), vec({1, 0, 1})), DataError);
}

TEST_CASE("fixture level-1 and level-4 disagreements") {
  const Taxonomy t = fig1();
  const MetricContext ctx = MetricContext::make(t);
  REQUIRE(t.max_depth() == 4);

  LabelVector a(static_cast<std::size_t>(t.size()), 0);
  LabelVector b = a;
  a[static_cast<std::size_t>(t.index_of("News"))] = 1;
  CHECK(rho(ctx, a, b) == 4.0);
  b[static_cast<std::size_t>(t.index_of("Classifields"))] = 1;
  CHECK(rho(ctx, a, b) == 8.0);  // two level-1 coordinates differ

  LabelVector c(static_cast<std::size_t>(t.size()), 0);
  LabelVector d = c;
  c[static_cast<std::size_t>(t.index_of("United Kingdom"))] = 1;
  CHECK(rho(ctx, c, d) == 1.0);
  d[static_cast<std::size_t>(t.index_of("France"))] = 1;
  CHECK(rho(ctx, c, d) == 2.0);  // one unit per level-4 coordinate
}

TEST_CASE("sigma and gamma") {
  const Taxonomy t = small();
  const MetricContext ctx = MetricContext::make(t);

  const auto same = sigma_gamma(ctx, vec({1, 1, 0}), vec({1, 1, 0}));
  CHECK(same.sigma == 1.0);
  CHECK(same.gamma == 0.0);

  const auto one_level2 = sigma_gamma(ctx, vec({1, 1, 0}), vec({1, 0, 0}));
  CHECK(one_level2.sigma == doctest::Approx(0.75));
  CHECK(one_level2.gamma == doctest::Approx(1.0));

  const auto disjoint = sigma_gamma(ctx, vec({0, 0, 0}), vec({1, 1, 1}));
  CHECK(disjoint.sigma == 0.0);
  CHECK(disjoint.gamma == ctx.C);

  const MetricContext norm = MetricContext::make(t, true);
  CHECK(sigma_gamma(norm, vec({1, 1, 0}), vec({1, 0, 0})).gamma == doctest::Approx(0.25));
}

TEST_CASE("hamming") {
  CHECK(hamming(vec({1, 0, 1}), vec({1, 0, 1})) == 0);
  CHECK(hamming(vec({0, 0, 0}), vec({1, 1, 1})) == 3);
  CHECK_THROWS_AS(hamming(vec({1}), vec({1, 0})), DataError);
}

TEST_CASE("metric properties on random triples") {
  const Taxonomy t = fig1();
  const MetricContext ctx = MetricContext::make(t);
  Rng rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    const LabelVector a = random_vec(rng, t.size());
    const LabelVector b = random_vec(rng, t.size());
    const LabelVector c = random_vec(rng, t.size());
    const double ab = rho(ctx, a, b);
    CHECK(ab == oracle_rho(t, a, b));
    CHECK(ab >= 0.0);
    CHECK(ab <= ctx.C);
    CHECK(ab == rho(ctx, b, a));
    CHECK(rho(ctx, a, a) == 0.0);
    CHECK(ab <= rho(ctx, a, c) + rho(ctx, c, b));

    const auto sg = sigma_gamma(ctx, a, b);
    CHECK(sg.sigma >= 0.0);
    CHECK(sg.sigma <= 1.0);
    CHECK((sg.sigma == 1.0) == (a == b));
    CHECK(sg.gamma == doctest::Approx(ctx.C * (1.0 - sg.sigma)));
  }
}

TEST_CASE("depth-1 collapse: rho equals hamming") {
  std::istringstream in("A\tROOT\nB\tROOT\nC\tROOT\n");
  const Taxonomy t = Taxonomy::load(in);
  REQUIRE(t.max_depth() == 1);
  const MetricContext ctx = MetricContext::make(t);
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const LabelVector a = random_vec(rng, 3);
    const LabelVector b = random_vec(rng, 3);
    CHECK(rho(ctx, a, b) == static_cast<double>(hamming(a, b)));
  }
}

TEST_CASE("rho equals C exactly when every coordinate differs") {
  const Taxonomy t = small();
  const MetricContext ctx = MetricContext::make(t);
  CHECK(rho(ctx, vec({1, 0, 1}), vec({0, 1, 0})) == ctx.C);
  CHECK(rho(ctx, vec({1, 0, 1}), vec({0, 1, 1})) < ctx.C);
}
