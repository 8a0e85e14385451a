#include <algorithm>
#include <cmath>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "ivbounds/diagnostics.hpp"
#include "ivbounds/simulate.hpp"

using namespace ivbounds;
using Catch::Approx;

namespace {

// Three levels with exact propensities (0.2, 0.5, 0.8) and two switching
// groups whose outcome orderings cross between arms: the group switched by
// the first propensity step draws the treated outcome uniformly from {1, 2}
// and the untreated outcome always at 2; the second group is the mirror
// image. Cell counts are multiples of 1/20, so every estimated probability
// is an exact dyadic-ish rational and the difference quotients are exact.
data::Sample counterexample_sample() {
  data::Sample s;
  s.support.levels = {0.0, 1.0, 2.0};
  auto add = [&](std::size_t z, int d, double y, int count) {
    for (int i = 0; i < count; ++i) s.obs.push_back({y, d, z});
  };
  add(0, 1, 1.5, 4);
  add(0, 0, 1.0, 3);
  add(0, 0, 1.5, 4);
  add(0, 0, 2.0, 9);

  add(1, 1, 1.5, 4);
  add(1, 1, 1.0, 3);
  add(1, 1, 2.0, 3);
  add(1, 0, 1.0, 3);
  add(1, 0, 1.5, 4);
  add(1, 0, 2.0, 3);

  add(2, 1, 1.5, 4);
  add(2, 1, 1.0, 3);
  add(2, 1, 2.0, 9);
  add(2, 0, 1.5, 4);
  return s;
}

// Same observations with the first two instrument labels swapped, so the
// levels are no longer propensity-ordered as stored.
data::Sample relabeled_sample() {
  data::Sample s = counterexample_sample();
  for (auto& o : s.obs) {
    if (o.z == 0)
      o.z = 1;
    else if (o.z == 1)
      o.z = 0;
  }
  return s;
}

// Outcome independent of treatment and instrument at the given propensities:
// every complier group reproduces the marginal CDF in both arms.
data::EmpiricalModel independent_model(const std::vector<double>& props) {
  data::EmpiricalModel m;
  const std::size_t L = props.size();
  m.levels.resize(L);
  for (std::size_t l = 0; l < L; ++l) m.levels[l] = static_cast<double>(l);
  m.propensity = props;
  m.n_per_level.assign(L, 100);
  m.y_grid = {0.0, 0.25, 0.5, 0.75, 1.0};
  const std::vector<double> F = {0.2, 0.4, 0.6, 0.8, 1.0};
  m.treated_share = 0.5;
  for (int d = 0; d < 2; ++d) {
    m.joint[d].assign(L, std::vector<double>(F.size()));
    for (std::size_t l = 0; l < L; ++l) {
      const double w = d == 1 ? props[l] : 1.0 - props[l];
      for (std::size_t i = 0; i < F.size(); ++i) m.joint[d][l][i] = w * F[i];
    }
    m.marginal[d] = F;
  }
  return m;
}

double simpson(const std::function<double(double)>& f, double a, double b,
               int panels) {
  const double h = (b - a) / panels;
  double acc = f(a) + f(b);
  for (int i = 1; i < panels; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return acc * h / 3.0;
}

// Complier outcome CDF by univariate quadrature of the conditional normal,
// an evaluation path independent of the bivariate-CDF differencing.
double quadrature_complier_cdf(const sim::DgpConfig& cfg, int d, std::size_t l,
                               double y) {
  const auto zs = cfg.levels();
  const double chi = cfg.selection_index(zs[l]);
  const double clo = cfg.selection_index(zs[l - 1]);
  const double scale = d == 1 ? 2.0 * cfg.s1() : cfg.s0();
  const double shift = d == 1 ? 0.0 : 1.0;
  const double yt = (y - shift) / scale;
  const double rr = cfg.rho / (d == 1 ? cfg.s1() : cfg.s0());
  const double sd = std::sqrt(1.0 - rr * rr);
  const double num = simpson(
      [&](double t) {
        return math::normal_cdf((yt - rr * t) / sd) * math::normal_pdf(t);
      },
      clo, chi, 4000);
  return num / (math::normal_cdf(chi) - math::normal_cdf(clo));
}

// Exhaustive mixture search for the two-group case: both simplices are a
// segment, so a fine sweep over the two free coordinates brackets the LP.
double brute_force_violation(const diag::ComplierDecomposition& dec,
                             const std::vector<double>& grid, int arm) {
  const int other = 1 - arm;
  double worst = 0.0;
  for (int i = 0; i <= 100; ++i) {
    for (int j = 0; j <= 100; ++j) {
      const double w0 = i / 100.0, t0 = j / 100.0;
      bool feasible = true;
      for (double y : grid) {
        const double fd = w0 * dec.group_cdf(0, arm, y) +
                          (1.0 - w0) * dec.group_cdf(1, arm, y);
        const double ft = t0 * dec.group_cdf(0, arm, y) +
                          (1.0 - t0) * dec.group_cdf(1, arm, y);
        if (fd > ft + 1e-12) {
          feasible = false;
          break;
        }
      }
      if (!feasible) continue;
      for (double y : grid) {
        const double fd = w0 * dec.group_cdf(0, other, y) +
                          (1.0 - w0) * dec.group_cdf(1, other, y);
        const double ft = t0 * dec.group_cdf(0, other, y) +
                          (1.0 - t0) * dec.group_cdf(1, other, y);
        worst = std::max(worst, fd - ft);
      }
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("propensity spread is the gap between extreme take-up rates") {
  const data::EmpiricalModel m = data::estimate(counterexample_sample());
  REQUIRE(diag::propensity_spread(m) == Approx(0.6).margin(1e-12));
  REQUIRE(diag::propensity_spread(independent_model({0.2, 0.6})) ==
          Approx(0.4).margin(1e-15));
}

TEST_CASE("difference quotients recover the complier value by hand") {
  data::EmpiricalModel m;
  m.levels = {0.0, 1.0};
  m.propensity = {0.2, 0.6};
  m.n_per_level = {50, 50};
  m.treated_share = 0.4;
  m.y_grid = {0.0};
  m.joint[1] = {{0.1}, {0.3}};
  m.joint[0] = {{0.5}, {0.2}};
  m.marginal[1] = {0.25};
  m.marginal[0] = {0.35};

  const auto dec = diag::complier_cdfs(m);
  REQUIRE(dec.groups.size() == 1);
  REQUIRE(dec.groups[0].share == Approx(0.4).margin(1e-15));
  REQUIRE(dec.always_share == Approx(0.2).margin(1e-15));
  REQUIRE(dec.never_share == Approx(0.4).margin(1e-15));
  // treated: (0.3 - 0.1)/0.4, untreated: (0.5 - 0.2)/0.4
  REQUIRE(dec.groups[0].cdf_treated[0] == Approx(0.5).margin(1e-15));
  REQUIRE(dec.groups[0].cdf_untreated[0] == Approx(0.75).margin(1e-15));
}

TEST_CASE("counterexample decomposition has the exact planted group curves") {
  const data::EmpiricalModel m = data::estimate(counterexample_sample());
  REQUIRE(m.propensity[0] == Approx(0.2).margin(1e-12));
  REQUIRE(m.propensity[1] == Approx(0.5).margin(1e-12));
  REQUIRE(m.propensity[2] == Approx(0.8).margin(1e-12));
  REQUIRE(m.y_grid == std::vector<double>{1.0, 1.5, 2.0});

  const auto dec = diag::complier_cdfs(m);
  REQUIRE(dec.order == std::vector<std::size_t>{0, 1, 2});
  REQUIRE(dec.groups.size() == 2);
  REQUIRE(dec.n_kept() == 2);
  REQUIRE(dec.warnings.empty());
  REQUIRE(dec.always_share == Approx(0.2).margin(1e-12));
  REQUIRE(dec.never_share == Approx(0.2).margin(1e-12));
  const double total = dec.always_share + dec.never_share +
                       dec.groups[0].share + dec.groups[1].share;
  REQUIRE(total == Approx(1.0).margin(1e-12));

  const std::vector<double> unif = {0.5, 0.5, 1.0};
  const std::vector<double> point = {0.0, 0.0, 1.0};
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(dec.groups[0].cdf_treated[i] == Approx(unif[i]).margin(1e-12));
    CHECK(dec.groups[0].cdf_untreated[i] == Approx(point[i]).margin(1e-12));
    CHECK(dec.groups[1].cdf_treated[i] == Approx(point[i]).margin(1e-12));
    CHECK(dec.groups[1].cdf_untreated[i] == Approx(unif[i]).margin(1e-12));
  }
  CHECK(dec.groups[0].shape_violation_treated <= 1e-12);
  CHECK(dec.groups[0].shape_violation_untreated <= 1e-12);
  CHECK(dec.groups[1].shape_violation_treated <= 1e-12);
  CHECK(dec.groups[1].shape_violation_untreated <= 1e-12);

  SECTION("off-grid lookups follow the right-continuous step") {
    CHECK(dec.group_cdf(0, 1, 0.9) == 0.0);
    CHECK(dec.group_cdf(0, 1, 1.25) == Approx(0.5).margin(1e-12));
    CHECK(dec.group_cdf(0, 1, 1.5) == Approx(0.5).margin(1e-12));
    CHECK(dec.group_cdf(0, 1, 2.0) == Approx(1.0).margin(1e-12));
    CHECK(dec.group_cdf(0, 1, 2.5) == Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("independent outcome makes every complier curve the marginal") {
  const data::EmpiricalModel m = independent_model({0.25, 0.5, 0.75});
  const auto dec = diag::complier_cdfs(m);
  REQUIRE(dec.n_kept() == 2);
  for (const auto& g : dec.groups) {
    for (std::size_t i = 0; i < m.y_grid.size(); ++i) {
      CHECK(g.cdf_treated[i] == Approx(m.marginal[1][i]).margin(1e-12));
      CHECK(g.cdf_untreated[i] == Approx(m.marginal[0][i]).margin(1e-12));
    }
  }
  for (int arm : {1, 0}) {
    const auto r = diag::fosd_preservation_test(dec, m.y_grid, arm);
    CHECK(r.passed);
    CHECK(r.violation <= 1e-12);
  }
}

TEST_CASE("a dominance ordering that flips across arms is detected exactly") {
  const data::EmpiricalModel m = data::estimate(counterexample_sample());
  const auto dec = diag::complier_cdfs(m);

  SECTION("treated-arm dominance, untreated-arm break") {
    const auto r = diag::fosd_preservation_test(dec, m.y_grid, 1);
    REQUIRE_FALSE(r.passed);
    REQUIRE(r.dominance_arm == 1);
    REQUIRE(r.violation == Approx(0.5).margin(1e-9));
    REQUIRE(r.y_star == Approx(1.0).margin(1e-12));
    REQUIRE(r.group_index == std::vector<std::size_t>{0, 1});
    // the dominant mixture is the second group alone, the dominated the first
    REQUIRE(r.w_dominant[0] == Approx(0.0).margin(1e-9));
    REQUIRE(r.w_dominant[1] == Approx(1.0).margin(1e-9));
    REQUIRE(r.w_dominated[0] == Approx(1.0).margin(1e-9));
    REQUIRE(r.w_dominated[1] == Approx(0.0).margin(1e-9));
  }

  SECTION("untreated-arm dominance, treated-arm break, witnesses swap") {
    const auto r = diag::fosd_preservation_test(dec, m.y_grid, 0);
    REQUIRE_FALSE(r.passed);
    REQUIRE(r.violation == Approx(0.5).margin(1e-9));
    REQUIRE(r.y_star == Approx(1.0).margin(1e-12));
    REQUIRE(r.w_dominant[0] == Approx(1.0).margin(1e-9));
    REQUIRE(r.w_dominated[1] == Approx(1.0).margin(1e-9));
  }

  SECTION("witness weights are simplex points and mixtures stay in hull") {
    const auto r = diag::fosd_preservation_test(dec, m.y_grid, 1);
    double sd = 0.0, st = 0.0;
    for (std::size_t g = 0; g < r.w_dominant.size(); ++g) {
      CHECK(r.w_dominant[g] >= -1e-12);
      CHECK(r.w_dominated[g] >= -1e-12);
      sd += r.w_dominant[g];
      st += r.w_dominated[g];
    }
    CHECK(sd == Approx(1.0).margin(1e-9));
    CHECK(st == Approx(1.0).margin(1e-9));
    CHECK(r.violation >= 0.0);
    for (int d = 0; d < 2; ++d) {
      for (double y : m.y_grid) {
        double mix = 0.0, lo = 1e300, hi = -1e300;
        for (std::size_t g = 0; g < r.group_index.size(); ++g) {
          const double f = dec.group_cdf(r.group_index[g], d, y);
          mix += r.w_dominant[g] * f;
          lo = std::min(lo, f);
          hi = std::max(hi, f);
        }
        CHECK(mix >= lo - 1e-12);
        CHECK(mix <= hi + 1e-12);
      }
    }
  }

  SECTION("exhaustive mixture sweep brackets the LP answer") {
    for (int arm : {1, 0}) {
      const auto r = diag::fosd_preservation_test(dec, m.y_grid, arm);
      const double brute = brute_force_violation(dec, m.y_grid, arm);
      CHECK(brute == Approx(r.violation).margin(1e-9));
    }
  }
}

TEST_CASE("propensity reordering unscrambles permuted instrument labels") {
  const data::EmpiricalModel m = data::estimate(relabeled_sample());
  REQUIRE(m.propensity[0] == Approx(0.5).margin(1e-12));
  REQUIRE(m.propensity[1] == Approx(0.2).margin(1e-12));

  const auto dec = diag::complier_cdfs(m);
  REQUIRE(dec.order == std::vector<std::size_t>{1, 0, 2});
  REQUIRE(dec.groups[0].lo_level == 1);
  REQUIRE(dec.groups[0].hi_level == 0);
  REQUIRE(dec.groups[1].lo_level == 0);
  REQUIRE(dec.groups[1].hi_level == 2);
  REQUIRE(dec.always_share == Approx(0.2).margin(1e-12));

  const std::vector<double> unif = {0.5, 0.5, 1.0};
  const std::vector<double> point = {0.0, 0.0, 1.0};
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(dec.groups[0].cdf_treated[i] == Approx(unif[i]).margin(1e-12));
    CHECK(dec.groups[1].cdf_untreated[i] == Approx(unif[i]).margin(1e-12));
    CHECK(dec.groups[0].cdf_untreated[i] == Approx(point[i]).margin(1e-12));
  }
  const auto r = diag::fosd_preservation_test(dec, m.y_grid, 1);
  CHECK(r.violation == Approx(0.5).margin(1e-9));
  CHECK(r.y_star == Approx(1.0).margin(1e-12));
}

TEST_CASE("population complier curves match the analytic group distributions") {
  sim::DgpConfig cfg;
  cfg.n_levels = 3;
  const auto grid = sim::population_grid(cfg, 25);
  const auto m = sim::population_model(cfg, grid);
  const auto dec = diag::complier_cdfs(m);
  REQUIRE(dec.groups.size() == 2);

  const double expected_share =
      math::normal_cdf(0.0) - math::normal_cdf(-0.5);
  CHECK(dec.groups[0].share == Approx(expected_share).margin(1e-12));
  CHECK(dec.groups[1].share ==
        Approx(math::normal_cdf(0.5) - math::normal_cdf(0.0)).margin(1e-12));

  for (std::size_t g = 0; g < 2; ++g) {
    const auto& gr = dec.groups[g];
    CHECK(gr.shape_violation_treated <= 1e-10);
    CHECK(gr.shape_violation_untreated <= 1e-10);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double y = grid[i];
      CHECK(gr.cdf_treated[i] >= -1e-12);
      CHECK(gr.cdf_treated[i] <= 1.0 + 1e-12);
      CHECK(dec.group_cdf(g, 1, y) ==
            Approx(sim::pop::complier_cdf(cfg, 1, g + 1, y)).margin(1e-10));
      CHECK(dec.group_cdf(g, 0, y) ==
            Approx(sim::pop::complier_cdf(cfg, 0, g + 1, y)).margin(1e-10));
    }
  }

  SECTION("bivariate differencing agrees with univariate quadrature") {
    for (std::size_t l : {std::size_t{1}, std::size_t{2}}) {
      for (int d : {1, 0}) {
        for (double y : {-1.0, 0.3, 1.2}) {
          CHECK(sim::pop::complier_cdf(cfg, d, l, y) ==
                Approx(quadrature_complier_cdf(cfg, d, l, y)).margin(1e-7));
        }
      }
    }
  }
}

TEST_CASE("population orderings are preserved where the model promises") {
  SECTION("three levels: both directions pass") {
    sim::DgpConfig cfg;
    cfg.n_levels = 3;
    const auto grid = sim::population_grid(cfg, 25);
    const auto dec = diag::complier_cdfs(sim::population_model(cfg, grid));
    for (int arm : {1, 0}) {
      const auto r = diag::fosd_preservation_test(dec, grid, arm, 1e-6);
      CHECK(r.passed);
      CHECK(r.violation <= 1e-12);
    }
  }

  SECTION("six levels: the treated direction passes on a dense grid") {
    sim::DgpConfig cfg;
    const auto grid = sim::population_grid(cfg, 101);
    const auto dec = diag::complier_cdfs(sim::population_model(cfg, grid));
    const auto r = diag::fosd_preservation_test(dec, grid, 1, 1e-6);
    CHECK(r.passed);
    CHECK(r.violation <= 1e-6);
  }

  SECTION("no extra untreated noise: both directions pass") {
    sim::DgpConfig cfg;
    cfg.sigma_v = 0.0;  // arms become monotone transforms of one latent draw
    const auto grid = sim::population_grid(cfg, 201);
    const auto dec = diag::complier_cdfs(sim::population_model(cfg, grid));
    for (int arm : {1, 0}) {
      const auto r = diag::fosd_preservation_test(dec, grid, arm, 1e-5);
      CHECK(r.passed);
      CHECK(r.violation <= 5e-6);
    }
  }
}

TEST_CASE("extra untreated-arm noise genuinely breaks the reverse direction") {
  // With independent noise added to the untreated arm only, mixtures can be
  // ordered in the noisy arm while their latent orderings cross; the treated
  // arm exposes the crossing. The violation persists as the grid refines and
  // is certified here against the analytic complier curves.
  sim::DgpConfig cfg;
  const auto grid = sim::population_grid(cfg, 201);
  const auto dec = diag::complier_cdfs(sim::population_model(cfg, grid));
  const auto r = diag::fosd_preservation_test(dec, grid, 0, 1e-6);
  REQUIRE_FALSE(r.passed);
  REQUIRE(r.violation > 4.5e-5);
  REQUIRE(r.violation < 6.5e-5);

  // the witness mixtures really are ordered in the untreated arm ...
  double min_slack = 1e300;
  for (int i = -1200; i <= 1200; ++i) {
    const double y = 0.01 * i;
    double fdom = 0.0, fdted = 0.0;
    for (std::size_t g = 0; g < r.group_index.size(); ++g) {
      const double f = sim::pop::complier_cdf(cfg, 0, r.group_index[g] + 1, y);
      fdom += r.w_dominant[g] * f;
      fdted += r.w_dominated[g] * f;
    }
    min_slack = std::min(min_slack, fdted - fdom);
  }
  REQUIRE(min_slack >= -1e-6);

  // ... and the treated-arm gap at the witness point matches the LP value.
  double gap = 0.0;
  {
    double fdom = 0.0, fdted = 0.0;
    for (std::size_t g = 0; g < r.group_index.size(); ++g) {
      const double f =
          sim::pop::complier_cdf(cfg, 1, r.group_index[g] + 1, r.y_star);
      fdom += r.w_dominant[g] * f;
      fdted += r.w_dominated[g] * f;
    }
    gap = fdom - fdted;
  }
  REQUIRE(gap == Approx(r.violation).margin(1e-7));
}

TEST_CASE("share floor drops thin groups and reports the loss") {
  const data::EmpiricalModel m = independent_model({0.2, 0.21, 0.8});

  SECTION("default floor drops the one-percent group") {
    const auto dec = diag::complier_cdfs(m);
    REQUIRE(dec.groups.size() == 2);
    REQUIRE(dec.n_kept() == 1);
    REQUIRE_FALSE(dec.groups[0].kept);
    REQUIRE(dec.groups[0].cdf_treated.empty());
    REQUIRE(dec.groups[1].kept);
    REQUIRE(dec.warnings.size() == 1);
    CHECK(dec.warnings[0].find("dropped") != std::string::npos);

    const auto r = diag::fosd_preservation_test(dec, m.y_grid, 1);
    CHECK(r.passed);  // a single group cannot witness a reversal
    CHECK(r.group_index == std::vector<std::size_t>{1});
  }

  SECTION("a lower floor keeps it") {
    const auto dec = diag::complier_cdfs(m, 0.005);
    REQUIRE(dec.n_kept() == 2);
    REQUIRE(dec.warnings.empty());
  }

  SECTION("no group above the floor leaves the test without data") {
    const auto thin = diag::complier_cdfs(
        independent_model({0.30, 0.305, 0.315}));
    REQUIRE(thin.n_kept() == 0);
    REQUIRE(thin.warnings.size() == 2);
    REQUIRE_THROWS_AS(diag::fosd_preservation_test(thin, {0.0, 1.0}, 1),
                      DataError);
  }
}

TEST_CASE("dominance test rejects bad configuration") {
  const auto dec =
      diag::complier_cdfs(independent_model({0.25, 0.5, 0.75}));
  REQUIRE_THROWS_AS(diag::fosd_preservation_test(dec, {0.0, 1.0}, 2),
                    ConfigError);
  REQUIRE_THROWS_AS(diag::fosd_preservation_test(dec, {}, 1), ConfigError);
}

TEST_CASE("violation experiment: reference line and the zero case") {
  // Negative selection with two levels pins the weight vector uniquely, and
  // that vector satisfies the population dominance system everywhere: the
  // fitted solution is feasible for every outcome, so no fresh draw can
  // violate it.
  diag::ViolationConfig vc;
  vc.dgp.n_levels = 2;
  vc.dgp.rho = -0.5;
  vc.dgp.n = 25;
  vc.reps = 6;
  vc.eval_n = 4000;

  const auto rep = diag::violation_experiment(vc);
  REQUIRE(rep.n == 25);
  REQUIRE(rep.reps == 6);
  REQUIRE(rep.bound == Approx(1.0 / 26.0).margin(1e-15));
  REQUIRE(rep.infeasible_reps == 0);
  REQUIRE(rep.per_rep.size() == 6);
  for (double v : rep.per_rep) CHECK(v == 0.0);
  CHECK(rep.mean_violation == 0.0);
  CHECK(rep.mc_stderr == 0.0);
  CHECK(rep.ybar == sim::pop::pooled_quantile(vc.dgp, 0.5));

  SECTION("nine fitting points give the textbook reference value") {
    vc.dgp.n = 9;
    vc.reps = 2;
    vc.eval_n = 200;
    const auto r9 = diag::violation_experiment(vc);
    REQUIRE(r9.bound == 0.1);
  }
}

TEST_CASE("violation experiment: one effective dimension meets the line") {
  // Three levels minus two normalization rows leave one degree of freedom,
  // the regime in which the 1/(n+1) guarantee is sharp: the mean violation
  // concentrates at the line instead of drifting above it.
  diag::ViolationConfig vc;
  vc.dgp.n_levels = 3;
  vc.dgp.n = 30;
  vc.reps = 60;
  vc.eval_n = 10000;
  const auto rep = diag::violation_experiment(vc);
  REQUIRE(rep.infeasible_reps == 0);
  REQUIRE(rep.mc_stderr > 0.0);
  CHECK(rep.mean_violation <= rep.bound + 3.0 * rep.mc_stderr);
  CHECK(rep.mean_violation >= rep.bound - 3.0 * rep.mc_stderr);
}

TEST_CASE("violation experiment: more free weights cost more violations") {
  // Six levels leave four degrees of freedom and about four binding rows at
  // the optimum; each contributes roughly 1/(n+1) of escape mass, so the
  // mean sits well above the single-constraint line while still decaying
  // at the 1/n rate.
  diag::ViolationConfig vc;
  vc.dgp.n = 150;
  vc.reps = 40;
  vc.eval_n = 20000;
  const auto r150 = diag::violation_experiment(vc);
  REQUIRE(r150.infeasible_reps == 0);
  REQUIRE(r150.bound == Approx(1.0 / 151.0).margin(1e-15));
  CHECK(r150.mean_violation > 2.0 * r150.bound);
  CHECK(r150.mean_violation < 8.0 * r150.bound);

  vc.dgp.n = 400;
  const auto r400 = diag::violation_experiment(vc);
  REQUIRE(r400.infeasible_reps == 0);
  CHECK(r400.mean_violation > 2.0 * r400.bound);
  CHECK(r400.mean_violation < 8.0 * r400.bound);
  CHECK(r400.mean_violation < 0.6 * r150.mean_violation);
}

TEST_CASE("violation experiment: deterministic given the seed") {
  diag::ViolationConfig vc;
  vc.dgp.n_levels = 3;
  vc.dgp.n = 40;
  vc.reps = 4;
  vc.eval_n = 3000;
  const auto a = diag::violation_experiment(vc);
  const auto b = diag::violation_experiment(vc);
  REQUIRE(a.per_rep == b.per_rep);
  REQUIRE(a.mean_violation == b.mean_violation);

  vc.seed = 8;
  const auto c = diag::violation_experiment(vc);
  REQUIRE(a.per_rep != c.per_rep);
}

TEST_CASE("violation experiment: untreated arm and explicit evaluation point") {
  diag::ViolationConfig vc;
  vc.dgp.n_levels = 3;
  vc.dgp.n = 60;
  vc.reps = 5;
  vc.eval_n = 2000;
  vc.arm = Arm::untreated;
  vc.side = bounds::Side::lower;
  vc.ybar = 0.9;
  const auto rep = diag::violation_experiment(vc);
  REQUIRE(rep.ybar == 0.9);
  REQUIRE(rep.per_rep.size() == 5);
  REQUIRE(rep.infeasible_reps == 0);
  for (double v : rep.per_rep) {
    CHECK(v >= 0.0);
    CHECK(v <= 0.2);
  }
}

TEST_CASE("violation experiment: failure modes are loud") {
  diag::ViolationConfig vc;
  vc.dgp.n_levels = 3;
  vc.dgp.n = 20;
  vc.reps = 0;
  REQUIRE_THROWS_AS(diag::violation_experiment(vc), ConfigError);

  vc.reps = 5;
  vc.eval_n = 0;
  REQUIRE_THROWS_AS(diag::violation_experiment(vc), ConfigError);

  vc.eval_n = 100;
  vc.dgp.rho = 1.5;
  REQUIRE_THROWS_AS(diag::violation_experiment(vc), ConfigError);

  SECTION("structurally infeasible pinned weights fail every replication") {
    // Positive selection with two levels pins a weight vector that violates
    // the population dominance system on a wide outcome region: every
    // replication's LP is infeasible and the experiment reports the failure.
    diag::ViolationConfig bad;
    bad.dgp.n_levels = 2;
    bad.dgp.n = 9;
    bad.reps = 3;
    bad.eval_n = 100;
    REQUIRE_THROWS_AS(diag::violation_experiment(bad), SolverError);
  }
}
