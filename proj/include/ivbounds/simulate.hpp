#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "ivbounds/dataset.hpp"
#include "ivbounds/errors.hpp"
#include "ivbounds/util.hpp"

namespace ivbounds::math {

inline constexpr double pi = 3.141592653589793238462643383279502884;

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * pi);
}

// Rational initial guess (Acklam) polished with one Halley step; good to
// ~1e-15 over (0,1).
inline double normal_quantile(double p) {
  if (p <= 0.0 || p >= 1.0) {
    if (p == 0.0) return -util::inf;
    if (p == 1.0) return util::inf;
    throw std::domain_error("normal_quantile: p outside [0,1]");
  }
  static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                              -2.759285104469687e+02, 1.383577518672690e+02,
                              -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                              -1.556989798598866e+02, 6.680131188771972e+01,
                              -1.328068155288572e+01};
  static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                              -2.400758277161838e+00, -2.549732539343734e+00,
                              4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

namespace detail {

// Upper-orthant probability P[X > dh, Y > dk] for a standard bivariate
// normal pair with correlation r. Gauss-Legendre quadrature on Drezner's
// tetrachoric integral, switching to the transformed integrand near |r|=1.
inline double bvnu(double dh, double dk, double r) {
  if (std::isnan(dh) || std::isnan(dk)) return std::numeric_limits<double>::quiet_NaN();
  if (dh == util::inf || dk == util::inf) return 0.0;
  if (dh == -util::inf) return dk == -util::inf ? 1.0 : normal_cdf(-dk);
  if (dk == -util::inf) return normal_cdf(-dh);
  if (r == 0.0) return normal_cdf(-dh) * normal_cdf(-dk);

  static const double w6[3] = {0.1713244923791705, 0.3607615730481384,
                               0.4679139345726904};
  static const double x6[3] = {0.9324695142031522, 0.6612093864662647,
                               0.2386191860831970};
  static const double w12[6] = {0.04717533638651177, 0.1069393259953183,
                                0.1600783285433464,  0.2031674267230659,
                                0.2334925365383547,  0.2491470458134029};
  static const double x12[6] = {0.9815606342467191, 0.9041172563704750,
                                0.7699026741943050, 0.5873179542866171,
                                0.3678314989981802, 0.1252334085114692};
  static const double w20[10] = {0.01761400713915212, 0.04060142980038694,
                                 0.06267204833410906, 0.08327674157670475,
                                 0.1019301198172404,  0.1181945319615184,
                                 0.1316886384491766,  0.1420961093183821,
                                 0.1491729864726037,  0.1527533871307259};
  static const double x20[10] = {0.9931285991850949,  0.9639719272779138,
                                 0.9122344282513259,  0.8391169718222188,
                                 0.7463319064601508,  0.6360536807265150,
                                 0.5108670019508271,  0.3737060887154196,
                                 0.2277858511416451,  0.07652652113349733};
  const double* w;
  const double* x;
  int ng;
  const double ar = std::fabs(r);
  if (ar < 0.3) {
    w = w6, x = x6, ng = 3;
  } else if (ar < 0.75) {
    w = w12, x = x12, ng = 6;
  } else {
    w = w20, x = x20, ng = 10;
  }

  double h = dh, k = dk, hk = h * k, bvn = 0.0;
  const double tp = 2.0 * pi;
  if (ar < 0.925) {
    const double hs = 0.5 * (h * h + k * k);
    const double asr = 0.5 * std::asin(r);
    for (int i = 0; i < ng; ++i)
      for (int is = -1; is <= 1; is += 2) {
        const double sn = std::sin(asr * (1.0 + is * x[i]));
        bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      }
    bvn = bvn * asr / tp + normal_cdf(-h) * normal_cdf(-k);
  } else {
    if (r < 0.0) {
      k = -k;
      hk = -hk;
    }
    if (ar < 1.0) {
      const double as = (1.0 - r) * (1.0 + r);
      double a = std::sqrt(as);
      const double bs = (h - k) * (h - k);
      const double c = (4.0 - hk) / 8.0;
      const double d = (12.0 - hk) / 80.0;
      const double asr0 = -0.5 * (bs / as + hk);
      if (asr0 > -100.0)
        bvn = a * std::exp(asr0) *
              (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
      if (hk > -100.0) {
        const double bb = std::sqrt(bs);
        const double sp = std::sqrt(tp) * normal_cdf(-bb / a);
        bvn -= std::exp(-0.5 * hk) * sp * bb * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
      }
      a *= 0.5;
      for (int i = 0; i < ng; ++i)
        for (int is = -1; is <= 1; is += 2) {
          double xs = a * (1.0 + is * x[i]);
          xs *= xs;
          const double rs = std::sqrt(1.0 - xs);
          const double asr1 = -0.5 * (bs / xs + hk);
          if (asr1 > -100.0) {
            const double sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
            const double ep = std::exp(-0.5 * hk * (1.0 - rs) / (1.0 + rs)) / rs;
            bvn += a * w[i] * std::exp(asr1) * (ep - sp);
          }
        }
      bvn = -bvn / tp;
    }
    if (r > 0.0)
      bvn += normal_cdf(-std::max(h, k));
    else
      bvn = -bvn + std::max(0.0, normal_cdf(-h) - normal_cdf(-k));
  }
  return std::max(0.0, std::min(1.0, bvn));
}

}  // namespace detail

// P[X <= x, Y <= y] for standard bivariate normal with correlation rho.
inline double bvn_cdf(double x, double y, double rho) {
  if (!(rho >= -1.0 && rho <= 1.0))
    throw std::domain_error("bvn_cdf: correlation outside [-1,1]");
  return detail::bvnu(-x, -y, rho);
}

}  // namespace ivbounds::math

namespace ivbounds::sim {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Deterministic stream-splittable generator: (seed, stream) pairs map to
// independent mt19937_64 states, identical across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::uint64_t s = seed;
    detail::splitmix64(s);
    s ^= 0xD1B54A32D192ED03ULL * (stream + 1);
    const std::uint64_t mixed = detail::splitmix64(s);
    eng_.seed(mixed);
  }

  // Uniform on [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (have_cache_) {
      have_cache_ = false;
      return cache_;
    }
    const double u1 = 1.0 - uniform();  // (0,1], keeps log finite
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * math::pi * u2;
    cache_ = r * std::sin(th);
    have_cache_ = true;
    return r * std::cos(th);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Trial count is small everywhere this is used; a Bernoulli sum keeps the
  // draw sequence platform-independent.
  std::size_t binomial(std::size_t trials, double p) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < trials; ++i) c += bernoulli(p) ? 1 : 0;
    return c;
  }

 private:
  std::mt19937_64 eng_;
  bool have_cache_ = false;
  double cache_ = 0.0;
};

// Triangular selection design: outcomes share a scalar latent factor with
// the selection shock, treatment switches on when the instrument pushes the
// index past the shock. Both potential-outcome noises share one component so
// the two arms stay dependent.
struct DgpConfig {
  double rho = 0.5;        // corr(latent factor, selection shock)
  double sigma_xi = 0.3;   // shared outcome noise scale
  double sigma_v = 0.4;    // extra untreated-arm noise scale
  double pi0 = -0.5;       // selection index intercept
  double pi1 = 1.0;        // selection index slope
  double binom_p = 0.5;    // instrument level distribution parameter
  std::size_t n_levels = 6;
  std::size_t n = 100000;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(rho > -1.0 && rho < 1.0)) throw ConfigError("rho must be in (-1,1)");
    if (sigma_xi < 0.0 || sigma_v < 0.0) throw ConfigError("noise scales must be >= 0");
    if (!(binom_p > 0.0 && binom_p < 1.0))
      throw ConfigError("binom_p must be in (0,1)");
    if (n_levels < 2) throw ConfigError("need at least two instrument levels");
    if (n == 0) throw ConfigError("sample size must be positive");
    if (!std::isfinite(pi0) || !std::isfinite(pi1))
      throw ConfigError("selection coefficients must be finite");
  }

  // Scale of the treated / untreated outcome around its mean.
  double s1() const { return std::sqrt(1.0 + sigma_xi * sigma_xi); }
  double s0() const {
    return std::sqrt(1.0 + sigma_xi * sigma_xi + sigma_v * sigma_v);
  }

  // Instrument support: l/(L-1) for l = 0..L-1.
  std::vector<double> levels() const {
    std::vector<double> z(n_levels);
    for (std::size_t l = 0; l < n_levels; ++l)
      z[l] = static_cast<double>(l) / static_cast<double>(n_levels - 1);
    return z;
  }

  // Binomial(L-1, binom_p) pmf over the levels.
  std::vector<double> level_probs() const {
    const auto m = static_cast<double>(n_levels - 1);
    std::vector<double> pr(n_levels);
    for (std::size_t l = 0; l < n_levels; ++l) {
      const auto ld = static_cast<double>(l);
      const double lc = std::lgamma(m + 1.0) - std::lgamma(ld + 1.0) -
                        std::lgamma(m - ld + 1.0);
      pr[l] = std::exp(lc + ld * std::log(binom_p) +
                       (m - ld) * std::log(1.0 - binom_p));
    }
    return pr;
  }

  double selection_index(double z) const { return pi0 + pi1 * z; }
};

inline data::Sample draw_sample(const DgpConfig& cfg, std::uint64_t seed,
                                std::uint64_t stream = 0) {
  cfg.validate();
  Rng rng(seed, stream);
  data::Sample s;
  s.support.levels = cfg.levels();
  s.obs.resize(cfg.n);
  const std::vector<double> zs = s.support.levels;
  const double rho_c = std::sqrt(1.0 - cfg.rho * cfg.rho);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const std::size_t zi = rng.binomial(cfg.n_levels - 1, cfg.binom_p);
    const double nu = rng.normal();   // latent factor U
    const double ne = rng.normal();   // selection shock component
    const double n1 = rng.normal();   // shared outcome noise
    const double n2 = rng.normal();   // untreated-only noise
    const double u = nu;
    const double eta = cfg.rho * nu + rho_c * ne;
    const double xi1 = cfg.sigma_xi * n1;
    const int d = cfg.selection_index(zs[zi]) >= eta ? 1 : 0;
    const double y = d == 1 ? 2.0 * (u + xi1)
                            : 1.0 + u + xi1 + cfg.sigma_v * n2;
    s.obs[i] = {y, d, zi};
  }
  return s;
}

inline data::Sample draw_sample(const DgpConfig& cfg) {
  return draw_sample(cfg, cfg.seed, 0);
}

// Closed forms for the same design. All conditional probabilities are exact
// bivariate-normal expressions; see the per-function reductions.
namespace pop {

inline double propensity(const DgpConfig& cfg, double z) {
  return math::normal_cdf(cfg.selection_index(z));
}

// P[Y <= y, D = 1 | Z = z]: standardize the treated outcome, note its
// correlation with the selection shock is rho / s1.
inline double joint_treated(const DgpConfig& cfg, double y, double z) {
  const double s1 = cfg.s1();
  return math::bvn_cdf(y / (2.0 * s1), cfg.selection_index(z), cfg.rho / s1);
}

// P[Y <= y, D = 0 | Z = z] = P[Y0 <= y] - P[Y0 <= y, D = 1 | z].
inline double joint_untreated(const DgpConfig& cfg, double y, double z) {
  const double s0 = cfg.s0();
  const double yt = (y - 1.0) / s0;
  return math::normal_cdf(yt) -
         math::bvn_cdf(yt, cfg.selection_index(z), cfg.rho / s0);
}

inline double joint(const DgpConfig& cfg, int d, double y, double z) {
  return d == 1 ? joint_treated(cfg, y, z) : joint_untreated(cfg, y, z);
}

inline double treated_share(const DgpConfig& cfg) {
  const auto zs = cfg.levels();
  const auto pr = cfg.level_probs();
  double t = 0.0;
  for (std::size_t l = 0; l < zs.size(); ++l) t += pr[l] * propensity(cfg, zs[l]);
  return t;
}

// P[Y <= y | D = d], mixing over the instrument distribution.
inline double marginal(const DgpConfig& cfg, int d, double y) {
  const auto zs = cfg.levels();
  const auto pr = cfg.level_probs();
  double num = 0.0, den = 0.0;
  for (std::size_t l = 0; l < zs.size(); ++l) {
    num += pr[l] * joint(cfg, d, y, zs[l]);
    const double p = propensity(cfg, zs[l]);
    den += pr[l] * (d == 1 ? p : 1.0 - p);
  }
  return num / den;
}

inline double pooled_cdf(const DgpConfig& cfg, double y) {
  const auto zs = cfg.levels();
  const auto pr = cfg.level_probs();
  double v = 0.0;
  for (std::size_t l = 0; l < zs.size(); ++l)
    v += pr[l] * (joint_treated(cfg, y, zs[l]) + joint_untreated(cfg, y, zs[l]));
  return v;
}

inline double pooled_quantile(const DgpConfig& cfg, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::domain_error("tau outside (0,1)");
  double lo = -32.0, hi = 32.0;
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    (pooled_cdf(cfg, mid) < tau ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// True counterfactual CDF of the unobserved arm within the observed group:
// for Arm::treated this is P[Y0 <= y | D = 1], for Arm::untreated it is
// P[Y1 <= y | D = 0]. The identity P[Y0 <= y, D=1 | z] =
// Phi(yt) - joint-style term reuses the same bivariate orthant formula.
inline double counterfactual_cdf(const DgpConfig& cfg, Arm arm, double y) {
  const auto zs = cfg.levels();
  const auto pr = cfg.level_probs();
  double num = 0.0, den = 0.0;
  for (std::size_t l = 0; l < zs.size(); ++l) {
    const double c = cfg.selection_index(zs[l]);
    const double p = math::normal_cdf(c);
    if (arm == Arm::treated) {
      const double yt = (y - 1.0) / cfg.s0();
      num += pr[l] * math::bvn_cdf(yt, c, cfg.rho / cfg.s0());
      den += pr[l] * p;
    } else {
      const double yt = y / (2.0 * cfg.s1());
      num += pr[l] * (math::normal_cdf(yt) - math::bvn_cdf(yt, c, cfg.rho / cfg.s1()));
      den += pr[l] * (1.0 - p);
    }
  }
  return num / den;
}

// Mean of the unobserved arm within the observed group (exact normal
// selection formulas via the inverse-Mills ratio).
inline double counterfactual_mean(const DgpConfig& cfg, Arm arm) {
  const auto zs = cfg.levels();
  const auto pr = cfg.level_probs();
  double num = 0.0, den = 0.0;
  for (std::size_t l = 0; l < zs.size(); ++l) {
    const double c = cfg.selection_index(zs[l]);
    const double p = math::normal_cdf(c);
    if (arm == Arm::treated) {
      // E[Y0 | eta <= c] = 1 + rho * E[U-part | ...]; only the shared latent
      // factor is correlated with eta, so E[Y0 1{D=1}] = P - rho*phi(c).
      num += pr[l] * (p - cfg.rho * math::normal_pdf(c));
      den += pr[l] * p;
    } else {
      num += pr[l] * (2.0 * cfg.rho * math::normal_pdf(c));
      den += pr[l] * (1.0 - p);
    }
  }
  return num / den;
}

// Observed-arm conditional mean E[Y | D], same selection algebra.
inline double observed_mean(const DgpConfig& cfg, int d) {
  const auto zs = cfg.levels();
  const auto pr = cfg.level_probs();
  double num = 0.0, den = 0.0;
  for (std::size_t l = 0; l < zs.size(); ++l) {
    const double c = cfg.selection_index(zs[l]);
    const double p = math::normal_cdf(c);
    if (d == 1) {
      num += pr[l] * (-2.0 * cfg.rho * math::normal_pdf(c));
      den += pr[l] * p;
    } else {
      num += pr[l] * (1.0 - p + cfg.rho * math::normal_pdf(c));
      den += pr[l] * (1.0 - p);
    }
  }
  return num / den;
}

// CDF of the indicated arm within the complier group switched between
// levels l-1 and l (1-based l up to L-1).
inline double complier_cdf(const DgpConfig& cfg, int d, std::size_t l, double y) {
  const auto zs = cfg.levels();
  if (l == 0 || l >= zs.size())
    throw std::domain_error("complier group index out of range");
  const double chi = cfg.selection_index(zs[l]);
  const double clo = cfg.selection_index(zs[l - 1]);
  const double den = math::normal_cdf(chi) - math::normal_cdf(clo);
  double yt, rr;
  if (d == 1) {
    yt = y / (2.0 * cfg.s1());
    rr = cfg.rho / cfg.s1();
  } else {
    yt = (y - 1.0) / cfg.s0();
    rr = cfg.rho / cfg.s0();
  }
  return (math::bvn_cdf(yt, chi, rr) - math::bvn_cdf(yt, clo, rr)) / den;
}

}  // namespace pop

// Exact probability objects evaluated on a grid, packaged in the same
// container the estimator fills so every downstream routine accepts either.
inline data::EmpiricalModel population_model(const DgpConfig& cfg,
                                             const std::vector<double>& y_grid) {
  cfg.validate();
  if (!util::is_strictly_increasing(y_grid) || y_grid.empty())
    throw ConfigError("population grid must be nonempty and increasing");
  data::EmpiricalModel m;
  m.levels = cfg.levels();
  m.n_per_level.assign(cfg.n_levels, 0);
  m.propensity.resize(cfg.n_levels);
  for (std::size_t l = 0; l < cfg.n_levels; ++l)
    m.propensity[l] = pop::propensity(cfg, m.levels[l]);
  m.treated_share = pop::treated_share(cfg);
  m.y_grid = y_grid;
  m.kind = data::CdfKind::smooth;
  const std::size_t G = y_grid.size();
  for (int d = 0; d < 2; ++d) {
    m.joint[static_cast<std::size_t>(d)].assign(cfg.n_levels,
                                                std::vector<double>(G));
    m.marginal[static_cast<std::size_t>(d)].resize(G);
    for (std::size_t i = 0; i < G; ++i)
      m.marginal[static_cast<std::size_t>(d)][i] = pop::marginal(cfg, d, y_grid[i]);
    for (std::size_t l = 0; l < cfg.n_levels; ++l)
      for (std::size_t i = 0; i < G; ++i)
        m.joint[static_cast<std::size_t>(d)][l][i] =
            pop::joint(cfg, d, y_grid[i], m.levels[l]);
  }
  return m;
}

// k pooled-population quantiles plus a five-point deep-tail ladder at each
// end (deduplicated; always distinct here since the pooled CDF is strictly
// increasing). The interior quantiles carry the resolution; the tail points
// close the constraint system. Without grid points where every conditional
// CDF has essentially reached 0 or 1, the sampled dominance cone keeps
// escape directions that the full continuum of constraints forbids, and the
// weight programs come back unbounded at extreme evaluation points.
inline std::vector<double> population_grid(const DgpConfig& cfg, std::size_t k) {
  std::vector<double> taus;
  taus.reserve(k + 10);
  for (double t : {1e-7, 1e-6, 1e-5, 1e-4, 1e-3}) taus.push_back(t);
  for (std::size_t j = 1; j <= k; ++j)
    taus.push_back(static_cast<double>(j) / static_cast<double>(k + 1));
  for (double t : {1e-3, 1e-4, 1e-5, 1e-6, 1e-7}) taus.push_back(1.0 - t);
  std::sort(taus.begin(), taus.end());
  std::vector<double> g;
  g.reserve(taus.size());
  for (double t : taus) {
    const double q = pop::pooled_quantile(cfg, t);
    if (g.empty() || q > g.back()) g.push_back(q);
  }
  return g;
}

}  // namespace ivbounds::sim
