#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ivbounds/bounds.hpp"
#include "ivbounds/dataset.hpp"
#include "ivbounds/diagnostics.hpp"
#include "ivbounds/errors.hpp"
#include "ivbounds/io.hpp"
#include "ivbounds/sieve.hpp"
#include "ivbounds/simulate.hpp"

namespace ivbounds::cli {

using nlohmann::json;

// Everything a run needs, loadable from a JSON config file and overridable
// by command-line flags; the effective values are echoed into every output
// manifest so a run can be replayed from its artifacts alone.
struct RunConfig {
  std::string command;            // provenance only; the CLI verb decides
  std::string input;              // CSV dataset path ("" = none)
  std::string output = "out";     // directory for all artifacts
  bool population = false;        // analytic probability objects instead of data
  bool force = false;             // allow overwriting existing outputs
  std::string solver = "sampled";  // sampled | sieve | both
  std::string arm = "treated";     // counterfactual arm to bound
  std::string grid_policy = "all_unique";  // estimation grid for CSV input
  std::size_t grid_k = 201;       // constraint-grid density (see load_model)
  std::size_t eval_grid = 101;    // evaluation grid size
  std::vector<double> taus = {0.25, 0.5, 0.75};
  std::size_t J = 40;             // sieve degree
  bool mass_constraint = true;
  double min_share = 0.02;        // complier-group floor
  double fosd_tol = 1e-6;
  double point_id_tol = 1e-6;
  std::size_t reps = 200;         // violation experiment
  std::size_t eval_n = 100000;
  double ybar = std::numeric_limits<double>::quiet_NaN();
  std::string figure;             // reproduce target
  sim::DgpConfig dgp;

  void validate() const {
    if (solver != "sampled" && solver != "sieve" && solver != "both")
      throw ConfigError("solver must be sampled, sieve, or both");
    if (arm != "treated" && arm != "untreated")
      throw ConfigError("arm must be treated or untreated");
    if (grid_policy != "all_unique" && grid_policy != "pooled_quantiles")
      throw ConfigError("grid_policy must be all_unique or pooled_quantiles");
    if (grid_k < 2) throw ConfigError("grid_k must be at least 2");
    if (eval_grid < 2) throw ConfigError("eval_grid must be at least 2");
    for (double t : taus)
      if (!(t > 0.0 && t < 1.0)) throw ConfigError("taus must lie in (0,1)");
    if (solver != "sampled" && J < 1)
      throw ConfigError("sieve solver requires J >= 1");
    if (!(min_share >= 0.0 && min_share < 1.0))
      throw ConfigError("min_share must lie in [0,1)");
    if (!(fosd_tol > 0.0)) throw ConfigError("fosd_tol must be positive");
    if (!(point_id_tol > 0.0))
      throw ConfigError("point_id_tol must be positive");
    dgp.validate();
  }
};

namespace detail {

inline void check_keys(const json& j,
                       std::initializer_list<const char*> allowed,
                       const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError(std::string("unknown config key '") + it.key() +
                        "' in " + where);
  }
}

template <class T>
void get_field(const json& j, const char* key, T& out, const char* where) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw ConfigError(std::string(where) + "." + key + ": " + e.what());
  }
}

// JSON has no NaN; absent or null means "pick the default at run time".
inline void get_optional_real(const json& j, const char* key, double& out,
                              const char* where) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  get_field(j, key, out, where);
}

inline json jreal(double v) { return std::isfinite(v) ? json(v) : json(); }

}  // namespace detail

inline RunConfig config_from_json(const json& j) {
  detail::check_keys(
      j, {"command", "input", "output", "population", "force", "solver",
          "arm", "grid_policy", "grid_k", "eval_grid", "taus", "J",
          "mass_constraint", "min_share", "fosd_tol", "point_id_tol", "reps",
          "eval_n", "ybar", "figure", "dgp"},
      "config");
  RunConfig c;
  detail::get_field(j, "command", c.command, "config");
  detail::get_field(j, "input", c.input, "config");
  detail::get_field(j, "output", c.output, "config");
  detail::get_field(j, "population", c.population, "config");
  detail::get_field(j, "force", c.force, "config");
  detail::get_field(j, "solver", c.solver, "config");
  detail::get_field(j, "arm", c.arm, "config");
  detail::get_field(j, "grid_policy", c.grid_policy, "config");
  detail::get_field(j, "grid_k", c.grid_k, "config");
  detail::get_field(j, "eval_grid", c.eval_grid, "config");
  detail::get_field(j, "taus", c.taus, "config");
  detail::get_field(j, "J", c.J, "config");
  detail::get_field(j, "mass_constraint", c.mass_constraint, "config");
  detail::get_field(j, "min_share", c.min_share, "config");
  detail::get_field(j, "fosd_tol", c.fosd_tol, "config");
  detail::get_field(j, "point_id_tol", c.point_id_tol, "config");
  detail::get_field(j, "reps", c.reps, "config");
  detail::get_field(j, "eval_n", c.eval_n, "config");
  detail::get_optional_real(j, "ybar", c.ybar, "config");
  detail::get_field(j, "figure", c.figure, "config");
  if (j.contains("dgp")) {
    const json& d = j.at("dgp");
    detail::check_keys(d,
                       {"rho", "sigma_xi", "sigma_v", "pi0", "pi1", "binom_p",
                        "L", "n", "seed"},
                       "config.dgp");
    detail::get_field(d, "rho", c.dgp.rho, "dgp");
    detail::get_field(d, "sigma_xi", c.dgp.sigma_xi, "dgp");
    detail::get_field(d, "sigma_v", c.dgp.sigma_v, "dgp");
    detail::get_field(d, "pi0", c.dgp.pi0, "dgp");
    detail::get_field(d, "pi1", c.dgp.pi1, "dgp");
    detail::get_field(d, "binom_p", c.dgp.binom_p, "dgp");
    detail::get_field(d, "L", c.dgp.n_levels, "dgp");
    detail::get_field(d, "n", c.dgp.n, "dgp");
    detail::get_field(d, "seed", c.dgp.seed, "dgp");
  }
  return c;
}

inline json config_to_json(const RunConfig& c) {
  json d{{"rho", c.dgp.rho},         {"sigma_xi", c.dgp.sigma_xi},
         {"sigma_v", c.dgp.sigma_v}, {"pi0", c.dgp.pi0},
         {"pi1", c.dgp.pi1},         {"binom_p", c.dgp.binom_p},
         {"L", c.dgp.n_levels},      {"n", c.dgp.n},
         {"seed", c.dgp.seed}};
  return json{{"command", c.command},
              {"input", c.input},
              {"output", c.output},
              {"population", c.population},
              {"force", c.force},
              {"solver", c.solver},
              {"arm", c.arm},
              {"grid_policy", c.grid_policy},
              {"grid_k", c.grid_k},
              {"eval_grid", c.eval_grid},
              {"taus", c.taus},
              {"J", c.J},
              {"mass_constraint", c.mass_constraint},
              {"min_share", c.min_share},
              {"fosd_tol", c.fosd_tol},
              {"point_id_tol", c.point_id_tol},
              {"reps", c.reps},
              {"eval_n", c.eval_n},
              {"ybar", detail::jreal(c.ybar)},
              {"figure", c.figure},
              {"dgp", d}};
}

namespace detail {

inline Arm parse_arm(const RunConfig& c) {
  return c.arm == "treated" ? Arm::treated : Arm::untreated;
}

inline std::string out_path(const RunConfig& c, const char* name) {
  return (std::filesystem::path(c.output) / name).string();
}

inline void guard_outputs(const RunConfig& c,
                          const std::vector<std::string>& paths) {
  if (c.force) return;
  for (const auto& p : paths)
    if (std::filesystem::exists(p))
      throw ConfigError(p + " exists; pass --force to overwrite");
}

inline void write_json(const std::string& path, const json& j) {
  io::write_text_atomic(path, j.dump(2) + "\n");
}

struct LoadedModel {
  data::EmpiricalModel model;
  std::vector<double> eval;
};

// Data source per config: analytic probability objects, or a CSV sample
// pushed through the estimator. For population models the dominance rows
// live on a grid of density grid_k, independent of the evaluation grid;
// relaxing the row grid enlarges the weight polytope, so rows too sparse
// make the optimized bounds cut inside the identified set. Density 201
// keeps that slippage under 1e-6 for the built-in designs up to L=8,
// which is why it is the default. Evaluation points are merged into the
// model grid so objective values are exact rather than interpolated.
inline LoadedModel load_model(const RunConfig& c) {
  LoadedModel lm;
  if (c.population) {
    lm.eval = sim::population_grid(c.dgp, c.eval_grid);
    std::vector<double> grid = sim::population_grid(c.dgp, c.grid_k);
    grid.insert(grid.end(), lm.eval.begin(), lm.eval.end());
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    lm.model = sim::population_model(c.dgp, grid);
    return lm;
  }
  if (c.input.empty())
    throw ConfigError("need --input FILE or --population");
  const data::Sample s = io::read_sample_csv(c.input);
  data::GridSpec spec;
  spec.policy = c.grid_policy == "all_unique"
                    ? data::GridPolicy::all_unique
                    : data::GridPolicy::pooled_quantiles;
  spec.k = c.grid_k;
  lm.model = data::estimate(s, spec);
  lm.eval = lm.model.eval_quantile_grid(c.eval_grid);
  return lm;
}

inline json model_summary(const data::EmpiricalModel& m) {
  return json{{"levels", m.levels},
              {"propensity", m.propensity},
              {"n_per_level", m.n_per_level},
              {"treated_share", m.treated_share},
              {"kind", m.kind == data::CdfKind::step ? "step" : "smooth"},
              {"grid_size", m.grid_size()},
              {"propensity_spread", diag::propensity_spread(m)}};
}

inline json effect_json(const bounds::EffectBound& e) {
  return json{{"lower", jreal(e.lower)}, {"upper", jreal(e.upper)}};
}

struct CurveBundle {
  bounds::BoundCurve curve;
  json summary;            // everything but the config echo
  json sieve;              // null unless the sieve solver ran
  std::string sieve_csv;   // empty unless the sieve solver ran
  bounds::PointIdResult pid;
  bool vacuous_side = false;  // some side failed at every point
};

// Shared engine behind `bounds` and `qte`: pointwise envelopes, effect
// intervals at the requested quantiles, a point-identification check, and
// optionally the certified sieve curve with its gap to the sampled primal.
inline CurveBundle run_bounds(const RunConfig& c, const LoadedModel& lm) {
  const Arm arm = parse_arm(c);
  const data::EmpiricalModel& m = lm.model;
  CurveBundle b;
  b.curve = bounds::cdf_bound_curve(m, arm, lm.eval);

  std::size_t ok_lo = 0, ok_up = 0;
  double width = 0.0;
  for (std::size_t i = 0; i < b.curve.y.size(); ++i) {
    ok_lo += b.curve.feasible_lower[i];
    ok_up += b.curve.feasible_upper[i];
    width += b.curve.upper[i] - b.curve.lower[i];
  }
  width /= static_cast<double>(b.curve.y.size());
  b.vacuous_side = ok_lo == 0 || ok_up == 0;

  json taus = json::array();
  for (double tau : c.taus) {
    const bounds::QuantileBound q = bounds::quantile_bounds(b.curve, tau);
    const double oq = bounds::observed_quantile(m, arm, tau);
    const bounds::EffectBound e = bounds::qte_bounds(b.curve, tau, oq);
    taus.push_back(json{{"tau", tau},
                        {"quantile_lower", jreal(q.lower)},
                        {"quantile_upper", jreal(q.upper)},
                        {"observed_quantile", oq},
                        {"qte", effect_json(e)}});
  }
  const double omean = bounds::observed_mean(m, arm);
  const bounds::MeanBound mb = bounds::counterfactual_mean_bounds(b.curve);
  const bounds::EffectBound ate = bounds::ate_bounds(b.curve, omean);

  b.pid = bounds::point_identify(m, arm, lm.eval, c.point_id_tol);

  b.summary = json{{"arm", c.arm},
                   {"n_eval", b.curve.y.size()},
                   {"n_infeasible", b.curve.n_infeasible},
                   {"feasible_lower", ok_lo},
                   {"feasible_upper", ok_up},
                   {"any_crossing", b.curve.any_crossing},
                   {"mean_width", width},
                   {"model", model_summary(m)},
                   {"quantiles", taus},
                   {"observed_mean", omean},
                   {"counterfactual_mean",
                    json{{"lower", mb.lower}, {"upper", mb.upper}}},
                   {"ate", effect_json(ate)},
                   {"point_identification",
                    json{{"residual", jreal(b.pid.residual)},
                         {"identified", b.pid.identified}}}};

  if (c.solver != "sampled") {
    sieve::SieveSpec sp;
    sp.degree = c.J;
    sp.mass_constraint = c.mass_constraint;
    const sieve::BernsteinMoments mom = sieve::compute_moments(m, arm, sp);
    std::string csv =
        "y,sieve_lower,sieve_upper,status_lower,status_upper\n";
    std::size_t sok_lo = 0, sok_up = 0, gap_n_lo = 0, gap_n_up = 0;
    double gap_lo = 0.0, gap_up = 0.0;
    for (std::size_t i = 0; i < b.curve.y.size(); ++i) {
      const double y = b.curve.y[i];
      const auto lo =
          sieve::dual_sieve_bound(m, arm, bounds::Side::lower, y, sp, mom);
      const auto up =
          sieve::dual_sieve_bound(m, arm, bounds::Side::upper, y, sp, mom);
      csv += io::format_double(y);
      csv += ',';
      csv += io::format_double(lo.value);
      csv += ',';
      csv += io::format_double(up.value);
      csv += ',';
      csv += bounds::point_status_name(lo.status);
      csv += ',';
      csv += bounds::point_status_name(up.status);
      csv += '\n';
      sok_lo += lo.status == bounds::PointStatus::ok;
      sok_up += up.status == bounds::PointStatus::ok;
      if (lo.status == bounds::PointStatus::ok && b.curve.feasible_lower[i]) {
        gap_lo += b.curve.raw_lower[i] - lo.value;  // certified >= primal
        ++gap_n_lo;
      }
      if (up.status == bounds::PointStatus::ok && b.curve.feasible_upper[i]) {
        gap_up += up.value - b.curve.raw_upper[i];  // certified <= primal
        ++gap_n_up;
      }
    }
    b.sieve_csv = std::move(csv);
    b.sieve = json{
        {"degree", c.J},
        {"mass_constraint", c.mass_constraint},
        {"ok_lower", sok_lo},
        {"ok_upper", sok_up},
        {"mean_gap_lower",
         gap_n_lo ? jreal(gap_lo / static_cast<double>(gap_n_lo)) : json()},
        {"mean_gap_upper",
         gap_n_up ? jreal(gap_up / static_cast<double>(gap_n_up)) : json()}};
    b.summary["sieve"] = b.sieve;
  }
  return b;
}

inline int cmd_simulate(const RunConfig& c) {
  const data::Sample s = sim::draw_sample(c.dgp);
  const std::string csv_path = out_path(c, "sample.csv");
  const std::string man_path = out_path(c, "manifest.json");
  guard_outputs(c, {csv_path, man_path});
  io::write_sample_csv(csv_path, s);
  write_json(man_path, json{{"config", config_to_json(c)},
                            {"rows", s.obs.size()},
                            {"levels", s.support.levels}});
  std::printf("wrote %s (%zu rows) and %s\n", csv_path.c_str(), s.obs.size(),
              man_path.c_str());
  return 0;
}

inline int cmd_estimate(const RunConfig& c) {
  const LoadedModel lm = load_model(c);
  const data::EmpiricalModel& m = lm.model;
  std::string csv = "y,marginal_treated,marginal_untreated";
  for (double z : m.levels) csv += ",joint_treated_z" + io::format_double(z);
  for (double z : m.levels) csv += ",joint_untreated_z" + io::format_double(z);
  csv += '\n';
  for (std::size_t i = 0; i < m.grid_size(); ++i) {
    csv += io::format_double(m.y_grid[i]);
    csv += ',';
    csv += io::format_double(m.marginal[1][i]);
    csv += ',';
    csv += io::format_double(m.marginal[0][i]);
    for (int d : {1, 0})
      for (std::size_t l = 0; l < m.n_levels(); ++l) {
        csv += ',';
        csv += io::format_double(m.joint[d][l][i]);
      }
    csv += '\n';
  }
  const std::string csv_path = out_path(c, "model.csv");
  const std::string json_path = out_path(c, "model.json");
  guard_outputs(c, {csv_path, json_path});
  io::write_text_atomic(csv_path, csv);
  write_json(json_path,
             json{{"config", config_to_json(c)}, {"model", model_summary(m)}});
  std::printf("wrote %s and %s (grid %zu, spread %.4f)\n", csv_path.c_str(),
              json_path.c_str(), m.grid_size(), diag::propensity_spread(m));
  return 0;
}

inline int cmd_bounds(const RunConfig& c) {
  const LoadedModel lm = load_model(c);
  const CurveBundle b = run_bounds(c, lm);
  std::vector<std::string> paths = {out_path(c, "curve.csv"),
                                    out_path(c, "summary.json")};
  if (!b.sieve_csv.empty()) paths.push_back(out_path(c, "sieve.csv"));
  if (b.pid.identified) paths.push_back(out_path(c, "pointid.csv"));
  guard_outputs(c, paths);

  io::write_text_atomic(paths[0], io::curve_csv(b.curve));
  json summary = b.summary;
  summary["config"] = config_to_json(c);
  summary["status"] = b.vacuous_side ? "side_infeasible" : "ok";
  write_json(paths[1], summary);
  if (!b.sieve_csv.empty())
    io::write_text_atomic(out_path(c, "sieve.csv"), b.sieve_csv);
  if (b.pid.identified) {
    std::string csv = "y,curve\n";
    for (std::size_t i = 0; i < b.pid.y.size(); ++i)
      csv += io::format_double(b.pid.y[i]) + "," +
             io::format_double(b.pid.curve[i]) + "\n";
    io::write_text_atomic(out_path(c, "pointid.csv"), csv);
  }
  std::printf("wrote %s (%zu points, %zu infeasible, mean width %.4f)\n",
              paths[0].c_str(), b.curve.y.size(), b.curve.n_infeasible,
              b.summary["mean_width"].get<double>());
  if (b.vacuous_side) {
    std::printf("bound vacuous: one side infeasible at every point\n");
    return 3;
  }
  return 0;
}

inline int cmd_qte(const RunConfig& c) {
  const LoadedModel lm = load_model(c);
  const CurveBundle b = run_bounds(c, lm);
  const std::string path = out_path(c, "qte.json");
  guard_outputs(c, {path});
  write_json(path, json{{"config", config_to_json(c)},
                        {"quantiles", b.summary["quantiles"]},
                        {"ate", b.summary["ate"]},
                        {"observed_mean", b.summary["observed_mean"]},
                        {"n_infeasible", b.summary["n_infeasible"]},
                        {"status",
                         b.vacuous_side ? "side_infeasible" : "ok"}});
  std::printf("wrote %s\n", path.c_str());
  return b.vacuous_side ? 3 : 0;
}

inline json fosd_json(const diag::FosdResult& r) {
  return json{{"dominance_arm", r.dominance_arm},
              {"passed", r.passed},
              {"violation", r.violation},
              {"y_star", r.y_star},
              {"group_index", r.group_index},
              {"w_dominant", r.w_dominant},
              {"w_dominated", r.w_dominated}};
}

inline std::string witness_csv(const diag::ComplierDecomposition& dec,
                               const diag::FosdResult& r) {
  const int dom = r.dominance_arm, other = 1 - r.dominance_arm;
  std::string csv =
      "y,dominant_constraint_arm,dominated_constraint_arm,"
      "dominant_other_arm,dominated_other_arm\n";
  for (double y : dec.y_grid) {
    double fd_dom = 0.0, ft_dom = 0.0, fd_oth = 0.0, ft_oth = 0.0;
    for (std::size_t g = 0; g < r.group_index.size(); ++g) {
      fd_dom += r.w_dominant[g] * dec.group_cdf(r.group_index[g], dom, y);
      ft_dom += r.w_dominated[g] * dec.group_cdf(r.group_index[g], dom, y);
      fd_oth += r.w_dominant[g] * dec.group_cdf(r.group_index[g], other, y);
      ft_oth += r.w_dominated[g] * dec.group_cdf(r.group_index[g], other, y);
    }
    csv += io::format_double(y) + "," + io::format_double(fd_dom) + "," +
           io::format_double(ft_dom) + "," + io::format_double(fd_oth) + "," +
           io::format_double(ft_oth) + "\n";
  }
  return csv;
}

inline int cmd_diagnose(const RunConfig& c) {
  const LoadedModel lm = load_model(c);
  const data::EmpiricalModel& m = lm.model;
  const diag::ComplierDecomposition dec =
      diag::complier_cdfs(m, c.min_share);

  json groups = json::array();
  for (const auto& g : dec.groups)
    groups.push_back(
        json{{"lo_level", g.lo_level},
             {"hi_level", g.hi_level},
             {"lo_z", m.levels[g.lo_level]},
             {"hi_z", m.levels[g.hi_level]},
             {"share", g.share},
             {"kept", g.kept},
             {"shape_violation_treated", g.shape_violation_treated},
             {"shape_violation_untreated", g.shape_violation_untreated}});
  json report{{"config", config_to_json(c)},
              {"model", model_summary(m)},
              {"always_share", dec.always_share},
              {"never_share", dec.never_share},
              {"groups", groups},
              {"n_kept", dec.n_kept()},
              {"warnings", dec.warnings}};

  const std::string json_path = out_path(c, "diagnose.json");
  if (dec.n_kept() < 2) {
    report["available"] = false;
    report["message"] =
        "dominance test unavailable: need at least two complier groups "
        "above the share floor";
    guard_outputs(c, {json_path});
    write_json(json_path, report);
    std::printf("%s\n", report["message"].get<std::string>().c_str());
    return 3;
  }
  report["available"] = true;

  std::string compliers = "y";
  for (std::size_t g = 0; g < dec.groups.size(); ++g)
    if (dec.groups[g].kept)
      compliers += ",treated_g" + std::to_string(g) + ",untreated_g" +
                   std::to_string(g);
  compliers += '\n';
  for (std::size_t i = 0; i < dec.y_grid.size(); ++i) {
    compliers += io::format_double(dec.y_grid[i]);
    for (const auto& g : dec.groups)
      if (g.kept)
        compliers += "," + io::format_double(g.cdf_treated[i]) + "," +
                     io::format_double(g.cdf_untreated[i]);
    compliers += '\n';
  }

  const diag::FosdResult s1 =
      diag::fosd_preservation_test(dec, m.y_grid, 1, c.fosd_tol);
  const diag::FosdResult s0 =
      diag::fosd_preservation_test(dec, m.y_grid, 0, c.fosd_tol);
  report["fosd_treated_direction"] = fosd_json(s1);
  report["fosd_untreated_direction"] = fosd_json(s0);

  std::string weights = "direction,group,lo_z,hi_z,w_dominant,w_dominated\n";
  for (const auto* r : {&s1, &s0}) {
    for (std::size_t g = 0; g < r->group_index.size(); ++g) {
      const auto& gr = dec.groups[r->group_index[g]];
      weights += std::string(r->dominance_arm == 1 ? "treated" : "untreated") +
                 "," + std::to_string(r->group_index[g]) + "," +
                 io::format_double(m.levels[gr.lo_level]) + "," +
                 io::format_double(m.levels[gr.hi_level]) + "," +
                 io::format_double(r->w_dominant[g]) + "," +
                 io::format_double(r->w_dominated[g]) + "\n";
    }
  }

  const std::string compliers_path = out_path(c, "compliers.csv");
  const std::string weights_path = out_path(c, "fosd_weights.csv");
  const std::string w1_path = out_path(c, "fosd_witness_treated.csv");
  const std::string w0_path = out_path(c, "fosd_witness_untreated.csv");
  guard_outputs(c, {json_path, compliers_path, weights_path, w1_path, w0_path});
  write_json(json_path, report);
  io::write_text_atomic(compliers_path, compliers);
  io::write_text_atomic(weights_path, weights);
  io::write_text_atomic(w1_path, witness_csv(dec, s1));
  io::write_text_atomic(w0_path, witness_csv(dec, s0));
  std::printf(
      "wrote %s; treated direction %s (violation %.3e), untreated "
      "direction %s (violation %.3e)\n",
      json_path.c_str(), s1.passed ? "passed" : "FAILED", s1.violation,
      s0.passed ? "passed" : "FAILED", s0.violation);
  return 0;
}

inline int cmd_violation(const RunConfig& c) {
  diag::ViolationConfig vc;
  vc.dgp = c.dgp;
  vc.reps = c.reps;
  vc.eval_n = c.eval_n;
  vc.arm = parse_arm(c);
  vc.ybar = c.ybar;
  vc.seed = c.dgp.seed;
  const diag::ViolationReport rep = diag::violation_experiment(vc);

  const std::string json_path = out_path(c, "violation.json");
  const std::string csv_path = out_path(c, "per_rep.csv");
  guard_outputs(c, {json_path, csv_path});
  write_json(json_path, json{{"config", config_to_json(c)},
                             {"n", rep.n},
                             {"reps", rep.reps},
                             {"infeasible_reps", rep.infeasible_reps},
                             {"ybar", rep.ybar},
                             {"mean_violation", rep.mean_violation},
                             {"mc_stderr", rep.mc_stderr},
                             {"bound", rep.bound}});
  std::string csv = "rep,violation\n";
  for (std::size_t r = 0; r < rep.per_rep.size(); ++r)
    csv += std::to_string(r) + "," + io::format_double(rep.per_rep[r]) + "\n";
  io::write_text_atomic(csv_path, csv);
  std::printf("wrote %s (mean %.5f vs reference %.5f, %zu infeasible)\n",
              json_path.c_str(), rep.mean_violation, rep.bound,
              rep.infeasible_reps);
  return 0;
}

inline int cmd_reproduce(const RunConfig& c) {
  std::size_t levels = 0;
  if (c.figure == "L2")
    levels = 2;
  else if (c.figure == "L5")
    levels = 5;
  else if (c.figure == "L6")
    levels = 6;
  else
    throw ConfigError("unknown figure id '" + c.figure +
                      "'; valid ids: L2, L5, L6");

  RunConfig rc = c;
  rc.population = true;
  rc.dgp.n_levels = levels;
  const LoadedModel lm = load_model(rc);
  const Arm arm = parse_arm(rc);
  const bounds::BoundCurve curve =
      bounds::cdf_bound_curve(lm.model, arm, lm.eval);

  std::vector<double> truth(lm.eval.size());
  for (std::size_t i = 0; i < lm.eval.size(); ++i)
    truth[i] = sim::pop::counterfactual_cdf(rc.dgp, arm, lm.eval[i]);

  // the envelopes must sandwich the true curve wherever they are defined
  double lower_excess = 0.0, upper_deficit = 0.0;
  double width = 0.0, upper_half_max = 0.0;
  for (std::size_t i = 0; i < lm.eval.size(); ++i) {
    lower_excess = std::max(lower_excess, curve.lower[i] - truth[i]);
    upper_deficit = std::max(upper_deficit, truth[i] - curve.upper[i]);
    width += curve.upper[i] - curve.lower[i];
    if (2 * i >= lm.eval.size())
      upper_half_max = std::max(upper_half_max, curve.upper[i]);
  }
  width /= static_cast<double>(lm.eval.size());
  const bool sandwich_ok = lower_excess <= 1e-6 && upper_deficit <= 1e-6;

  const std::string stem = "figure_" + c.figure;
  const std::string csv_path = out_path(c, (stem + ".csv").c_str());
  const std::string widths_path = out_path(c, (stem + "_widths.csv").c_str());
  const std::string json_path = out_path(c, (stem + ".json").c_str());
  guard_outputs(c, {csv_path, widths_path, json_path});
  io::write_text_atomic(csv_path, io::curve_csv(curve, &truth));
  std::string widths = "y,width\n";
  for (std::size_t i = 0; i < lm.eval.size(); ++i)
    widths += io::format_double(lm.eval[i]) + "," +
              io::format_double(curve.upper[i] - curve.lower[i]) + "\n";
  io::write_text_atomic(widths_path, widths);
  write_json(json_path,
             json{{"config", config_to_json(rc)},
                  {"figure", c.figure},
                  {"levels", levels},
                  {"mean_width", width},
                  {"upper_half_max_upper", upper_half_max},
                  {"n_infeasible", curve.n_infeasible},
                  {"sandwich_ok", sandwich_ok},
                  {"max_lower_excess", lower_excess},
                  {"max_upper_deficit", upper_deficit}});
  std::printf("wrote %s (mean width %.4f, sandwich %s)\n", csv_path.c_str(),
              width, sandwich_ok ? "ok" : "VIOLATED");
  return sandwich_ok ? 0 : 3;
}

}  // namespace detail

// Full command-line entry point: parse, merge config file and flags,
// dispatch, and map failures onto the documented exit codes (0 success,
// 1 usage or config, 2 data, 3 substantive infeasibility, 4 solver).
inline int run(int argc, const char* const* argv) {
  CLI::App app{
      "ivbounds: partial-identification bounds on counterfactual outcome "
      "distributions with a multi-valued instrument"};
  std::string command, figure, config_path, input, output, solver, arm,
      tau_list;
  std::size_t grid = 0, J = 0;
  std::uint64_t seed = 0;
  bool population = false, force = false, no_mass = false;

  app.add_option("command", command,
                 "simulate | estimate | bounds | qte | diagnose | violation "
                 "| reproduce")
      ->required();
  app.add_option("figure", figure, "reproduce target: L2 | L5 | L6");
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--input", input, "CSV dataset (columns y,d,z)");
  app.add_option("--output", output, "output directory");
  app.add_option("--solver", solver, "sampled | sieve | both");
  app.add_option("--grid", grid, "evaluation grid size");
  app.add_option("--tau", tau_list, "comma-separated quantile levels");
  app.add_option("--J", J, "sieve degree");
  app.add_option("--arm", arm, "treated | untreated");
  app.add_flag("--population", population,
               "use analytic population probabilities");
  app.add_option("--seed", seed, "RNG seed");
  app.add_flag("--force", force, "overwrite existing outputs");
  app.add_flag("--no-mass-constraint", no_mass,
               "drop the sieve total-mass row");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) {
      std::string text;
      try {
        text = io::read_text(config_path);
      } catch (const DataError& e) {
        throw ConfigError(e.what());
      }
      json j;
      try {
        j = json::parse(text);
      } catch (const json::exception& e) {
        throw ConfigError(config_path + ": " + e.what());
      }
      cfg = config_from_json(j);
    }
    if (app.count("--input")) cfg.input = input;
    if (app.count("--output")) cfg.output = output;
    if (app.count("--solver")) cfg.solver = solver;
    if (app.count("--grid")) cfg.eval_grid = grid;
    if (app.count("--J")) cfg.J = J;
    if (app.count("--arm")) cfg.arm = arm;
    if (app.count("--seed")) cfg.dgp.seed = seed;
    if (population) cfg.population = true;
    if (force) cfg.force = true;
    if (no_mass) cfg.mass_constraint = false;
    if (app.count("--tau")) {
      cfg.taus.clear();
      std::size_t start = 0;
      while (start <= tau_list.size()) {
        const std::size_t comma = tau_list.find(',', start);
        const std::string tok =
            tau_list.substr(start, comma == std::string::npos
                                       ? std::string::npos
                                       : comma - start);
        char* end = nullptr;
        const double t = std::strtod(tok.c_str(), &end);
        if (tok.empty() || end == tok.c_str() || *end != '\0')
          throw ConfigError("bad --tau entry '" + tok + "'");
        cfg.taus.push_back(t);
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
    }
    cfg.command = command;
    if (!figure.empty()) cfg.figure = figure;
    cfg.validate();

    if (command == "simulate") return detail::cmd_simulate(cfg);
    if (command == "estimate") return detail::cmd_estimate(cfg);
    if (command == "bounds") return detail::cmd_bounds(cfg);
    if (command == "qte") return detail::cmd_qte(cfg);
    if (command == "diagnose") return detail::cmd_diagnose(cfg);
    if (command == "violation") return detail::cmd_violation(cfg);
    if (command == "reproduce") return detail::cmd_reproduce(cfg);
    throw ConfigError("unknown command '" + command +
                      "'; valid: simulate, estimate, bounds, qte, diagnose, "
                      "violation, reproduce");
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const SolverError& e) {
    std::fprintf(stderr, "solver error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 4;
  }
}

}  // namespace ivbounds::cli
