#pragma once

// Scenario runner behind the qrflab executable.

#include <chrono>
#include <iomanip>
#include <iostream>
#include <numbers>

#include "qrflab/scenario.hpp"

namespace qrflab {

struct RunOptions {
  int threads = 0;  // 0: QRFLAB_THREADS or hardware
  bool strict = false;
};

struct RunResult {
  int status = 0;  // 0 pass, 1 tolerance failure, 2 scenario error
  json report;
  std::string message;
};

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"verify-eep", "verify-eep-geodesic", "geodesic",
                                              "fermi",      "propagator",          "history-el",
                                              "newton-clock", "newton-equivalence", "identify-points"};
  return names;
}

namespace detail {

struct Csv {
  std::ostringstream os;
  Csv() { os << std::setprecision(17); }
  template <class... T>
  void row(const T&... v) {
    int k = 0;
    ((os << (k++ ? "," : "") << v), ...);
    os << '\n';
  }
};

inline std::string point_cols(const Point& p) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (Eigen::Index a = 0; a < p.size(); ++a) os << (a ? "," : "") << p[a];
  return os.str();
}

inline std::string axis_cols(const std::string& prefix, int d) {
  std::string s;
  for (int a = 0; a < d; ++a) s += (a ? "," : "") + prefix + std::to_string(a);
  return s;
}

[[noreturn]] inline void missing(const std::string& cmd, const std::string& block) {
  throw SchemaError("scenario: " + cmd + " needs a \"" + block + "\" block", 0);
}

struct Context {
  const Scenario& sc;
  fs::path out;
  json report;
  json warnings = json::array();
  bool pass = true;

  void warn(const std::string& w) { warnings.push_back(w); }
};

inline void cmd_verify_eep(Context& cx, bool geodesic) {
  const Scenario& sc = cx.sc;
  if (!sc.state) missing(geodesic ? "verify-eep-geodesic" : "verify-eep", "state");
  QrfTransform t;
  EepReport rep;
  if (geodesic) {
    std::map<int, GeodesicPath> paths;
    for (const auto& b : sc.state->branches()) {
      auto it = sc.geodesics.find(b.label);
      if (it == sc.geodesics.end()) missing("verify-eep-geodesic", "geodesics entry for branch " + std::to_string(b.label));
      const GeodesicSpec& gs = it->second;
      paths[b.label] = geodesic_integrate(*b.g, gs.x0, gs.u0, gs.tau0, gs.tau1, gs.steps);
      if (paths[b.label].exited) cx.warn("geodesic of branch " + std::to_string(b.label) + " left the chart");
    }
    t = build_transform(*sc.state, paths, sc.n_tau, sc.trust_fraction);
    rep = verify_eep(t, nullptr, sc.eep);
  } else {
    t = build_transform(*sc.state, sc.trust_fraction);
    const FramedState framed = apply_transform(t, *sc.state);
    rep = verify_eep(t, &framed, sc.eep);
  }
  cx.report["eep"] = eep_to_json(rep);
  double min_curv_ratio = std::numeric_limits<double>::infinity();
  Csv csv;
  const int d = sc.state->branches().front().g->dim();
  csv.row("label", axis_cols("x", d), "tau", "metric_residual", "dmetric_residual", "dmetric_residual_half",
          "curvature_scalar", "interp_defect", "pass");
  for (const auto& b : rep.branches)
    for (const auto& e : b.entries) {
      csv.row(b.label, point_cols(e.center), e.tau, e.metric_residual, e.dmetric_residual, e.dmetric_residual_half,
              e.curvature_scalar, e.interp_defect, e.pass ? 1 : 0);
      if (e.curvature_scalar != 0.0)
        min_curv_ratio = std::min(min_curv_ratio, std::abs(e.curvature_scalar) / std::max(e.metric_residual, 1e-300));
    }
  if (std::isfinite(min_curv_ratio)) cx.report["min_curvature_to_metric_residual"] = min_curv_ratio;
  write_text(cx.out / "eep.csv", csv.os.str());
  cx.pass = rep.pass;
}

inline const GeodesicSpec& need_geodesic(const Scenario& sc, const std::string& cmd) {
  if (!sc.metric) missing(cmd, "spacetime");
  if (!sc.geodesic) missing(cmd, "geodesic");
  return *sc.geodesic;
}

inline void cmd_geodesic(Context& cx) {
  const GeodesicSpec& gs = need_geodesic(cx.sc, "geodesic");
  const MetricField& g = *cx.sc.metric;
  const GeodesicPath p = geodesic_integrate(g, gs.x0, gs.u0, gs.tau0, gs.tau1, gs.steps);
  write_text(cx.out / "geodesic.csv", p.to_csv(g));
  const double drift = norm_drift(p, g);
  if (p.exited) cx.warn("geodesic left the chart");
  cx.report["geodesic"] = {{"samples", p.size()}, {"norm0", p.norm0}, {"null", p.null}, {"exited", p.exited},
                           {"final_x", to_json(p.back().x)}, {"final_u", to_json(p.back().u)}, {"norm_drift", drift}};
  cx.pass = drift <= cx.sc.tol.norm_drift;
}

inline void cmd_fermi(Context& cx) {
  const GeodesicSpec& gs = need_geodesic(cx.sc, "fermi");
  const MetricField& g = *cx.sc.metric;
  const GeodesicPath p = geodesic_integrate(g, gs.x0, gs.u0, gs.tau0, gs.tau1, gs.steps);
  const FermiFrame fr = fermi_frame(g, p, gs.reorthonormalize);
  const int d = g.dim();
  Csv csv;
  std::string legs;
  for (int a = 0; a < d; ++a)
    for (int mu = 0; mu < d; ++mu) legs += (legs.empty() ? "" : ",") + ("e" + std::to_string(a) + "_" + std::to_string(mu));
  csv.row("tau", axis_cols("x", d), legs);
  for (std::size_t k = 0; k < fr.legs.size(); ++k) {
    std::ostringstream os;
    os << std::setprecision(17);
    for (int a = 0; a < d; ++a)
      for (int mu = 0; mu < d; ++mu) os << (a || mu ? "," : "") << fr.legs[k].f(mu, a);
    csv.row(p.samples[k].tau, point_cols(p.samples[k].x), os.str());
  }
  write_text(cx.out / "fermi.csv", csv.os.str());
  const double orth = fermi_orthonormality(fr, g);
  if (p.exited) cx.warn("geodesic left the chart");
  cx.report["fermi"] = {{"samples", fr.legs.size()}, {"reorthonormalized", fr.reorthonormalized},
                        {"orthonormality_residual", orth}, {"norm_drift", norm_drift(p, g)}};
  cx.pass = orth <= cx.sc.tol.orthonormality;
}

inline void cmd_propagator(Context& cx) {
  const Scenario& sc = cx.sc;
  if (!sc.propagator) missing("propagator", "propagator");
  const Lattice& lat = sc.propagator->lattice;
  const Kernel k = kernel_transfer(sc.metric, lat);
  write_kernel(k, cx.out);
  cx.report["propagator"] = {{"lattice", lattice_to_json(lat)},
                             {"tau", k.tau},
                             {"truncation_defect", k.truncation_defect},
                             {"truncation_warning", k.truncation_warning}};
  if (k.truncation_warning) cx.warn("momentum truncation defect above warning threshold");
  if (sc.propagator->check_enumeration) {
    const Kernel e = kernel_enumerate(sc.metric, lat);
    const double scale = e.matrix.cwiseAbs().maxCoeff();
    const double diff = (k.matrix - e.matrix).cwiseAbs().maxCoeff() / std::max(scale, 1e-300);
    cx.report["propagator"]["enumeration_defect"] = diff;
    cx.pass = diff <= sc.tol.enumeration;
  }
}

inline void cmd_history_el(Context& cx) {
  const Scenario& sc = cx.sc;
  if (!sc.history) missing("history-el", "history");
  const HistorySpec& h = *sc.history;
  const double hbar = h.lattice.hbar;
  const auto psi = GridWavefunction::from_function(sc.metric, [&](const Point& x) {
    return std::exp(-(x - h.center).squaredNorm() / (2 * h.width * h.width)) * std::exp(cplx(0.0, h.momentum.dot(x) / hbar));
  });
  if (!(psi.norm2() > 0.0)) throw SchemaError("scenario: history packet vanishes on the chart", 0);
  const PhysicalState ps = physical_state(sc.metric, psi.normalized(), h.lattice, h.window);
  const ElReport el = el_residual_check(ps, *sc.metric, h.stride, sc.tol.el_C, h.tau_window);
  write_text(cx.out / "history.csv", ps.to_csv());
  Csv ridge;
  ridge.row("tau", "x0", "x1");
  for (std::size_t k = 0; k < el.taus.size(); ++k) ridge.row(el.taus[k], point_cols(el.ridge[k]));
  write_text(cx.out / "ridge.csv", ridge.os.str());
  if (ps.cutoff_flag) cx.warn("averaging window cutoff flagged");
  if (el.inconclusive) cx.warn("ridge too short for an Euler-Lagrange check");
  cx.report["history"] = {{"momentum", to_json(h.momentum)},
                          {"cutoff_T", ps.cutoff_T},
                          {"induced_norm", ps.induced_norm},
                          {"translation_defect", ps.translation_defect},
                          {"edge_bound", ps.edge_bound},
                          {"cutoff_flag", ps.cutoff_flag}};
  cx.report["el"] = {{"ridge_points", el.taus.size()}, {"residual", el.residual}, {"bound", el.bound},
                     {"pass", el.pass},                {"inconclusive", el.inconclusive}};
  cx.pass = el.pass;
}

inline ClockedParticleState newton_packet(const NewtonSpec& s) {
  return ClockedParticleState::from_function(s.chart, s.levels, [&](const Point& x, int i) {
           return cplx(std::exp(-(x - s.center).squaredNorm() / (4 * s.width * s.width)) * s.internal[i]);
         }).normalized();
}

inline double wrap_phase(double a) { return std::remainder(a, 2.0 * std::numbers::pi); }

inline void cmd_newton_clock(Context& cx) {
  const Scenario& sc = cx.sc;
  if (!sc.newton) missing("newton-clock", "newton");
  const NewtonSpec& s = *sc.newton;
  if (s.heights.size() != 2) missing("newton-clock", "newton.heights");
  if (s.levels.size() != 2) throw SchemaError("scenario: newton-clock needs exactly two levels", 0);
  const double dE = s.levels[1] - s.levels[0];
  Csv csv;
  csv.row("branch", "t", "phase_difference", "phase_closed_form", "visibility", "visibility_closed_form");
  json branches = json::array();
  for (const auto& b : s.branches) {
    const NewtonianConfig& cfg = b.cfg;
    const double dphi = cfg.phi(s.heights[0]) - cfg.phi(s.heights[1]);
    double worst_phase = 0.0, worst_vis = 0.0;
    for (int k = 1; k <= s.samples; ++k) {
      const double t = s.t_span * k / s.samples;
      const long steps = std::max<long>(1, s.steps * k / s.samples);
      const double got = clock_phase_difference(cfg, s.heights[0], s.heights[1], s.levels, t, steps);
      const double expect = -dE * dphi * t / (cfg.hbar * cfg.c * cfg.c);
      const double vis = visibility(cfg, s.heights[0], s.heights[1], s.levels, t, steps);
      const double vis_expect = std::abs(std::cos(0.5 * dE * dphi * t / (cfg.hbar * cfg.c * cfg.c)));
      worst_phase = std::max(worst_phase, std::abs(wrap_phase(got - expect)) / std::max(std::abs(expect), 1e-300));
      worst_vis = std::max(worst_vis, std::abs(vis - vis_expect));
      csv.row(b.label, t, got, expect, vis, vis_expect);
    }
    const bool ok = worst_phase <= sc.tol.phase_rel && worst_vis <= sc.tol.visibility;
    branches.push_back({{"label", b.label}, {"potential", cfg.label}, {"delta_phi", dphi},
                        {"max_phase_rel_error", worst_phase}, {"max_visibility_error", worst_vis}, {"pass", ok}});
    cx.pass = cx.pass && ok;
  }
  write_text(cx.out / "clock.csv", csv.os.str());
  cx.report["branches"] = branches;
}

inline void cmd_newton_equivalence(Context& cx) {
  const Scenario& sc = cx.sc;
  if (!sc.newton) missing("newton-equivalence", "newton");
  const NewtonSpec& s = *sc.newton;
  const ClockedParticleState psi0 = newton_packet(s);
  std::vector<double> ts;
  for (int k = 0; k <= s.samples; ++k) ts.push_back(s.t_span * k / s.samples);
  const long per = std::max<long>(1, s.steps / s.samples);
  std::vector<EquivalenceReport> reps(s.branches.size());
  parallel_for(s.branches.size(), [&](std::size_t i) {
    const NewtonianConfig& cfg = s.branches[i].cfg;
    reps[i] = equivalence_check(history_lab(cfg, psi0, ts, per), history_particle(cfg, psi0, ts, per), cfg,
                                sc.tol.equivalence_safety);
  });
  Csv csv;
  csv.row("branch", "defect", "bound", "phi_max", "second_order", "kinetic_mixed", "force_term", "pass");
  json branches = json::array();
  for (std::size_t i = 0; i < reps.size(); ++i) {
    const auto& r = reps[i];
    csv.row(s.branches[i].label, r.defect, r.bound, r.phi_max, r.second_order, r.kinetic_mixed, r.force_term,
            r.pass ? 1 : 0);
    branches.push_back({{"label", s.branches[i].label}, {"potential", s.branches[i].cfg.label},
                        {"defect", r.defect}, {"bound", r.bound}, {"phi_max", r.phi_max},
                        {"second_order", r.second_order}, {"kinetic_mixed", r.kinetic_mixed},
                        {"force_term", r.force_term}, {"compared", r.compared}, {"pass", r.pass}});
    cx.pass = cx.pass && r.pass;
  }
  write_text(cx.out / "equivalence.csv", csv.os.str());
  cx.report["branches"] = branches;
}

inline void cmd_identify(Context& cx) {
  const Scenario& sc = cx.sc;
  if (!sc.state) missing("identify-points", "state");
  if (!sc.identify) missing("identify-points", "identify");
  const IdentificationResult res = project_identify(*sc.state, *sc.identify);
  json sites = json::array();
  for (const auto& [label, site] : res.sites) {
    sites.push_back({{"label", label}, {"site", site}, {"offset", to_json(res.offsets.at(label))}});
  }
  cx.report["identify"] = {{"weight", res.weight}, {"sites", sites}};
  if (res.weight > 0.0) write_json(cx.out / "identified.json", state_to_json(res.state, cx.out, "identified"));
  cx.pass = res.weight > sc.tol.identify_weight_min;
}

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace detail

/// Runs one subcommand; writes report.json, metadata.json and data files into out.
inline RunResult run(const std::string& command, const std::string& scenario_path, const fs::path& out,
                     RunOptions opt = {}) {
  RunResult res;
  const auto& names = subcommands();
  if (std::find(names.begin(), names.end(), command) == names.end()) {
    res.status = 2;
    res.message = "unknown subcommand \"" + command + "\"";
    return res;
  }
  if (opt.threads > 0) set_threads(opt.threads);
  try {
    const Document doc = load_document(scenario_path);
    const Scenario sc = parse_scenario(doc);
    fs::create_directories(out);
    detail::Context cx{sc, out, json::object()};
    cx.report["command"] = command;
    cx.report["scenario"] = sc.name;
    cx.report["seed"] = sc.seed;
    if (command == "verify-eep") detail::cmd_verify_eep(cx, false);
    else if (command == "verify-eep-geodesic") detail::cmd_verify_eep(cx, true);
    else if (command == "geodesic") detail::cmd_geodesic(cx);
    else if (command == "fermi") detail::cmd_fermi(cx);
    else if (command == "propagator") detail::cmd_propagator(cx);
    else if (command == "history-el") detail::cmd_history_el(cx);
    else if (command == "newton-clock") detail::cmd_newton_clock(cx);
    else if (command == "newton-equivalence") detail::cmd_newton_equivalence(cx);
    else detail::cmd_identify(cx);

    const bool warned = !cx.warnings.empty();
    cx.report["warnings"] = cx.warnings;
    cx.report["strict"] = opt.strict;
    cx.report["pass"] = cx.pass && !(opt.strict && warned);
    res.status = cx.report["pass"].get<bool>() ? 0 : 1;
    res.report = cx.report;
    write_json(out / "report.json", cx.report);
    write_json(out / "metadata.json", json{{"command", command},
                                           {"scenario_path", scenario_path},
                                           {"threads", thread_count()},
                                           {"started_utc", detail::utc_now()}});
    if (res.status) res.message = command + ": tolerance check failed";
  } catch (const SchemaError& e) {
    res.status = 2;
    res.message = e.what();
  } catch (const std::exception& e) {
    res.status = 2;
    res.message = std::string("scenario rejected: ") + e.what();
  }
  return res;
}

}  // namespace qrflab
