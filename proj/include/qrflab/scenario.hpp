#pragma once

// Scenario files: every block is parsed and checked up front, so unknown
// keys anywhere are rejected whichever subcommand runs.

#include <cstdint>
#include <map>
#include <optional>
#include <random>

#include "qrflab/json_io.hpp"
#include "qrflab/newtonian.hpp"

namespace qrflab {

struct Tolerances {
  double metric = 1e-10;
  double dmetric_C = 1.0;
  double norm_drift = 1e-8;
  double orthonormality = 1e-8;
  double enumeration = 1e-10;
  double el_C = 1.0;
  double phase_rel = 1e-6;
  double visibility = 1e-6;
  double equivalence_safety = 2.0;
  double identify_weight_min = 0.0;
};

struct GeodesicSpec {
  Point x0, u0;
  double tau0 = 0.0, tau1 = 1.0;
  int steps = 100;
  bool reorthonormalize = false;
};

struct PropagatorSpec {
  Lattice lattice;
  bool check_enumeration = false;
};

struct HistorySpec {
  Lattice lattice;
  Point center;
  double width = 1.0;
  Point momentum;  // covariant (p0, p1); p0 put on shell when not given
  double window = 0.0;
  int stride = 1;
  double tau_window = 0.0;
};

struct NewtonBranchSpec {
  int label = 0;
  NewtonianConfig cfg;
};

struct NewtonSpec {
  std::vector<NewtonBranchSpec> branches;
  Chart chart;
  std::vector<double> levels;
  Point center;
  double width = 1.0;
  std::vector<double> internal;
  double t_span = 1.0;
  long steps = 100;
  int samples = 10;
  std::vector<Point> heights;
};

struct Scenario {
  std::string name;
  std::uint64_t seed = 0;
  std::optional<SuperposedState> state;
  double trust_fraction = kDefaultTrustFraction;
  EepOptions eep;
  int n_tau = 5;
  std::map<int, GeodesicSpec> geodesics;
  MetricPtr metric;
  std::optional<GeodesicSpec> geodesic;
  std::optional<PropagatorSpec> propagator;
  std::optional<HistorySpec> history;
  std::optional<NewtonSpec> newton;
  std::optional<PointIdentification> identify;
  Tolerances tol;
};

namespace detail {

inline GridWavefunction profile_from(const Reader& r, const MetricPtr& g, std::mt19937_64& rng) {
  const int d = g->dim();
  const auto kind = r.get<std::string>("kind");
  Point center = r.point("center", d);
  const double jitter = r.get<double>("jitter", 0.0);
  if (jitter > 0.0) {
    std::uniform_real_distribution<double> u(-jitter, jitter);
    for (int a = 0; a < d; ++a) center[a] += u(rng);
  }
  GridWavefunction wf;
  if (kind == "site") {
    r.finish();
    wf = GridWavefunction::site_state(g, g->chart().nearest_site(center).site);
  } else if (kind == "bump" || kind == "gaussian") {
    const double radius = r.get<double>("radius");
    const Point k = r.has("k") ? r.point("k", d) : Point(Point::Zero(d));
    r.finish();
    if (!(radius > 0.0)) r.fail(r.where() + ".radius: must be positive", r.key_offset("radius"));
    const bool bump = kind == "bump";
    wf = GridWavefunction::from_function(g, [&](const Point& x) -> cplx {
      const double q = (x - center).squaredNorm() / (radius * radius);
      const cplx phase = std::exp(cplx(0.0, k.dot(x)));
      if (!bump) return std::exp(-0.5 * q) * phase;
      return q >= 1.0 ? cplx(0.0) : std::pow(1.0 - q, 4) * phase;
    });
    if (!(wf.norm2() > 0.0)) r.fail(r.where() + ": profile vanishes on the chart", r.key_offset("center"));
    wf = wf.normalized();
  } else {
    r.fail(r.where() + ": unknown profile kind \"" + kind + "\"", r.key_offset("kind"));
  }
  return wf;
}

inline SuperposedState state_block(const Reader& r, std::mt19937_64& rng) {
  std::vector<Branch> bs;
  const auto rbs = r.objects("branches");
  if (rbs.empty()) r.fail(r.where() + ".branches: at least one branch required", r.key_offset("branches"));
  bool explicit_c = false;
  for (const auto& rb : rbs) {
    Branch b;
    b.label = rb.get<int>("label");
    if (rb.has("c")) {
      const auto c = rb.get<std::vector<double>>("c");
      if (c.size() != 2) rb.fail(rb.where() + ".c: expected [re, im]", rb.key_offset("c"));
      b.c = cplx(c[0], c[1]);
      explicit_c = true;
    }
    const Chart ch = chart_from(rb.object("chart"));
    b.g = metric_from(rb.object("metric"), ch);
    if (rb.has("P")) b.psi_P = profile_from(rb.object("P"), b.g, rng);
    if (rb.has("M")) b.phi_M = profile_from(rb.object("M"), b.g, rng);
    rb.finish();
    bs.push_back(std::move(b));
  }
  const auto tag = r.get<std::string>("frame_tag", "R");
  if (tag != "R" && tag != "P") r.fail(r.where() + ".frame_tag: expected \"R\" or \"P\"", r.key_offset("frame_tag"));
  try {
    if (!explicit_c) return equal_superposition(std::move(bs));
    return SuperposedState(std::move(bs), tag == "P" ? FrameTag::P : FrameTag::R);
  } catch (const std::exception& e) {
    r.fail(r.where() + ": " + e.what(), r.key_offset("branches"));
  }
}

inline GeodesicSpec geodesic_block(const Reader& r, int dim) {
  GeodesicSpec s;
  s.x0 = r.point("x0", dim);
  s.u0 = r.point("u0", dim);
  s.tau0 = r.get<double>("tau0", 0.0);
  s.tau1 = r.get<double>("tau1");
  s.steps = r.get<int>("steps", 100);
  s.reorthonormalize = r.get<bool>("reorthonormalize", false);
  r.finish();
  if (!(s.tau1 > s.tau0) || s.steps < 1) r.fail(r.where() + ": need tau1 > tau0 and steps >= 1", r.key_offset("tau1"));
  return s;
}

inline Lattice lattice_block(const Reader& r, const Chart& ch) {
  Lattice lat{ch};
  lat.n_slices = r.get<int>("n_slices", lat.n_slices);
  lat.delta = r.get<double>("delta", lat.delta);
  lat.mass = r.get<double>("mass", lat.mass);
  lat.hbar = r.get<double>("hbar", lat.hbar);
  lat.c = r.get<double>("c", lat.c);
  try {
    lat.validate();
  } catch (const std::exception& e) {
    r.fail(r.where() + ": " + e.what(), r.key_offset("n_slices"));
  }
  return lat;
}

/// Newtonian potential from a metric-style block on a spatial chart of dimension d.
inline NewtonianConfig potential_block(const Reader& r, int d, double m, double hbar) {
  const MetricKind k = metric_kind_from(r, d + 1);
  if (const auto* pm = std::get_if<NewtonianPointMass>(&k)) return NewtonianConfig::point_mass(*pm, m, hbar);
  if (const auto* u = std::get_if<UniformWeakField>(&k)) {
    if (u->axis < 1 || u->axis > d) r.fail(r.where() + ".axis: out of range", r.key_offset("axis"));
    return NewtonianConfig::uniform(*u, m, hbar);
  }
  if (std::holds_alternative<Minkowski>(k)) {
    NewtonianConfig cfg;
    cfg.m = m;
    cfg.hbar = hbar;
    cfg.label = "free";
    return cfg;
  }
  r.fail(r.where() + ": potential must be minkowski, newtonian_point_mass or uniform_weak_field", r.key_offset("kind"));
}

inline NewtonSpec newton_block(const Reader& r) {
  NewtonSpec s;
  s.chart = chart_from(r.object("chart"), false);
  const int d = s.chart.dim();
  const double m = r.get<double>("m", 1.0), hbar = r.get<double>("hbar", 1.0);
  if (r.has("potential")) s.branches.push_back({0, potential_block(r.object("potential"), d, m, hbar)});
  if (r.has("branches")) {
    for (const auto& rb : r.objects("branches")) {
      NewtonBranchSpec b{rb.get<int>("label"), potential_block(rb.object("potential"), d, m, hbar)};
      rb.finish();
      s.branches.push_back(std::move(b));
    }
  }
  if (s.branches.empty()) r.fail(r.where() + ": need \"potential\" or \"branches\"", r.key_offset("chart"));
  for (auto& b : s.branches) {
    b.cfg.branch = b.label;
    try {
      b.cfg.validate(s.chart);
    } catch (const std::exception& e) {
      r.fail(r.where() + ": branch " + std::to_string(b.label) + ": " + e.what(), r.key_offset("chart"));
    }
  }
  s.levels = r.get<std::vector<double>>("levels");
  if (s.levels.empty()) r.fail(r.where() + ".levels: at least one level required", r.key_offset("levels"));
  const Reader pk = r.object("packet");
  s.center = pk.point("center", d);
  s.width = pk.get<double>("width");
  s.internal = pk.get<std::vector<double>>("internal", std::vector<double>(s.levels.size(), 1.0));
  pk.finish();
  if (s.internal.size() != s.levels.size())
    pk.fail(pk.where() + ".internal: one amplitude per level required", pk.key_offset("internal"));
  s.t_span = r.get<double>("t_span");
  s.steps = r.get<long>("steps");
  s.samples = r.get<int>("samples", 10);
  if (!(s.t_span > 0.0) || s.steps < 1 || s.samples < 1)
    r.fail(r.where() + ": need t_span > 0, steps >= 1 and samples >= 1", r.key_offset("t_span"));
  if (r.has("heights")) {
    for (const auto& h : r.get<std::vector<std::vector<double>>>("heights")) {
      if (h.size() != static_cast<std::size_t>(d)) r.fail(r.where() + ".heights: wrong dimension", r.key_offset("heights"));
      s.heights.push_back(Eigen::Map<const Eigen::VectorXd>(h.data(), d));
    }
    if (s.heights.size() != 2) r.fail(r.where() + ".heights: exactly two points required", r.key_offset("heights"));
  }
  r.finish();
  return s;
}

inline Tolerances tolerances_block(const Reader& r) {
  Tolerances t;
  t.metric = r.get<double>("metric", t.metric);
  t.dmetric_C = r.get<double>("dmetric_C", t.dmetric_C);
  t.norm_drift = r.get<double>("norm_drift", t.norm_drift);
  t.orthonormality = r.get<double>("orthonormality", t.orthonormality);
  t.enumeration = r.get<double>("enumeration", t.enumeration);
  t.el_C = r.get<double>("el_C", t.el_C);
  t.phase_rel = r.get<double>("phase_rel", t.phase_rel);
  t.visibility = r.get<double>("visibility", t.visibility);
  t.equivalence_safety = r.get<double>("equivalence_safety", t.equivalence_safety);
  t.identify_weight_min = r.get<double>("identify_weight_min", t.identify_weight_min);
  r.finish();
  return t;
}

}  // namespace detail

inline Scenario parse_scenario(const Document& doc) {
  const Reader r(doc, doc.root, "scenario");
  Scenario sc;
  sc.name = r.get<std::string>("name", "unnamed");
  sc.seed = r.get<std::uint64_t>("seed", 0);
  std::mt19937_64 rng(sc.seed);

  if (r.has("tolerances")) sc.tol = detail::tolerances_block(r.object("tolerances"));
  sc.eep.metric_tol = sc.tol.metric;
  sc.eep.dmetric_C = sc.tol.dmetric_C;

  if (r.has("state")) {
    const Reader rs = r.object("state");
    sc.trust_fraction = rs.get<double>("trust_fraction", sc.trust_fraction);
    sc.state = detail::state_block(rs, rng);
    rs.finish();
  }
  if (r.has("eep")) {
    const Reader re = r.object("eep");
    sc.eep.h = re.get<double>("h", 0.0);
    sc.eep.curvature = re.get<bool>("curvature", true);
    sc.n_tau = re.get<int>("n_tau", sc.n_tau);
    re.finish();
    if (sc.n_tau < 2) re.fail(re.where() + ".n_tau: must be at least 2", re.key_offset("n_tau"));
  }
  if (r.has("geodesics")) {
    for (const auto& rg : r.objects("geodesics")) {
      const int label = rg.get<int>("label");
      const Branch* b = sc.state ? sc.state->find(label) : nullptr;
      if (!b) rg.fail(rg.where() + ": no state branch with this label", rg.key_offset("label"));
      sc.geodesics[label] = detail::geodesic_block(rg, b->g->dim());
    }
  }
  if (r.has("spacetime")) {
    const Reader rm = r.object("spacetime");
    const Chart ch = chart_from(rm.object("chart"));
    sc.metric = metric_from(rm.object("metric"), ch);
    rm.finish();
  }
  const auto need_metric = [&](const std::string& key) {
    if (!sc.metric) r.fail("scenario: \"" + key + "\" requires a \"spacetime\" block", r.key_offset(key));
  };
  if (r.has("geodesic")) {
    need_metric("geodesic");
    sc.geodesic = detail::geodesic_block(r.object("geodesic"), sc.metric->dim());
  }
  if (r.has("propagator")) {
    need_metric("propagator");
    const Reader rp = r.object("propagator");
    PropagatorSpec p{detail::lattice_block(rp, sc.metric->chart())};
    p.check_enumeration = rp.get<bool>("check_enumeration", false);
    rp.finish();
    sc.propagator = p;
  }
  if (r.has("history")) {
    need_metric("history");
    const Reader rh = r.object("history");
    HistorySpec h{detail::lattice_block(rh, sc.metric->chart())};
    const Reader pk = rh.object("packet");
    h.center = pk.point("center", 2);
    h.width = pk.get<double>("width");
    h.momentum = pk.point("momentum", 2);
    const bool on_shell = pk.get<bool>("on_shell", true);
    pk.finish();
    if (on_shell) {
      const Matrix gi = sc.metric->value(h.center).inverse();
      const double mc = h.lattice.mass * h.lattice.c, p1 = h.momentum[1];
      const double a = gi(0, 0), b = 2.0 * gi(0, 1) * p1, c = gi(1, 1) * p1 * p1 - mc * mc;
      const double disc = b * b - 4.0 * a * c;
      if (!(disc >= 0.0)) pk.fail(pk.where() + ": no on-shell p0 for this momentum", pk.key_offset("momentum"));
      h.momentum[0] = (-b + std::sqrt(disc)) / (2.0 * a);
    }
    h.window = rh.get<double>("window", 0.0);
    h.stride = rh.get<int>("stride", 1);
    h.tau_window = rh.get<double>("tau_window", 0.0);
    rh.finish();
    sc.history = h;
  }
  if (r.has("newton")) sc.newton = detail::newton_block(r.object("newton"));
  if (r.has("identify")) {
    PointIdentification pi;
    for (const auto& ri : r.objects("identify")) {
      const int label = ri.get<int>("label");
      const Branch* b = sc.state ? sc.state->find(label) : nullptr;
      if (!b) ri.fail(ri.where() + ": no state branch with this label", ri.key_offset("label"));
      pi.assignments[label] = ri.point("point", b->g->dim());
      ri.finish();
    }
    sc.identify = pi;
  }
  r.finish();
  return sc;
}

}  // namespace qrflab
