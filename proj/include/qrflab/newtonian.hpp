#pragma once

// Nonrelativistic particle with an internal clock in a Newtonian potential.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "qrflab/chart.hpp"
#include "qrflab/error.hpp"
#include "qrflab/manifold.hpp"
#include "qrflab/qstate.hpp"

namespace qrflab {

using CMatrix = Eigen::MatrixXcd;

struct NewtonianConfig {
  double m = 1.0;
  double c = 1.0;
  double hbar = 1.0;
  std::function<double(const Point&)> potential;  // spatial point
  std::string label = "phi";
  int branch = 0;
  bool kinetic = true;       // false holds the particle in place
  bool relativistic = false; // p^4 and Phi p^2 corrections

  double phi(const Point& x) const { return potential ? potential(x) : 0.0; }

  static NewtonianConfig point_mass(const NewtonianPointMass& k, double m = 1.0, double hbar = 1.0) {
    NewtonianConfig cfg;
    cfg.m = m;
    cfg.c = k.c;
    cfg.hbar = hbar;
    cfg.label = "newtonian_point_mass";
    cfg.potential = [k](const Point& x) { return -k.G * k.mass / (x - k.source).norm(); };
    return cfg;
  }

  /// Phi = g x along the spatial axis (axis - 1 of the spatial chart).
  static NewtonianConfig uniform(const UniformWeakField& k, double m = 1.0, double hbar = 1.0) {
    NewtonianConfig cfg;
    cfg.m = m;
    cfg.c = k.c;
    cfg.hbar = hbar;
    cfg.label = "uniform_weak_field";
    cfg.potential = [k](const Point& x) { return k.g_acc * x[k.axis - 1]; };
    return cfg;
  }

  void validate(const Chart& ch) const {
    if (!(m > 0.0) || !(c > 0.0) || !(hbar > 0.0)) throw std::invalid_argument("newtonian: m, c, hbar must be positive");
    for (std::size_t s = 0; s < ch.num_sites(); ++s) {
      const double v = std::abs(phi(ch.site_point(s))) / (c * c);
      if (!(v < 0.1)) throw InvalidMetric("newtonian: |Phi|/c^2 < 0.1 violated on chart");
    }
  }
};

struct ClockedParticleState {
  Chart chart;
  std::vector<double> levels;
  CMatrix amps;  // sites x levels
  double time = 0.0;

  ClockedParticleState(Chart ch, std::vector<double> lv, CMatrix a)
      : chart(std::move(ch)), levels(std::move(lv)), amps(std::move(a)) {
    if (amps.rows() != static_cast<Eigen::Index>(chart.num_sites()) ||
        amps.cols() != static_cast<Eigen::Index>(levels.size())) {
      throw IncompatibleState("clocked state: amplitude shape does not match chart and levels");
    }
    for (std::size_t i = 0; i < levels.size(); ++i) {
      if (!std::isfinite(levels[i])) throw std::invalid_argument("clocked state: levels must be finite");
      for (std::size_t j = 0; j < i; ++j)
        if (levels[i] == levels[j]) throw std::invalid_argument("clocked state: levels must be distinct");
    }
  }

  static ClockedParticleState from_function(const Chart& ch, std::vector<double> lv,
                                            const std::function<cplx(const Point&, int)>& fn) {
    CMatrix a(ch.num_sites(), lv.size());
    for (std::size_t s = 0; s < ch.num_sites(); ++s)
      for (std::size_t i = 0; i < lv.size(); ++i) a(s, i) = fn(ch.site_point(s), static_cast<int>(i));
    return ClockedParticleState(ch, std::move(lv), std::move(a));
  }

  static ClockedParticleState site_state(const Chart& ch, std::vector<double> lv, std::size_t site,
                                         const CVector& internal) {
    CMatrix a = CMatrix::Zero(ch.num_sites(), lv.size());
    a.row(site) = internal.transpose() / std::sqrt(ch.cell_volume());
    return ClockedParticleState(ch, std::move(lv), std::move(a));
  }

  double norm2() const { return amps.squaredNorm() * chart.cell_volume(); }

  ClockedParticleState normalized() const {
    const double n = norm2();
    if (!(n > 0.0)) throw ZeroWeight("clocked state: zero norm");
    ClockedParticleState out = *this;
    out.amps /= std::sqrt(n);
    return out;
  }

  cplx inner(const ClockedParticleState& o) const {
    return (amps.conjugate().array() * o.amps.array()).sum() * chart.cell_volume();
  }
};

namespace detail {

/// -D^2 with Dirichlet ends on n sites of spacing h.
inline Eigen::MatrixXd neg_laplacian_1d(int n, double h) {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    L(i, i) = 2.0 / (h * h);
    if (i > 0) L(i, i - 1) = -1.0 / (h * h);
    if (i + 1 < n) L(i, i + 1) = -1.0 / (h * h);
  }
  return L;
}

/// Applies a per-axis n x n matrix along `axis` of the chart.
inline CMatrix apply_along(const Chart& ch, int axis, const CMatrix& P, const CMatrix& amps) {
  const int n = ch.shape()[axis];
  const std::size_t st = ch.stride(axis);
  CMatrix out(amps.rows(), amps.cols());
  CVector line(n);
  for (std::size_t s = 0; s < ch.num_sites(); ++s) {
    if (ch.multi_index(s)[axis] != 0) continue;
    for (Eigen::Index c = 0; c < amps.cols(); ++c) {
      for (int i = 0; i < n; ++i) line[i] = amps(s + i * st, c);
      const CVector r = P * line;
      for (int i = 0; i < n; ++i) out(s + i * st, c) = r[i];
    }
  }
  return out;
}

inline Eigen::MatrixXd potential_grid(const NewtonianConfig& cfg, const Chart& ch) {
  Eigen::MatrixXd v(ch.num_sites(), 1);
  for (std::size_t s = 0; s < ch.num_sites(); ++s) v(s, 0) = cfg.phi(ch.site_point(s));
  return v;
}

/// mc^2 + m Phi + E_I (1 + Phi/c^2) per site and level.
inline Eigen::MatrixXd lab_diagonal(const NewtonianConfig& cfg, const Chart& ch, const std::vector<double>& levels) {
  const double c2 = cfg.c * cfg.c;
  Eigen::MatrixXd d(ch.num_sites(), levels.size());
  for (std::size_t s = 0; s < ch.num_sites(); ++s) {
    const double phi = cfg.phi(ch.site_point(s));
    for (std::size_t i = 0; i < levels.size(); ++i)
      d(s, i) = cfg.m * c2 + cfg.m * phi + levels[i] * (1.0 + phi / c2);
  }
  return d;
}

/// Strang stepper: half diagonal phase, exact kinetic per axis, half phase.
class Stepper {
 public:
  Stepper(const NewtonianConfig& cfg, const Chart& ch, Eigen::MatrixXd diag, double dt)
      : ch_(ch), dt_(dt) {
    half_ = (cplx(0.0, -0.5 * dt / cfg.hbar) * diag.cast<cplx>()).array().exp().matrix();
    if (!cfg.kinetic) return;
    for (int a = 0; a < ch.dim(); ++a) {
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(neg_laplacian_1d(ch.shape()[a], ch.spacing(a)));
      Eigen::VectorXd T = cfg.hbar * cfg.hbar * es.eigenvalues() / (2.0 * cfg.m);
      if (cfg.relativistic) T -= T.cwiseProduct(T) / (2.0 * cfg.m * cfg.c * cfg.c);
      const CVector ph = (cplx(0.0, -dt / cfg.hbar) * T.cast<cplx>()).array().exp().matrix();
      const CMatrix U = es.eigenvectors().cast<cplx>();
      kin_.push_back(U * ph.asDiagonal() * U.transpose());
    }
  }

  double dt() const { return dt_; }

  void step(CMatrix& amps) const {
    amps.array() *= half_.array();
    for (int a = 0; a < static_cast<int>(kin_.size()); ++a) amps = apply_along(ch_, a, kin_[a], amps);
    amps.array() *= half_.array();
  }

  void run(CMatrix& amps, long n) const {
    for (long k = 0; k < n; ++k) step(amps);
  }

 private:
  Chart ch_;
  double dt_;
  CMatrix half_;
  std::vector<CMatrix> kin_;
};

inline double kinetic_diag_max(const NewtonianConfig& cfg, const Chart& ch) {
  if (!cfg.kinetic) return 0.0;
  double k = 0.0;
  for (int a = 0; a < ch.dim(); ++a) k += 1.0 / (ch.spacing(a) * ch.spacing(a));
  return cfg.hbar * cfg.hbar * k / cfg.m;
}

inline double step_bound(const NewtonianConfig& cfg, const Chart& ch, const Eigen::MatrixXd& diag) {
  const double hmax = diag.cwiseAbs().maxCoeff() + kinetic_diag_max(cfg, ch);
  return 0.1 * cfg.hbar / hmax;
}

inline void check_step(const NewtonianConfig& cfg, const Chart& ch, const Eigen::MatrixXd& diag, double dt) {
  const double bound = step_bound(cfg, ch, diag);
  if (dt > bound * (1.0 + 1e-12)) {
    throw StepBoundViolation("evolve: step " + std::to_string(dt) + " exceeds bound " + std::to_string(bound), bound);
  }
}

}  // namespace detail

/// H_PI = mc^2 + p^2/2m + m Phi + H_I (1 + Phi/c^2) on the grid, with the
/// optional corrections -p^4/8m^3c^2 + Phi p^2/2mc^2 - H_I p^2/2m^2c^2.
class HamiltonianPI {
 public:
  HamiltonianPI(NewtonianConfig cfg, Chart ch, std::vector<double> levels)
      : cfg_(std::move(cfg)), ch_(std::move(ch)), levels_(std::move(levels)) {
    cfg_.validate(ch_);
    diag_ = detail::lab_diagonal(cfg_, ch_, levels_);
    phi_ = detail::potential_grid(cfg_, ch_);
  }

  const Eigen::MatrixXd& diagonal() const { return diag_; }

  /// p^2/2m via the central-difference Laplacian, zero outside the chart.
  CMatrix kinetic(const CMatrix& a) const {
    CMatrix out = CMatrix::Zero(a.rows(), a.cols());
    if (!cfg_.kinetic) return out;
    for (int ax = 0; ax < ch_.dim(); ++ax) {
      const CMatrix L = detail::neg_laplacian_1d(ch_.shape()[ax], ch_.spacing(ax)).cast<cplx>();
      out += detail::apply_along(ch_, ax, L, a);
    }
    return cfg_.hbar * cfg_.hbar / (2.0 * cfg_.m) * out;
  }

  CMatrix apply(const CMatrix& a) const {
    CMatrix out = kinetic(a) + CMatrix(diag_.cast<cplx>().array() * a.array());
    if (cfg_.relativistic && cfg_.kinetic) {
      const double c2 = cfg_.c * cfg_.c;
      const CMatrix Ta = kinetic(a);
      out -= kinetic(Ta) / (2.0 * cfg_.m * c2);
      const CMatrix phiA = (phi_.replicate(1, a.cols()).cast<cplx>().array() * a.array()).matrix();
      const CMatrix phiTa = (phi_.replicate(1, a.cols()).cast<cplx>().array() * Ta.array()).matrix();
      out += 0.5 * (phiTa + kinetic(phiA)) / c2;
      for (std::size_t i = 0; i < levels_.size(); ++i) out.col(i) -= levels_[i] * Ta.col(i) / (cfg_.m * c2);
    }
    return out;
  }

  cplx inner(const CMatrix& a, const CMatrix& b) const {
    return (a.conjugate().array() * b.array()).sum() * ch_.cell_volume();
  }

 private:
  NewtonianConfig cfg_;
  Chart ch_;
  std::vector<double> levels_;
  Eigen::MatrixXd diag_;
  Eigen::MatrixXd phi_;
};

inline HamiltonianPI hamiltonian_PI(const NewtonianConfig& cfg, const Chart& ch, const std::vector<double>& levels) {
  return HamiltonianPI(cfg, ch, levels);
}

inline double max_step(const NewtonianConfig& cfg, const Chart& ch, const std::vector<double>& levels) {
  return detail::step_bound(cfg, ch, detail::lab_diagonal(cfg, ch, levels));
}

/// Split-step evolution under H_PI over t_span in `steps` equal steps.
inline ClockedParticleState evolve(const NewtonianConfig& cfg, const ClockedParticleState& state, double t_span,
                                   long steps) {
  cfg.validate(state.chart);
  if (std::abs(state.norm2() - 1.0) > 1e-10) throw std::invalid_argument("evolve: state must be normalized");
  if (cfg.relativistic) throw Unsupported("evolve: relativistic corrections are available on hamiltonian_PI only");
  if (steps < 1) throw std::invalid_argument("evolve: steps must be positive");
  const Eigen::MatrixXd diag = detail::lab_diagonal(cfg, state.chart, state.levels);
  const double dt = t_span / static_cast<double>(steps);
  detail::check_step(cfg, state.chart, diag, std::abs(dt));
  const detail::Stepper st(cfg, state.chart, diag, dt);
  ClockedParticleState out = state;
  st.run(out.amps, steps);
  out.time = state.time + t_span;
  return out;
}

// ---------------------------------------------------------------------------
// History states

enum class Picture { lab, particle };

struct HistoryClockState {
  Picture picture = Picture::lab;
  Chart chart;
  std::vector<double> levels;
  std::vector<double> times;     // lab t or particle tau, uniform
  std::vector<CMatrix> samples;  // sites x levels per time
  Eigen::MatrixXd diagonal;      // diagonal generator per site and level
  Eigen::MatrixXd lab_energies;  // particle picture: E_L per site and level
  std::string config_label;
  double m = 0.0, c = 0.0, hbar = 0.0;
};

namespace detail {

inline void check_uniform(const std::vector<double>& ts) {
  if (ts.size() < 2) throw std::invalid_argument("history: need at least two samples");
  const double d = ts[1] - ts[0];
  if (!(d > 0.0)) throw std::invalid_argument("history: samples must increase");
  for (std::size_t k = 1; k < ts.size(); ++k)
    if (std::abs((ts[k] - ts[k - 1]) - d) > 1e-12 * std::max(1.0, std::abs(ts[k])))
      throw std::invalid_argument("history: samples must be uniform");
  if (ts[0] < 0.0) throw std::invalid_argument("history: samples start at or after 0");
}

inline HistoryClockState run_history(const NewtonianConfig& cfg, const Chart& ch, const std::vector<double>& levels,
                                     CMatrix amps, Eigen::MatrixXd diag, const std::vector<double>& ts,
                                     long steps_per_sample) {
  check_uniform(ts);
  if (steps_per_sample < 1) throw std::invalid_argument("history: steps_per_sample must be positive");
  const double dt = (ts[1] - ts[0]) / static_cast<double>(steps_per_sample);
  check_step(cfg, ch, diag, dt);
  const Stepper st(cfg, ch, diag, dt);
  HistoryClockState h;
  h.chart = ch;
  h.levels = levels;
  h.times = ts;
  h.diagonal = diag;
  h.config_label = cfg.label;
  h.m = cfg.m;
  h.c = cfg.c;
  h.hbar = cfg.hbar;
  st.run(amps, std::lround(ts[0] / dt));
  for (std::size_t k = 0; k < ts.size(); ++k) {
    if (k > 0) st.run(amps, steps_per_sample);
    h.samples.push_back(amps);
  }
  return h;
}

}  // namespace detail

/// e^{-i H_PI t} psi0 at each lab-clock reading t.
inline HistoryClockState history_lab(const NewtonianConfig& cfg, const ClockedParticleState& psi0,
                                     const std::vector<double>& t_samples, long steps_per_sample) {
  cfg.validate(psi0.chart);
  HistoryClockState h = detail::run_history(cfg, psi0.chart, psi0.levels, psi0.amps,
                                            detail::lab_diagonal(cfg, psi0.chart, psi0.levels), t_samples,
                                            steps_per_sample);
  h.picture = Picture::lab;
  return h;
}

/// Initial particle-picture amplitudes (1 - Phi/c^2) psi0 and the lab-clock
/// energies E_L = -(mc^2 + E_I)/(1 - Phi/c^2) selected by the tau0 integral.
inline std::pair<CMatrix, Eigen::MatrixXd> particle_initial(const NewtonianConfig& cfg,
                                                            const ClockedParticleState& psi0) {
  const Chart& ch = psi0.chart;
  const double c2 = cfg.c * cfg.c;
  CMatrix a = psi0.amps;
  Eigen::MatrixXd el(ch.num_sites(), psi0.levels.size());
  for (std::size_t s = 0; s < ch.num_sites(); ++s) {
    const double f = 1.0 - cfg.phi(ch.site_point(s)) / c2;
    a.row(s) *= f;
    for (std::size_t i = 0; i < psi0.levels.size(); ++i) el(s, i) = -(cfg.m * c2 + psi0.levels[i]) / f;
  }
  return {a, el};
}

/// e^{-i H'_PL tau} |psi0>^(I) with H'_PL = mc^2 + p^2/2m + (1 - Phi/c^2) H_L.
inline HistoryClockState history_particle(const NewtonianConfig& cfg, const ClockedParticleState& psi0,
                                          const std::vector<double>& tau_samples, long steps_per_sample) {
  cfg.validate(psi0.chart);
  const Chart& ch = psi0.chart;
  const double c2 = cfg.c * cfg.c;
  auto [a, el] = particle_initial(cfg, psi0);
  Eigen::MatrixXd diag(ch.num_sites(), psi0.levels.size());
  for (std::size_t s = 0; s < ch.num_sites(); ++s) {
    const double f = 1.0 - cfg.phi(ch.site_point(s)) / c2;
    for (std::size_t i = 0; i < psi0.levels.size(); ++i) diag(s, i) = cfg.m * c2 + f * el(s, i);
  }
  HistoryClockState h = detail::run_history(cfg, ch, psi0.levels, std::move(a), diag, tau_samples, steps_per_sample);
  h.picture = Picture::particle;
  h.lab_energies = el;
  return h;
}

struct EquivalenceReport {
  double defect = 0.0;  // max |(1 - Phi/c^2) Psi_lab - Psi_part| / max |psi0|
  double bound = 0.0;
  bool pass = false;
  double phi_max = 0.0;       // max |Phi|/c^2 on the chart
  double second_order = 0.0;  // (mc^2 + E) (Phi/c^2)^2 t / hbar
  double kinetic_mixed = 0.0; // (Phi/c^2) <T> t / hbar
  double force_term = 0.0;    // t^2 |grad Phi| p_rms / (2 hbar)
  std::size_t compared = 0;
};

namespace detail {

inline double rms_momentum(const HistoryClockState& h, const CMatrix& amps) {
  HamiltonianPI H(NewtonianConfig{h.m, h.c, h.hbar, nullptr}, h.chart, h.levels);
  const CMatrix Ta = H.kinetic(amps);
  const double n = (amps.array().abs2()).sum() * h.chart.cell_volume();
  const double T = std::abs(H.inner(amps, Ta)) / n;
  return std::sqrt(2.0 * h.m * T);
}

}  // namespace detail

/// Compares the lab history at (t, x, tau = (1 + Phi(x)/c^2) t) with the
/// particle history resampled at that tau, level by level.
inline EquivalenceReport equivalence_check(const HistoryClockState& lab, const HistoryClockState& part,
                                           const NewtonianConfig& cfg, double safety = 2.0) {
  if (lab.picture != Picture::lab || part.picture != Picture::particle)
    throw IncompatibleState("equivalence: expected a lab and a particle history");
  if (lab.chart != part.chart || lab.levels != part.levels || lab.config_label != part.config_label ||
      lab.m != part.m || lab.c != part.c || lab.hbar != part.hbar || lab.m != cfg.m || lab.c != cfg.c) {
    throw IncompatibleState("equivalence: histories come from different configurations");
  }
  const Chart& ch = lab.chart;
  const double c2 = cfg.c * cfg.c;
  const double dtau = part.times[1] - part.times[0];
  const std::size_t np = part.times.size();
  const double scale = lab.samples[0].cwiseAbs().maxCoeff();
  EquivalenceReport rep;
  double grad = 0.0;
  for (std::size_t s = 0; s < ch.num_sites(); ++s) {
    const Point x = ch.site_point(s);
    rep.phi_max = std::max(rep.phi_max, std::abs(cfg.phi(x)) / c2);
    for (int a = 0; a < ch.dim(); ++a) {
      Point d = Point::Zero(ch.dim());
      d[a] = 1e-4 * ch.width(a);
      grad = std::max(grad, std::abs(cfg.phi(x + d) - cfg.phi(x - d)) / (2.0 * d[a]));
    }
  }
  for (std::size_t k = 0; k < lab.times.size(); ++k) {
    const double t = lab.times[k];
    for (std::size_t s = 0; s < ch.num_sites(); ++s) {
      const double phi = cfg.phi(ch.site_point(s)) / c2;
      const double tau = (1.0 + phi) * t;
      const double u = (tau - part.times[0]) / dtau;
      if (u < 0.0 || u > static_cast<double>(np - 1)) continue;
      // 4-point Lagrange stencil on the demodulated particle amplitude
      long j0 = static_cast<long>(std::floor(u)) - 1;
      j0 = std::clamp<long>(j0, 0, static_cast<long>(np) - 4);
      for (std::size_t i = 0; i < lab.levels.size(); ++i) {
        const double w = part.diagonal(s, i) / cfg.hbar;
        cplx q = 0.0;
        for (long a = 0; a < 4; ++a) {
          double l = 1.0;
          for (long b = 0; b < 4; ++b)
            if (b != a) l *= (u - (j0 + b)) / static_cast<double>(a - b);
          const double ta = part.times[j0 + a];
          q += l * part.samples[j0 + a](s, i) * std::exp(cplx(0.0, w * ta));
        }
        const cplx p = q * std::exp(cplx(0.0, -w * tau));
        const cplx ps = std::exp(cplx(0.0, part.lab_energies(s, i) * t / cfg.hbar)) * p;
        const cplx ls = (1.0 - phi) * std::exp(cplx(0.0, lab.levels[i] * tau / cfg.hbar)) * lab.samples[k](s, i);
        rep.defect = std::max(rep.defect, std::abs(ls - ps) / scale);
        ++rep.compared;
      }
    }
  }
  const double tmax = lab.times.back();
  double emax = 0.0;
  for (double e : lab.levels) emax = std::max(emax, std::abs(e));
  const double prms = cfg.kinetic ? detail::rms_momentum(lab, lab.samples[0]) : 0.0;
  rep.second_order = (cfg.m * c2 + emax) * rep.phi_max * rep.phi_max * tmax / cfg.hbar;
  rep.kinetic_mixed = rep.phi_max * prms * prms / (2.0 * cfg.m) * tmax / cfg.hbar;
  rep.force_term = 0.5 * tmax * tmax * grad * prms / cfg.hbar;
  rep.bound = safety * (rep.second_order + rep.kinetic_mixed + rep.force_term) + 1e-10;
  rep.pass = rep.compared > 0 && rep.defect <= rep.bound;
  return rep;
}

// ---------------------------------------------------------------------------
// Clock observables

/// Internal state of a clock held at x after time t, from evolve with the
/// kinetic term off.
inline CVector held_clock(NewtonianConfig cfg, const Point& x, const std::vector<double>& levels,
                          const CVector& internal, double t, long steps) {
  cfg.kinetic = false;
  Point lo = x.array() - 1.0, hi = x.array() + 1.0;
  const Chart ch(lo, hi, std::vector<int>(x.size(), 3));
  const std::size_t mid = ch.num_sites() / 2;
  const ClockedParticleState s0 =
      ClockedParticleState::site_state(ch, levels, mid, internal.normalized()).normalized();
  const ClockedParticleState s1 = evolve(cfg, s0, t, steps);
  return s1.amps.row(mid).transpose() * std::sqrt(ch.cell_volume());
}

/// Phase of level 1 relative to level 0 at x1 minus the same at x2.
inline double clock_phase_difference(const NewtonianConfig& cfg, const Point& x1, const Point& x2,
                                     const std::vector<double>& levels, double t, long steps) {
  if (levels.size() != 2) throw std::invalid_argument("clock phase: two levels expected");
  const CVector in = CVector::Constant(2, 1.0 / std::sqrt(2.0));
  const CVector a = held_clock(cfg, x1, levels, in, t, steps), b = held_clock(cfg, x2, levels, in, t, steps);
  return std::arg(a[1] * std::conj(a[0]) * std::conj(b[1] * std::conj(b[0])));
}

/// |<chi_1 | chi_2>| for equal-weight clocks held at x1 and x2.
inline double visibility(const NewtonianConfig& cfg, const Point& x1, const Point& x2,
                         const std::vector<double>& levels, double t, long steps) {
  const CVector in = CVector::Constant(static_cast<Eigen::Index>(levels.size()), 1.0);
  const CVector a = held_clock(cfg, x1, levels, in, t, steps), b = held_clock(cfg, x2, levels, in, t, steps);
  return std::abs(a.dot(b));
}

}  // namespace qrflab
