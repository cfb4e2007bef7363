#pragma once

// Constrained relativistic particle on a 1+1 lattice: the constraint
// operator, slice kernels, group averaging and the stationarity check.

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <iomanip>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "qrflab/manifold.hpp"
#include "qrflab/parallel.hpp"
#include "qrflab/qstate.hpp"

namespace qrflab {

using CMatrix = Eigen::MatrixXcd;

struct Lattice {
  Chart chart;
  int n_slices = 2;
  double delta = 0.01;  // affine step
  double mass = 1.0;
  double hbar = 1.0;
  double c = 1.0;

  void validate() const {
    if (chart.dim() != 2) throw Unsupported("path integral: only 1+1 charts are supported");
    if (n_slices < 2) throw std::invalid_argument("lattice: n_slices must be at least 2");
    if (!(delta > 0.0)) throw std::invalid_argument("lattice: delta must be positive");
    if (!(mass >= 0.0) || !(hbar > 0.0) || !(c > 0.0)) throw std::invalid_argument("lattice: bad constants");
  }

  double tau() const { return n_slices * delta; }

  /// 8 light-crossing times of the chart's time extent, in affine units
  /// (x^0 advances by about 2 m c per unit tau).
  double default_window() const { return 8.0 * chart.width(0) / (2.0 * std::max(mass, 1e-12) * c); }
};

namespace detail {

/// Symmetric FFT-compatible momenta for n sites of spacing h, `refine`
/// times denser than the natural grid.
inline std::vector<double> momentum_grid(int n, double h, double hbar, int refine = 1) {
  const int m = n * refine;
  const double dp = 2.0 * std::numbers::pi * hbar / (m * h);
  std::vector<double> p(m);
  const int kmin = -(m / 2);
  for (int k = 0; k < m; ++k) p[k] = (kmin + k) * dp;
  return p;
}

inline double momentum_weight(int n, double h, int refine) {
  // dp / (2 pi hbar)
  return 1.0 / (n * refine * h);
}

inline Matrix inverse_metric(const MetricField& g, const Point& x) { return g.value(x).inverse(); }

/// sum_{p0,p1} dp^2/(2 pi hbar)^2 exp(i/hbar (p.dx - (g^{mn} p p - m^2 c^2) delta)),
/// factorized over axes for diagonal inverse metrics.
inline cplx slice_sum(const Matrix& ginv, double dt, double dx, const std::vector<double>& p0,
                      const std::vector<double>& p1, double w0, double w1, double delta, double mc2, double hbar) {
  const double offdiag = ginv(0, 1);
  if (offdiag == 0.0) {
    cplx s0 = 0.0, s1 = 0.0;
    for (double p : p0) s0 += std::exp(cplx(0.0, (p * dt - ginv(0, 0) * p * p * delta) / hbar));
    for (double p : p1) s1 += std::exp(cplx(0.0, (p * dx - ginv(1, 1) * p * p * delta) / hbar));
    return w0 * w1 * s0 * s1 * std::exp(cplx(0.0, mc2 * delta / hbar));
  }
  cplx s = 0.0;
  for (double a : p0)
    for (double b : p1) {
      const double C = ginv(0, 0) * a * a + 2.0 * offdiag * a * b + ginv(1, 1) * b * b;
      s += std::exp(cplx(0.0, (a * dt + b * dx - C * delta) / hbar));
    }
  return w0 * w1 * s * std::exp(cplx(0.0, mc2 * delta / hbar));
}

}  // namespace detail

/// One affine step of the lattice propagator. K(j <- l) carries the endpoint
/// factors [-g]^{-1/4}; apply() includes the covariant weight of the source.
class SliceOperator {
 public:
  SliceOperator(MetricPtr g, const Lattice& lat, double delta, int refine = 1)
      : g_(std::move(g)), lat_(lat), delta_(delta), refine_(refine) {
    lat_.validate();
    if (g_->chart() != lat_.chart) throw IncompatibleState("slice: metric chart differs from lattice chart");
    weights_ = GridWavefunction::measure_weights(*g_);
    root_ = (weights_.array() / lat_.chart.cell_volume()).sqrt();  // (-g)^{1/4}
    spectral_ = std::holds_alternative<Minkowski>(g_->kind()) && refine_ == 1;
    if (!spectral_) build_dense();
  }

  bool spectral() const { return spectral_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  std::size_t size() const { return lat_.chart.num_sites(); }

  /// sum_l w_l K(j <- l) psi_l
  CVector apply(const CVector& psi) const {
    if (!spectral_) return dense_ * psi.cwiseProduct(weights_.cast<cplx>());
    return apply_spectral(psi);
  }

  /// Dense K(j <- l).
  CMatrix matrix() const {
    if (!spectral_) return dense_;
    const std::size_t n = size();
    CMatrix m(n, n);
    for (std::size_t l = 0; l < n; ++l) {
      CVector e = CVector::Zero(n);
      e[l] = 1.0 / weights_[l];
      m.col(l) = apply_spectral(e);
    }
    return m;
  }

 private:
  void build_dense() {
    const Chart& ch = lat_.chart;
    const int nt = ch.shape()[0], nx = ch.shape()[1];
    const double ht = ch.spacing(0), hx = ch.spacing(1);
    const auto p0 = detail::momentum_grid(nt, ht, lat_.hbar, refine_);
    const auto p1 = detail::momentum_grid(nx, hx, lat_.hbar, refine_);
    const double w0 = detail::momentum_weight(nt, ht, refine_), w1 = detail::momentum_weight(nx, hx, refine_);
    const double mc2 = lat_.mass * lat_.mass * lat_.c * lat_.c;
    const std::size_t n = ch.num_sites();
    dense_.resize(n, n);
    parallel_for(n, [&](std::size_t j) {
      const Point xj = ch.site_point(j);
      for (std::size_t l = 0; l < n; ++l) {
        const Point xl = ch.site_point(l);
        const Matrix ginv = detail::inverse_metric(*g_, 0.5 * (xj + xl));
        const cplx s = detail::slice_sum(ginv, xj[0] - xl[0], xj[1] - xl[1], p0, p1, w0, w1, delta_, mc2, lat_.hbar);
        dense_(j, l) = s / (root_[j] * root_[l]);
      }
    });
  }

  CVector apply_spectral(const CVector& psi) const {
    const Chart& ch = lat_.chart;
    const int nt = ch.shape()[0], nx = ch.shape()[1];
    const auto p0 = detail::momentum_grid(nt, ch.spacing(0), lat_.hbar);
    const auto p1 = detail::momentum_grid(nx, ch.spacing(1), lat_.hbar);
    const Matrix ginv = minkowski_eta(2).inverse();
    const double mc2 = lat_.mass * lat_.mass * lat_.c * lat_.c;
    CMatrix f(nt, nx);
    for (int i = 0; i < nt; ++i)
      for (int k = 0; k < nx; ++k) f(i, k) = psi[i * nx + k] * root_[i * nx + k];
    Eigen::FFT<double> fft;
    // forward along x then t
    CMatrix F(nt, nx);
    for (int i = 0; i < nt; ++i) {
      std::vector<cplx> in(nx), out;
      for (int k = 0; k < nx; ++k) in[k] = f(i, k);
      fft.fwd(out, in);
      for (int k = 0; k < nx; ++k) F(i, k) = out[k];
    }
    for (int k = 0; k < nx; ++k) {
      std::vector<cplx> in(nt), out;
      for (int i = 0; i < nt; ++i) in[i] = F(i, k);
      fft.fwd(out, in);
      for (int i = 0; i < nt; ++i) F(i, k) = out[i];
    }
    // FFT index q carries momentum p[(q + n/2) mod n] in the symmetric grid
    for (int i = 0; i < nt; ++i) {
      const double a = p0[(i + nt / 2) % nt];
      for (int k = 0; k < nx; ++k) {
        const double b = p1[(k + nx / 2) % nx];
        const double C = ginv(0, 0) * a * a + ginv(1, 1) * b * b - mc2;
        F(i, k) *= std::exp(cplx(0.0, -C * delta_ / lat_.hbar));
      }
    }
    for (int k = 0; k < nx; ++k) {
      std::vector<cplx> in(nt), out;
      for (int i = 0; i < nt; ++i) in[i] = F(i, k);
      fft.inv(out, in);
      for (int i = 0; i < nt; ++i) F(i, k) = out[i];
    }
    CVector res(nt * nx);
    for (int i = 0; i < nt; ++i) {
      std::vector<cplx> in(nx), out;
      for (int k = 0; k < nx; ++k) in[k] = F(i, k);
      fft.inv(out, in);
      for (int k = 0; k < nx; ++k) res[i * nx + k] = out[k] / root_[i * nx + k];
    }
    return res;
  }

  MetricPtr g_;
  Lattice lat_;
  double delta_;
  int refine_;
  bool spectral_ = false;
  Eigen::VectorXd weights_;
  Eigen::VectorXd root_;
  CMatrix dense_;
};

struct Kernel {
  Lattice lattice;
  CMatrix matrix;  // K(x1 <- x0), rows x1
  double tau = 0.0;
  double truncation_defect = 0.0;
  bool truncation_warning = false;
};

inline constexpr double kTruncationWarn = 1e-3;

namespace detail {

/// Change of one slice step on a centred Gaussian probe when the momentum
/// quadrature is refined twofold.
inline double truncation_defect(const MetricPtr& g, const Lattice& lat) {
  const Chart& ch = lat.chart;
  const Point mid = 0.5 * (ch.lo() + ch.hi());
  const double s0 = 0.1 * ch.width(0), s1 = 0.1 * ch.width(1);
  CVector probe(ch.num_sites());
  for (std::size_t k = 0; k < ch.num_sites(); ++k) {
    const Point x = ch.site_point(k) - mid;
    probe[k] = std::exp(-0.5 * (x[0] * x[0] / (s0 * s0) + x[1] * x[1] / (s1 * s1)));
  }
  const CVector a = SliceOperator(g, lat, lat.delta, 1).apply(probe);
  const CVector b = SliceOperator(g, lat, lat.delta, 2).apply(probe);
  return (a - b).cwiseAbs().maxCoeff() / probe.cwiseAbs().maxCoeff();
}

}  // namespace detail

/// Full kernel as a product of n_slices slice kernels with covariant
/// weights on every intermediate site.
inline Kernel kernel_transfer(const MetricPtr& g, const Lattice& lat, bool measure_defect = true) {
  lat.validate();
  const SliceOperator slice(g, lat, lat.delta);
  const CMatrix k1 = slice.matrix();
  const Eigen::VectorXcd w = slice.weights().cast<cplx>();
  CMatrix K = k1;
  for (int n = 1; n < lat.n_slices; ++n) K = k1 * w.asDiagonal() * K;
  Kernel out{lat, std::move(K), lat.tau(), 0.0, false};
  if (measure_defect) {
    out.truncation_defect = detail::truncation_defect(g, lat);
    out.truncation_warning = out.truncation_defect > kTruncationWarn;
  }
  return out;
}

/// sum_mid w(mid) K_b(x1 <- mid) K_a(mid <- x0)
inline CMatrix compose(const Kernel& later, const Kernel& earlier, const Eigen::VectorXd& weights) {
  return later.matrix * weights.cast<cplx>().asDiagonal() * earlier.matrix;
}

enum class PathAction { phase_space, lagrangian };

inline constexpr double kMaxEnumeratedPaths = 1e6;

/// Single step amplitude of the enumeration oracle, summed directly over the
/// two-dimensional momentum grid.
inline cplx enumerate_step(const MetricField& g, const Lattice& lat, const Point& from, const Point& to) {
  const Chart& ch = lat.chart;
  const auto p0 = detail::momentum_grid(ch.shape()[0], ch.spacing(0), lat.hbar);
  const auto p1 = detail::momentum_grid(ch.shape()[1], ch.spacing(1), lat.hbar);
  const double w = detail::momentum_weight(ch.shape()[0], ch.spacing(0), 1) *
                   detail::momentum_weight(ch.shape()[1], ch.spacing(1), 1);
  const Matrix ginv = g.value(0.5 * (from + to)).inverse();
  const Point dx = to - from;
  const double mc2 = lat.mass * lat.mass * lat.c * lat.c;
  cplx s = 0.0;
  for (double a : p0)
    for (double b : p1) {
      const double C = ginv(0, 0) * a * a + 2.0 * ginv(0, 1) * a * b + ginv(1, 1) * b * b - mc2;
      s += std::exp(cplx(0.0, (a * dx[0] + b * dx[1] - C * lat.delta) / lat.hbar));
    }
  return w * s;
}

/// m c sqrt(g dx dx) for one lattice step; spacelike steps continue to
/// i m c sqrt(-g dx dx).
inline cplx step_action(const MetricField& g, const Lattice& lat, const Point& from, const Point& to) {
  const Point dx = to - from;
  const double s2 = dx.dot(g.value(0.5 * (from + to)) * dx);
  const double mc = lat.mass * lat.c;
  return s2 >= 0.0 ? cplx(mc * std::sqrt(s2), 0.0) : cplx(0.0, mc * std::sqrt(-s2));
}

/// Brute-force sum over every lattice path with n_slices steps between each
/// pair of sites. `sites` restricts the intermediate points (empty = all).
inline Kernel kernel_enumerate(const MetricPtr& g, const Lattice& lat, PathAction action = PathAction::phase_space,
                               std::vector<std::size_t> sites = {}) {
  lat.validate();
  const Chart& ch = lat.chart;
  const std::size_t n = ch.num_sites();
  if (sites.empty())
    for (std::size_t s = 0; s < n; ++s) sites.push_back(s);
  if (std::pow(static_cast<double>(sites.size()), lat.n_slices) > kMaxEnumeratedPaths) {
    throw Unsupported("enumeration: instance exceeds 1e6 paths");
  }
  const Eigen::VectorXd w = GridWavefunction::measure_weights(*g);
  const Eigen::VectorXd root = (w.array() / ch.cell_volume()).sqrt();
  // sqrt(-g) of intermediate sites cancels against the slice factors
  const double dv = ch.cell_volume();
  std::vector<Point> pts(n);
  for (std::size_t s = 0; s < n; ++s) pts[s] = ch.site_point(s);

  auto step = [&](std::size_t a, std::size_t b) -> cplx {
    if (action == PathAction::phase_space) return enumerate_step(*g, lat, pts[a], pts[b]);
    return std::exp(cplx(0.0, 1.0 / lat.hbar) * step_action(*g, lat, pts[a], pts[b]));
  };

  // cache of step amplitudes between every pair used
  CMatrix A(n, n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) A(b, a) = step(a, b);

  Kernel out{lat, CMatrix::Zero(n, n), lat.tau(), 0.0, false};
  const int inner = lat.n_slices - 1;
  std::vector<std::size_t> idx(inner);
  for (std::size_t x0 = 0; x0 < n; ++x0) {
    for (std::size_t x1 = 0; x1 < n; ++x1) {
      cplx total = 0.0;
      std::fill(idx.begin(), idx.end(), 0);
      while (true) {
        cplx amp = 1.0;
        std::size_t prev = x0;
        for (int k = 0; k < inner; ++k) {
          const std::size_t cur = sites[idx[k]];
          amp *= A(cur, prev) * dv;
          prev = cur;
        }
        amp *= A(x1, prev);
        total += amp;
        int k = 0;
        while (k < inner && ++idx[k] == sites.size()) idx[k++] = 0;
        if (k == inner) break;
      }
      if (action == PathAction::phase_space) total /= root[x0] * root[x1];
      out.matrix(x1, x0) = total;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Constraint operator

/// W(g^{mn} p_m p_n) - m^2 c^2 with covariant central-difference momenta.
class ConstraintOperator {
 public:
  ConstraintOperator(MetricPtr g, const Lattice& lat) : g_(std::move(g)), lat_(lat) {
    lat_.validate();
    const Chart& ch = lat_.chart;
    weights_ = GridWavefunction::measure_weights(*g_);
    root_ = (weights_.array() / ch.cell_volume()).sqrt();
    ginv_.resize(ch.num_sites());
    for (std::size_t s = 0; s < ch.num_sites(); ++s) ginv_[s] = g_->value(ch.site_point(s)).inverse();
  }

  std::size_t size() const { return lat_.chart.num_sites(); }
  const Eigen::VectorXd& weights() const { return weights_; }

  /// -i hbar (-g)^{-1/4} D_axis (-g)^{1/4}, zero on boundary sites.
  CVector momentum(const CVector& psi, int axis) const {
    const Chart& ch = lat_.chart;
    const std::size_t st = ch.stride(axis);
    const double h = ch.spacing(axis);
    const int n = ch.shape()[axis];
    CVector out = CVector::Zero(psi.size());
    for (std::size_t s = 0; s < size(); ++s) {
      const int i = ch.multi_index(s)[axis];
      if (i == 0 || i == n - 1) continue;
      out[s] = cplx(0.0, -lat_.hbar) * (root_[s + st] * psi[s + st] - root_[s - st] * psi[s - st]) /
               (2.0 * h * root_[s]);
    }
    return out;
  }

  CVector coeff(const CVector& psi, int m, int n) const {
    CVector out(psi.size());
    for (std::size_t s = 0; s < size(); ++s) out[s] = ginv_[s](m, n) * psi[s];
    return out;
  }

  /// 1/4 (f p_m p_n + p_m f p_n + p_n f p_m + p_m p_n f) summed over m, n.
  CVector apply(const CVector& psi) const {
    CVector out = CVector::Zero(psi.size());
    for (int m = 0; m < 2; ++m)
      for (int n = 0; n < 2; ++n) {
        if (all_zero(m, n)) continue;
        out += 0.25 * (coeff(momentum(momentum(psi, n), m), m, n) + momentum(coeff(momentum(psi, n), m, n), m) +
                       momentum(coeff(momentum(psi, m), m, n), n) + momentum(momentum(coeff(psi, m, n), n), m));
      }
    return out - mass_term() * psi;
  }

  /// 1/2 (f p_m p_n + p_m p_n f) ordering.
  CVector apply_symmetrized(const CVector& psi) const {
    CVector out = CVector::Zero(psi.size());
    for (int m = 0; m < 2; ++m)
      for (int n = 0; n < 2; ++n) {
        if (all_zero(m, n)) continue;
        out += 0.5 * (coeff(momentum(momentum(psi, n), m), m, n) + momentum(momentum(coeff(psi, m, n), n), m));
      }
    return out - mass_term() * psi;
  }

  CMatrix matrix() const {
    const std::size_t n = size();
    CMatrix M(n, n);
    for (std::size_t k = 0; k < n; ++k) M.col(k) = apply(CVector::Unit(n, k));
    return M;
  }

  cplx inner(const CVector& a, const CVector& b) const {
    return (a.conjugate().array() * b.array() * weights_.cast<cplx>().array()).sum();
  }

 private:
  double mass_term() const { return lat_.mass * lat_.mass * lat_.c * lat_.c; }

  bool all_zero(int m, int n) const {
    for (const auto& gi : ginv_)
      if (gi(m, n) != 0.0) return false;
    return true;
  }

  MetricPtr g_;
  Lattice lat_;
  Eigen::VectorXd weights_;
  Eigen::VectorXd root_;
  std::vector<Matrix> ginv_;
};

inline ConstraintOperator constraint_matrix(const MetricPtr& g, const Lattice& lat) {
  return ConstraintOperator(g, lat);
}

// ---------------------------------------------------------------------------
// Group averaging

struct PhysicalState {
  Lattice lattice;
  std::vector<double> taus;
  std::vector<CVector> omega;  // omega(tau, x) per tau sample
  CVector averaged;            // delta * sum_tau omega
  double cutoff_T = 0.0;
  double induced_norm = 0.0;       // Re <psi_k | averaged>
  double translation_defect = 0.0; // |K_delta averaged - averaged| / |averaged|
  double edge_bound = 0.0;         // delta (|omega(-T/2)| + |omega(T/2)|) / |averaged|
  bool cutoff_flag = false;
  Eigen::VectorXd weights;

  std::string to_csv() const {
    std::ostringstream os;
    os << std::setprecision(17) << "tau,x0,x1,re,im,abs\n";
    const Chart& ch = lattice.chart;
    for (std::size_t k = 0; k < taus.size(); ++k)
      for (std::size_t s = 0; s < ch.num_sites(); ++s) {
        const Point x = ch.site_point(s);
        const cplx v = omega[k][s];
        os << taus[k] << ',' << x[0] << ',' << x[1] << ',' << v.real() << ',' << v.imag() << ',' << std::abs(v)
           << '\n';
      }
    return os.str();
  }
};

inline double weighted_norm(const CVector& v, const Eigen::VectorXd& w) {
  return std::sqrt((v.array().abs2() * w.array()).sum());
}

/// omega(tau, x) = (1/2 pi hbar) sum_x0 w(x0) K_tau(x <- x0) psi_k(x0) for tau
/// in [-T/2, T/2] in steps of lattice.delta.
inline PhysicalState physical_state(const MetricPtr& g, const GridWavefunction& psi_k, const Lattice& lat,
                                    double cutoff_T = 0.0) {
  lat.validate();
  if (psi_k.chart() != lat.chart) throw IncompatibleState("physical state: chart mismatch");
  if (std::abs(psi_k.norm2() - 1.0) > 1e-10) throw std::invalid_argument("physical state: psi_k must be normalized");
  const double T = cutoff_T > 0.0 ? cutoff_T : lat.default_window();
  const int half = std::max(1, static_cast<int>(std::lround(0.5 * T / lat.delta)));
  const SliceOperator fwd(g, lat, lat.delta), bwd(g, lat, -lat.delta);
  const double pref = 1.0 / (2.0 * std::numbers::pi * lat.hbar);

  PhysicalState ps;
  ps.lattice = lat;
  ps.cutoff_T = 2.0 * half * lat.delta;
  ps.weights = fwd.weights();
  const std::size_t n = 2 * half + 1;
  ps.taus.resize(n);
  ps.omega.resize(n);
  // omega(0) = pref * psi_k, since K_0 W is the identity
  ps.omega[half] = pref * psi_k.amps();
  ps.taus[half] = 0.0;
  for (int k = 1; k <= half; ++k) {
    ps.omega[half + k] = fwd.apply(ps.omega[half + k - 1]);
    ps.taus[half + k] = k * lat.delta;
    ps.omega[half - k] = bwd.apply(ps.omega[half - k + 1]);
    ps.taus[half - k] = -k * lat.delta;
  }
  ps.averaged = CVector::Zero(psi_k.size());
  for (const auto& o : ps.omega) ps.averaged += lat.delta * o;
  ps.induced_norm = (psi_k.amps().conjugate().array() * ps.averaged.array() * ps.weights.cast<cplx>().array()).sum().real();
  const double na = weighted_norm(ps.averaged, ps.weights);
  if (na > 0.0) {
    ps.translation_defect = weighted_norm(fwd.apply(ps.averaged) - ps.averaged, ps.weights) / na;
    ps.edge_bound = lat.delta * (weighted_norm(ps.omega.front(), ps.weights) + weighted_norm(ps.omega.back(), ps.weights)) / na;
  }
  ps.cutoff_flag = ps.translation_defect > 1.01 * ps.edge_bound + 1e-12;
  return ps;
}

/// Per-branch physical states of a superposition; branch i is scaled by c_i.
struct BranchKinematic {
  int label;
  cplx c;
  MetricPtr g;
  GridWavefunction psi_k;
};

inline std::vector<PhysicalState> physical_state_superposed(const std::vector<BranchKinematic>& branches,
                                                            const Lattice& lat, double cutoff_T = 0.0) {
  std::vector<PhysicalState> out(branches.size());
  parallel_for(branches.size(), [&](std::size_t i) {
    const auto& b = branches[i];
    Lattice li = lat;
    li.chart = b.g->chart();
    PhysicalState ps = physical_state(b.g, b.psi_k, li, cutoff_T);
    for (auto& o : ps.omega) o *= b.c;
    ps.averaged *= b.c;
    out[i] = std::move(ps);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Stationarity of the history state

struct ElReport {
  std::vector<double> taus;
  std::vector<Point> ridge;
  double residual = 0.0;  // max |dL/dx - d/dtau dL/dxdot| along the ridge
  double bound = 0.0;     // C * grid spacing
  bool pass = false;
  bool inconclusive = false;
};

namespace detail {

/// Sub-cell location of the maximum of |v| via parabolas through log|v|.
inline std::optional<Point> ridge_point(const CVector& v, const Chart& ch) {
  Eigen::Index best = 0;
  const double peak = v.cwiseAbs().maxCoeff(&best);
  const double mean = v.cwiseAbs().mean();
  if (!(peak > 0.0) || peak < 2.0 * mean) return std::nullopt;
  Point x = ch.site_point(best);
  const auto idx = ch.multi_index(best);
  for (int a = 0; a < ch.dim(); ++a) {
    if (idx[a] == 0 || idx[a] == ch.shape()[a] - 1) return std::nullopt;
    const double lm = std::log(std::abs(v[best - ch.stride(a)]));
    const double l0 = std::log(peak);
    const double lp = std::log(std::abs(v[best + ch.stride(a)]));
    const double den = lm - 2.0 * l0 + lp;
    if (den < 0.0) x[a] += 0.5 * ch.spacing(a) * (lm - lp) / den;
  }
  return x;
}

}  // namespace detail

/// Extracts x*(tau) every `stride` samples and evaluates the discrete
/// Euler-Lagrange residual of L = sqrt(g xdot xdot) along it.
inline ElReport el_residual_check(const PhysicalState& ps, const MetricField& g, int stride = 1, double C = 1.0,
                                  double tau_window = 0.0) {
  ElReport rep;
  const Chart& ch = ps.lattice.chart;
  for (std::size_t k = 0; k < ps.taus.size(); k += stride) {
    if (tau_window > 0.0 && std::abs(ps.taus[k]) > tau_window) continue;
    const auto x = detail::ridge_point(ps.omega[k], ch);
    if (!x) {
      rep.inconclusive = true;
      continue;
    }
    rep.taus.push_back(ps.taus[k]);
    rep.ridge.push_back(*x);
  }
  rep.bound = C * std::max(ch.spacing(0), ch.spacing(1));
  if (rep.ridge.size() < 3) {
    rep.inconclusive = true;
    return rep;
  }
  auto momentum = [&](const Point& x, const Point& xd) {
    const Matrix gm = g.value(x);
    const double L = std::sqrt(std::abs(xd.dot(gm * xd)));
    return Point(gm * xd / L);
  };
  for (std::size_t k = 1; k + 1 < rep.ridge.size(); ++k) {
    const double dt = rep.taus[k + 1] - rep.taus[k - 1];
    const Point xd = (rep.ridge[k + 1] - rep.ridge[k - 1]) / dt;
    const Point xdp = (rep.ridge[k + 1] - rep.ridge[k]) / (rep.taus[k + 1] - rep.taus[k]);
    const Point xdm = (rep.ridge[k] - rep.ridge[k - 1]) / (rep.taus[k] - rep.taus[k - 1]);
    const Point pp = momentum(0.5 * (rep.ridge[k] + rep.ridge[k + 1]), xdp);
    const Point pm = momentum(0.5 * (rep.ridge[k] + rep.ridge[k - 1]), xdm);
    const MetricDerivatives der = g.derivatives(rep.ridge[k], false);
    const double L = std::sqrt(std::abs(xd.dot(g.value(rep.ridge[k]) * xd)));
    Point res(2);
    for (int a = 0; a < 2; ++a) res[a] = xd.dot(der.d[a] * xd) / (2.0 * L);
    res -= (pp - pm) / (0.5 * dt);
    rep.residual = std::max(rep.residual, res.cwiseAbs().maxCoeff());
  }
  rep.pass = !rep.inconclusive && rep.residual <= rep.bound;
  return rep;
}

}  // namespace qrflab
