#pragma once

// Orthonormal tetrads, second-order locally inertial coordinate maps,
// geodesics and Fermi frames transported along them.

#include <Eigen/Dense>

#include <cmath>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qrflab/manifold.hpp"

namespace qrflab {

struct Tetrad {
  Point site;
  Matrix f;  // columns are the legs f^mu_(alpha)
  Matrix b;  // inverse of f
};

/// Gram-Schmidt on the coordinate basis with respect to g, d/dx^0 first,
/// leg 0 future pointing.
inline Tetrad orthonormal_tetrad(const Matrix& g, const Point& site) {
  const int d = static_cast<int>(g.rows());
  const Matrix eta = minkowski_eta(d);
  Matrix f = Matrix::Zero(d, d);
  for (int k = 0; k < d; ++k) {
    Point v = Point::Unit(d, k);
    for (int j = 0; j < k; ++j) {
      const Point leg = f.col(j);
      v -= eta(j, j) * (leg.dot(g * v)) * leg;
    }
    const double n2 = v.dot(g * v);
    const double want = eta(k, k);
    if (!(n2 * want > 0.0)) {
      std::ostringstream os;
      os << "tetrad: coordinate leg " << k << " has wrong causal character at (" << site.transpose()
         << ")";
      throw InvalidMetric(os.str());
    }
    f.col(k) = v / std::sqrt(std::abs(n2));
  }
  if (f(0, 0) < 0.0) f.col(0) = -f.col(0);
  return {site, f, f.inverse()};
}

inline Tetrad orthonormal_tetrad(const MetricField& g, const Point& x) {
  return orthonormal_tetrad(eval_metric(g, x), x);
}

/// max |f^T g f - eta|
inline double orthonormality_residual(const Matrix& f, const Matrix& g) {
  return (f.transpose() * g * f - minkowski_eta(static_cast<int>(g.rows()))).cwiseAbs().maxCoeff();
}

enum class MapDirection { forward, inverse };

/// xi(x) = b (dx + 1/2 Gamma dx dx), dx = x - center, and the truncated
/// inverse x(xi) = center + y - 1/2 Gamma y y with y = f xi.
class SecondOrderMap {
 public:
  SecondOrderMap() = default;
  SecondOrderMap(Point center, Matrix b, Matrix f, ChristoffelBlock gamma, Point trust)
      : center_(std::move(center)),
        b_(std::move(b)),
        f_(std::move(f)),
        gamma_(std::move(gamma)),
        trust_(std::move(trust)) {}

  const Point& center() const { return center_; }
  const Matrix& b() const { return b_; }
  const Matrix& f() const { return f_; }
  const ChristoffelBlock& gamma() const { return gamma_; }
  const Point& trust_radius() const { return trust_; }
  int dim() const { return static_cast<int>(center_.size()); }

  Point forward(const Point& x) const {
    const Point dx = x - center_;
    check_trust(dx);
    return b_ * (dx + 0.5 * quad(dx));
  }

  Point inverse(const Point& xi) const {
    const Point y = f_ * xi;
    check_trust(y);
    return center_ + y - 0.5 * quad(y);
  }

  /// Exact preimage of forward(): Newton iteration seeded by inverse().
  Point solve_forward(const Point& xi, int max_iter = 20) const {
    Point x = inverse(xi);
    const int d = dim();
    for (int it = 0; it < max_iter; ++it) {
      const Point r = forward(x) - xi;
      if (r.cwiseAbs().maxCoeff() <= 1e-15 * (1.0 + xi.cwiseAbs().maxCoeff())) break;
      const Point dx = x - center_;
      Matrix J = Matrix::Identity(d, d);
      for (int l = 0; l < d; ++l)
        for (int a = 0; a < d; ++a)
          for (int c = 0; c < d; ++c) J(l, a) += gamma_(l, a, c) * dx[c];
      x -= (b_ * J).lu().solve(r);
    }
    return x;
  }

  Point apply(const Point& p, MapDirection dir) const {
    return dir == MapDirection::forward ? forward(p) : inverse(p);
  }

  /// d x^mu / d xi^alpha of the inverse map.
  Matrix inverse_jacobian(const Point& xi) const {
    const int d = dim();
    const Point y = f_ * xi;
    Matrix J = Matrix::Identity(d, d);
    for (int m = 0; m < d; ++m)
      for (int n = 0; n < d; ++n) {
        double s = 0.0;
        for (int k = 0; k < d; ++k) s += gamma_(m, n, k) * y[k];
        J(m, n) -= s;
      }
    return J * f_;
  }

  bool within_trust(const Point& offset) const {
    for (int a = 0; a < dim(); ++a)
      if (std::abs(offset[a]) > trust_[a] * (1.0 + 1e-12)) return false;
    return true;
  }

 private:
  Point quad(const Point& v) const {
    const int d = dim();
    Point q = Point::Zero(d);
    for (int l = 0; l < d; ++l)
      for (int a = 0; a < d; ++a)
        for (int c = 0; c < d; ++c) q[l] += gamma_(l, a, c) * v[a] * v[c];
    return q;
  }

  void check_trust(const Point& offset) const {
    if (!within_trust(offset)) {
      std::ostringstream os;
      os << "second-order map: offset (" << offset.transpose() << ") outside trust radius";
      throw DomainError(os.str());
    }
  }

  Point center_;
  Matrix b_;
  Matrix f_;
  ChristoffelBlock gamma_;
  Point trust_;
};

inline constexpr double kDefaultTrustFraction = 0.1;

inline Point trust_radius(const Chart& ch, double fraction) {
  Point t(ch.dim());
  for (int a = 0; a < ch.dim(); ++a) t[a] = fraction * ch.width(a);
  return t;
}

inline SecondOrderMap map_from_legs(const MetricField& g, const Point& center, const Matrix& f,
                                    double trust_fraction = kDefaultTrustFraction) {
  return SecondOrderMap(center, f.inverse(), f, christoffel(g, center),
                        trust_radius(g.chart(), trust_fraction));
}

/// Locally inertial second-order map centred at x_P.
inline SecondOrderMap lif_map(const MetricField& g, const Point& x_P,
                              double trust_fraction = kDefaultTrustFraction) {
  const Tetrad t = orthonormal_tetrad(g, x_P);
  return SecondOrderMap(x_P, t.b, t.f, christoffel(g, x_P), trust_radius(g.chart(), trust_fraction));
}

inline Point apply_map(const SecondOrderMap& m, const Point& x, MapDirection dir) {
  return m.apply(x, dir);
}

/// g~(xi) = J^T g(x(xi)) J with J the Jacobian of the inverse map.
inline Matrix pullback_metric(const SecondOrderMap& m, const MetricField& g, const Point& xi) {
  const Point x = m.inverse(xi);
  const Matrix J = m.inverse_jacobian(xi);
  return J.transpose() * eval_metric(g, x) * J;
}

/// max-abs of central-difference first derivatives of g~ at xi = 0 with
/// step h along every xi axis.
inline double pullback_derivative_residual(const SecondOrderMap& m, const MetricField& g, double h) {
  const int d = m.dim();
  double worst = 0.0;
  for (int a = 0; a < d; ++a) {
    const Point e = h * Point::Unit(d, a);
    const Matrix dg = (pullback_metric(m, g, e) - pullback_metric(m, g, -e)) / (2.0 * h);
    worst = std::max(worst, dg.cwiseAbs().maxCoeff());
  }
  return worst;
}

/// The pulled-back metric as a field on a xi chart spanning the trust box.
inline MetricField pullback_field(const SecondOrderMap& m, const MetricField& g) {
  const int d = m.dim();
  const Point fi = m.f().cwiseAbs().rowwise().sum();
  Point half(d);
  // largest xi box whose image stays inside the trust region
  const double s = (m.trust_radius().array() / fi.array()).minCoeff();
  for (int a = 0; a < d; ++a) half[a] = 0.9 * s;
  Chart ch(-half, half, std::vector<int>(d, 3));
  return MetricField(ch, FunctionMetric{[m, g](const Point& xi) { return pullback_metric(m, g, xi); },
                                        "pullback"});
}

// ---------------------------------------------------------------------------
// Geodesics

struct GeodesicSample {
  double tau;
  Point x;
  Point u;
};

struct GeodesicPath {
  std::vector<GeodesicSample> samples;
  double norm0 = 0.0;     // g u u at the first sample
  bool exited = false;    // integration stopped at the chart boundary
  bool null = false;

  std::size_t size() const { return samples.size(); }
  const GeodesicSample& front() const { return samples.front(); }
  const GeodesicSample& back() const { return samples.back(); }

  std::string to_csv(const MetricField& g) const {
    std::ostringstream os;
    os << std::setprecision(17);
    const int d = g.dim();
    os << "tau";
    for (int a = 0; a < d; ++a) os << ",x" << a;
    for (int a = 0; a < d; ++a) os << ",u" << a;
    os << ",norm_residual\n";
    for (const auto& s : samples) {
      os << s.tau;
      for (int a = 0; a < d; ++a) os << ',' << s.x[a];
      for (int a = 0; a < d; ++a) os << ',' << s.u[a];
      os << ',' << s.u.dot(g.value(s.x) * s.u) - norm0 << '\n';
    }
    return os.str();
  }
};

namespace detail {

inline Point contract_gamma(const ChristoffelBlock& gam, const Point& u, const Point& v) {
  const int d = gam.dim;
  Point out = Point::Zero(d);
  for (int l = 0; l < d; ++l)
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) out[l] += gam(l, a, b) * u[a] * v[b];
  return out;
}

// State: x, u, then optional transported vectors. Columns of a d x (2+k) matrix.
inline Matrix geodesic_rhs(const MetricField& g, const Matrix& s) {
  const Point x = s.col(0);
  const Point u = s.col(1);
  if (!g.chart().contains(x)) throw DomainError("geodesic left chart");
  const ChristoffelBlock gam = christoffel(g, x);
  Matrix r(s.rows(), s.cols());
  r.col(0) = u;
  r.col(1) = -contract_gamma(gam, u, u);
  for (int k = 2; k < s.cols(); ++k) r.col(k) = -contract_gamma(gam, u, s.col(k));
  return r;
}

inline Matrix rk4_step(const MetricField& g, const Matrix& s, double h) {
  const Matrix k1 = geodesic_rhs(g, s);
  const Matrix k2 = geodesic_rhs(g, s + 0.5 * h * k1);
  const Matrix k3 = geodesic_rhs(g, s + 0.5 * h * k2);
  const Matrix k4 = geodesic_rhs(g, s + h * k3);
  return s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace detail

/// Fixed-step RK4 solution of x'' = -Gamma(x) x' x' from tau0 to tau1.
inline GeodesicPath geodesic_integrate(const MetricField& g, const Point& x0, const Point& u0,
                                       double tau0, double tau1, int steps) {
  if (steps < 1 || !(tau1 > tau0)) throw std::invalid_argument("geodesic: need steps >= 1 and tau1 > tau0");
  const Matrix g0 = eval_metric(g, x0);
  const double n0 = u0.dot(g0 * u0);
  const double scale = u0.squaredNorm();
  if (n0 < -1e-12 * scale) throw DomainError("geodesic: initial velocity is spacelike");

  GeodesicPath path;
  path.norm0 = n0;
  path.null = std::abs(n0) <= 1e-12 * scale;
  path.samples.push_back({tau0, x0, u0});

  Matrix s(x0.size(), 2);
  s.col(0) = x0;
  s.col(1) = u0;
  const double h = (tau1 - tau0) / steps;
  for (int n = 1; n <= steps; ++n) {
    Matrix next;
    try {
      next = detail::rk4_step(g, s, h);
    } catch (const DomainError&) {
      path.exited = true;
      break;
    }
    if (!g.chart().contains(next.col(0))) {
      path.exited = true;
      break;
    }
    s = next;
    path.samples.push_back({tau0 + n * h, s.col(0), s.col(1)});
  }
  return path;
}

/// max |g u u - g u0 u0| along the path.
inline double norm_drift(const GeodesicPath& p, const MetricField& g) {
  double worst = 0.0;
  for (const auto& s : p.samples) worst = std::max(worst, std::abs(s.u.dot(g.value(s.x) * s.u) - p.norm0));
  return worst;
}

// ---------------------------------------------------------------------------
// Fermi frames

struct FermiFrame {
  GeodesicPath geodesic;
  std::vector<Tetrad> legs;
  bool reorthonormalized = false;
};

namespace detail {

inline Matrix legs_from(const Matrix& g, const Point& u, const Matrix& spatial) {
  // Gram-Schmidt with leg 0 = u / |u| and the given spatial seeds
  const int d = static_cast<int>(g.rows());
  Matrix f(d, d);
  f.col(0) = u / std::sqrt(u.dot(g * u));
  for (int k = 1; k < d; ++k) {
    Point v = spatial.col(k - 1);
    for (int j = 0; j < k; ++j) {
      const double sign = (j == 0) ? 1.0 : -1.0;
      v -= sign * (f.col(j).dot(g * v)) * f.col(j);
    }
    f.col(k) = v / std::sqrt(-v.dot(g * v));
  }
  return f;
}

}  // namespace detail

/// Parallel-transports an orthonormal frame along a timelike geodesic. Leg 0
/// is the normalized velocity; spatial legs obey d theta/d tau = -Gamma u theta.
inline FermiFrame fermi_frame(const MetricField& g, const GeodesicPath& path, bool reorthonormalize = false) {
  if (path.samples.empty()) throw std::invalid_argument("fermi frame: empty path");
  if (path.null || !(path.norm0 > 0.0)) throw Unsupported("fermi frame: geodesic is not timelike");
  const int d = g.dim();

  const GeodesicSample& s0 = path.front();
  const Matrix g0 = eval_metric(g, s0.x);
  const Matrix seeds = Matrix::Identity(d, d).rightCols(d - 1);
  Matrix f = detail::legs_from(g0, s0.u, seeds);

  FermiFrame frame;
  frame.geodesic = path;
  frame.reorthonormalized = reorthonormalize;
  frame.legs.push_back({s0.x, f, f.inverse()});

  Matrix st(d, 2 + d - 1);
  st.col(0) = s0.x;
  st.col(1) = s0.u;
  st.rightCols(d - 1) = f.rightCols(d - 1);
  for (std::size_t k = 1; k < path.size(); ++k) {
    const double h = path.samples[k].tau - path.samples[k - 1].tau;
    st = detail::rk4_step(g, st, h);
    const GeodesicSample& sk = path.samples[k];
    Matrix fk(d, d);
    const double un = std::sqrt(sk.u.dot(g.value(sk.x) * sk.u));
    fk.col(0) = sk.u / un;
    fk.rightCols(d - 1) = st.rightCols(d - 1);
    if (reorthonormalize) {
      fk = detail::legs_from(g.value(sk.x), sk.u, st.rightCols(d - 1));
      st.rightCols(d - 1) = fk.rightCols(d - 1);
    }
    frame.legs.push_back({sk.x, fk, fk.inverse()});
  }
  return frame;
}

/// Worst |f^T g f - eta| over all samples.
inline double fermi_orthonormality(const FermiFrame& fr, const MetricField& g) {
  double worst = 0.0;
  for (const auto& t : fr.legs) worst = std::max(worst, orthonormality_residual(t.f, g.value(t.site)));
  return worst;
}

/// Second-order map centred on the geodesic at parameter tau, with the
/// transported legs. Off-sample values come from one RK4 step from the
/// preceding sample.
inline SecondOrderMap fermi_map(const FermiFrame& fr, const MetricField& g, double tau,
                                double trust_fraction = kDefaultTrustFraction) {
  const auto& smp = fr.geodesic.samples;
  const double span_tol = 1e-12 * std::max(1.0, std::abs(smp.back().tau - smp.front().tau));
  if (tau < smp.front().tau - span_tol || tau > smp.back().tau + span_tol) {
    throw DomainError("fermi map: tau outside geodesic span");
  }
  std::size_t k = 0;
  while (k + 1 < smp.size() && smp[k + 1].tau <= tau + span_tol) ++k;
  const double dt = tau - smp[k].tau;
  if (std::abs(dt) <= span_tol) return map_from_legs(g, smp[k].x, fr.legs[k].f, trust_fraction);

  const int d = g.dim();
  Matrix st(d, 2 + d - 1);
  st.col(0) = smp[k].x;
  st.col(1) = smp[k].u;
  st.rightCols(d - 1) = fr.legs[k].f.rightCols(d - 1);
  st = detail::rk4_step(g, st, dt);
  Matrix f(d, d);
  const Point x = st.col(0);
  const Point u = st.col(1);
  f.col(0) = u / std::sqrt(u.dot(g.value(x) * u));
  f.rightCols(d - 1) = st.rightCols(d - 1);
  return map_from_legs(g, x, f, trust_fraction);
}

}  // namespace qrflab
