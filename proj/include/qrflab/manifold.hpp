#pragma once

// Classical metrics on a single coordinate chart: values, derivatives,
// Christoffel symbols, Riemann tensor and the covariant volume element.
// Signature convention is (+,-,-,-) throughout.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "qrflab/chart.hpp"
#include "qrflab/error.hpp"

namespace qrflab {

struct Minkowski {};

/// g_00 = 1 + 2 Phi / c^2, g_ij = -delta_ij, Phi = -G M / |x - R|.
/// `source` holds the spatial position R (dim - 1 components). Coordinate 0
/// is x^0 = c t.
struct NewtonianPointMass {
  double mass = 0.0;
  Point source;
  double c = 1.0;
  double G = 1.0;
};

/// Phi = g_acc * x^axis (axis counts spatial coordinates from 1).
struct UniformWeakField {
  double g_acc = 0.0;
  double c = 1.0;
  int axis = 1;
};

/// Metric components stored on every chart site; multilinear in between.
struct GridSampled {
  std::vector<Matrix> samples;
};

/// Arbitrary smooth metric given as a callable. Used for pulled-back metrics
/// in LIF coordinates; derivatives come from fourth-order differences.
struct FunctionMetric {
  std::function<Matrix(const Point&)> fn;
  std::string label = "function";
};

using MetricKind =
    std::variant<Minkowski, NewtonianPointMass, UniformWeakField, GridSampled, FunctionMetric>;

/// Christoffel symbols Gamma^l_{ab} at one site, symmetric in (a, b).
struct ChristoffelBlock {
  int dim = 0;
  Point site;
  std::vector<double> values;

  ChristoffelBlock() = default;
  ChristoffelBlock(int d, Point x) : dim(d), site(std::move(x)), values(d * d * d, 0.0) {}

  double& operator()(int l, int a, int b) { return values[(l * dim + a) * dim + b]; }
  double operator()(int l, int a, int b) const { return values[(l * dim + a) * dim + b]; }

  double max_abs() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
  }
};

/// Riemann tensor R^l_{m a b}.
struct RiemannTensor {
  int dim = 0;
  std::vector<double> values;

  RiemannTensor() = default;
  explicit RiemannTensor(int d) : dim(d), values(d * d * d * d, 0.0) {}

  double& operator()(int l, int m, int a, int b) {
    return values[((l * dim + m) * dim + a) * dim + b];
  }
  double operator()(int l, int m, int a, int b) const {
    return values[((l * dim + m) * dim + a) * dim + b];
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
  }
};

/// First and second partial derivatives of g_{mn} at a point.
struct MetricDerivatives {
  std::vector<Matrix> d;                // d[a] = partial_a g
  std::vector<std::vector<Matrix>> dd;  // dd[a][b] = partial_a partial_b g (may be empty)
};

namespace detail {

inline bool is_lorentzian(const Matrix& g, double* det_out = nullptr) {
  const double asym = (g - g.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * std::max(1.0, g.cwiseAbs().maxCoeff())) return false;
  Eigen::SelfAdjointEigenSolver<Matrix> es(g, Eigen::EigenvaluesOnly);
  int positive = 0;
  int negative = 0;
  for (int i = 0; i < g.rows(); ++i) {
    if (es.eigenvalues()[i] > 0.0) ++positive;
    if (es.eigenvalues()[i] < 0.0) ++negative;
  }
  const double det = g.determinant();
  if (det_out) *det_out = det;
  return positive == 1 && negative == g.rows() - 1 && det < 0.0;
}

}  // namespace detail

/// An immutable classical metric on one chart.
class MetricField {
 public:
  MetricField(Chart chart, MetricKind kind) : chart_(std::move(chart)), kind_(std::move(kind)) {
    validate();
  }

  static std::shared_ptr<const MetricField> make(Chart chart, MetricKind kind) {
    return std::make_shared<const MetricField>(std::move(chart), std::move(kind));
  }

  const Chart& chart() const { return chart_; }
  const MetricKind& kind() const { return kind_; }
  int dim() const { return chart_.dim(); }

  bool is_minkowski() const { return std::holds_alternative<Minkowski>(kind_); }
  bool has_closed_form() const {
    return std::holds_alternative<Minkowski>(kind_) ||
           std::holds_alternative<NewtonianPointMass>(kind_) ||
           std::holds_alternative<UniformWeakField>(kind_);
  }

  std::string kind_name() const {
    return std::visit(
        [](const auto& k) -> std::string {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Minkowski>) return "minkowski";
          else if constexpr (std::is_same_v<K, NewtonianPointMass>) return "newtonian_point_mass";
          else if constexpr (std::is_same_v<K, UniformWeakField>) return "uniform_weak_field";
          else if constexpr (std::is_same_v<K, GridSampled>) return "grid_sampled";
          else return k.label;
        },
        kind_);
  }

  /// Speed of light carried by the kind (1 for kinds without one).
  double light_speed() const {
    if (auto* n = std::get_if<NewtonianPointMass>(&kind_)) return n->c;
    if (auto* u = std::get_if<UniformWeakField>(&kind_)) return u->c;
    return 1.0;
  }

  /// Newtonian potential Phi at a spacetime point (0 for Minkowski).
  double potential(const Point& x) const {
    if (std::holds_alternative<Minkowski>(kind_)) return 0.0;
    if (auto* n = std::get_if<NewtonianPointMass>(&kind_)) {
      const double r = (x.tail(dim() - 1) - n->source).norm();
      return -n->G * n->mass / r;
    }
    if (auto* u = std::get_if<UniformWeakField>(&kind_)) return u->g_acc * x[u->axis];
    throw Unsupported("potential: only defined for catalog Newtonian kinds");
  }

  /// g_{mn}(x) without bounds or signature checks.
  Matrix value(const Point& x) const {
    return std::visit([&](const auto& k) { return value_impl(k, x); }, kind_);
  }

  MetricDerivatives derivatives(const Point& x, bool second) const {
    return std::visit([&](const auto& k) { return derivs_impl(k, x, second); }, kind_);
  }

 private:
  Matrix value_impl(const Minkowski&, const Point&) const { return minkowski_eta(dim()); }

  Matrix value_impl(const NewtonianPointMass& n, const Point& x) const {
    Matrix g = minkowski_eta(dim());
    const double r = (x.tail(dim() - 1) - n.source).norm();
    g(0, 0) = 1.0 - 2.0 * n.G * n.mass / (r * n.c * n.c);
    return g;
  }

  Matrix value_impl(const UniformWeakField& u, const Point& x) const {
    Matrix g = minkowski_eta(dim());
    g(0, 0) = 1.0 + 2.0 * u.g_acc * x[u.axis] / (u.c * u.c);
    return g;
  }

  Matrix value_impl(const GridSampled& gs, const Point& x) const {
    const int d = dim();
    std::vector<int> base(d);
    std::vector<double> frac(d);
    for (int a = 0; a < d; ++a) {
      const double s = (x[a] - chart_.lo()[a]) / chart_.spacing(a);
      int i = static_cast<int>(std::floor(s));
      i = std::clamp(i, 0, chart_.shape()[a] - 2);
      base[a] = i;
      frac[a] = s - i;
    }
    Matrix g = Matrix::Zero(d, d);
    std::vector<int> idx(d);
    for (int corner = 0; corner < (1 << d); ++corner) {
      double w = 1.0;
      for (int a = 0; a < d; ++a) {
        const int bit = (corner >> a) & 1;
        idx[a] = base[a] + bit;
        w *= bit ? frac[a] : 1.0 - frac[a];
      }
      if (w != 0.0) g += w * gs.samples[chart_.flat_index(idx)];
    }
    return g;
  }

  Matrix value_impl(const FunctionMetric& f, const Point& x) const { return f.fn(x); }

  MetricDerivatives derivs_impl(const Minkowski&, const Point&, bool second) const {
    return zero_derivs(second);
  }

  MetricDerivatives derivs_impl(const NewtonianPointMass& n, const Point& x, bool second) const {
    MetricDerivatives out = zero_derivs(second);
    const int d = dim();
    const Point rel = x.tail(d - 1) - n.source;
    const double r = rel.norm();
    const double gm = n.G * n.mass;
    const double c2 = n.c * n.c;
    // partial_i Phi = G M rel_i / r^3
    for (int i = 1; i < d; ++i) out.d[i](0, 0) = 2.0 * gm * rel[i - 1] / (r * r * r) / c2;
    if (second) {
      const double r3 = r * r * r;
      const double r5 = r3 * r * r;
      for (int i = 1; i < d; ++i) {
        for (int j = 1; j < d; ++j) {
          const double dij = (i == j) ? 1.0 : 0.0;
          const double phi_ij = gm * (dij / r3 - 3.0 * rel[i - 1] * rel[j - 1] / r5);
          out.dd[i][j](0, 0) = 2.0 * phi_ij / c2;
        }
      }
    }
    return out;
  }

  MetricDerivatives derivs_impl(const UniformWeakField& u, const Point&, bool second) const {
    MetricDerivatives out = zero_derivs(second);
    out.d[u.axis](0, 0) = 2.0 * u.g_acc / (u.c * u.c);
    return out;
  }

  MetricDerivatives derivs_impl(const GridSampled&, const Point& x, bool second) const {
    const Point h = chart_.lattice_step();
    if (!chart_.has_margin(x, h, second ? 2 : 1)) {
      throw DomainError("grid metric derivative: point lacks finite-difference margin");
    }
    return central_derivs(x, h, second);
  }

  MetricDerivatives derivs_impl(const FunctionMetric&, const Point& x, bool second) const {
    Point h(dim());
    for (int a = 0; a < dim(); ++a) h[a] = 1e-3 * chart_.width(a);
    return fourth_order_derivs(x, h, second);
  }

  MetricDerivatives zero_derivs(bool second) const {
    const int d = dim();
    MetricDerivatives out;
    out.d.assign(d, Matrix::Zero(d, d));
    if (second) out.dd.assign(d, std::vector<Matrix>(d, Matrix::Zero(d, d)));
    return out;
  }

  MetricDerivatives central_derivs(const Point& x, const Point& h, bool second) const {
    const int d = dim();
    MetricDerivatives out;
    out.d.resize(d);
    for (int a = 0; a < d; ++a) {
      Point xp = x, xm = x;
      xp[a] += h[a];
      xm[a] -= h[a];
      out.d[a] = (value(xp) - value(xm)) / (2.0 * h[a]);
    }
    if (second) {
      out.dd.assign(d, std::vector<Matrix>(d));
      for (int a = 0; a < d; ++a) {
        Point xp = x, xm = x;
        xp[a] += h[a];
        xm[a] -= h[a];
        const MetricDerivatives up = central_derivs(xp, h, false);
        const MetricDerivatives dn = central_derivs(xm, h, false);
        for (int b = 0; b < d; ++b) out.dd[a][b] = (up.d[b] - dn.d[b]) / (2.0 * h[a]);
      }
      for (int a = 0; a < d; ++a) {
        for (int b = a + 1; b < d; ++b) {
          out.dd[a][b] = 0.5 * (out.dd[a][b] + out.dd[b][a]);
          out.dd[b][a] = out.dd[a][b];
        }
      }
    }
    return out;
  }

  MetricDerivatives fourth_order_derivs(const Point& x, const Point& h, bool second) const {
    const int d = dim();
    MetricDerivatives out;
    out.d.resize(d);
    auto shifted = [&](int a, double s) {
      Point y = x;
      y[a] += s * h[a];
      return value(y);
    };
    for (int a = 0; a < d; ++a) {
      out.d[a] = (-shifted(a, 2) + 8.0 * shifted(a, 1) - 8.0 * shifted(a, -1) + shifted(a, -2)) /
                 (12.0 * h[a]);
    }
    if (second) {
      out.dd.assign(d, std::vector<Matrix>(d));
      const Matrix g0 = value(x);
      for (int a = 0; a < d; ++a) {
        out.dd[a][a] = (-shifted(a, 2) + 16.0 * shifted(a, 1) - 30.0 * g0 + 16.0 * shifted(a, -1) -
                        shifted(a, -2)) /
                       (12.0 * h[a] * h[a]);
        for (int b = a + 1; b < d; ++b) {
          auto at = [&](double sa, double sb) {
            Point y = x;
            y[a] += sa * h[a];
            y[b] += sb * h[b];
            return value(y);
          };
          // fourth-order mixed stencil
          const Matrix m1 = at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1);
          const Matrix m2 = at(2, 2) - at(2, -2) - at(-2, 2) + at(-2, -2);
          out.dd[a][b] = (16.0 * m1 - m2) / (48.0 * h[a] * h[b]);
          out.dd[b][a] = out.dd[a][b];
        }
      }
    }
    return out;
  }

  void validate() const {
    const int d = dim();
    if (auto* n = std::get_if<NewtonianPointMass>(&kind_)) {
      if (n->source.size() != d - 1) throw InvalidMetric("newtonian_point_mass: R_src needs dim-1 components");
      if (!(n->c > 0.0)) throw InvalidMetric("newtonian_point_mass: c must be positive");
      // |Phi| is largest at the chart point closest to the source.
      Point closest(d - 1);
      for (int i = 0; i < d - 1; ++i) {
        closest[i] = std::clamp(n->source[i], chart_.lo()[i + 1], chart_.hi()[i + 1]);
      }
      const double r = (closest - n->source).norm();
      if (r == 0.0 || 2.0 * n->G * std::abs(n->mass) / (r * n->c * n->c) >= 0.1) {
        throw InvalidMetric("newtonian_point_mass: weak-field condition |2 Phi / c^2| < 0.1 violated on chart");
      }
    }
    if (auto* u = std::get_if<UniformWeakField>(&kind_)) {
      if (u->axis < 1 || u->axis >= d) throw InvalidMetric("uniform_weak_field: axis out of range");
      if (!(u->c > 0.0)) throw InvalidMetric("uniform_weak_field: c must be positive");
      const double xmax = std::max(std::abs(chart_.lo()[u->axis]), std::abs(chart_.hi()[u->axis]));
      if (2.0 * std::abs(u->g_acc) * xmax / (u->c * u->c) >= 0.1) {
        throw InvalidMetric("uniform_weak_field: weak-field condition |2 Phi / c^2| < 0.1 violated on chart");
      }
    }
    if (auto* gs = std::get_if<GridSampled>(&kind_)) {
      if (gs->samples.size() != chart_.num_sites()) {
        throw InvalidMetric("grid_sampled: one sample per chart site required");
      }
      for (const auto& s : gs->samples) {
        if (s.rows() != d || s.cols() != d) throw InvalidMetric("grid_sampled: sample has wrong shape");
      }
    }
    if (std::holds_alternative<FunctionMetric>(kind_)) return;  // checked lazily
    for (std::size_t s = 0; s < chart_.num_sites(); ++s) {
      if (!detail::is_lorentzian(value(chart_.site_point(s)))) {
        std::ostringstream os;
        os << kind_name() << ": metric not symmetric Lorentzian at site " << s;
        throw InvalidMetric(os.str());
      }
    }
  }

  Chart chart_;
  MetricKind kind_;
};

using MetricPtr = std::shared_ptr<const MetricField>;

/// g_{mn}(x) with bounds and signature checks.
inline Matrix eval_metric(const MetricField& g, const Point& x) {
  g.chart().require_contains(x);
  Matrix m = g.value(x);
  if (!detail::is_lorentzian(m)) {
    std::ostringstream os;
    os << "metric not Lorentzian at (" << x.transpose() << ")";
    throw InvalidMetric(os.str());
  }
  return m;
}

/// sqrt(-det g(x)).
inline double covariant_measure(const MetricField& g, const Point& x) {
  return std::sqrt(-eval_metric(g, x).determinant());
}

namespace detail {

inline ChristoffelBlock christoffel_from(const Matrix& g, const std::vector<Matrix>& dg, const Point& x) {
  const int d = static_cast<int>(g.rows());
  const Matrix ginv = g.inverse();
  ChristoffelBlock gam(d, x);
  for (int l = 0; l < d; ++l) {
    for (int a = 0; a < d; ++a) {
      for (int b = a; b < d; ++b) {
        double s = 0.0;
        for (int r = 0; r < d; ++r) {
          s += ginv(l, r) * (dg[a](r, b) + dg[b](r, a) - dg[r](a, b));
        }
        gam(l, a, b) = 0.5 * s;
        gam(l, b, a) = 0.5 * s;
      }
    }
  }
  return gam;
}

}  // namespace detail

/// Gamma^l_{ab}(x). Closed form for catalog kinds, central differences on the
/// lattice for grid metrics.
inline ChristoffelBlock christoffel(const MetricField& g, const Point& x) {
  g.chart().require_contains(x);
  const MetricDerivatives der = g.derivatives(x, false);
  return detail::christoffel_from(g.value(x), der.d, x);
}

/// Christoffel symbols from plain central differences of g with step h.
inline ChristoffelBlock christoffel_fd(const MetricField& g, const Point& x, const Point& h) {
  if (!g.chart().has_margin(x, h, 1)) throw DomainError("christoffel_fd: step leaves the chart");
  const int d = g.dim();
  std::vector<Matrix> dg(d);
  for (int a = 0; a < d; ++a) {
    Point xp = x, xm = x;
    xp[a] += h[a];
    xm[a] -= h[a];
    dg[a] = (g.value(xp) - g.value(xm)) / (2.0 * h[a]);
  }
  return detail::christoffel_from(g.value(x), dg, x);
}

/// R^l_{m a b} = d_a Gamma^l_{b m} - d_b Gamma^l_{a m}
///             + Gamma^l_{a k} Gamma^k_{b m} - Gamma^l_{b k} Gamma^k_{a m}.
inline RiemannTensor riemann(const MetricField& g, const Point& x) {
  g.chart().require_contains(x);
  const int d = g.dim();
  const Matrix gm = g.value(x);
  const Matrix ginv = gm.inverse();
  const MetricDerivatives der = g.derivatives(x, true);
  const ChristoffelBlock gam = detail::christoffel_from(gm, der.d, x);

  // d_c Gamma^l_{ab}
  std::vector<double> dgam(d * d * d * d, 0.0);
  auto DG = [&](int c, int l, int a, int b) -> double& { return dgam[((c * d + l) * d + a) * d + b]; };
  for (int c = 0; c < d; ++c) {
    const Matrix dginv = -ginv * der.d[c] * ginv;
    for (int l = 0; l < d; ++l) {
      for (int a = 0; a < d; ++a) {
        for (int b = 0; b < d; ++b) {
          double s = 0.0;
          for (int r = 0; r < d; ++r) {
            s += dginv(l, r) * (der.d[a](r, b) + der.d[b](r, a) - der.d[r](a, b));
            s += ginv(l, r) * (der.dd[c][a](r, b) + der.dd[c][b](r, a) - der.dd[c][r](a, b));
          }
          DG(c, l, a, b) = 0.5 * s;
        }
      }
    }
  }

  RiemannTensor R(d);
  for (int l = 0; l < d; ++l) {
    for (int m = 0; m < d; ++m) {
      for (int a = 0; a < d; ++a) {
        for (int b = 0; b < d; ++b) {
          double s = DG(a, l, b, m) - DG(b, l, a, m);
          for (int k = 0; k < d; ++k) s += gam(l, a, k) * gam(k, b, m) - gam(l, b, k) * gam(k, a, m);
          R(l, m, a, b) = s;
        }
      }
    }
  }
  return R;
}

/// Full contraction R^l_{mab} R_l^{mab} given the metric at the same point.
inline double kretschmann(const RiemannTensor& R, const Matrix& g) {
  const int d = R.dim;
  const Matrix ginv = g.inverse();
  // lower the first index
  RiemannTensor low(d);
  for (int l = 0; l < d; ++l)
    for (int m = 0; m < d; ++m)
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
          double s = 0.0;
          for (int k = 0; k < d; ++k) s += g(l, k) * R(k, m, a, b);
          low(l, m, a, b) = s;
        }
  // raise all four indices of the lowered tensor one slot at a time
  RiemannTensor up = low;
  for (int slot = 0; slot < 4; ++slot) {
    RiemannTensor next(d);
    for (int i0 = 0; i0 < d; ++i0)
      for (int i1 = 0; i1 < d; ++i1)
        for (int i2 = 0; i2 < d; ++i2)
          for (int i3 = 0; i3 < d; ++i3) {
            int idx[4] = {i0, i1, i2, i3};
            double s = 0.0;
            for (int k = 0; k < d; ++k) {
              int src[4] = {i0, i1, i2, i3};
              src[slot] = k;
              s += ginv(idx[slot], k) * up(src[0], src[1], src[2], src[3]);
            }
            next(i0, i1, i2, i3) = s;
          }
    up = next;
  }
  double k = 0.0;
  for (std::size_t i = 0; i < low.values.size(); ++i) k += low.values[i] * up.values[i];
  return k;
}

inline double kretschmann(const MetricField& g, const Point& x) {
  return kretschmann(riemann(g, x), g.value(x));
}

}  // namespace qrflab
