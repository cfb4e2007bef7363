#include <gtest/gtest.h>

#include <random>

#include "qrflab/frames.hpp"
#include "qrflab/pathint.hpp"

using namespace qrflab;

namespace {

Point p2(double t, double x) {
  Point p(2);
  p << t, x;
  return p;
}

Chart box(double t0, double t1, int nt, double x0, double x1, int nx) {
  return Chart::spacetime(p2(t0, x0), p2(t1, x1), {nt, nx});
}

MetricPtr flat(const Chart& ch) { return MetricField::make(ch, Minkowski{}); }

MetricPtr flat_dense(const Chart& ch) {
  return MetricField::make(ch, FunctionMetric{[](const Point&) { return minkowski_eta(2); }, "eta"});
}

MetricPtr newton(const Chart& ch, double src = 5.0, double M = 0.05) {
  Point s(1);
  s << src;
  return MetricField::make(ch, NewtonianPointMass{M, s, 1.0, 1.0});
}

Lattice lattice(const Chart& ch, int n, double delta, double m = 1.0) {
  Lattice l;
  l.chart = ch;
  l.n_slices = n;
  l.delta = delta;
  l.mass = m;
  return l;
}

CVector random_vec(std::size_t n, std::mt19937& rng) {
  std::normal_distribution<double> d;
  CVector v(n);
  for (auto& z : v) z = cplx(d(rng), d(rng));
  return v;
}

// zero within `margin` sites of the boundary
CVector interior(CVector v, const Chart& ch, int margin) {
  for (std::size_t s = 0; s < ch.num_sites(); ++s) {
    const auto idx = ch.multi_index(s);
    for (int a = 0; a < ch.dim(); ++a)
      if (idx[a] < margin || idx[a] >= ch.shape()[a] - margin) v[s] = 0.0;
  }
  return v;
}

}  // namespace

TEST(Slice, SpectralMatchesDense) {
  const Chart ch = box(-1, 1, 8, -1.5, 1.5, 9);
  const Lattice lat = lattice(ch, 2, 0.03);
  const SliceOperator a(flat(ch), lat, lat.delta), b(flat_dense(ch), lat, lat.delta);
  ASSERT_TRUE(a.spectral());
  ASSERT_FALSE(b.spectral());
  EXPECT_LE((a.matrix() - b.matrix()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Slice, ZeroStepIsWeightedIdentity) {
  const Chart ch = box(-1, 1, 5, -1, 1, 6);
  const auto g = newton(ch);
  const Lattice lat = lattice(ch, 2, 0.01);
  const SliceOperator s(g, lat, 0.0);
  std::mt19937 rng(3);
  const CVector v = random_vec(ch.num_sites(), rng);
  EXPECT_LE((s.apply(v) - v).cwiseAbs().maxCoeff(), 1e-12);
  const CMatrix K = s.matrix();
  for (std::size_t j = 0; j < ch.num_sites(); ++j) EXPECT_NEAR(K(j, j).real() * s.weights()[j], 1.0, 1e-12);
}

TEST(Kernel, TransferMatchesEnumeration) {
  struct Case {
    Chart ch;
    int n;
  };
  const std::vector<Case> cases{{box(-1, 1, 3, -1, 1, 3), 2},
                                {box(-1, 1, 3, -1, 1, 3), 6},
                                {box(0, 1, 3, -1, 1, 5), 2},
                                {box(0, 1, 3, -1, 1, 5), 4}};
  for (const auto& c : cases) {
    for (const auto& g : {flat(c.ch), newton(c.ch)}) {
      const Lattice lat = lattice(c.ch, c.n, 0.05, 0.7);
      const Kernel kt = kernel_transfer(g, lat, false);
      const Kernel ke = kernel_enumerate(g, lat);
      const double scale = kt.matrix.cwiseAbs().maxCoeff();
      EXPECT_LE((kt.matrix - ke.matrix).cwiseAbs().maxCoeff(), 1e-10 * scale) << g->kind_name() << " " << c.n;
    }
  }
}

TEST(Kernel, EnumerationRefusesLargeInstances) {
  const Chart ch = box(-1, 1, 4, -1, 1, 4);
  EXPECT_THROW(kernel_enumerate(flat(ch), lattice(ch, 5, 0.05)), Unsupported);
}

TEST(Kernel, Semigroup) {
  const Chart ch = box(-1, 1, 6, -1, 1, 7);
  const auto g = newton(ch);
  const Kernel a = kernel_transfer(g, lattice(ch, 2, 0.04), false);
  const Kernel b = kernel_transfer(g, lattice(ch, 3, 0.04), false);
  const Kernel ab = kernel_transfer(g, lattice(ch, 5, 0.04), false);
  const CMatrix comp = compose(b, a, GridWavefunction::measure_weights(*g));
  EXPECT_LE((comp - ab.matrix).cwiseAbs().maxCoeff(), 1e-8 * ab.matrix.cwiseAbs().maxCoeff());
}

TEST(Kernel, LagrangianSinglePathPhase) {
  const Chart ch = box(0, 4, 3, -1, 1, 3);
  const auto g = newton(ch);
  const Lattice lat = lattice(ch, 2, 0.1, 1.3);
  // only the middle site is allowed in between
  const std::size_t mid = ch.flat_index({1, 1});
  const Kernel k = kernel_enumerate(g, lat, PathAction::lagrangian, {mid});
  const std::size_t a = ch.flat_index({0, 0}), b = ch.flat_index({2, 2});
  const Point xa = ch.site_point(a), xm = ch.site_point(mid), xb = ch.site_point(b);
  auto ds = [&](const Point& u, const Point& v) {
    const Point d = v - u;
    return std::sqrt(d.dot(g->value(0.5 * (u + v)) * d));
  };
  const double S = 1.3 * (ds(xa, xm) + ds(xm, xb));
  const double w = ch.cell_volume();
  EXPECT_LE(std::abs(k.matrix(b, a) - w * std::exp(cplx(0.0, S))), 1e-14);
}

TEST(Kernel, StraightPathMaximizesProperTime) {
  const Chart ch = box(0, 2, 5, -1, 1, 5);
  const auto g = flat(ch);
  const Lattice lat = lattice(ch, 2, 0.1);
  const std::size_t a = ch.flat_index({0, 1}), b = ch.flat_index({4, 3});
  double best = -1.0;
  std::size_t arg = 0;
  for (std::size_t m = 0; m < ch.num_sites(); ++m) {
    const cplx s = step_action(*g, lat, ch.site_point(a), ch.site_point(m)) +
                   step_action(*g, lat, ch.site_point(m), ch.site_point(b));
    if (ch.multi_index(m)[0] == 2 && s.imag() == 0.0 && s.real() > best) {
      best = s.real();
      arg = m;
    }
  }
  EXPECT_EQ(arg, ch.flat_index({2, 2}));
}

TEST(Kernel, TruncationDefectReported) {
  const Chart ch = box(-1, 1, 8, -1, 1, 8);
  const Kernel k = kernel_transfer(newton(ch), lattice(ch, 2, 0.02), true);
  EXPECT_GE(k.truncation_defect, 0.0);
  EXPECT_EQ(k.truncation_warning, k.truncation_defect > kTruncationWarn);
}

TEST(Constraint, WeylOrderingDiffersByCurvatureTerm) {
  // g^{11} = -(1 + 0.2 sin x): Weyl - symmetrized = hbar^2/4 d_x^2 g^{11} = 0.05 sin x
  std::vector<double> err;
  for (int n : {21, 41}) {
    const Chart ch = box(-1, 1, n, -1, 1, n);
    const auto g = MetricField::make(ch, FunctionMetric{[](const Point& x) {
      Matrix m = minkowski_eta(2);
      m(0, 0) = 1.0 + 0.1 * x[1] * x[1];
      m(1, 1) = -1.0 / (1.0 + 0.2 * std::sin(x[1]));
      return m;
    }});
    const ConstraintOperator C(g, lattice(ch, 2, 0.01));
    CVector psi = CVector::Zero(ch.num_sites());
    for (std::size_t s = 0; s < ch.num_sites(); ++s) {
      const Point x = ch.site_point(s);
      psi[s] = std::exp(-2.0 * x.squaredNorm()) * std::exp(cplx(0.0, 1.5 * x[1]));
    }
    const CVector diff = interior(C.apply(psi) - C.apply_symmetrized(psi), ch, 3);
    double e = 0.0;
    for (std::size_t s = 0; s < ch.num_sites(); ++s) {
      if (diff[s] == 0.0) continue;
      e = std::max(e, std::abs(diff[s] - 0.05 * std::sin(ch.site_point(s)[1]) * psi[s]));
    }
    err.push_back(e);
  }
  EXPECT_GE(err[0] / err[1], 3.5);
}

TEST(Constraint, HermitianOnInteriorStates) {
  const Chart ch = box(-1, 1, 15, -1, 1, 17);
  const auto g = newton(ch);
  const ConstraintOperator C(g, lattice(ch, 2, 0.01));
  std::mt19937 rng(11);
  const CVector a = interior(random_vec(ch.num_sites(), rng), ch, 2);
  const CVector b = interior(random_vec(ch.num_sites(), rng), ch, 2);
  const cplx lhs = C.inner(a, C.apply(b)), rhs = C.inner(C.apply(a), b);
  EXPECT_LE(std::abs(lhs - rhs), 1e-10 * std::abs(lhs));
  const CMatrix M = C.matrix();
  const CVector Mb = M * b;
  EXPECT_LE((Mb - C.apply(b)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Constraint, OnShellPlaneWaveSecondOrder) {
  const double m = 1.0, p = 2.0, E = std::sqrt(p * p + m * m);
  std::vector<double> res;
  for (int n : {17, 33, 65}) {
    const Chart ch = box(-1, 1, n, -1, 1, n);
    const ConstraintOperator C(flat(ch), lattice(ch, 2, 0.01, m));
    const auto wf = GridWavefunction::from_function(flat(ch), [&](const Point& x) {
      return std::exp(cplx(0.0, E * x[0] - p * x[1]));
    });
    const CVector r = interior(C.apply(wf.amps()), ch, 2);
    res.push_back(r.cwiseAbs().maxCoeff() / (E * E));
  }
  EXPECT_GE(res[0] / res[1], 3.5);
  EXPECT_GE(res[1] / res[2], 3.5);
}

TEST(Kernel, FlatSpatialMarginalMatchesFreeGaussian) {
  const Chart ch = box(-1, 1, 16, -8, 8, 64);
  const auto g = flat(ch);
  const double sigma = 1.0, st = 0.4;
  const Lattice lat = lattice(ch, 2, 0.3);
  const auto psi = GridWavefunction::from_function(g, [&](const Point& x) {
    return cplx(std::exp(-0.5 * x[0] * x[0] / (st * st) - 0.5 * x[1] * x[1] / (sigma * sigma)));
  }).normalized();
  const Kernel k = kernel_transfer(g, lat, false);
  const CVector out = k.matrix * psi.amps().cwiseProduct(psi.weights().cast<cplx>());
  const int nt = ch.shape()[0], nx = ch.shape()[1];
  Eigen::VectorXd rho = Eigen::VectorXd::Zero(nx);
  for (int i = 0; i < nt; ++i)
    for (int j = 0; j < nx; ++j) rho[j] += std::norm(out[i * nx + j]);
  rho /= rho.sum() * ch.spacing(1);
  const double tau = lat.tau();
  const double s2 = sigma * sigma + 4.0 * tau * tau / (sigma * sigma);
  double worst = 0.0;
  for (int j = 0; j < nx; ++j) {
    const double x = ch.lo()[1] + j * ch.spacing(1);
    const double exact = std::exp(-x * x / s2) / std::sqrt(std::numbers::pi * s2);
    worst = std::max(worst, std::abs(rho[j] - exact));
  }
  EXPECT_LE(worst, 0.02 / std::sqrt(std::numbers::pi * s2));
}

namespace {

struct Packet {
  double sigma = 3.0;
  double p0 = 0.0;
  double p1 = 0.5;
};

GridWavefunction packet(const MetricPtr& g, const Packet& pk) {
  return GridWavefunction::from_function(g, [&](const Point& x) {
    return std::exp(-x.squaredNorm() / (2 * pk.sigma * pk.sigma)) * std::exp(cplx(0.0, pk.p0 * x[0] + pk.p1 * x[1]));
  }).normalized();
}

double on_shell_p0(double p1, double m) { return std::sqrt(p1 * p1 + m * m); }

Chart wide(int n) { return box(-40, 40, n, -40, 40, n); }

}  // namespace

TEST(PhysicalState, OffShellSuppressed) {
  const Chart ch = wide(80);
  const auto g = flat(ch);
  const Lattice lat = lattice(ch, 2, 0.05);
  Packet on{3.0, on_shell_p0(0.5, 1.0), 0.5}, off = on;
  off.p0 = 2.5;
  const double n_on = physical_state(g, packet(g, on), lat, 24.0).induced_norm;
  const double n_off = physical_state(g, packet(g, off), lat, 24.0).induced_norm;
  EXPECT_GT(n_on, 0.0);
  EXPECT_GE(n_on, 10.0 * std::abs(n_off));
}

TEST(PhysicalState, WindowDoublingStable) {
  const Chart ch = wide(80);
  const auto g = flat(ch);
  const Lattice lat = lattice(ch, 2, 0.05);
  const auto psi = packet(g, {3.0, on_shell_p0(0.5, 1.0), 0.5});
  const double a = physical_state(g, psi, lat, 24.0).induced_norm;
  const double b = physical_state(g, psi, lat, 48.0).induced_norm;
  EXPECT_LE(std::abs(a - b), 0.01 * std::abs(b));
}

TEST(PhysicalState, TranslationOnlyAtWindowEdges) {
  const Chart ch = wide(80);
  const auto g = flat(ch);
  const auto ps = physical_state(g, packet(g, {3.0, on_shell_p0(0.5, 1.0), 0.5}), lattice(ch, 2, 0.05), 24.0);
  EXPECT_LE(ps.translation_defect, ps.edge_bound);
  EXPECT_FALSE(ps.cutoff_flag);
  EXPECT_EQ(ps.taus.size(), ps.omega.size());
  EXPECT_DOUBLE_EQ(ps.taus.front(), -ps.taus.back());
}

TEST(PhysicalState, BranchwiseEqualsControlled) {
  const Chart ch = box(-4, 4, 12, -4, 4, 12);
  const Lattice lat = lattice(ch, 2, 0.05);
  const auto g1 = flat(ch), g2 = newton(ch, 12.0, 0.2);
  const cplx c1(0.6, 0.0), c2(0.0, 0.8);
  const Packet pk{1.5, on_shell_p0(0.5, 1.0), 0.5};
  const auto sup = physical_state_superposed({{1, c1, g1, packet(g1, pk)}, {2, c2, g2, packet(g2, pk)}}, lat, 2.0);
  const auto a = physical_state(g1, packet(g1, pk), lat, 2.0), b = physical_state(g2, packet(g2, pk), lat, 2.0);
  ASSERT_EQ(sup.size(), 2u);
  for (std::size_t k = 0; k < a.omega.size(); ++k) {
    EXPECT_LE((sup[0].omega[k] - c1 * a.omega[k]).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LE((sup[1].omega[k] - c2 * b.omega[k]).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(PhysicalState, CsvHeader) {
  const Chart ch = box(-1, 1, 4, -1, 1, 4);
  const auto g = flat(ch);
  const auto ps = physical_state(g, GridWavefunction::site_state(g, 5), lattice(ch, 2, 0.1), 0.2);
  const std::string csv = ps.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "tau,x0,x1,re,im,abs");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 3 * 16);
}

TEST(HistoryEl, MinkowskiRidgeConvergesUnderRefinement) {
  std::vector<double> res;
  for (int n : {40, 80, 160}) {
    const Chart ch = wide(n);
    const auto g = flat(ch);
    const auto ps = physical_state(g, packet(g, {3.0, on_shell_p0(0.5, 1.0), 0.5}), lattice(ch, 2, 0.05), 8.0);
    const ElReport rep = el_residual_check(ps, *g, 4, 1.0, 2.0);
    EXPECT_FALSE(rep.inconclusive);
    res.push_back(rep.residual);
    if (n == 160) EXPECT_TRUE(rep.pass);
  }
  EXPECT_GE(res[0] / res[1], 3.5);
  EXPECT_GE(res[1] / res[2], 3.5);
}

TEST(HistoryEl, CurvedRidgeFollowsGeodesic) {
  const Chart ch = box(-8, 8, 32, -8, 8, 32);
  const auto g = newton(ch, 20.0, 0.5);
  const double m = 1.0, p1 = 0.3;
  const Point x0 = Point::Zero(2);
  const Matrix gi = g->value(x0).inverse();
  const double p0 = std::sqrt((m * m - gi(1, 1) * p1 * p1) / gi(0, 0));
  const auto ps = physical_state(g, packet(g, {1.5, p0, p1}), lattice(ch, 2, 0.05), 3.0);
  const ElReport rep = el_residual_check(ps, *g, 2, 1.0, 1.5);
  ASSERT_FALSE(rep.inconclusive);
  EXPECT_TRUE(rep.pass);
  Point pl(2);
  pl << p0, p1;
  const GeodesicPath path = geodesic_integrate(*g, x0, 2.0 * gi * pl, 0.0, 1.5, 150);
  const double cell = std::max(ch.spacing(0), ch.spacing(1));
  int checked = 0;
  for (std::size_t k = 0; k < rep.taus.size(); ++k) {
    if (rep.taus[k] < 0.0) continue;
    const auto idx = static_cast<std::size_t>(std::lround(rep.taus[k] / 0.01));
    ASSERT_LT(idx, path.samples.size());
    EXPECT_LE((rep.ridge[k] - path.samples[idx].x).cwiseAbs().maxCoeff(), cell) << rep.taus[k];
    ++checked;
  }
  EXPECT_GE(checked, 5);
}
