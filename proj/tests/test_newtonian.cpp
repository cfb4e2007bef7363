#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "qrflab/newtonian.hpp"
#include "qrflab/qrf.hpp"

using namespace qrflab;

namespace {

Point p1(double x) {
  Point p(1);
  p << x;
  return p;
}

Chart line(double a, double b, int n) { return Chart(p1(a), p1(b), {n}); }

NewtonianConfig free_cfg(double c = 10.0) {
  NewtonianConfig cfg;
  cfg.c = c;
  return cfg;
}

NewtonianConfig far_mass(double M, double R = 1000.0, double c = 10.0) {
  return NewtonianConfig::point_mass(NewtonianPointMass{M, p1(R), c, 1.0});
}

NewtonianConfig uniform(double g, double c = 10.0) { return NewtonianConfig::uniform(UniformWeakField{g, c, 1}); }

ClockedParticleState gaussian(const Chart& ch, std::vector<double> levels, double s, double x0 = 0.0) {
  return ClockedParticleState::from_function(ch, std::move(levels), [&](const Point& x, int i) {
    return cplx(std::exp(-(x[0] - x0) * (x[0] - x0) / (4 * s * s)) * (i ? 1.0 : 0.8));
  }).normalized();
}

std::vector<double> uniform_times(double dt, int n) {
  std::vector<double> t;
  for (int k = 0; k <= n; ++k) t.push_back(k * dt);
  return t;
}

}  // namespace

TEST(HamiltonianPI, FreeParticleWithBareClock) {
  const Chart ch = line(-5, 5, 41);
  const auto psi = gaussian(ch, {0.0, 2.0}, 1.0);
  const NewtonianConfig cfg = free_cfg();
  const HamiltonianPI H(cfg, ch, psi.levels);
  const CMatrix out = H.apply(psi.amps);
  const CMatrix T = H.kinetic(psi.amps);
  for (int i = 0; i < 2; ++i) {
    const CVector expect = T.col(i) + (100.0 + psi.levels[i]) * psi.amps.col(i);
    EXPECT_LE((out.col(i) - expect).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(HamiltonianPI, ConstantPotentialShift) {
  const Chart ch = line(-5, 5, 41);
  const auto psi = gaussian(ch, {3.0}, 1.0);
  NewtonianConfig a = free_cfg(), b = free_cfg();
  const double phi0 = -2.5;
  b.potential = [&](const Point&) { return phi0; };
  const CMatrix d = HamiltonianPI(b, ch, psi.levels).apply(psi.amps) - HamiltonianPI(a, ch, psi.levels).apply(psi.amps);
  const double shift = 1.0 * phi0 + 3.0 * phi0 / 100.0;
  EXPECT_LE((d - shift * psi.amps).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(HamiltonianPI, Hermitian) {
  for (bool rel : {false, true}) {
    const Chart ch = line(-5, 5, 33);
    NewtonianConfig cfg = far_mass(2000.0);
    cfg.relativistic = rel;
    const HamiltonianPI H(cfg, ch, {0.0, 1.5});
    std::mt19937 rng(4);
    std::normal_distribution<double> n;
    CMatrix a(33, 2), b(33, 2);
    for (int i = 0; i < a.size(); ++i) {
      a(i) = cplx(n(rng), n(rng));
      b(i) = cplx(n(rng), n(rng));
    }
    const cplx l = H.inner(a, H.apply(b)), r = H.inner(H.apply(a), b);
    EXPECT_LE(std::abs(l - r), 1e-12 * std::abs(l)) << rel;
  }
}

TEST(Evolve, StepBoundRefusedWithSuggestion) {
  const Chart ch = line(-5, 5, 33);
  const auto psi = gaussian(ch, {0.0}, 1.0);
  const NewtonianConfig cfg = free_cfg();
  const double bound = max_step(cfg, ch, psi.levels);
  try {
    evolve(cfg, psi, 1.0, 10);
    FAIL();
  } catch (const StepBoundViolation& e) {
    EXPECT_DOUBLE_EQ(e.suggested_step, bound);
  }
  EXPECT_NO_THROW(evolve(cfg, psi, 1.0, static_cast<long>(std::ceil(1.0 / bound))));
}

TEST(Evolve, NormPreservedOverManySteps) {
  const Chart ch = line(-10, 10, 64);
  const auto psi = gaussian(ch, {0.0, 5.0}, 1.5, 1.0);
  const NewtonianConfig cfg = far_mass(3000.0);
  const long steps = 10000;
  const double t = steps * 0.9 * max_step(cfg, ch, psi.levels);
  const auto out = evolve(cfg, psi, t, steps);
  EXPECT_LE(std::abs(out.norm2() - 1.0), 1e-10);
}

TEST(Evolve, FreeGaussianSpreading) {
  const Chart ch = line(-25, 25, 256);
  const double s = 2.0, t = 4.0;
  const auto psi = gaussian(ch, {0.0}, s);
  const NewtonianConfig cfg = free_cfg(2.0);
  const long steps = static_cast<long>(std::ceil(t / max_step(cfg, ch, psi.levels)));
  const auto out = evolve(cfg, psi, t, steps);
  const double st2 = s * s * (1.0 + std::pow(t / (2.0 * s * s), 2));
  const double peak = 1.0 / std::sqrt(2.0 * std::numbers::pi * st2);
  double worst = 0.0;
  for (std::size_t k = 0; k < ch.num_sites(); ++k) {
    const double x = ch.site_point(k)[0];
    worst = std::max(worst, std::abs(std::norm(out.amps(k, 0)) - peak * std::exp(-x * x / (2 * st2))));
  }
  EXPECT_LE(worst, 0.01 * peak);
}

TEST(Clock, HeldClockAccruesRedshiftedPhase) {
  const NewtonianConfig cfg = uniform(3.0);
  const std::vector<double> levels{1.0, 4.0};
  const Point x = p1(2.0);
  const double t = 0.5, phi = 6.0;
  const CVector in = CVector::Constant(2, 1.0 / std::sqrt(2.0));
  const CVector out = held_clock(cfg, x, levels, in, t, 2000);
  for (int i = 0; i < 2; ++i) {
    const double theta = (levels[i] * (1.0 + phi / 100.0) + 100.0 + phi) * t;
    EXPECT_LE(std::abs(out[i] - in[i] * std::exp(cplx(0.0, -theta))), 1e-10);
  }
}

TEST(Clock, TwoSiteRedshiftMatchesClosedForm) {
  const NewtonianConfig cfg = uniform(2.0);
  const std::vector<double> levels{0.0, 3.0};
  const double t = 1.0;
  const Point a = p1(1.0), b = p1(-1.5);
  const double expected = -3.0 * (2.0 * (1.0 - -1.5)) * t / 100.0;
  const double got = clock_phase_difference(cfg, a, b, levels, t, 2000);
  EXPECT_LE(std::abs(got - expected), 1e-6 * std::abs(expected));
}

TEST(Clock, RedshiftLinearInPotentialAndTime) {
  const std::vector<double> levels{0.0, 2.0};
  std::vector<double> r;
  for (double g : {0.5, 1.0, 1.5})
    for (double t : {0.25, 0.5})
      r.push_back(clock_phase_difference(uniform(g), p1(1.0), p1(-1.0), levels, t, 1000) / (g * t));
  for (double v : r) EXPECT_LE(std::abs(v - r[0]), 1e-8 * std::abs(r[0]));
}

TEST(Clock, Visibility) {
  const std::vector<double> levels{0.0, 2.0};
  const NewtonianConfig cfg = uniform(1.0);
  EXPECT_NEAR(visibility(cfg, p1(1.0), p1(-1.0), levels, 0.0, 1), 1.0, 1e-14);
  EXPECT_NEAR(visibility(cfg, p1(1.0), p1(1.0), levels, 0.7, 1000), 1.0, 1e-12);
  // dE dPhi t / c^2 = pi with dE = 2, dPhi = 2 g
  const double t = std::numbers::pi * 100.0 / (2.0 * 2.0);
  const long steps = static_cast<long>(std::ceil(t / max_step(cfg, line(0, 2, 3), levels) * 1.1));
  EXPECT_LE(visibility(cfg, p1(1.0), p1(-1.0), levels, t, steps), 1e-6);
}

TEST(History, LabSamplesMatchEvolve) {
  const Chart ch = line(-10, 10, 48);
  const auto psi = gaussian(ch, {0.0, 5.0}, 2.0);
  const NewtonianConfig cfg = far_mass(2000.0);
  const auto h = history_lab(cfg, psi, uniform_times(0.125, 6), 256);
  EXPECT_EQ(h.samples[0], psi.amps);
  for (std::size_t k = 0; k < h.samples.size(); ++k) {
    EXPECT_NEAR(h.samples[k].squaredNorm() * ch.cell_volume(), 1.0, 1e-10);
  }
  const auto direct = evolve(cfg, psi, 0.125 * 4, 256 * 4);
  EXPECT_EQ(direct.amps, h.samples[4]);
}

TEST(History, PicturesCoincideWithoutPotential) {
  const Chart ch = line(-10, 10, 48);
  const auto psi = gaussian(ch, {0.0, 5.0}, 2.0);
  const NewtonianConfig cfg = free_cfg();
  const auto ts = uniform_times(0.05, 10);
  const auto rep = equivalence_check(history_lab(cfg, psi, ts, 100), history_particle(cfg, psi, ts, 100), cfg);
  EXPECT_LE(rep.defect, 1e-10);
  EXPECT_TRUE(rep.pass);
}

TEST(History, ParticleInitialStateAndLabEnergies) {
  const Chart ch = line(-4, 4, 9);
  const auto psi = gaussian(ch, {0.0, 5.0}, 2.0);
  const NewtonianConfig cfg = far_mass(3000.0, 50.0);
  const auto [a, el] = particle_initial(cfg, psi);
  double n2 = 0.0;
  for (std::size_t s = 0; s < ch.num_sites(); ++s) {
    const double f = 1.0 - (-3000.0 / (50.0 - ch.site_point(s)[0])) / 100.0;
    for (int i = 0; i < 2; ++i) {
      n2 += std::norm(f * psi.amps(s, i)) * ch.cell_volume();
      EXPECT_NEAR(el(s, i) * f, -(100.0 + psi.levels[i]), 1e-10);
    }
  }
  EXPECT_NEAR(a.squaredNorm() * ch.cell_volume(), n2, 1e-10);
}

TEST(Equivalence, DefectQuadraticInPotential) {
  const Chart ch = line(-10, 10, 64);
  const auto psi = gaussian(ch, {0.0, 5.0}, 3.0);
  const auto ts = uniform_times(0.05, 20);
  std::vector<double> d;
  for (double M : {4000.0, 2000.0, 1000.0}) {
    const NewtonianConfig cfg = far_mass(M);
    const auto rep = equivalence_check(history_lab(cfg, psi, ts, 100), history_particle(cfg, psi, ts, 100), cfg);
    EXPECT_TRUE(rep.pass) << M;
    d.push_back(rep.defect);
  }
  for (int k = 0; k < 2; ++k) {
    EXPECT_GE(d[k] / d[k + 1], 3.5);
    EXPECT_LE(d[k] / d[k + 1], 4.5);
  }
}

TEST(Equivalence, SuperposedBranchesPassIndependently) {
  const Chart ch = line(-10, 10, 64);
  const auto psi = gaussian(ch, {0.0, 5.0}, 3.0);
  const auto ts = uniform_times(0.05, 20);
  for (double R : {1000.0, -1500.0}) {
    NewtonianConfig cfg = far_mass(R > 0 ? 3000.0 : 4000.0, R);
    const auto rep = equivalence_check(history_lab(cfg, psi, ts, 100), history_particle(cfg, psi, ts, 100), cfg);
    EXPECT_TRUE(rep.pass) << R;
    EXPECT_GT(rep.defect, 0.0);
  }
}

TEST(Equivalence, MismatchedConfigsRefused) {
  const Chart ch = line(-10, 10, 32);
  const auto psi = gaussian(ch, {0.0, 5.0}, 3.0);
  const auto ts = uniform_times(0.05, 4);
  const NewtonianConfig a = far_mass(1000.0), b = uniform(0.5);
  const auto lab = history_lab(a, psi, ts, 100);
  EXPECT_THROW(equivalence_check(lab, history_particle(b, psi, ts, 100), a), IncompatibleState);
  EXPECT_THROW(equivalence_check(lab, lab, a), IncompatibleState);
}

TEST(Equivalence, LocalFrameAtPacketIsMinkowskian) {
  Point lo(2), hi(2), src(1);
  lo << -1, -1;
  hi << 1, 1;
  src << 3.0;
  const Chart ch = Chart::spacetime(lo, hi, {21, 21});
  const auto g = MetricField::make(ch, NewtonianPointMass{0.05, src, 1.0, 1.0});
  const auto psi = GridWavefunction::site_state(g, ch.flat_index({10, 12}));
  const SuperposedState s({{0, 1.0, g, psi, std::nullopt}});
  const EepReport rep = verify_eep(build_transform(s, 0.5));
  EXPECT_TRUE(rep.pass);
  EXPECT_LE(rep.max_metric_residual(), 1e-10);
}
