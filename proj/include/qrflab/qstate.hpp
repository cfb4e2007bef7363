#pragma once

// Branch-superposed states of the field label, a probe M and a particle P.

#include <Eigen/Dense>

#include <complex>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "qrflab/manifold.hpp"

namespace qrflab {

using cplx = std::complex<double>;
using CVector = Eigen::VectorXcd;

/// Amplitudes on the sites of a chart, weighted by the covariant measure of
/// a metric: <a|b> = sum_s sqrt(-g(x_s)) dV a_s^* b_s.
class GridWavefunction {
 public:
  GridWavefunction() = default;

  GridWavefunction(MetricPtr g, CVector amps) : g_(std::move(g)), amps_(std::move(amps)) {
    if (static_cast<std::size_t>(amps_.size()) != chart().num_sites()) {
      throw std::invalid_argument("wavefunction: one amplitude per chart site required");
    }
    if (!amps_.allFinite()) throw std::invalid_argument("wavefunction: non-finite amplitude");
    weights_ = measure_weights(*g_);
  }

  static GridWavefunction from_function(MetricPtr g, const std::function<cplx(const Point&)>& fn) {
    const Chart& ch = g->chart();
    CVector a(ch.num_sites());
    for (std::size_t s = 0; s < ch.num_sites(); ++s) a[s] = fn(ch.site_point(s));
    return GridWavefunction(std::move(g), std::move(a));
  }

  /// Normalized delta-like site state: amplitude 1/sqrt(w_s) at one site.
  static GridWavefunction site_state(MetricPtr g, std::size_t site) {
    CVector a = CVector::Zero(g->chart().num_sites());
    GridWavefunction wf(std::move(g), a);
    wf.amps_[site] = 1.0 / std::sqrt(wf.weights_[site]);
    return wf;
  }

  static Eigen::VectorXd measure_weights(const MetricField& g) {
    const Chart& ch = g.chart();
    Eigen::VectorXd w(ch.num_sites());
    const double dv = ch.cell_volume();
    for (std::size_t s = 0; s < ch.num_sites(); ++s) w[s] = covariant_measure(g, ch.site_point(s)) * dv;
    return w;
  }

  const Chart& chart() const { return g_->chart(); }
  const MetricPtr& metric() const { return g_; }
  const CVector& amps() const { return amps_; }
  CVector& amps() { return amps_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  std::size_t size() const { return static_cast<std::size_t>(amps_.size()); }

  double norm2() const { return (weights_.array() * amps_.array().abs2()).sum(); }

  GridWavefunction normalized() const {
    const double n = norm2();
    if (!(n > 0.0)) throw ZeroWeight("wavefunction: zero norm");
    GridWavefunction out = *this;
    out.amps_ /= std::sqrt(n);
    return out;
  }

  GridWavefunction with_amps(CVector a) const {
    GridWavefunction out = *this;
    if (a.size() != amps_.size()) throw std::invalid_argument("wavefunction: amplitude count mismatch");
    out.amps_ = std::move(a);
    return out;
  }

  /// True when every site carrying amplitude is at least `margin` sites from
  /// the chart boundary.
  bool interior_supported(int margin = 1, double tol = 0.0) const {
    const Chart& ch = chart();
    for (std::size_t s = 0; s < size(); ++s) {
      if (std::abs(amps_[s]) <= tol) continue;
      const auto idx = ch.multi_index(s);
      for (int a = 0; a < ch.dim(); ++a)
        if (idx[a] < margin || idx[a] > ch.shape()[a] - 1 - margin) return false;
    }
    return true;
  }

  std::vector<std::size_t> support(double tol = 0.0) const {
    std::vector<std::size_t> out;
    for (std::size_t s = 0; s < size(); ++s)
      if (std::abs(amps_[s]) > tol) out.push_back(s);
    return out;
  }

 private:
  MetricPtr g_;
  CVector amps_;
  Eigen::VectorXd weights_;
};

inline bool same_lattice(const GridWavefunction& a, const GridWavefunction& b) {
  return a.metric() == b.metric() || (a.chart() == b.chart() && a.weights() == b.weights());
}

/// Covariant overlap <a|b>.
inline cplx overlap(const GridWavefunction& a, const GridWavefunction& b) {
  if (!same_lattice(a, b)) throw IncompatibleState("overlap: wavefunctions live on different lattices");
  cplx s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a.weights()[k] * std::conj(a.amps()[k]) * b.amps()[k];
  return s;
}

enum class FrameTag { R, P };

struct Branch {
  int label = 0;
  cplx c = 1.0;
  MetricPtr g;
  std::optional<GridWavefunction> psi_P;
  std::optional<GridWavefunction> phi_M;
};

class SuperposedState {
 public:
  SuperposedState() = default;

  /// Validates distinct labels, sum |c|^2 = 1 and unit-normalized parts.
  explicit SuperposedState(std::vector<Branch> branches, FrameTag tag = FrameTag::R, bool check_norm = true)
      : branches_(std::move(branches)), tag_(tag) {
    std::set<int> seen;
    for (const auto& b : branches_) {
      if (!seen.insert(b.label).second) throw IncompatibleState("state: duplicate branch label");
      if (!b.g) throw std::invalid_argument("state: branch without metric");
      for (const auto* wf : {b.psi_P ? &*b.psi_P : nullptr, b.phi_M ? &*b.phi_M : nullptr}) {
        if (!wf) continue;
        if (wf->metric() != b.g && wf->chart() != b.g->chart()) {
          throw IncompatibleState("state: wavefunction chart differs from branch metric chart");
        }
        if (check_norm && std::abs(wf->norm2() - 1.0) > 1e-12) {
          throw std::invalid_argument("state: branch wavefunctions must be unit normalized");
        }
      }
    }
    if (check_norm && std::abs(coefficient_norm2() - 1.0) > 1e-12) {
      throw std::invalid_argument("state: sum |c_i|^2 must be 1");
    }
  }

  const std::vector<Branch>& branches() const { return branches_; }
  FrameTag frame_tag() const { return tag_; }
  std::size_t size() const { return branches_.size(); }

  const Branch* find(int label) const {
    for (const auto& b : branches_)
      if (b.label == label) return &b;
    return nullptr;
  }

  double coefficient_norm2() const {
    double s = 0.0;
    for (const auto& b : branches_) s += std::norm(b.c);
    return s;
  }

 private:
  std::vector<Branch> branches_;
  FrameTag tag_ = FrameTag::R;
};

/// Equal-weight superposition c_i = N^{-1/2}.
inline SuperposedState equal_superposition(std::vector<Branch> branches) {
  const double c = 1.0 / std::sqrt(static_cast<double>(branches.size()));
  for (auto& b : branches) b.c = c;
  return SuperposedState(std::move(branches));
}

inline cplx inner_product(const SuperposedState& a, const SuperposedState& b) {
  cplx total = 0.0;
  for (const auto& ba : a.branches()) {
    const Branch* bb = b.find(ba.label);
    if (!bb) continue;
    if (ba.g->chart() != bb->g->chart()) throw IncompatibleState("inner product: chart mismatch on shared label");
    cplx term = std::conj(ba.c) * bb->c;
    if (ba.psi_P.has_value() != bb->psi_P.has_value() || ba.phi_M.has_value() != bb->phi_M.has_value()) {
      throw IncompatibleState("inner product: branch contents differ");
    }
    if (ba.psi_P) term *= overlap(*ba.psi_P, *bb->psi_P);
    if (ba.phi_M) term *= overlap(*ba.phi_M, *bb->phi_M);
    total += term;
  }
  return total;
}

/// Applies a per-branch operation to every branch (the controlled operation).
inline SuperposedState controlled(const SuperposedState& s, const std::function<Branch(const Branch&)>& op,
                                  bool check_norm = true) {
  std::vector<Branch> out;
  out.reserve(s.size());
  for (const auto& b : s.branches()) out.push_back(op(b));
  return SuperposedState(std::move(out), s.frame_tag(), check_norm);
}

// ---------------------------------------------------------------------------
// Operator-valued metric

enum class SystemTag { M, P };

struct MetricPairing {
  std::size_t site;
  Point x;
  cplx amp;
  Matrix g;
};

struct BranchPairing {
  int label;
  cplx c;
  std::vector<MetricPairing> entries;
};

/// For each branch and each site where the chosen system has amplitude,
/// the branch metric at that site together with the amplitude.
inline std::vector<BranchPairing> operator_metric_eval(const SuperposedState& s, SystemTag on) {
  std::vector<BranchPairing> out;
  for (const auto& b : s.branches()) {
    const auto& wf = on == SystemTag::M ? b.phi_M : b.psi_P;
    if (!wf) throw IncompatibleState("operator metric: system absent from branch");
    BranchPairing bp{b.label, b.c, {}};
    for (std::size_t k = 0; k < wf->size(); ++k) {
      if (wf->amps()[k] == cplx(0.0)) continue;
      const Point x = wf->chart().site_point(k);
      bp.entries.push_back({k, x, wf->amps()[k], b.g->value(x)});
    }
    out.push_back(std::move(bp));
  }
  return out;
}

/// sum_i |c_i|^2 sum_x w(x) |amp|^2 g^i(x)
inline Matrix metric_expectation(const SuperposedState& s, SystemTag on) {
  const auto pairs = operator_metric_eval(s, on);
  Matrix acc;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& b = s.branches()[i];
    const auto& wf = on == SystemTag::M ? *b.phi_M : *b.psi_P;
    for (const auto& e : pairs[i].entries) {
      const Matrix term = std::norm(b.c) * wf.weights()[e.site] * std::norm(e.amp) * e.g;
      acc = acc.size() ? Matrix(acc + term) : term;
    }
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Phase-space operators

struct OperatorResult {
  GridWavefunction wf;
  bool boundary_leak = false;
};

inline GridWavefunction position_op(const GridWavefunction& wf, int axis) {
  const Chart& ch = wf.chart();
  CVector a = wf.amps();
  for (std::size_t s = 0; s < wf.size(); ++s) a[s] *= ch.site_point(s)[axis];
  return wf.with_amps(std::move(a));
}

/// -i hbar (-g)^{-1/4} d_axis [(-g)^{1/4} psi], central differences; zero on
/// boundary sites.
inline OperatorResult momentum_op(const GridWavefunction& wf, int axis, double hbar = 1.0) {
  const Chart& ch = wf.chart();
  const double dv = ch.cell_volume();
  const double h = ch.spacing(axis);
  const Eigen::VectorXd root = (wf.weights().array() / dv).sqrt();  // (-g)^{1/4}
  CVector f = wf.amps().cwiseProduct(root.cast<cplx>());
  CVector out = CVector::Zero(wf.size());
  const std::size_t st = ch.stride(axis);
  const int n = ch.shape()[axis];
  bool leak = false;
  for (std::size_t s = 0; s < wf.size(); ++s) {
    const int i = ch.multi_index(s)[axis];
    if (i == 0 || i == n - 1) {
      if (wf.amps()[s] != cplx(0.0)) leak = true;
      continue;
    }
    out[s] = cplx(0.0, -hbar) * (f[s + st] - f[s - st]) / (2.0 * h) / root[s];
  }
  return {wf.with_amps(std::move(out)), leak};
}

/// max over interior sites of |([x^mu, p_nu] - i hbar delta) psi|
inline double commutator_residual(const GridWavefunction& wf, int mu, int nu, double hbar = 1.0) {
  const CVector xp = position_op(momentum_op(wf, nu, hbar).wf, mu).amps();
  const CVector px = momentum_op(position_op(wf, mu), nu, hbar).wf.amps();
  const Chart& ch = wf.chart();
  double worst = 0.0;
  for (std::size_t s = 0; s < wf.size(); ++s) {
    if (ch.on_boundary(s)) continue;
    const cplx expect = (mu == nu) ? cplx(0.0, hbar) * wf.amps()[s] : cplx(0.0);
    worst = std::max(worst, std::abs(xp[s] - px[s] - expect));
  }
  return worst;
}

/// |<chi|p psi> - <p chi|psi>|
inline double hermiticity_residual(const GridWavefunction& chi, const GridWavefunction& psi, int axis,
                                   double hbar = 1.0) {
  return std::abs(overlap(chi, momentum_op(psi, axis, hbar).wf) - overlap(momentum_op(chi, axis, hbar).wf, psi));
}

// ---------------------------------------------------------------------------
// Point identification

struct PointIdentification {
  std::map<int, Point> assignments;
};

struct IdentificationResult {
  SuperposedState state;           // unnormalized
  double weight = 0.0;             // post-projection norm^2
  std::map<int, std::size_t> sites;
  std::map<int, Point> offsets;    // requested point minus snapped site
};

/// Projects M in each listed branch onto the site state at its assigned
/// point. Unlisted branches are annihilated.
inline IdentificationResult project_identify(const SuperposedState& s, const PointIdentification& pi) {
  for (const auto& [label, x] : pi.assignments) {
    if (!s.find(label)) throw IncompatibleState("identify: assignment names a missing branch");
  }
  IdentificationResult res;
  std::vector<Branch> out;
  for (const auto& b : s.branches()) {
    auto it = pi.assignments.find(b.label);
    if (it == pi.assignments.end()) continue;
    if (!b.phi_M) throw IncompatibleState("identify: branch has no M wavefunction");
    const auto snap = b.phi_M->chart().nearest_site(it->second);
    CVector a = CVector::Zero(b.phi_M->size());
    a[snap.site] = b.phi_M->amps()[snap.site];
    Branch nb = b;
    nb.phi_M = b.phi_M->with_amps(std::move(a));
    double part = std::norm(b.c) * nb.phi_M->norm2();
    if (nb.psi_P) part *= nb.psi_P->norm2();
    res.weight += part;
    res.sites[b.label] = snap.site;
    res.offsets[b.label] = snap.offset;
    out.push_back(std::move(nb));
  }
  res.state = SuperposedState(std::move(out), s.frame_tag(), false);
  return res;
}

// ---------------------------------------------------------------------------
// Probe coupling

struct CouplingResult {
  SuperposedState state;
  double weight = 0.0;  // norm^2 before renormalization
};

/// psi_i(x) -> psi_i(x) phi_i(x) in every branch; M is consumed and the
/// result renormalized.
inline CouplingResult probe_couple(const SuperposedState& s) {
  std::vector<Branch> out;
  std::vector<double> norms;
  double total = 0.0;
  for (const auto& b : s.branches()) {
    if (!b.psi_P || !b.phi_M) throw IncompatibleState("probe: branch needs both P and M");
    if (!same_lattice(*b.psi_P, *b.phi_M)) throw IncompatibleState("probe: P and M on different lattices");
    const GridWavefunction prod = b.psi_P->with_amps(b.psi_P->amps().cwiseProduct(b.phi_M->amps()));
    const double n = prod.norm2();
    if (!(n > 0.0)) throw ZeroWeight("probe: P and M supports are disjoint in a branch");
    Branch nb;
    nb.label = b.label;
    nb.g = b.g;
    nb.c = b.c * std::sqrt(n);
    nb.psi_P = prod.normalized();
    total += std::norm(b.c) * n;
    out.push_back(std::move(nb));
  }
  for (auto& b : out) b.c /= std::sqrt(total);
  return {SuperposedState(std::move(out), s.frame_tag()), total};
}

}  // namespace qrflab
