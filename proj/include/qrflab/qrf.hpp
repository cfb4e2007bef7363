#pragma once

// The controlled QRF transformation to the particle's locally inertial frame
// and its verification.

#include <Eigen/Dense>

#include <algorithm>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "qrflab/frames.hpp"
#include "qrflab/parallel.hpp"
#include "qrflab/qstate.hpp"

namespace qrflab {

enum class TransformMode { static_site, along_geodesic };
enum class TransformDirection { to_P, to_R };

struct SiteMap {
  std::size_t p_site = 0;  // lattice site of P (static mode)
  double tau = 0.0;        // geodesic parameter (geodesic mode)
  SecondOrderMap map;
};

struct BranchMaps {
  int label = 0;
  MetricPtr g;
  std::vector<SiteMap> maps;

  const SiteMap* for_site(std::size_t s) const {
    for (const auto& m : maps)
      if (m.p_site == s) return &m;
    return nullptr;
  }
};

struct QrfTransform {
  TransformMode mode = TransformMode::static_site;
  TransformDirection direction = TransformDirection::to_P;
  std::vector<BranchMaps> branches;

  const BranchMaps* find(int label) const {
    for (const auto& b : branches)
      if (b.label == label) return &b;
    return nullptr;
  }

  QrfTransform inverted() const {
    QrfTransform t = *this;
    t.direction = direction == TransformDirection::to_P ? TransformDirection::to_R : TransformDirection::to_P;
    return t;
  }
};

/// One LIF map per branch and per support site of P.
inline QrfTransform build_transform(const SuperposedState& s, double trust_fraction = kDefaultTrustFraction) {
  QrfTransform t;
  t.mode = TransformMode::static_site;
  t.branches.resize(s.size());
  parallel_for(s.size(), [&](std::size_t i) {
    const Branch& b = s.branches()[i];
    if (!b.psi_P) throw IncompatibleState("transform: branch has no P wavefunction");
    if (!b.psi_P->interior_supported(1)) {
      throw DomainError("transform: P support touches the chart boundary");
    }
    BranchMaps bm{b.label, b.g, {}};
    for (std::size_t site : b.psi_P->support()) {
      bm.maps.push_back({site, 0.0, lif_map(*b.g, b.psi_P->chart().site_point(site), trust_fraction)});
    }
    t.branches[i] = std::move(bm);
  });
  return t;
}

/// Fermi maps at n_tau evenly spaced parameters along each branch's geodesic.
inline QrfTransform build_transform(const SuperposedState& s, const std::map<int, GeodesicPath>& paths,
                                    int n_tau, double trust_fraction = kDefaultTrustFraction) {
  if (n_tau < 2) throw std::invalid_argument("transform: need at least two tau samples");
  QrfTransform t;
  t.mode = TransformMode::along_geodesic;
  t.branches.resize(s.size());
  parallel_for(s.size(), [&](std::size_t i) {
    const Branch& b = s.branches()[i];
    auto it = paths.find(b.label);
    if (it == paths.end()) throw IncompatibleState("transform: no geodesic for branch");
    const GeodesicPath& p = it->second;
    const FermiFrame fr = fermi_frame(*b.g, p);
    BranchMaps bm{b.label, b.g, {}};
    const double t0 = p.front().tau, t1 = p.back().tau;
    for (int k = 0; k < n_tau; ++k) {
      const double tau = t0 + (t1 - t0) * k / (n_tau - 1);
      bm.maps.push_back({0, tau, fermi_map(fr, *b.g, tau, trust_fraction)});
    }
    t.branches[i] = std::move(bm);
  });
  return t;
}

// ---------------------------------------------------------------------------
// States in the particle frame

/// Samples of a wavefunction at scattered nodes, each carrying its covariant
/// cell volume. Nodes remember the lattice site they came from.
struct SampledWavefunction {
  std::vector<std::size_t> source_sites;  // sorted
  Matrix nodes;                           // dim x n
  Eigen::VectorXd weights;
  CVector amps;

  double norm2() const { return (weights.array() * amps.array().abs2()).sum(); }
};

inline cplx overlap(const SampledWavefunction& a, const SampledWavefunction& b) {
  cplx s = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.source_sites.size() && j < b.source_sites.size()) {
    if (a.source_sites[i] < b.source_sites[j]) {
      ++i;
    } else if (b.source_sites[j] < a.source_sites[i]) {
      ++j;
    } else {
      s += a.weights[i] * std::conj(a.amps[i]) * b.amps[j];
      ++i;
      ++j;
    }
  }
  return s;
}

/// One term sum_x psi(x) |-x>_R |xi^(x)>_M of a transformed branch.
struct FramedComponent {
  std::size_t p_site = 0;
  Point r_point;        // position of R relative to P
  double r_weight = 0;  // covariant cell volume of the P site
  cplx r_amp = 0.0;
  SampledWavefunction m;
  double interp_defect = 0.0;
};

struct FramedBranch {
  int label = 0;
  cplx c = 1.0;
  MetricPtr g;
  std::vector<FramedComponent> comps;
};

struct FramedState {
  std::vector<FramedBranch> branches;
  FrameTag tag = FrameTag::P;

  const FramedBranch* find(int label) const {
    for (const auto& b : branches)
      if (b.label == label) return &b;
    return nullptr;
  }
};

inline cplx inner_product(const FramedState& a, const FramedState& b) {
  cplx total = 0.0;
  for (const auto& ba : a.branches) {
    const FramedBranch* bb = b.find(ba.label);
    if (!bb) continue;
    if (ba.g->chart() != bb->g->chart()) throw IncompatibleState("inner product: chart mismatch on shared label");
    cplx br = 0.0;
    for (const auto& ca : ba.comps) {
      for (const auto& cb : bb->comps) {
        if (ca.p_site != cb.p_site) continue;
        br += ca.r_weight * std::conj(ca.r_amp) * cb.r_amp * overlap(ca.m, cb.m);
      }
    }
    total += std::conj(ba.c) * bb->c * br;
  }
  return total;
}

namespace detail {

/// Multilinear interpolation of lattice amplitudes; zero outside the chart.
inline cplx interpolate(const GridWavefunction& wf, const Point& x) {
  const Chart& ch = wf.chart();
  if (!ch.contains(x)) return 0.0;
  const int d = ch.dim();
  std::vector<int> base(d), idx(d);
  std::vector<double> frac(d);
  for (int a = 0; a < d; ++a) {
    const double s = (x[a] - ch.lo()[a]) / ch.spacing(a);
    base[a] = std::clamp(static_cast<int>(std::floor(s)), 0, ch.shape()[a] - 2);
    frac[a] = s - base[a];
  }
  cplx v = 0.0;
  for (int corner = 0; corner < (1 << d); ++corner) {
    double w = 1.0;
    for (int a = 0; a < d; ++a) {
      const int bit = (corner >> a) & 1;
      idx[a] = base[a] + bit;
      w *= bit ? frac[a] : 1.0 - frac[a];
    }
    if (w != 0.0) v += w * wf.amps()[ch.flat_index(idx)];
  }
  return v;
}

/// Norm defect of resampling the transformed M part onto a regular xi
/// lattice spanning its nodes: phi~(xi) = phi(x(xi)), weights from g~.
inline double resampling_defect(const GridWavefunction& phi, const SecondOrderMap& m, const MetricField& g,
                                const SampledWavefunction& s) {
  const int d = m.dim();
  if (s.nodes.cols() == 0) return 0.0;
  Point lo = s.nodes.rowwise().minCoeff(), hi = s.nodes.rowwise().maxCoeff();
  std::vector<int> shape(d);
  for (int a = 0; a < d; ++a) {
    const double span = hi[a] - lo[a];
    const int n = std::max(3, static_cast<int>(std::lround(span / phi.chart().spacing(a))) + 1);
    shape[a] = n;
    if (!(span > 0.0)) {
      lo[a] -= phi.chart().spacing(a);
      hi[a] += phi.chart().spacing(a);
      shape[a] = 3;
    }
  }
  const Chart target(lo, hi, shape);
  const double dv = target.cell_volume();
  double n2 = 0.0;
  for (std::size_t k = 0; k < target.num_sites(); ++k) {
    const Point xi = target.site_point(k);
    if (!m.within_trust(m.f() * xi)) continue;
    const Point x = m.inverse(xi);
    if (!g.chart().contains(x)) continue;
    const cplx v = interpolate(phi, x);
    if (v == cplx(0.0)) continue;
    const Matrix gt = pullback_metric(m, g, xi);
    n2 += std::sqrt(-gt.determinant()) * dv * std::norm(v);
  }
  return std::abs(n2 - s.norm2());
}

}  // namespace detail

/// Applies S: every P site x of branch i sends P's amplitude to R at -x and
/// re-expresses M in the xi coordinates of the map at x.
inline FramedState apply_transform(const QrfTransform& t, const SuperposedState& s, bool measure_defect = true) {
  if (t.mode != TransformMode::static_site) throw Unsupported("apply: only static transforms act on states");
  if (t.direction != TransformDirection::to_P) throw std::invalid_argument("apply: transform points to R frame");
  if (s.frame_tag() != FrameTag::R) throw IncompatibleState("apply: state is not in the R frame");
  FramedState out;
  out.branches.resize(s.size());
  parallel_for(s.size(), [&](std::size_t i) {
    const Branch& b = s.branches()[i];
    const BranchMaps* bm = t.find(b.label);
    if (!bm || !b.psi_P || !b.phi_M) throw IncompatibleState("apply: transform does not match state");
    if (bm->g != b.g && bm->g->chart() != b.g->chart()) throw IncompatibleState("apply: metric mismatch");
    FramedBranch fb{b.label, b.c, b.g, {}};
    const auto msup = b.phi_M->support();
    for (std::size_t ps : b.psi_P->support()) {
      const SiteMap* sm = bm->for_site(ps);
      if (!sm) throw IncompatibleState("apply: P support site without a map");
      FramedComponent fc;
      fc.p_site = ps;
      fc.r_point = -b.psi_P->chart().site_point(ps);
      fc.r_weight = b.psi_P->weights()[ps];
      fc.r_amp = b.psi_P->amps()[ps];
      fc.m.source_sites = msup;
      fc.m.nodes.resize(b.g->dim(), msup.size());
      fc.m.weights.resize(msup.size());
      fc.m.amps.resize(msup.size());
      for (std::size_t k = 0; k < msup.size(); ++k) {
        fc.m.nodes.col(k) = sm->map.forward(b.phi_M->chart().site_point(msup[k]));
        fc.m.weights[k] = b.phi_M->weights()[msup[k]];
        fc.m.amps[k] = b.phi_M->amps()[msup[k]];
      }
      if (measure_defect) fc.interp_defect = detail::resampling_defect(*b.phi_M, sm->map, *b.g, fc.m);
      fb.comps.push_back(std::move(fc));
    }
    out.branches[i] = std::move(fb);
  });
  return out;
}

struct InverseResult {
  SuperposedState state;
  double component_spread = 0.0;  // max distance between per-site M reconstructions
  double node_defect = 0.0;       // max distance of a returned node from its site
};

/// Maps a particle-frame state back to the R frame. Nodes go through the
/// exact inverse of each map and snap to their lattice sites; M is the
/// P-weighted average of the per-site reconstructions.
inline InverseResult apply_transform(const QrfTransform& t, const FramedState& fs) {
  if (t.direction != TransformDirection::to_R) throw std::invalid_argument("apply: transform points to P frame");
  InverseResult res;
  std::vector<Branch> out;
  for (const auto& fb : fs.branches) {
    const BranchMaps* bm = t.find(fb.label);
    if (!bm) throw IncompatibleState("apply: transform does not match state");
    const Chart& ch = fb.g->chart();
    CVector psi = CVector::Zero(ch.num_sites());
    CVector phi = CVector::Zero(ch.num_sites());
    std::vector<CVector> recon;
    double pw = 0.0;
    for (const auto& fc : fb.comps) {
      const std::size_t ps = ch.nearest_site(-fc.r_point).site;
      psi[ps] = fc.r_amp;
      const SiteMap* sm = bm->for_site(ps);
      if (!sm) throw IncompatibleState("apply: no map for R position");
      CVector m = CVector::Zero(ch.num_sites());
      for (std::size_t k = 0; k < fc.m.source_sites.size(); ++k) {
        const Point x = sm->map.solve_forward(fc.m.nodes.col(k));
        const auto snap = ch.nearest_site(x);
        res.node_defect = std::max(res.node_defect, snap.offset.cwiseAbs().maxCoeff());
        m[snap.site] = fc.m.amps[k];
      }
      const double w = fc.r_weight * std::norm(fc.r_amp);
      phi += w * m;
      pw += w;
      recon.push_back(std::move(m));
    }
    phi /= pw;
    for (const auto& r : recon) res.component_spread = std::max(res.component_spread, (r - phi).cwiseAbs().maxCoeff());
    Branch b;
    b.label = fb.label;
    b.c = fb.c;
    b.g = fb.g;
    b.psi_P = GridWavefunction(fb.g, psi);
    b.phi_M = GridWavefunction(fb.g, phi);
    out.push_back(std::move(b));
  }
  res.state = SuperposedState(std::move(out), FrameTag::R, false);
  return res;
}

/// g~ of branch `label` at xi, in the frame of the P site `p_site`.
inline Matrix transformed_metric(const QrfTransform& t, int label, std::size_t map_index, const Point& xi) {
  const BranchMaps* bm = t.find(label);
  if (!bm) throw IncompatibleState("transformed metric: unknown branch");
  return pullback_metric(bm->maps.at(map_index).map, *bm->g, xi);
}

// ---------------------------------------------------------------------------
// Verification

struct EepEntry {
  Point center;
  double tau = 0.0;
  double metric_residual = 0.0;
  double dmetric_residual = 0.0;       // at step h
  double dmetric_residual_half = 0.0;  // at step h/2
  double curvature_scalar = 0.0;
  double interp_defect = 0.0;
  bool pass = false;
};

struct EepBranchReport {
  int label = 0;
  std::vector<EepEntry> entries;
};

struct EepOptions {
  double metric_tol = 1e-10;
  double dmetric_C = 1.0;  // first-derivative residual must stay below C h^2
  double h = 0.0;          // FD step in xi; 0 picks 5% of the smallest trust radius
  bool curvature = true;
};

struct EepReport {
  TransformMode mode = TransformMode::static_site;
  double h = 0.0;
  std::vector<EepBranchReport> branches;
  bool pass = false;

  double max_metric_residual() const {
    double m = 0.0;
    for (const auto& b : branches)
      for (const auto& e : b.entries) m = std::max(m, e.metric_residual);
    return m;
  }
  double max_dmetric_residual() const {
    double m = 0.0;
    for (const auto& b : branches)
      for (const auto& e : b.entries) m = std::max(m, e.dmetric_residual);
    return m;
  }
  /// smallest ratio r(h) / r(h/2) over entries with nonzero residual
  double min_refinement_ratio() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& b : branches)
      for (const auto& e : b.entries)
        if (e.dmetric_residual_half > 0.0) m = std::min(m, e.dmetric_residual / e.dmetric_residual_half);
    return m;
  }
};

inline EepReport verify_eep(const QrfTransform& t, const FramedState* framed = nullptr, EepOptions opt = {}) {
  EepReport rep;
  rep.mode = t.mode;
  double h = opt.h;
  if (h <= 0.0) {
    h = std::numeric_limits<double>::infinity();
    for (const auto& b : t.branches)
      for (const auto& m : b.maps) h = std::min(h, 0.05 * m.map.trust_radius().minCoeff());
  }
  rep.h = h;
  rep.branches.resize(t.branches.size());
  parallel_for(t.branches.size(), [&](std::size_t i) {
    const BranchMaps& bm = t.branches[i];
    EepBranchReport br;
    br.label = bm.label;
    const FramedBranch* fb = framed ? framed->find(bm.label) : nullptr;
    const int d = bm.g->dim();
    for (const auto& sm : bm.maps) {
      EepEntry e;
      e.center = sm.map.center();
      e.tau = sm.tau;
      e.metric_residual =
          (pullback_metric(sm.map, *bm.g, Point::Zero(d)) - minkowski_eta(d)).cwiseAbs().maxCoeff();
      e.dmetric_residual = pullback_derivative_residual(sm.map, *bm.g, h);
      e.dmetric_residual_half = pullback_derivative_residual(sm.map, *bm.g, 0.5 * h);
      if (opt.curvature) e.curvature_scalar = kretschmann(pullback_field(sm.map, *bm.g), Point::Zero(d));
      if (fb) {
        for (const auto& fc : fb->comps)
          if (fc.p_site == sm.p_site) e.interp_defect = fc.interp_defect;
      }
      e.pass = e.metric_residual <= opt.metric_tol && e.dmetric_residual <= opt.dmetric_C * h * h;
      br.entries.push_back(std::move(e));
    }
    rep.branches[i] = std::move(br);
  });
  rep.pass = true;
  for (const auto& b : rep.branches)
    for (const auto& e : b.entries) rep.pass = rep.pass && e.pass;
  return rep;
}

}  // namespace qrflab
