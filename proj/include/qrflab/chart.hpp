#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <vector>

#include "qrflab/error.hpp"

namespace qrflab {

using Point = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A rectangular coordinate patch with a regular lattice of sample sites.
///
/// Sites are numbered row-major: the last coordinate varies fastest.
/// The chart is used both for spacetime patches (dim 2 or 4, coordinate 0 is
/// time) and for purely spatial patches of the Newtonian module (dim 1..3).
class Chart {
 public:
  Chart() = default;

  Chart(Point lo, Point hi, std::vector<int> shape)
      : lo_(std::move(lo)), hi_(std::move(hi)), shape_(std::move(shape)) {
    if (lo_.size() != hi_.size() || static_cast<std::size_t>(lo_.size()) != shape_.size() ||
        shape_.empty()) {
      throw std::invalid_argument("chart: bounds and grid shape disagree in dimension");
    }
    for (int a = 0; a < dim(); ++a) {
      if (!(hi_[a] > lo_[a])) {
        throw std::invalid_argument("chart: every bound needs positive width");
      }
      if (shape_[a] < 3) {
        throw std::invalid_argument("chart: at least 3 grid points per axis");
      }
    }
    strides_.assign(shape_.size(), 1);
    for (int a = dim() - 2; a >= 0; --a) strides_[a] = strides_[a + 1] * shape_[a + 1];
  }

  /// Spacetime chart: dim must be 2 or 4.
  static Chart spacetime(Point lo, Point hi, std::vector<int> shape) {
    Chart c(std::move(lo), std::move(hi), std::move(shape));
    if (c.dim() != 2 && c.dim() != 4) {
      throw std::invalid_argument("chart: spacetime dimension must be 2 or 4");
    }
    return c;
  }

  int dim() const { return static_cast<int>(lo_.size()); }
  const Point& lo() const { return lo_; }
  const Point& hi() const { return hi_; }
  const std::vector<int>& shape() const { return shape_; }
  double width(int a) const { return hi_[a] - lo_[a]; }
  double spacing(int a) const { return width(a) / (shape_[a] - 1); }

  double cell_volume() const {
    double v = 1.0;
    for (int a = 0; a < dim(); ++a) v *= spacing(a);
    return v;
  }

  std::size_t num_sites() const {
    std::size_t n = 1;
    for (int s : shape_) n *= static_cast<std::size_t>(s);
    return n;
  }

  std::vector<int> multi_index(std::size_t site) const {
    std::vector<int> idx(shape_.size());
    for (int a = 0; a < dim(); ++a) {
      idx[a] = static_cast<int>(site / strides_[a]);
      site %= strides_[a];
    }
    return idx;
  }

  std::size_t flat_index(const std::vector<int>& idx) const {
    std::size_t s = 0;
    for (int a = 0; a < dim(); ++a) s += static_cast<std::size_t>(idx[a]) * strides_[a];
    return s;
  }

  std::size_t stride(int a) const { return strides_[a]; }

  Point site_point(std::size_t site) const {
    const auto idx = multi_index(site);
    Point x(dim());
    for (int a = 0; a < dim(); ++a) x[a] = lo_[a] + idx[a] * spacing(a);
    return x;
  }

  bool contains(const Point& x, double slack = 1e-12) const {
    if (x.size() != dim()) return false;
    for (int a = 0; a < dim(); ++a) {
      const double tol = slack * width(a);
      if (x[a] < lo_[a] - tol || x[a] > hi_[a] + tol) return false;
    }
    return true;
  }

  void require_contains(const Point& x) const {
    if (!contains(x)) {
      std::ostringstream os;
      os << "point (" << x.transpose() << ") outside chart bounds";
      throw DomainError(os.str());
    }
  }

  /// True when x +/- margin*h_a stays inside the chart along every axis.
  bool has_margin(const Point& x, const Point& h, int margin = 1) const {
    for (int a = 0; a < dim(); ++a) {
      if (x[a] - margin * h[a] < lo_[a] - 1e-12 * width(a) ||
          x[a] + margin * h[a] > hi_[a] + 1e-12 * width(a)) {
        return false;
      }
    }
    return true;
  }

  bool on_boundary(std::size_t site) const {
    const auto idx = multi_index(site);
    for (int a = 0; a < dim(); ++a) {
      if (idx[a] == 0 || idx[a] == shape_[a] - 1) return true;
    }
    return false;
  }

  struct Snap {
    std::size_t site;
    Point offset;  // requested point minus site point
  };

  Snap nearest_site(const Point& x) const {
    require_contains(x);
    std::vector<int> idx(shape_.size());
    for (int a = 0; a < dim(); ++a) {
      int i = static_cast<int>(std::lround((x[a] - lo_[a]) / spacing(a)));
      idx[a] = std::clamp(i, 0, shape_[a] - 1);
    }
    const std::size_t s = flat_index(idx);
    return {s, x - site_point(s)};
  }

  /// Finite-difference step for analytic fields: 1e-5 of the chart width.
  Point analytic_fd_step() const {
    Point h(dim());
    for (int a = 0; a < dim(); ++a) h[a] = 1e-5 * width(a);
    return h;
  }

  Point lattice_step() const {
    Point h(dim());
    for (int a = 0; a < dim(); ++a) h[a] = spacing(a);
    return h;
  }

  bool operator==(const Chart& o) const {
    return shape_ == o.shape_ && lo_ == o.lo_ && hi_ == o.hi_;
  }
  bool operator!=(const Chart& o) const { return !(*this == o); }

 private:
  Point lo_;
  Point hi_;
  std::vector<int> shape_;
  std::vector<std::size_t> strides_;
};

/// Minkowski metric diag(1, -1, ..., -1).
inline Matrix minkowski_eta(int dim) {
  Matrix eta = -Matrix::Identity(dim, dim);
  eta(0, 0) = 1.0;
  return eta;
}

}  // namespace qrflab
