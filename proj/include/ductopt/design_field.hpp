#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ductopt/geometry.hpp"

namespace ductopt {

inline constexpr double kDefaultEpsilon = 1e-8;

// Entrywise clamp to the admissible box [eps, 1].
inline Eigen::VectorXd project_box(const Eigen::VectorXd& d,
                                   double eps = kDefaultEpsilon) {
  return d.cwiseMax(eps).cwiseMin(1.0);
}

// Threshold to a binary {eps, 1} design.
inline Eigen::VectorXd round_design(const Eigen::VectorXd& alpha,
                                    double eps = kDefaultEpsilon,
                                    double threshold = 0.5) {
  Eigen::VectorXd out(alpha.size());
  for (int i = 0; i < alpha.size(); ++i)
    out[i] = alpha[i] < threshold ? eps : 1.0;
  return out;
}

enum class FilterMode { linear, fw_open_close };

inline FilterMode parse_filter_mode(const std::string& s) {
  if (s == "linear") return FilterMode::linear;
  if (s == "fw-open-close") return FilterMode::fw_open_close;
  throw std::invalid_argument("unknown filter mode: " + s);
}

inline const char* filter_mode_name(FilterMode m) {
  return m == FilterMode::linear ? "linear" : "fw-open-close";
}

// Density filter on the structured design grid. Kernel weights are conic
// (hat) over element centroids, w_ij ~ max(0, R - dist), normalized per row;
// the neighborhood is truncated at the design-domain boundary. With a radius
// below the element size the filter is the identity.
//
// The fw-open-close mode composes an erode and a dilate built from p-power
// means over the same kernel: dilate_i(x) = (sum_j w_ij x_j^p)^(1/p) and
// erode(x) = 1 - dilate(1 - x).
class DensityFilter {
 public:
  DensityFilter(const Mesh& mesh, double radius,
                FilterMode mode = FilterMode::linear, double power = 8.0)
      : nz_(mesh.design_nz), nr_(mesh.design_nr), mode_(mode), power_(power) {
    const double h = mesh.spec.h;
    identity_ = radius < h;
    if (identity_) return;
    const int reach = static_cast<int>(std::floor(radius / h));
    for (int dj = -reach; dj <= reach; ++dj)
      for (int di = -reach; di <= reach; ++di) {
        const double dist = h * std::hypot(di, dj);
        if (dist < radius)
          offsets_.push_back({di, dj, radius - dist});
      }
  }

  bool is_identity() const { return identity_; }
  FilterMode mode() const { return mode_; }
  double power() const { return power_; }

  // d -> physical densities alpha over design elements.
  Eigen::VectorXd apply(const Eigen::VectorXd& d) const {
    if (identity_) return d;
    if (mode_ == FilterMode::linear) return weighted_mean(d);
    // open: erode then dilate
    return dilate(erode(d));
  }

  // Cotangent pullback: returns J^T v for the filter Jacobian J at d.
  Eigen::VectorXd backprop(const Eigen::VectorXd& d,
                           const Eigen::VectorXd& v) const {
    if (identity_) return v;
    if (mode_ == FilterMode::linear) return weighted_mean_transpose(v);
    const Eigen::VectorXd y = erode(d);
    return erode_jacobian_t(d, dilate_jacobian_t(y, v));
  }

 private:
  struct Offset {
    int di, dj;
    double w;
  };

  template <typename Fn>
  void for_neighbors(int i, int j, Fn&& fn) const {
    for (const auto& o : offsets_) {
      const int ni = i + o.di, nj = j + o.dj;
      if (ni >= 0 && ni < nz_ && nj >= 0 && nj < nr_) fn(nj * nz_ + ni, o.w);
    }
  }

  Eigen::VectorXd row_norms() const {
    Eigen::VectorXd norm = Eigen::VectorXd::Zero(nz_ * nr_);
    for (int j = 0; j < nr_; ++j)
      for (int i = 0; i < nz_; ++i)
        for_neighbors(i, j, [&](int, double w) { norm[j * nz_ + i] += w; });
    return norm;
  }

  Eigen::VectorXd weighted_mean(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd norm = row_norms();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(x.size());
    for (int j = 0; j < nr_; ++j)
      for (int i = 0; i < nz_; ++i) {
        const int idx = j * nz_ + i;
        double acc = 0;
        for_neighbors(i, j, [&](int n, double w) { acc += w * x[n]; });
        out[idx] = acc / norm[idx];
      }
    return out;
  }

  // (W^T v)_j = sum_i v_i w_ij / norm_i; the kernel is symmetric in (i, j)
  // so the same offset table serves.
  Eigen::VectorXd weighted_mean_transpose(const Eigen::VectorXd& v) const {
    const Eigen::VectorXd norm = row_norms();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(v.size());
    for (int j = 0; j < nr_; ++j)
      for (int i = 0; i < nz_; ++i) {
        const int idx = j * nz_ + i;
        const double vi = v[idx] / norm[idx];
        for_neighbors(i, j, [&](int n, double w) { out[n] += w * vi; });
      }
    return out;
  }

  Eigen::VectorXd dilate(const Eigen::VectorXd& x) const {
    return weighted_mean(x.array().pow(power_).matrix())
        .array()
        .pow(1.0 / power_)
        .matrix();
  }

  Eigen::VectorXd erode(const Eigen::VectorXd& x) const {
    return Eigen::VectorXd::Ones(x.size()) -
           dilate(Eigen::VectorXd::Ones(x.size()) - x);
  }

  // d(dilate_i)/d(x_j) = w_ij x_j^(p-1) (sum w x^p)_i^(1/p - 1)
  Eigen::VectorXd dilate_jacobian_t(const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& v) const {
    const Eigen::VectorXd s = weighted_mean(x.array().pow(power_).matrix());
    const Eigen::VectorXd outer =
        (v.array() * s.array().pow(1.0 / power_ - 1.0)).matrix();
    return weighted_mean_transpose(outer).cwiseProduct(
        x.array().pow(power_ - 1.0).matrix());
  }

  Eigen::VectorXd erode_jacobian_t(const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& v) const {
    return dilate_jacobian_t(Eigen::VectorXd::Ones(x.size()) - x, v);
  }

  int nz_, nr_;
  FilterMode mode_;
  double power_;
  bool identity_ = true;
  std::vector<Offset> offsets_;
};

// Expands design densities into a per-element field with 1 on non-design
// elements.
inline Eigen::VectorXd density_over_elements(const Mesh& mesh,
                                             const Eigen::VectorXd& alpha_design) {
  if (alpha_design.size() != static_cast<int>(mesh.design_elements.size()))
    throw std::invalid_argument("density_over_elements: size mismatch");
  Eigen::VectorXd alpha = Eigen::VectorXd::Ones(mesh.n_elements());
  for (size_t i = 0; i < mesh.design_elements.size(); ++i)
    alpha[mesh.design_elements[i]] = alpha_design[i];
  return alpha;
}

struct PenaltyConfig {
  double gamma = 0.0;
  double epsilon = kDefaultEpsilon;
};

// Quadratic binariness penalty (gamma/N^D) sum (alpha - eps)(1 - alpha)
// over design elements, with its gradient.
inline std::pair<double, Eigen::VectorXd> penalty_value_grad(
    const Eigen::VectorXd& alpha_design, const PenaltyConfig& cfg) {
  const double n = static_cast<double>(alpha_design.size());
  const double scale = cfg.gamma / n;
  double value = 0;
  Eigen::VectorXd grad(alpha_design.size());
  for (int i = 0; i < alpha_design.size(); ++i) {
    const double a = alpha_design[i];
    value += scale * (a - cfg.epsilon) * (1.0 - a);
    grad[i] = scale * (1.0 + cfg.epsilon - 2.0 * a);
  }
  return {value, grad};
}

}  // namespace ductopt
