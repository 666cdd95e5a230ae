#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <vector>

#include "ductopt/design_field.hpp"
#include "ductopt/wave_analysis.hpp"

namespace ductopt {

// Parasitic-power loss at one frequency: everything that is not transmitted
// planar power.
struct FrequencyLoss {
  double f = 0;
  double value = 0;
  AmplitudeSet amplitudes;
  PowerSet powers;
};

struct AdjointSolution {
  std::vector<Eigen::VectorXcd> z_left;   // m = 0 .. mp_left-1
  std::vector<Eigen::VectorXcd> z_right;  // n = 0 .. mp_right-1
};

// One back-substitution per outgoing propagating mode, reusing the primal
// factorization.
inline AdjointSolution adjoint_solves(const FrequencyContext& ctx) {
  AdjointSolution adj;
  auto rhs_for = [&](const ModeBasis& basis, int m) {
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(ctx.mesh->n_dof);
    const Eigen::VectorXd w = basis.boundary_mass * basis.mode_vectors.col(m);
    for (size_t i = 0; i < basis.nodes.size(); ++i)
      rhs[basis.nodes[i]] = w[i];
    return rhs;
  };
  for (int m = 0; m < ctx.mp_left; ++m)
    adj.z_left.push_back(ctx.solve(rhs_for(*ctx.left, m)));
  for (int n = 0; n < ctx.mp_right; ++n)
    adj.z_right.push_back(ctx.solve(rhs_for(*ctx.right, n)));
  return adj;
}

// Bundles the frequency-independent pieces (mesh, modal bases, element
// matrices) and counts primal factorizations, the paper-facing cost metric.
class Evaluator {
 public:
  Evaluator(const Mesh& mesh, const ElementMatrixCache& cache,
            const ModeBasis& left, const ModeBasis& right)
      : mesh_(&mesh), cache_(&cache), left_(&left), right_(&right),
        assembler_(mesh, cache),
        workspace_(std::make_shared<SolverWorkspace>()) {}

  const Mesh& mesh() const { return *mesh_; }
  const ModeBasis& left() const { return *left_; }
  const ModeBasis& right() const { return *right_; }
  const ElementMatrixCache& cache() const { return *cache_; }

  long evaluations() const { return evaluations_; }
  void reset_evaluations() { evaluations_ = 0; }

  // Reporting solves (reference objectives, final spectra) are excluded from
  // the evaluation count, which tracks only optimizer-driven primal
  // factorizations.
  void set_counting(bool on) { counting_ = on; }
  bool counting() const { return counting_; }

  // Fixed-design snapshot; reusable across frequencies.
  struct Snapshot {
    BulkMatrices bulk;
  };
  Snapshot snapshot(const Eigen::VectorXd& alpha_elements) const {
    return {assembler_.assemble(alpha_elements)};
  }

  FrequencyContext context(const Snapshot& snap, double f_hz) {
    if (counting_) ++evaluations_;
    return make_frequency_context(*mesh_, snap.bulk, *left_, *right_, f_hz,
                                  workspace_);
  }

  FrequencyLoss frequency_loss(const Snapshot& snap, double f_hz) {
    const auto ctx = context(snap, f_hz);
    return loss_from(ctx, solve_state(ctx));
  }

  struct LossGrad {
    FrequencyLoss loss;
    Eigen::VectorXd grad_alpha;  // over design elements
  };

  // Adjoint gradient of the per-frequency loss with respect to the physical
  // densities on design elements. All outgoing-mode terms share one combined
  // back-substitution since the state matrix is the same.
  LossGrad loss_and_gradient(const Snapshot& snap, double f_hz) {
    const auto ctx = context(snap, f_hz);
    const auto sol = solve_state(ctx);
    LossGrad out;
    out.loss = loss_from(ctx, sol);

    // Combined adjoint right-hand side: sum over contributing modes of
    // c_m conj(B_m) M^X v_m, with c_0^L = 1, c_m = k_m/k otherwise and the
    // planar right mode excluded (it is the transmitted signal, not a loss).
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(mesh_->n_dof);
    auto accumulate = [&](const ModeBasis& basis, int m, Complex coeff) {
      const Eigen::VectorXd w = basis.boundary_mass * basis.mode_vectors.col(m);
      for (size_t i = 0; i < basis.nodes.size(); ++i)
        rhs[basis.nodes[i]] += coeff * w[i];
    };
    for (int m = 0; m < ctx.mp_left; ++m) {
      const double c = m == 0 ? 1.0 : ctx.km_left[m].value.real() / ctx.k;
      if (c == 0.0) continue;
      accumulate(*ctx.left, m, c * std::conj(out.loss.amplitudes.B_left[m]));
    }
    for (int n = 1; n < ctx.mp_right; ++n) {
      const double c = ctx.km_right[n].value.real() / ctx.k;
      if (c == 0.0) continue;
      accumulate(*ctx.right, n, c * std::conj(out.loss.amplitudes.B_right[n]));
    }
    const Eigen::VectorXcd z = ctx.solve(rhs);

    // dB/d(alpha_E) = z_E^T (k^2 M_E - K_E) p_E, chained through the modulus
    // square: dP = 2 Re(c conj(B) dB).
    const double k2 = ctx.k * ctx.k;
    out.grad_alpha.resize(mesh_->design_elements.size());
    Eigen::Matrix<Complex, 9, 1> pe, ze;
    for (size_t idx = 0; idx < mesh_->design_elements.size(); ++idx) {
      const int e = mesh_->design_elements[idx];
      const auto& nodes = mesh_->elements[e];
      for (int i = 0; i < 9; ++i) {
        pe[i] = sol.p[nodes[i]];
        ze[i] = z[nodes[i]];
      }
      const ElementMatrix& Ke = cache_->K(*mesh_, e);
      const ElementMatrix& Me = cache_->M(*mesh_, e);
      const Eigen::Matrix<Complex, 9, 1> w = k2 * (Me * pe) - Ke * pe;
      out.grad_alpha[idx] = 2.0 * ze.cwiseProduct(w).sum().real();
    }
    return out;
  }

 private:
  FrequencyLoss loss_from(const FrequencyContext& ctx,
                          const StateSolution& sol) const {
    FrequencyLoss loss;
    loss.f = ctx.f;
    loss.amplitudes = modal_amplitudes(sol, ctx);
    loss.powers = outgoing_powers(loss.amplitudes, ctx);
    loss.value = loss.powers.total() -
                 (loss.powers.P_right.empty() ? 0.0 : loss.powers.P_right[0]);
    return loss;
  }

  const Mesh* mesh_;
  const ElementMatrixCache* cache_;
  const ModeBasis* left_;
  const ModeBasis* right_;
  BulkAssembler assembler_;
  std::shared_ptr<SolverWorkspace> workspace_;
  long evaluations_ = 0;
  bool counting_ = true;
};

struct FilterChain {
  const DensityFilter* filter;
  double epsilon = kDefaultEpsilon;
};

// Full chain d -> alpha -> loss(+penalty) -> gradient over raw variables.
struct DesignGradient {
  double value = 0;          // loss (+ penalty if gamma > 0)
  Eigen::VectorXd grad;      // over raw design variables d
};

inline DesignGradient design_gradient(Evaluator& eval,
                                      const DensityFilter& filter,
                                      const Eigen::VectorXd& d, double f_hz,
                                      const PenaltyConfig& penalty) {
  const Eigen::VectorXd alpha_design = filter.apply(d);
  const auto snap =
      eval.snapshot(density_over_elements(eval.mesh(), alpha_design));
  auto lg = eval.loss_and_gradient(snap, f_hz);
  auto [pen_value, pen_grad] = penalty_value_grad(alpha_design, penalty);
  DesignGradient out;
  out.value = lg.loss.value + pen_value;
  out.grad = filter.backprop(d, lg.grad_alpha + pen_grad);
  return out;
}

struct ScopedNoCount {
  explicit ScopedNoCount(Evaluator& e) : eval(e), prev(e.counting()) {
    eval.set_counting(false);
  }
  ~ScopedNoCount() { eval.set_counting(prev); }
  Evaluator& eval;
  bool prev;
};

// Gradient of the summed multi-frequency loss plus penalty with respect to
// the raw design variables; one snapshot serves all frequencies and the
// filter pullback is applied once to the accumulated element gradient.
struct MultiFrequencyGradient {
  double value = 0;     // sum of losses + penalty
  double loss_sum = 0;  // sum of per-frequency losses
  double penalty = 0;
  Eigen::VectorXd grad;  // over raw design variables
};

inline MultiFrequencyGradient multi_frequency_gradient(
    Evaluator& eval, const DensityFilter& filter, const Eigen::VectorXd& d,
    const std::vector<double>& freqs, const PenaltyConfig& penalty) {
  const Eigen::VectorXd alpha_design = filter.apply(d);
  const auto snap =
      eval.snapshot(density_over_elements(eval.mesh(), alpha_design));
  MultiFrequencyGradient out;
  Eigen::VectorXd grad_alpha =
      Eigen::VectorXd::Zero(eval.mesh().design_elements.size());
  for (double f : freqs) {
    auto lg = eval.loss_and_gradient(snap, f);
    out.loss_sum += lg.loss.value;
    grad_alpha += lg.grad_alpha;
  }
  auto [pen_value, pen_grad] = penalty_value_grad(alpha_design, penalty);
  out.penalty = pen_value;
  out.value = out.loss_sum + pen_value;
  out.grad = filter.backprop(d, grad_alpha + pen_grad);
  return out;
}

// Multi-frequency quadrature objective. Sum mode matches the discretized
// optimization problem (no 1/Q scaling); mean mode reports the
// range-normalized approximation.
enum class QuadratureMode { sum, mean };

inline double quadrature_objective(Evaluator& eval, const DensityFilter& filter,
                                   const Eigen::VectorXd& d,
                                   const std::vector<double>& freqs,
                                   const PenaltyConfig& penalty,
                                   QuadratureMode mode = QuadratureMode::sum) {
  const Eigen::VectorXd alpha_design = filter.apply(d);
  const auto snap =
      eval.snapshot(density_over_elements(eval.mesh(), alpha_design));
  double acc = 0;
  for (double f : freqs) acc += eval.frequency_loss(snap, f).value;
  if (mode == QuadratureMode::mean) acc /= static_cast<double>(freqs.size());
  return acc + penalty_value_grad(alpha_design, penalty).first;
}

// Mean loss over a reference frequency set, excluded from the evaluation
// count (pure reporting).
inline double reference_objective(Evaluator& eval, const DensityFilter& filter,
                                  const Eigen::VectorXd& d,
                                  const std::vector<double>& freqs) {
  ScopedNoCount guard(eval);
  return quadrature_objective(eval, filter, d, freqs, PenaltyConfig{0.0},
                              QuadratureMode::mean);
}

// Same, for an already-physical density field (e.g. a rounded design).
inline double reference_objective_physical(Evaluator& eval,
                                           const Eigen::VectorXd& alpha_design,
                                           const std::vector<double>& freqs) {
  ScopedNoCount guard(eval);
  const auto snap =
      eval.snapshot(density_over_elements(eval.mesh(), alpha_design));
  double acc = 0;
  for (double f : freqs) acc += eval.frequency_loss(snap, f).value;
  return acc / static_cast<double>(freqs.size());
}

}  // namespace ductopt
