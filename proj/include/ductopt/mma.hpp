#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "ductopt/objective.hpp"

namespace ductopt {

struct MMAConfig {
  std::vector<double> freqs;                      // Q optimization frequencies
  std::vector<double> gamma_schedule = {1e0, 1e1, 1e2, 1e3, 1e4, 1e5};
  int max_iters_per_stage = 100;
  double kkt_tol_rel = 1e-4;  // relative to the stage-initial KKT residual
  double move_limit = 0.2;    // fraction of the box range per iteration
  double asymptote_init = 0.5;
  double asymptote_grow = 1.2;
  double asymptote_shrink = 0.7;
  double epsilon = kDefaultEpsilon;
  std::vector<double> reference_freqs;  // reporting quadrature (may be empty)
};

struct MMAState {
  Eigen::VectorXd d, d_prev, d_prev2;
  Eigen::VectorXd low, upp;  // moving asymptotes
  int iteration = 0;         // iterations taken within the current stage
};

inline MMAState make_mma_state(const Eigen::VectorXd& d0) {
  MMAState st;
  st.d = d0;
  st.d_prev = d0;
  st.d_prev2 = d0;
  st.low.resize(d0.size());
  st.upp.resize(d0.size());
  return st;
}

// Infinity norm of the gradient with components pointing out of the active
// box faces zeroed.
inline double projected_gradient_norm(const Eigen::VectorXd& d,
                                      const Eigen::VectorXd& grad,
                                      double eps) {
  double norm = 0;
  const double tol = 1e-12;
  for (int i = 0; i < d.size(); ++i) {
    if (d[i] <= eps + tol && grad[i] > 0) continue;
    if (d[i] >= 1.0 - tol && grad[i] < 0) continue;
    norm = std::max(norm, std::abs(grad[i]));
  }
  return norm;
}

// One update of the method of moving asymptotes on the aggregate objective:
// separable convex approximation around st.d built from the gradient, solved
// in closed form per variable (no constraints beyond the box), with move
// limits and the usual oscillation-driven asymptote adaptation.
inline void mma_step(MMAState& st, const Eigen::VectorXd& grad,
                     const MMAConfig& cfg) {
  const int n = static_cast<int>(st.d.size());
  const double lb = cfg.epsilon, ub = 1.0;
  const double range = ub - lb;
  ++st.iteration;

  if (st.iteration <= 2) {
    st.low = st.d.array() - cfg.asymptote_init * range;
    st.upp = st.d.array() + cfg.asymptote_init * range;
  } else {
    for (int i = 0; i < n; ++i) {
      const double osc = (st.d[i] - st.d_prev[i]) * (st.d_prev[i] - st.d_prev2[i]);
      const double factor = osc > 0   ? cfg.asymptote_grow
                            : osc < 0 ? cfg.asymptote_shrink
                                      : 1.0;
      st.low[i] = st.d[i] - factor * (st.d_prev[i] - st.low[i]);
      st.upp[i] = st.d[i] + factor * (st.upp[i] - st.d_prev[i]);
      st.low[i] = std::min(std::max(st.low[i], st.d[i] - 10.0 * range),
                           st.d[i] - 0.01 * range);
      st.upp[i] = std::max(std::min(st.upp[i], st.d[i] + 10.0 * range),
                           st.d[i] + 0.01 * range);
    }
  }

  const double move = cfg.move_limit * range;
  Eigen::VectorXd d_new(n);
  for (int i = 0; i < n; ++i) {
    const double x = st.d[i], g = grad[i];
    const double U = st.upp[i], L = st.low[i];
    const double reg = 0.001 * std::abs(g) + 1e-5 / (U - L);
    const double p = (U - x) * (U - x) * (std::max(g, 0.0) + reg);
    const double q = (x - L) * (x - L) * (std::max(-g, 0.0) + reg);
    // stationary point of p/(U-y) + q/(y-L)
    const double sp = std::sqrt(p), sq = std::sqrt(q);
    double y = (L * sp + U * sq) / (sp + sq);
    const double lo = std::max({lb, L + 0.1 * (x - L), x - move});
    const double hi = std::min({ub, U - 0.1 * (U - x), x + move});
    d_new[i] = std::min(std::max(y, lo), hi);
  }
  st.d_prev2 = st.d_prev;
  st.d_prev = st.d;
  st.d = d_new;
}

struct MMAHistoryRow {
  int iteration = 0;  // global, across stages
  long evaluations = 0;
  double gamma = 0;
  double objective_Q = 0;    // summed loss over the Q frequencies
  double objective_ref = 0;  // mean loss over the reference quadrature
  double penalty = 0;
  double kkt = 0;
};

struct MMAResult {
  Eigen::VectorXd d;
  std::vector<MMAHistoryRow> history;
  long evaluations = 0;
  bool aborted = false;
  std::string abort_reason;
};

// Penalty continuation: solve the smoothed problem for each gamma in turn,
// warm-starting from the previous stage's solution. A stage ends on a small
// projected-gradient residual or on the iteration cap.
inline MMAResult continuation_run(Evaluator& eval, const DensityFilter& filter,
                                  const MMAConfig& cfg,
                                  const Eigen::VectorXd& d0) {
  if (cfg.freqs.empty())
    throw std::invalid_argument("mma: empty frequency set");
  MMAResult out;
  MMAState st = make_mma_state(project_box(d0, cfg.epsilon));
  const long eval_base = eval.evaluations();
  int global_iter = 0;
  for (double gamma : cfg.gamma_schedule) {
    const PenaltyConfig pen{gamma, cfg.epsilon};
    st.iteration = 0;  // fresh asymptotes per stage
    double kkt0 = -1;
    for (int it = 0; it < cfg.max_iters_per_stage; ++it) {
      MultiFrequencyGradient mg;
      try {
        mg = multi_frequency_gradient(eval, filter, st.d, cfg.freqs, pen);
      } catch (const std::runtime_error& err) {
        out.aborted = true;
        out.abort_reason = err.what();
        out.d = st.d;
        out.evaluations = eval.evaluations() - eval_base;
        return out;
      }
      const double kkt = projected_gradient_norm(st.d, mg.grad, cfg.epsilon);
      if (kkt0 < 0) kkt0 = kkt;

      MMAHistoryRow row;
      row.iteration = ++global_iter;
      row.evaluations = eval.evaluations() - eval_base;
      row.gamma = gamma;
      row.objective_Q = mg.loss_sum;
      row.penalty = mg.penalty;
      row.kkt = kkt;
      row.objective_ref =
          cfg.reference_freqs.empty()
              ? 0.0
              : reference_objective(eval, filter, st.d, cfg.reference_freqs);
      out.history.push_back(row);

      if (kkt <= cfg.kkt_tol_rel * kkt0) break;
      mma_step(st, mg.grad, cfg);
    }
  }
  out.d = st.d;
  out.evaluations = eval.evaluations() - eval_base;
  return out;
}

}  // namespace ductopt
