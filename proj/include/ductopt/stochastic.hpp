#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ductopt/objective.hpp"

namespace ductopt {

struct StochasticConfig {
  double f_min = 4000.0, f_max = 16000.0;
  double learning_rate = 0.05;
  double move_c0 = 0.1;  // SG: C_n = move_c0 / sqrt(n); CSG: initial limit
  int iterations = 100;
  double gamma = 0.0;  // penalty weight on sampled gradients (0 = rounding only)
  double epsilon = kDefaultEpsilon;
  double rounding_threshold = 0.5;
  int reference_every = 0;  // 0 = final design only
  std::vector<double> reference_freqs;
  // CSG-specific
  double move_c_min = 1e-4;
  double adapt_down = 0.5;
  double adapt_up = 1.2;
  double c_f = -1.0;  // frequency-distance weight; < 0 means 1/(f_max - f_min)
  double c_d = 1.0;   // design-distance weight (times RMS difference)

  double freq_weight() const {
    return c_f > 0 ? c_f : 1.0 / (f_max - f_min);
  }
};

// Deterministic uniform draws on [f_min, f_max] (53-bit mantissa construction,
// independent of the standard library's distribution internals). Draws within
// 1 Hz of a modal cutoff are nudged up by 1 Hz to avoid grazing k_m = 0.
class FrequencySampler {
 public:
  FrequencySampler(double f_min, double f_max, std::uint64_t seed,
                   std::vector<double> cutoffs_hz)
      : f_min_(f_min), f_max_(f_max), rng_(seed),
        cutoffs_(std::move(cutoffs_hz)) {}

  double draw() {
    const double u = (rng_() >> 11) * 0x1.0p-53;
    double f = f_min_ + (f_max_ - f_min_) * u;
    for (double c : cutoffs_)
      if (std::abs(f - c) < 1.0) {
        f = c + 1.0;
        break;
      }
    return f;
  }

 private:
  double f_min_, f_max_;
  std::mt19937_64 rng_;
  std::vector<double> cutoffs_;
};

inline std::vector<double> cutoff_frequencies(const ModeBasis& left,
                                              const ModeBasis& right,
                                              double c) {
  std::vector<double> cutoffs;
  for (const ModeBasis* b : {&left, &right})
    for (int m = 1; m < b->n_modes(); ++m)
      cutoffs.push_back(c * std::sqrt(b->eigenvalues[m]) / (2.0 * M_PI));
  std::sort(cutoffs.begin(), cutoffs.end());
  return cutoffs;
}

struct StochHistoryRow {
  int iteration = 0;
  long evaluations = 0;
  double move_limit = 0;
  double frequency_hz = 0;
  double loss = 0;             // sampled loss (+ penalty if gamma > 0)
  double step_inf = 0;         // infinity norm of the applied design update
  double model_objective = 0;  // CSG only; NaN for SG
  double objective_ref = std::numeric_limits<double>::quiet_NaN();
};

struct StochResult {
  Eigen::VectorXd d;              // final raw variables
  Eigen::VectorXd alpha_rounded;  // rounded physical densities
  std::vector<StochHistoryRow> history;
  long evaluations = 0;
  // per-iteration weight diagnostics (CSG only): sum and minimum of the
  // integration weights before the step
  std::vector<double> beta_sum, beta_min;
  double final_objective_ref = std::numeric_limits<double>::quiet_NaN();
  double final_objective_rounded = std::numeric_limits<double>::quiet_NaN();
  bool aborted = false;
  std::string abort_reason;
};

namespace detail {

// One sampled gradient with a single resample on solver failure.
inline DesignGradient sampled_gradient(Evaluator& eval,
                                       const DensityFilter& filter,
                                       const Eigen::VectorXd& d,
                                       FrequencySampler& sampler,
                                       const PenaltyConfig& pen, double& f_out) {
  for (int attempt = 0; attempt < 2; ++attempt) {
    f_out = sampler.draw();
    try {
      return design_gradient(eval, filter, d, f_out, pen);
    } catch (const std::runtime_error&) {
      if (attempt == 1) throw;
    }
  }
  throw std::runtime_error("unreachable");
}

inline void finalize(StochResult& out, Evaluator& eval,
                     const DensityFilter& filter, const Eigen::VectorXd& d,
                     const StochasticConfig& cfg) {
  out.d = d;
  out.alpha_rounded =
      round_design(filter.apply(d), cfg.epsilon, cfg.rounding_threshold);
  if (!cfg.reference_freqs.empty()) {
    out.final_objective_ref =
        reference_objective(eval, filter, d, cfg.reference_freqs);
    out.final_objective_rounded = reference_objective_physical(
        eval, out.alpha_rounded, cfg.reference_freqs);
  }
}

}  // namespace detail

// Stochastic gradient descent: one uniformly sampled frequency per
// iteration, constant learning rate, move limits shrinking as c0/sqrt(n),
// final design rounded.
inline StochResult sg_run(Evaluator& eval, const DensityFilter& filter,
                          const StochasticConfig& cfg,
                          const Eigen::VectorXd& d0, std::uint64_t seed) {
  FrequencySampler sampler(
      cfg.f_min, cfg.f_max, seed,
      cutoff_frequencies(eval.left(), eval.right(), eval.mesh().spec.c));
  const PenaltyConfig pen{cfg.gamma, cfg.epsilon};
  StochResult out;
  Eigen::VectorXd d = project_box(d0, cfg.epsilon);
  const long eval_base = eval.evaluations();
  for (int n = 1; n <= cfg.iterations; ++n) {
    double f = 0;
    DesignGradient g;
    try {
      g = detail::sampled_gradient(eval, filter, d, sampler, pen, f);
    } catch (const std::runtime_error& err) {
      out.aborted = true;
      out.abort_reason = err.what();
      break;
    }
    const double cn = cfg.move_c0 / std::sqrt(static_cast<double>(n));
    const Eigen::VectorXd step = (cfg.learning_rate * g.grad)
                                     .cwiseMax(-cn)
                                     .cwiseMin(cn);
    const Eigen::VectorXd d_next = project_box(d - step, cfg.epsilon);

    StochHistoryRow row;
    row.iteration = n;
    row.evaluations = eval.evaluations() - eval_base;
    row.move_limit = cn;
    row.frequency_hz = f;
    row.loss = g.value;
    row.step_inf = (d_next - d).lpNorm<Eigen::Infinity>();
    row.model_objective = std::numeric_limits<double>::quiet_NaN();
    d = d_next;
    if (cfg.reference_every > 0 && n % cfg.reference_every == 0 &&
        !cfg.reference_freqs.empty())
      row.objective_ref =
          reference_objective(eval, filter, d, cfg.reference_freqs);
    out.history.push_back(row);
  }
  out.evaluations = eval.evaluations() - eval_base;
  detail::finalize(out, eval, filter, d, cfg);
  return out;
}

// Exact integration weights for the sample-reuse gradient model. Sample j
// covers the part of [f_min, f_max] where its V-shaped score
// a_j + c_f |f - f_j| is the lowest; the weight is that measure divided by
// the range. Crossings of two V-functions lie at
// (f_i + f_j)/2 +- (a_i - a_j)/(2 c_f), so sweeping the elementary intervals
// between all such points yields the exact partition. Ties go to the most
// recent (highest-index) sample.
inline Eigen::VectorXd csg_weights(const std::vector<double>& f_samples,
                                   const std::vector<double>& a_samples,
                                   double f_min, double f_max, double c_f) {
  const int n = static_cast<int>(f_samples.size());
  if (n == 0) throw std::invalid_argument("csg_weights: no samples");
  std::vector<double> pts = {f_min, f_max};
  for (int i = 0; i < n; ++i) pts.push_back(f_samples[i]);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double mid = 0.5 * (f_samples[i] + f_samples[j]);
      const double off = 0.5 * (a_samples[i] - a_samples[j]) / c_f;
      pts.push_back(mid + off);
      pts.push_back(mid - off);
    }
  std::sort(pts.begin(), pts.end());
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(n);
  for (size_t t = 0; t + 1 < pts.size(); ++t) {
    const double lo = std::max(pts[t], f_min);
    const double hi = std::min(pts[t + 1], f_max);
    if (hi <= lo) continue;
    const double mid = 0.5 * (lo + hi);
    int best = 0;
    double best_score = a_samples[0] + c_f * std::abs(mid - f_samples[0]);
    for (int j = 1; j < n; ++j) {
      const double score = a_samples[j] + c_f * std::abs(mid - f_samples[j]);
      if (score <= best_score) {
        best_score = score;
        best = j;
      }
    }
    beta[best] += hi - lo;
  }
  return beta / (f_max - f_min);
}

struct CsgSample {
  double f = 0;
  Eigen::VectorXd d;  // design at sampling time
  Eigen::VectorXd g;  // gradient w.r.t. raw variables at that design
  double J = 0;       // sampled loss (+ penalty)
};

inline Eigen::VectorXd csg_weights_for(const std::vector<CsgSample>& samples,
                                       const Eigen::VectorXd& d_now,
                                       const StochasticConfig& cfg) {
  std::vector<double> fs(samples.size()), as(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    fs[i] = samples[i].f;
    const double rms = std::sqrt((d_now - samples[i].d).squaredNorm() /
                                 static_cast<double>(d_now.size()));
    as[i] = cfg.c_d * rms;
  }
  return csg_weights(fs, as, cfg.f_min, cfg.f_max, cfg.freq_weight());
}

// Continuous stochastic gradient: all past gradient samples are reused with
// design-aware integration weights; the model objective J_hat drives an
// adaptive move limit (halve on non-decrease, recover by adapt_up otherwise).
inline StochResult csg_run(Evaluator& eval, const DensityFilter& filter,
                           const StochasticConfig& cfg,
                           const Eigen::VectorXd& d0, std::uint64_t seed) {
  FrequencySampler sampler(
      cfg.f_min, cfg.f_max, seed,
      cutoff_frequencies(eval.left(), eval.right(), eval.mesh().spec.c));
  const PenaltyConfig pen{cfg.gamma, cfg.epsilon};
  StochResult out;
  Eigen::VectorXd d = project_box(d0, cfg.epsilon);
  const long eval_base = eval.evaluations();
  std::vector<CsgSample> samples;
  double move = cfg.move_c0;
  double j_hat_prev = std::numeric_limits<double>::infinity();
  for (int n = 1; n <= cfg.iterations; ++n) {
    double f = 0;
    DesignGradient g;
    try {
      g = detail::sampled_gradient(eval, filter, d, sampler, pen, f);
    } catch (const std::runtime_error& err) {
      out.aborted = true;
      out.abort_reason = err.what();
      break;
    }
    samples.push_back({f, d, g.grad, g.value});

    const Eigen::VectorXd beta = csg_weights_for(samples, d, cfg);
    out.beta_sum.push_back(beta.sum());
    out.beta_min.push_back(beta.minCoeff());
    Eigen::VectorXd g_hat = Eigen::VectorXd::Zero(d.size());
    double j_hat = 0;
    for (size_t i = 0; i < samples.size(); ++i) {
      if (beta[i] == 0.0) continue;
      g_hat += beta[i] * samples[i].g;
      j_hat += beta[i] * samples[i].J;
    }

    if (n > 1) {
      if (j_hat >= j_hat_prev)
        move = std::max(cfg.move_c_min, cfg.adapt_down * move);
      else
        move = std::min(cfg.move_c0, cfg.adapt_up * move);
    }
    j_hat_prev = j_hat;

    StochHistoryRow row;
    row.iteration = n;
    row.evaluations = eval.evaluations() - eval_base;
    row.move_limit = move;
    row.frequency_hz = f;
    row.loss = g.value;
    row.model_objective = j_hat;
    // reference at the model's design (pre-step), so objective_ref and
    // model_objective describe the same iterate
    if (cfg.reference_every > 0 && n % cfg.reference_every == 0 &&
        !cfg.reference_freqs.empty())
      row.objective_ref =
          reference_objective(eval, filter, d, cfg.reference_freqs);
    const Eigen::VectorXd step = (cfg.learning_rate * g_hat)
                                     .cwiseMax(-move)
                                     .cwiseMin(move);
    const Eigen::VectorXd d_next = project_box(d - step, cfg.epsilon);
    row.step_inf = (d_next - d).lpNorm<Eigen::Infinity>();
    out.history.push_back(row);
    d = d_next;
  }
  out.evaluations = eval.evaluations() - eval_base;
  detail::finalize(out, eval, filter, d, cfg);
  return out;
}

}  // namespace ductopt
