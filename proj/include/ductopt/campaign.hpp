#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ductopt/parallel.hpp"
#include "ductopt/stochastic.hpp"

namespace ductopt {

enum class StochasticKind { sg, csg };

inline StochasticKind parse_stochastic_kind(const std::string& s) {
  if (s == "sg") return StochasticKind::sg;
  if (s == "csg") return StochasticKind::csg;
  throw std::invalid_argument("unknown stochastic optimizer: " + s);
}

struct CampaignConfig {
  StochasticKind kind = StochasticKind::sg;
  StochasticConfig opt;
  int n_runs = 5;
  std::uint64_t base_seed = 1;       // run i uses base_seed + i
  std::vector<double> eval_grid;     // frequencies for quantile aggregation
};

struct CampaignRun {
  std::uint64_t seed = 0;
  StochResult result;
  Spectrum spectrum;  // final rounded design over the evaluation grid
  bool failed = false;
  std::string error;
};

// Linear-interpolation percentile of a sorted sample (p in [0, 1]).
inline double percentile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("percentile of empty set");
  const double pos = p * (sorted.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = static_cast<size_t>(std::ceil(pos));
  const double frac = pos - lo;
  return (1.0 - frac) * sorted[lo] + frac * sorted[hi];
}

struct CampaignResult {
  std::vector<CampaignRun> runs;
  std::vector<double> grid;
  // per grid frequency: {p10, p25, p50, p75, p90} of final-design performance
  std::vector<std::array<double, 5>> quantiles;
};

// Independent seeded runs (optionally spread over the worker pool), each
// followed by a final-design spectrum; per-frequency percentiles are taken
// over the runs that completed.
inline CampaignResult run_campaign(const Mesh& mesh,
                                   const ElementMatrixCache& cache,
                                   const ModeBasis& left,
                                   const ModeBasis& right,
                                   const DensityFilter& filter,
                                   const CampaignConfig& cfg,
                                   const Eigen::VectorXd& d0) {
  if (cfg.n_runs < 1) throw std::invalid_argument("campaign: n_runs < 1");
  CampaignResult out;
  out.grid = cfg.eval_grid;
  out.runs.resize(cfg.n_runs);
  parallel_for(cfg.n_runs, [&](int i) {
    CampaignRun& run = out.runs[i];
    run.seed = cfg.base_seed + static_cast<std::uint64_t>(i);
    try {
      Evaluator eval(mesh, cache, left, right);
      run.result = cfg.kind == StochasticKind::sg
                       ? sg_run(eval, filter, cfg.opt, d0, run.seed)
                       : csg_run(eval, filter, cfg.opt, d0, run.seed);
      if (run.result.aborted) {
        run.failed = true;
        run.error = run.result.abort_reason;
        return;
      }
      run.spectrum = performance_spectrum(
          mesh, cache, left, right,
          density_over_elements(mesh, run.result.alpha_rounded), out.grid);
    } catch (const std::exception& err) {
      run.failed = true;
      run.error = err.what();
    }
  });

  for (size_t gi = 0; gi < out.grid.size(); ++gi) {
    std::vector<double> vals;
    for (const auto& run : out.runs) {
      if (run.failed) continue;
      const auto& entry = run.spectrum.entries[gi];
      if (entry.performance) vals.push_back(*entry.performance);
    }
    std::sort(vals.begin(), vals.end());
    out.quantiles.push_back({percentile_sorted(vals, 0.10),
                             percentile_sorted(vals, 0.25),
                             percentile_sorted(vals, 0.50),
                             percentile_sorted(vals, 0.75),
                             percentile_sorted(vals, 0.90)});
  }
  return out;
}

}  // namespace ductopt
