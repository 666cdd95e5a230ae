#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ductopt/helmholtz.hpp"

namespace ductopt {

// Outgoing-wave amplitudes of the propagating modes under unit planar
// incidence from the left. B_0^L carries the -1 shift of the incident wave.
struct AmplitudeSet {
  std::vector<Complex> B_left;   // m = 0 .. mp_left-1
  std::vector<Complex> B_right;  // n = 0 .. mp_right-1
};

inline AmplitudeSet modal_amplitudes(const StateSolution& sol,
                                     const FrequencyContext& ctx) {
  AmplitudeSet amps;
  auto project = [&](const ModeBasis& basis, int m) {
    Complex acc = 0;
    const Eigen::VectorXd w = basis.boundary_mass * basis.mode_vectors.col(m);
    for (size_t i = 0; i < basis.nodes.size(); ++i)
      acc += w[i] * sol.p[basis.nodes[i]];
    return acc;
  };
  for (int m = 0; m < ctx.mp_left; ++m) {
    Complex b = project(*ctx.left, m);
    if (m == 0) b -= 1.0;
    amps.B_left.push_back(b);
  }
  for (int n = 0; n < ctx.mp_right; ++n)
    amps.B_right.push_back(project(*ctx.right, n));
  return amps;
}

// Normalized outgoing powers: P = (k_m/k) |B|^2, with the planar factor 1.
struct PowerSet {
  std::vector<double> P_left;
  std::vector<double> P_right;

  double total() const {
    double s = 0;
    for (double p : P_left) s += p;
    for (double p : P_right) s += p;
    return s;
  }
};

inline PowerSet outgoing_powers(const AmplitudeSet& amps,
                                const FrequencyContext& ctx) {
  PowerSet powers;
  for (size_t m = 0; m < amps.B_left.size(); ++m) {
    const double km = ctx.km_left[m].value.real();
    powers.P_left.push_back((m == 0 ? 1.0 : km / ctx.k) *
                            std::norm(amps.B_left[m]));
  }
  for (size_t n = 0; n < amps.B_right.size(); ++n) {
    const double kn = ctx.km_right[n].value.real();
    powers.P_right.push_back(kn / ctx.k * std::norm(amps.B_right[n]));
  }
  return powers;
}

// Transmitted planar power of a solved state.
inline double performance_of(const AmplitudeSet& amps) {
  return amps.B_right.empty() ? 0.0 : std::norm(amps.B_right[0]);
}

struct SpectrumEntry {
  double f_hz;
  std::optional<double> performance;  // empty = solver failure at this f
};

struct Spectrum {
  std::vector<SpectrumEntry> entries;

  std::vector<double> values() const {
    std::vector<double> v;
    for (const auto& e : entries)
      if (e.performance) v.push_back(*e.performance);
    return v;
  }
  double mean_performance() const {
    double s = 0;
    int n = 0;
    for (const auto& e : entries)
      if (e.performance) s += *e.performance, ++n;
    return n ? s / n : 0.0;
  }
};

inline std::vector<double> frequency_grid(double f_min, double f_max,
                                          double step) {
  std::vector<double> grid;
  for (int i = 0;; ++i) {
    const double f = f_min + i * step;
    if (f > f_max + 1e-9 * step) break;
    grid.push_back(f);
  }
  return grid;
}

inline std::vector<double> equidistant_frequencies(double f_min, double f_max,
                                                   int count) {
  std::vector<double> freqs;
  if (count == 1) return {0.5 * (f_min + f_max)};
  for (int i = 0; i < count; ++i)
    freqs.push_back(f_min + (f_max - f_min) * i / (count - 1));
  return freqs;
}

// One state solve per grid frequency. Solver failures are recorded as gaps.
inline Spectrum performance_spectrum(const Mesh& mesh,
                                     const ElementMatrixCache& cache,
                                     const ModeBasis& left,
                                     const ModeBasis& right,
                                     const Eigen::VectorXd& alpha_elements,
                                     const std::vector<double>& f_grid) {
  const BulkMatrices bulk = assemble_bulk(mesh, cache, alpha_elements);
  auto ws = std::make_shared<SolverWorkspace>();
  Spectrum spec;
  for (double f : f_grid) {
    SpectrumEntry entry{f, std::nullopt};
    try {
      const auto ctx = make_frequency_context(mesh, bulk, left, right, f, ws);
      const auto sol = solve_state(ctx);
      entry.performance = performance_of(modal_amplitudes(sol, ctx));
    } catch (const std::runtime_error&) {
      // leave a gap
    }
    spec.entries.push_back(entry);
  }
  return spec;
}

struct CPDCurve {
  std::vector<double> thresholds;
  std::vector<double> values;
};

// Fraction of grid frequencies whose performance is at most p, for each
// threshold p (counting-measure approximation of the defining integral).
inline CPDCurve cpd(const Spectrum& spectrum,
                    const std::vector<double>& thresholds) {
  const auto vals = spectrum.values();
  if (vals.empty()) throw std::invalid_argument("cpd: empty spectrum");
  CPDCurve curve;
  curve.thresholds = thresholds;
  for (double p : thresholds) {
    int count = 0;
    for (double v : vals)
      if (v <= p) ++count;
    curve.values.push_back(static_cast<double>(count) / vals.size());
  }
  return curve;
}

inline std::vector<double> default_cpd_thresholds(int count = 1001) {
  std::vector<double> t;
  for (int i = 0; i < count; ++i)
    t.push_back(static_cast<double>(i) / (count - 1));
  return t;
}

}  // namespace ductopt
