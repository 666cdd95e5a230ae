// End-to-end acceptance checks, one line of output per criterion.
// Criterion 7 verifies the full-scale (h = 0.25 mm) baseline only when
// DUCTOPT_FULL_SCALE is set; otherwise it regression-locks the desk-scale
// value. Criterion 11 exercises the installed command-line binary.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ductopt/campaign.hpp"
#include "ductopt/config.hpp"
#include "ductopt/io.hpp"
#include "ductopt/mma.hpp"

using namespace ductopt;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int index, const std::string& name, bool pass,
            const std::string& detail, double seconds) {
  if (!pass) ++g_failures;
  std::printf("criterion %2d %-28s %s  (%s) [%.1f s]\n", index, name.c_str(),
              pass ? "PASS" : "FAIL", detail.c_str(), seconds);
  std::fflush(stdout);
}

template <typename Fn>
void criterion(int index, const std::string& name, Fn fn) {
  const auto t0 = std::chrono::steady_clock::now();
  bool pass = false;
  std::string detail;
  try {
    pass = fn(detail);
  } catch (const std::exception& err) {
    detail = std::string("exception: ") + err.what();
  }
  const double dt = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
  report(index, name, pass, detail, dt);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(const char* pattern, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), pattern, a, b, c);
  return buf;
}

struct Desk {
  DomainSpec spec;
  Mesh mesh;
  ElementMatrixCache cache;
  ModeBasis left, right;
  Desk() : spec(make_spec()), mesh(build_mesh(spec)), cache(mesh),
           left(build_mode_basis(mesh, Side::left)),
           right(build_mode_basis(mesh, Side::right)) {}
  static DomainSpec make_spec() {
    DomainSpec s;
    s.h = 1e-3;
    return s;
  }
};

Desk& desk() {
  static Desk d;
  return d;
}

// mean objective of the empty design over the 150 reference frequencies,
// cached because criteria 7-9 all compare against it
double desk_baseline() {
  static double value = [] {
    Desk& fx = desk();
    Evaluator eval(fx.mesh, fx.cache, fx.left, fx.right);
    const DensityFilter filt(fx.mesh, 0.0);
    return reference_objective(
        eval, filt, Eigen::VectorXd::Ones(fx.mesh.design_elements.size()),
        equidistant_frequencies(4000, 16000, 150));
  }();
  return value;
}

Eigen::VectorXd random_design(long n, unsigned seed) {
  std::srand(seed);
  Eigen::VectorXd d(n);
  for (long i = 0; i < n; ++i)
    d[i] = 0.2 + 0.6 * (std::rand() / double(RAND_MAX));
  return d;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DUCTOPT_CLI_PATH) + " " + args +
                          " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return status < 0 ? -1 : (WIFEXITED(status) ? WEXITSTATUS(status) : -1);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main() {
  criterion(1, "mesh fidelity", [](std::string& detail) {
    DomainSpec spec;
    spec.h = 0.25e-3;
    const Mesh mesh = build_mesh(spec);
    const long nd = static_cast<long>(mesh.design_elements.size());
    detail = fmt("%.0f dof, %.0f design elements", double(mesh.n_dof),
                 double(nd));
    return mesh.n_dof == 250721 && nd == 40000;
  });

  criterion(2, "mode correctness", [](std::string& detail) {
    const double j1_zeros[] = {3.8317059702075123, 7.015586669815619,
                               10.173468135062722, 13.323691936314223};
    Desk& fx = desk();
    double worst_rel = 0, worst_ortho = 0;
    bool planar_ok = true;
    for (const ModeBasis* b : {&fx.left, &fx.right}) {
      const double W = b->radius;
      const int n_check = std::min(4, b->n_modes() - 1);
      for (int m = 1; m <= n_check; ++m) {
        const double exact = j1_zeros[m - 1] / W;
        worst_rel = std::max(
            worst_rel, std::abs(std::sqrt(b->eigenvalues[m]) - exact) / exact);
      }
      const Eigen::MatrixXd gram = b->mode_vectors.transpose() *
                                   b->boundary_mass * b->mode_vectors;
      worst_ortho = std::max(
          worst_ortho,
          (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols()))
              .cwiseAbs()
              .maxCoeff());
      planar_ok = planar_ok && b->eigenvalues[0] < 1e-9 * b->eigenvalues[1];
    }
    detail = fmt("max eigenvalue error %.2e, orthonormality %.2e", worst_rel,
                 worst_ortho);
    return worst_rel < 0.01 && worst_ortho < 1e-10 && planar_ok;
  });

  criterion(3, "propagating counts", [](std::string& detail) {
    Desk& fx = desk();
    const int l4 = count_propagating(4000, fx.left, fx.spec.c);
    const int r4 = count_propagating(4000, fx.right, fx.spec.c);
    const int l16 = count_propagating(16000, fx.left, fx.spec.c);
    const int r16 = count_propagating(16000, fx.right, fx.spec.c);
    detail = "4 kHz: " + std::to_string(l4) + "/" + std::to_string(r4) +
             ", 16 kHz: " + std::to_string(l16) + "/" + std::to_string(r16);
    return l4 == 1 && r4 == 1 && l16 == 3 && r16 == 4;
  });

  criterion(4, "energy conservation", [](std::string& detail) {
    Desk& fx = desk();
    const auto bulk = assemble_bulk(
        fx.mesh, fx.cache, Eigen::VectorXd::Ones(fx.mesh.n_elements()));
    auto ws = std::make_shared<SolverWorkspace>();
    double worst = 0;
    for (double f : {5000.0, 8000.0, 10000.0, 13000.0, 16000.0}) {
      const auto ctx =
          make_frequency_context(fx.mesh, bulk, fx.left, fx.right, f, ws);
      const auto powers =
          outgoing_powers(modal_amplitudes(solve_state(ctx), ctx), ctx);
      worst = std::max(worst, std::abs(powers.total() - 1.0));
    }
    detail = fmt("max |total power - 1| = %.2e", worst);
    return worst < 1e-6;
  });

  criterion(5, "straight-pipe sanity", [](std::string& detail) {
    DomainSpec spec;
    spec.r_left = spec.r_right = spec.r_design = 0.030;
    spec.h = 0.5e-3;
    const Mesh mesh = build_mesh(spec);
    const ElementMatrixCache cache(mesh);
    const ModeBasis left = build_mode_basis(mesh, Side::left);
    const ModeBasis right = build_mode_basis(mesh, Side::right);
    const Spectrum spec_out = performance_spectrum(
        mesh, cache, left, right, Eigen::VectorXd::Ones(mesh.n_elements()),
        frequency_grid(4000, 16000, 20));
    double min_perf = 1.0;
    for (const auto& e : spec_out.entries) {
      if (!e.performance) return false;
      min_perf = std::min(min_perf, *e.performance);
    }
    detail = fmt("min performance %.6f over %.0f frequencies", min_perf,
                 double(spec_out.entries.size()));
    return min_perf >= 0.999;
  });

  criterion(6, "adjoint exactness", [](std::string& detail) {
    DomainSpec spec;
    spec.h = 2e-3;
    const Mesh mesh = build_mesh(spec);
    const ElementMatrixCache cache(mesh);
    const ModeBasis left = build_mode_basis(mesh, Side::left);
    const ModeBasis right = build_mode_basis(mesh, Side::right);
    Evaluator eval(mesh, cache, left, right);
    const long n = static_cast<long>(mesh.design_elements.size());
    const Eigen::VectorXd d = random_design(n, 42);
    double max_rel = 0;
    for (double gamma : {0.0, 10.0})
      for (FilterMode mode : {FilterMode::linear, FilterMode::fw_open_close}) {
        const DensityFilter filt(mesh, 2.5 * spec.h, mode);
        const PenaltyConfig pen{gamma, kDefaultEpsilon};
        const auto g = design_gradient(eval, filt, d, 9000, pen);
        std::srand(43);
        for (int t = 0; t < 10; ++t) {
          const long e = std::rand() % n;
          const double step = 1e-4;
          Eigen::VectorXd dp = d, dm = d;
          dp[e] += step;
          dm[e] -= step;
          const double fd = (quadrature_objective(eval, filt, dp, {9000}, pen) -
                             quadrature_objective(eval, filt, dm, {9000}, pen)) /
                            (2 * step);
          max_rel = std::max(max_rel, std::abs(fd - g.grad[e]) /
                                          std::max(std::abs(fd), 1e-12));
        }
      }
    detail = fmt("max relative error %.2e", max_rel);
    return max_rel < 1e-5;
  });

  criterion(7, "empty-design baseline", [](std::string& detail) {
    if (std::getenv("DUCTOPT_FULL_SCALE")) {
      DomainSpec spec;
      spec.h = 0.25e-3;
      const Mesh mesh = build_mesh(spec);
      const ElementMatrixCache cache(mesh);
      const ModeBasis left = build_mode_basis(mesh, Side::left);
      const ModeBasis right = build_mode_basis(mesh, Side::right);
      Evaluator eval(mesh, cache, left, right);
      const DensityFilter filt(mesh, 0.0);
      const double J = reference_objective(
          eval, filt, Eigen::VectorXd::Ones(mesh.design_elements.size()),
          equidistant_frequencies(4000, 16000, 150));
      detail = fmt("full scale: objective %.6f vs 0.547 +- 0.01", J);
      return std::abs(J - 0.547) < 0.01;
    }
    // desk-scale regression lock (full scale skipped; set DUCTOPT_FULL_SCALE
    // to run it)
    const double J = desk_baseline();
    detail = fmt("desk scale: objective %.10f vs 0.5479756157 +- 1e-6", J);
    return std::abs(J - 0.5479756157) < 1e-6;
  });

  criterion(8, "mma desk run", [](std::string& detail) {
    Desk& fx = desk();
    Evaluator eval(fx.mesh, fx.cache, fx.left, fx.right);
    const DensityFilter filt(fx.mesh, 1e-3);
    MMAConfig cfg;
    cfg.freqs = {4000, 8000, 12000, 16000};
    cfg.gamma_schedule = {1.0, 10.0};
    cfg.max_iters_per_stage = 25;
    cfg.reference_freqs = equidistant_frequencies(4000, 16000, 150);
    const MMAResult res = continuation_run(
        eval, filt, cfg, Eigen::VectorXd::Ones(fx.mesh.design_elements.size()));
    if (res.aborted || res.history.empty()) {
      detail = "aborted: " + res.abort_reason;
      return false;
    }
    const double final_obj = res.history.back().objective_ref;
    const bool count_ok =
        res.evaluations == 4 * static_cast<long>(res.history.size());
    detail = fmt("final objective %.4f vs threshold %.4f, "
                 "%.0f evaluations",
                 final_obj, 0.8 * desk_baseline(), double(res.evaluations));
    return final_obj < 0.8 * desk_baseline() && count_ok;
  });

  criterion(9, "sg/csg desk campaign", [](std::string& detail) {
    Desk& fx = desk();
    const DensityFilter filt(fx.mesh, 1e-3);
    const Eigen::VectorXd d0 =
        Eigen::VectorXd::Ones(fx.mesh.design_elements.size());
    StochasticConfig base;
    base.iterations = 100;
    base.reference_freqs = equidistant_frequencies(4000, 16000, 150);

    std::vector<double> sg_finals, csg_finals;
    bool sg_steps_ok = true, csg_weights_ok = true;
    int csg_error_shrinks = 0;
    for (int run = 0; run < 5; ++run) {
      const std::uint64_t seed = 1 + run;
      {
        Evaluator eval(fx.mesh, fx.cache, fx.left, fx.right);
        StochasticConfig cfg = base;
        cfg.reference_every = 0;
        const StochResult res = sg_run(eval, filt, cfg, d0, seed);
        if (res.aborted) return false;
        sg_finals.push_back(res.final_objective_ref);
        for (const auto& row : res.history) {
          const double cn = cfg.move_c0 / std::sqrt(double(row.iteration));
          if (row.move_limit != cn || row.step_inf > cn) sg_steps_ok = false;
        }
      }
      {
        Evaluator eval(fx.mesh, fx.cache, fx.left, fx.right);
        StochasticConfig cfg = base;
        cfg.reference_every = 1;
        const StochResult res = csg_run(eval, filt, cfg, d0, seed);
        if (res.aborted) return false;
        csg_finals.push_back(res.final_objective_ref);
        for (double s : res.beta_sum)
          if (std::abs(s - 1.0) > 1e-9) csg_weights_ok = false;
        for (double m : res.beta_min)
          if (m < -1e-15) csg_weights_ok = false;
        std::vector<double> early, late;
        for (const auto& row : res.history) {
          const double err = std::abs(row.model_objective - row.objective_ref);
          (row.iteration <= 50 ? early : late).push_back(err);
        }
        if (median(late) < median(early)) ++csg_error_shrinks;
      }
    }

    // frozen-design weights against a dense-grid nearest-sample oracle
    {
      std::srand(71);
      const double c_f = 1.0 / 12000;
      std::vector<double> fs, as;
      for (int i = 0; i < 12; ++i) {
        fs.push_back(4000 + 12000 * (std::rand() / double(RAND_MAX)));
        as.push_back(0.3 * (std::rand() / double(RAND_MAX)));
      }
      const Eigen::VectorXd beta = csg_weights(fs, as, 4000, 16000, c_f);
      const int grid_n = 10000;
      Eigen::VectorXd oracle = Eigen::VectorXd::Zero(12);
      for (int t = 0; t < grid_n; ++t) {
        const double f = 4000 + 12000 * (t + 0.5) / grid_n;
        int best = 0;
        double score = as[0] + c_f * std::abs(f - fs[0]);
        for (int j = 1; j < 12; ++j) {
          const double s = as[j] + c_f * std::abs(f - fs[j]);
          if (s <= score) {
            score = s;
            best = j;
          }
        }
        oracle[best] += 1.0 / grid_n;
      }
      if ((beta - oracle).cwiseAbs().maxCoeff() > 36.0 / grid_n)
        csg_weights_ok = false;
    }

    const double base_obj = desk_baseline();
    const bool medians_ok =
        median(sg_finals) < base_obj && median(csg_finals) < base_obj;
    detail = fmt("sg median %.4f, csg median %.4f vs baseline %.4f",
                 median(sg_finals), median(csg_finals), base_obj) +
             ", model error shrinks in " + std::to_string(csg_error_shrinks) +
             "/5 runs";
    return medians_ok && sg_steps_ok && csg_weights_ok &&
           csg_error_shrinks >= 4;
  });

  criterion(10, "cpd identities", [](std::string& detail) {
    auto integral = [](const CPDCurve& c) {
      double acc = 0;
      for (size_t i = 1; i < c.thresholds.size(); ++i)
        acc += 0.5 * (c.values[i] + c.values[i - 1]) *
               (c.thresholds[i] - c.thresholds[i - 1]);
      return acc;
    };
    Spectrum synth;
    std::srand(41);
    for (int i = 0; i < 200; ++i)
      synth.entries.push_back({0.0, std::rand() / double(RAND_MAX)});
    const CPDCurve sc = cpd(synth, default_cpd_thresholds());
    bool monotone = sc.values.back() == 1.0;
    for (size_t i = 1; i < sc.values.size(); ++i)
      monotone = monotone && sc.values[i] >= sc.values[i - 1];
    const double synth_err =
        std::abs(integral(sc) - (1.0 - synth.mean_performance()));

    DomainSpec spec;
    spec.h = 5e-3;
    const Mesh mesh = build_mesh(spec);
    const ElementMatrixCache cache(mesh);
    const ModeBasis left = build_mode_basis(mesh, Side::left);
    const ModeBasis right = build_mode_basis(mesh, Side::right);
    const Spectrum solved = performance_spectrum(
        mesh, cache, left, right, Eigen::VectorXd::Ones(mesh.n_elements()),
        frequency_grid(4000, 16000, 250));
    const CPDCurve solved_curve = cpd(solved, default_cpd_thresholds());
    const double solved_err =
        std::abs(integral(solved_curve) - (1.0 - solved.mean_performance()));
    detail = fmt("layer-cake error: synthetic %.2e, solved %.2e", synth_err,
                 solved_err);
    return monotone && synth_err < 1e-3 && solved_err < 1e-3;
  });

  criterion(11, "determinism", [](std::string& detail) {
    const fs::path work = fs::temp_directory_path() / "ductopt_acceptance";
    fs::remove_all(work);
    fs::create_directories(work);
    bool all_ok = true;
    std::string failed;
    for (const std::string kind : {"mma", "sg", "csg"}) {
      std::vector<std::string> histories;
      for (int rep = 0; rep < 2; ++rep) {
        const fs::path out = work / (kind + "_" + std::to_string(rep));
        const fs::path cfg_path = work / (kind + std::to_string(rep) + ".json");
        Json cfg = {{"geometry", {{"h_mm", 5}}},
                    {"evaluation", {{"reference_count", 10}}},
                    {"seed", 12},
                    {"output_dir", out.string()}};
        if (kind == "mma")
          cfg["optimizer"] = {{"kind", "mma"},
                              {"freqs_hz", {6000.0, 12000.0}},
                              {"gamma_schedule", {1.0}},
                              {"max_iters_per_stage", 3}};
        else
          cfg["optimizer"] = {{"kind", kind}, {"iterations", 5}};
        std::ofstream(cfg_path) << cfg.dump(2);
        if (run_cli("optimize " + kind + " --config " + cfg_path.string()) !=
            0) {
          all_ok = false;
          failed += " " + kind + ":exit";
          break;
        }
        histories.push_back(slurp(out / "history.csv"));
      }
      if (histories.size() != 2 || histories[0].empty() ||
          histories[0] != histories[1]) {
        all_ok = false;
        failed += " " + kind;
      }
    }
    detail = all_ok ? "byte-identical history files for mma, sg, csg"
                    : "mismatch:" + failed;
    return all_ok;
  });

  std::printf("%s (%d of 11 criteria failed)\n",
              g_failures == 0 ? "ALL PASS" : "FAILURES", g_failures);
  return g_failures == 0 ? 0 : 1;
}
