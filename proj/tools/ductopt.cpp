#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "ductopt/campaign.hpp"
#include "ductopt/config.hpp"
#include "ductopt/io.hpp"
#include "ductopt/mma.hpp"

namespace fs = std::filesystem;
using namespace ductopt;

namespace {

struct Problem {
  RunConfig cfg;
  Mesh mesh;
  ElementMatrixCache cache;
  ModeBasis left, right;
  DensityFilter filter;

  explicit Problem(const RunConfig& c)
      : cfg(c),
        mesh(build_mesh(c.domain)),
        cache(mesh),
        left(build_mode_basis(mesh, Side::left)),
        right(build_mode_basis(mesh, Side::right)),
        filter(mesh, c.filter_radius, c.filter_mode, c.filter_power) {}
};

Eigen::VectorXd resolve_design(const Problem& prob, const std::string& path) {
  const std::string source =
      path.empty() ? prob.cfg.initial_design : path;
  const long n = static_cast<long>(prob.mesh.design_elements.size());
  if (source.empty()) return Eigen::VectorXd::Ones(n);
  if (source.rfind("uniform:", 0) == 0) {
    const double v = std::stod(source.substr(8));
    return project_box(Eigen::VectorXd::Constant(n, v), prob.cfg.epsilon);
  }
  const DesignFile df = read_design(source);
  if (df.n_z != prob.mesh.design_nz || df.n_r != prob.mesh.design_nr)
    throw ConfigError("design file " + source + " is " +
                      std::to_string(df.n_z) + "x" + std::to_string(df.n_r) +
                      " but the mesh design grid is " +
                      std::to_string(prob.mesh.design_nz) + "x" +
                      std::to_string(prob.mesh.design_nr));
  return project_box(df.values, prob.cfg.epsilon);
}

void write_spectrum_csv(const std::string& path, const Spectrum& spec) {
  CsvWriter csv(path, "frequency_hz,performance");
  for (const auto& e : spec.entries)
    csv.row({CsvWriter::cell(e.f_hz),
             e.performance ? CsvWriter::cell(*e.performance) : std::string()});
}

void write_cpd_csv(const std::string& path, const CPDCurve& curve) {
  CsvWriter csv(path, "threshold,cpd");
  for (size_t i = 0; i < curve.thresholds.size(); ++i)
    csv.row({CsvWriter::cell(curve.thresholds[i]),
             CsvWriter::cell(curve.values[i])});
}

Spectrum spectrum_of_physical(const Problem& prob,
                              const Eigen::VectorXd& alpha_design,
                              const std::vector<double>& grid) {
  return performance_spectrum(prob.mesh, prob.cache, prob.left, prob.right,
                              density_over_elements(prob.mesh, alpha_design),
                              grid);
}

void write_mma_history(const std::string& path,
                       const std::vector<MMAHistoryRow>& history) {
  CsvWriter csv(path, "iteration,evaluations,gamma,objective_Q,objective_150,"
                      "penalty");
  for (const auto& r : history)
    csv.row({CsvWriter::cell(r.iteration), CsvWriter::cell(r.evaluations),
             CsvWriter::cell(r.gamma), CsvWriter::cell(r.objective_Q),
             CsvWriter::cell(r.objective_ref), CsvWriter::cell(r.penalty)});
}

void write_stoch_history(const std::string& path,
                         const std::vector<StochHistoryRow>& history,
                         bool with_model) {
  CsvWriter csv(path, with_model
                          ? "iteration,evaluations,move_limit,frequency_hz,"
                            "loss,step_inf,model_objective,objective_150"
                          : "iteration,evaluations,move_limit,frequency_hz,"
                            "loss,step_inf,objective_150");
  for (const auto& r : history) {
    std::vector<std::string> cells = {
        CsvWriter::cell(r.iteration), CsvWriter::cell(r.evaluations),
        CsvWriter::cell(r.move_limit), CsvWriter::cell(r.frequency_hz),
        CsvWriter::cell(r.loss), CsvWriter::cell(r.step_inf)};
    if (with_model) cells.push_back(CsvWriter::cell(r.model_objective));
    cells.push_back(CsvWriter::cell(r.objective_ref));
    csv.row(cells);
  }
}

void write_design_artifacts(const Problem& prob, const fs::path& dir,
                            const Eigen::VectorXd& d_raw,
                            const Eigen::VectorXd& alpha_rounded) {
  const int nz = prob.mesh.design_nz, nr = prob.mesh.design_nr;
  write_design((dir / "design.dat").string(), nz, nr, prob.cfg.epsilon, d_raw);
  write_design((dir / "design_rounded.dat").string(), nz, nr, prob.cfg.epsilon,
               alpha_rounded);
  write_pgm((dir / "design.pgm").string(), nz, nr, prob.filter.apply(d_raw));
}

void write_metadata(const fs::path& dir, const RunConfig& cfg,
                    const Json& extra) {
  Json j;
  j["config"] = effective_config_json(cfg);
  j["run"] = extra;
  std::ofstream out(dir / "metadata.json", std::ios::binary);
  out << j.dump(2) << '\n';
}

int cmd_mesh_info(const RunConfig& cfg) {
  const Mesh mesh = build_mesh(cfg.domain);
  const auto st = mesh_statistics(mesh);
  Json j = {{"n_dof", st.n_dof},
            {"n_elements", st.n_elements},
            {"n_design_elements", st.n_design_elements},
            {"design_nz", mesh.design_nz},
            {"design_nr", mesh.design_nr},
            {"n_left_boundary_nodes", st.n_left_boundary_nodes},
            {"n_right_boundary_nodes", st.n_right_boundary_nodes}};
  std::printf("%s\n", j.dump(2).c_str());
  return 0;
}

int cmd_modes(const RunConfig& cfg, const std::string& side_name, double freq) {
  const Mesh mesh = build_mesh(cfg.domain);
  std::vector<Side> sides;
  if (side_name == "L" || side_name == "l")
    sides = {Side::left};
  else if (side_name == "R" || side_name == "r")
    sides = {Side::right};
  else if (side_name.empty() || side_name == "both")
    sides = {Side::left, Side::right};
  else
    throw ConfigError("unknown side '" + side_name + "' (expected L or R)");
  std::printf("side,mode_index,lambda,re_km,im_km,propagating\n");
  for (Side side : sides) {
    const ModeBasis basis = build_mode_basis(mesh, side);
    const char* tag = side == Side::left ? "L" : "R";
    for (int m = 0; m < basis.n_modes(); ++m) {
      const auto km = reduced_wavenumber(wavenumber(freq, cfg.domain.c),
                                         basis.eigenvalues[m]);
      std::printf("%s,%d,%s,%s,%s,%d\n", tag, m,
                  format_double(basis.eigenvalues[m]).c_str(),
                  format_double(km.value.real()).c_str(),
                  format_double(km.value.imag()).c_str(),
                  km.propagating ? 1 : 0);
    }
  }
  return 0;
}

int cmd_solve(const RunConfig& cfg, const std::string& design_path,
              double freq, const std::string& out_path) {
  Problem prob(cfg);
  const Eigen::VectorXd d = resolve_design(prob, design_path);
  Evaluator eval(prob.mesh, prob.cache, prob.left, prob.right);
  const auto snap = eval.snapshot(
      density_over_elements(prob.mesh, prob.filter.apply(d)));
  const auto ctx = eval.context(snap, freq);
  const auto sol = solve_state(ctx);
  const auto amps = modal_amplitudes(sol, ctx);
  const auto powers = outgoing_powers(amps, ctx);
  std::printf("f = %g Hz, k = %.6f 1/m\n", freq, ctx.k);
  std::printf("propagating modes: %d left, %d right\n", ctx.mp_left,
              ctx.mp_right);
  for (size_t m = 0; m < amps.B_left.size(); ++m)
    std::printf("left  m=%zu  |B| = %.8f  P = %.8f\n", m,
                std::abs(amps.B_left[m]), powers.P_left[m]);
  for (size_t n = 0; n < amps.B_right.size(); ++n)
    std::printf("right n=%zu  |B| = %.8f  P = %.8f\n", n,
                std::abs(amps.B_right[n]), powers.P_right[n]);
  std::printf("total outgoing power: %.12f\n", powers.total());
  std::printf("performance: %.8f\n", performance_of(amps));
  if (!out_path.empty()) {
    CsvWriter csv(out_path, "node_id,z_m,r_m,re_p,im_p");
    for (int i = 0; i < prob.mesh.n_dof; ++i)
      csv.row({CsvWriter::cell(i), CsvWriter::cell(prob.mesh.node_coords[i][0]),
               CsvWriter::cell(prob.mesh.node_coords[i][1]),
               CsvWriter::cell(sol.p[i].real()),
               CsvWriter::cell(sol.p[i].imag())});
    std::printf("wrote %s\n", out_path.c_str());
  }
  return 0;
}

int cmd_spectrum(const RunConfig& cfg, const std::string& design_path,
                 const std::string& out) {
  Problem prob(cfg);
  const Eigen::VectorXd d = resolve_design(prob, design_path);
  const Spectrum spec =
      spectrum_of_physical(prob, prob.filter.apply(d), cfg.evaluation_grid());
  write_spectrum_csv(out, spec);
  std::printf("wrote %s (%zu frequencies, mean performance %.6f)\n",
              out.c_str(), spec.entries.size(), spec.mean_performance());
  return 0;
}

int cmd_cpd(const std::string& spectrum_path, const std::string& out,
            int n_thresholds) {
  std::ifstream in(spectrum_path);
  if (!in) throw ConfigError("cannot open spectrum file: " + spectrum_path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("frequency_hz,", 0) != 0)
    throw ConfigError("not a spectrum CSV: " + spectrum_path);
  Spectrum spec;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    SpectrumEntry e{std::stod(line.substr(0, comma)), std::nullopt};
    const std::string val = line.substr(comma + 1);
    if (!val.empty()) e.performance = std::stod(val);
    spec.entries.push_back(e);
  }
  write_cpd_csv(out, cpd(spec, default_cpd_thresholds(n_thresholds)));
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_render(const std::string& design_path, const std::string& out) {
  const DesignFile df = read_design(design_path);
  write_pgm(out, df.n_z, df.n_r, df.values);
  std::printf("wrote %s (%d x %d)\n", out.c_str(), df.n_z, df.n_r);
  return 0;
}

int cmd_grad_check(const RunConfig& cfg, double freq, double gamma,
                   int samples, double fd_step, std::uint64_t seed) {
  Problem prob(cfg);
  Evaluator eval(prob.mesh, prob.cache, prob.left, prob.right);
  const long n = static_cast<long>(prob.mesh.design_elements.size());
  std::mt19937_64 rng(seed);
  Eigen::VectorXd d(n);
  for (long i = 0; i < n; ++i)
    d[i] = 0.2 + 0.6 * ((rng() >> 11) * 0x1.0p-53);
  const PenaltyConfig pen{gamma, cfg.epsilon};
  const auto g = design_gradient(eval, prob.filter, d, freq, pen);
  double max_rel = 0;
  for (int s = 0; s < samples; ++s) {
    const long e = static_cast<long>(rng() % n);
    Eigen::VectorXd dp = d, dm = d;
    dp[e] += fd_step;
    dm[e] -= fd_step;
    const double fp = quadrature_objective(eval, prob.filter, dp, {freq}, pen);
    const double fm = quadrature_objective(eval, prob.filter, dm, {freq}, pen);
    const double fd = (fp - fm) / (2.0 * fd_step);
    const double rel =
        std::abs(fd - g.grad[e]) / std::max(std::abs(fd), 1e-12);
    std::printf("element %6ld: adjoint %.10e  fd %.10e  rel %.3e\n", e,
                g.grad[e], fd, rel);
    max_rel = std::max(max_rel, rel);
  }
  std::printf("max relative error: %.3e\n", max_rel);
  return 0;
}

int cmd_optimize(const RunConfig& cfg_in, const std::string& kind,
                 std::uint64_t seed) {
  RunConfig cfg = cfg_in;
  if (cfg.optimizer_kind.empty()) cfg.optimizer_kind = kind;
  if (cfg.optimizer_kind != kind)
    throw ConfigError("config optimizer.kind is '" + cfg.optimizer_kind +
                      "' but the subcommand requested '" + kind + "'");
  Problem prob(cfg);
  const Eigen::VectorXd d0 = resolve_design(prob, "");
  Evaluator eval(prob.mesh, prob.cache, prob.left, prob.right);
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);

  const auto t0 = std::chrono::steady_clock::now();
  Json meta;
  meta["kind"] = kind;
  meta["seed"] = seed;
  Eigen::VectorXd d_final, alpha_rounded;
  bool aborted = false;
  std::string abort_reason;

  if (kind == "mma") {
    const MMAResult res = continuation_run(eval, prob.filter, cfg.mma, d0);
    write_mma_history((dir / "history.csv").string(), res.history);
    d_final = res.d;
    alpha_rounded = round_design(prob.filter.apply(res.d), cfg.epsilon,
                                 cfg.stoch.rounding_threshold);
    meta["evaluations"] = res.evaluations;
    meta["iterations"] = res.history.size();
    if (!res.history.empty())
      meta["final_objective_150"] = res.history.back().objective_ref;
    meta["final_objective_150_rounded"] = reference_objective_physical(
        eval, alpha_rounded, cfg.reference_freqs());
    aborted = res.aborted;
    abort_reason = res.abort_reason;
  } else {
    const StochResult res =
        kind == "sg" ? sg_run(eval, prob.filter, cfg.stoch, d0, seed)
                     : csg_run(eval, prob.filter, cfg.stoch, d0, seed);
    write_stoch_history((dir / "history.csv").string(), res.history,
                        kind == "csg");
    d_final = res.d;
    alpha_rounded = res.alpha_rounded;
    meta["evaluations"] = res.evaluations;
    meta["iterations"] = res.history.size();
    meta["final_objective_150"] = res.final_objective_ref;
    meta["final_objective_150_rounded"] = res.final_objective_rounded;
    aborted = res.aborted;
    abort_reason = res.abort_reason;
  }
  const auto t1 = std::chrono::steady_clock::now();
  meta["wall_time_s"] = std::chrono::duration<double>(t1 - t0).count();
  if (aborted) meta["aborted"] = abort_reason;

  write_design_artifacts(prob, dir, d_final, alpha_rounded);
  const Spectrum spec =
      spectrum_of_physical(prob, alpha_rounded, cfg.evaluation_grid());
  write_spectrum_csv((dir / "spectrum.csv").string(), spec);
  write_cpd_csv((dir / "cpd.csv").string(),
                cpd(spec, default_cpd_thresholds()));
  meta["mean_performance_rounded"] = spec.mean_performance();
  write_metadata(dir, cfg, meta);
  std::printf("%s run finished: %ld evaluations, artifacts in %s\n",
              kind.c_str(), meta["evaluations"].get<long>(),
              dir.string().c_str());
  if (aborted) {
    std::fprintf(stderr, "run aborted: %s\n", abort_reason.c_str());
    return 2;
  }
  return 0;
}

int cmd_campaign(const RunConfig& cfg_in, int runs_override,
                 std::uint64_t seed) {
  RunConfig cfg = cfg_in;
  if (cfg.optimizer_kind != "sg" && cfg.optimizer_kind != "csg")
    throw ConfigError("campaign requires optimizer.kind sg or csg");
  Problem prob(cfg);
  const Eigen::VectorXd d0 = resolve_design(prob, "");
  CampaignConfig camp;
  camp.kind = parse_stochastic_kind(cfg.optimizer_kind);
  camp.opt = cfg.stoch;
  camp.n_runs = runs_override > 0 ? runs_override : cfg.campaign_runs;
  camp.base_seed = seed;
  camp.eval_grid = cfg.evaluation_grid();

  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  const auto t0 = std::chrono::steady_clock::now();
  const CampaignResult res =
      run_campaign(prob.mesh, prob.cache, prob.left, prob.right, prob.filter,
                   camp, d0);
  const auto t1 = std::chrono::steady_clock::now();

  int completed = 0;
  Json run_meta = Json::array();
  for (size_t i = 0; i < res.runs.size(); ++i) {
    const auto& run = res.runs[i];
    char name[32];
    std::snprintf(name, sizeof(name), "run_%03zu", i);
    const fs::path run_dir = dir / name;
    fs::create_directories(run_dir);
    Json rm;
    rm["seed"] = run.seed;
    if (run.failed) {
      rm["failed"] = run.error;
    } else {
      write_stoch_history((run_dir / "history.csv").string(),
                          run.result.history, camp.kind == StochasticKind::csg);
      write_design_artifacts(prob, run_dir, run.result.d,
                             run.result.alpha_rounded);
      write_spectrum_csv((run_dir / "spectrum.csv").string(), run.spectrum);
      rm["evaluations"] = run.result.evaluations;
      rm["final_objective_150"] = run.result.final_objective_ref;
      rm["final_objective_150_rounded"] = run.result.final_objective_rounded;
      ++completed;
    }
    run_meta.push_back(rm);
  }
  {
    CsvWriter csv((dir / "quantiles.csv").string(),
                  "frequency_hz,p10,p25,p50,p75,p90");
    for (size_t gi = 0; gi < res.grid.size(); ++gi) {
      const auto& q = res.quantiles[gi];
      csv.row({CsvWriter::cell(res.grid[gi]), CsvWriter::cell(q[0]),
               CsvWriter::cell(q[1]), CsvWriter::cell(q[2]),
               CsvWriter::cell(q[3]), CsvWriter::cell(q[4])});
    }
  }
  Json meta;
  meta["kind"] = cfg.optimizer_kind;
  meta["n_runs"] = camp.n_runs;
  meta["completed_runs"] = completed;
  meta["base_seed"] = camp.base_seed;
  meta["wall_time_s"] = std::chrono::duration<double>(t1 - t0).count();
  meta["runs"] = run_meta;
  write_metadata(dir, cfg, meta);
  std::printf("campaign finished: %d/%d runs completed, artifacts in %s\n",
              completed, camp.n_runs, dir.string().c_str());
  return completed == camp.n_runs ? 0 : 2;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& design_path,
                 const std::string& out_dir) {
  Problem prob(cfg);
  const Eigen::VectorXd d = resolve_design(prob, design_path);
  Evaluator eval(prob.mesh, prob.cache, prob.left, prob.right);
  const double obj_ref =
      reference_objective(eval, prob.filter, d, cfg.reference_freqs());
  const Spectrum spec =
      spectrum_of_physical(prob, prob.filter.apply(d), cfg.evaluation_grid());
  std::printf("reference objective (mean loss over %d frequencies): %.8f\n",
              cfg.reference_count, obj_ref);
  std::printf("mean performance over the %g Hz grid: %.8f\n", cfg.step,
              spec.mean_performance());
  if (!out_dir.empty()) {
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    write_spectrum_csv((dir / "spectrum.csv").string(), spec);
    write_cpd_csv((dir / "cpd.csv").string(),
                  cpd(spec, default_cpd_thresholds()));
    write_pgm((dir / "design.pgm").string(), prob.mesh.design_nz,
              prob.mesh.design_nr, prob.filter.apply(d));
    Json meta;
    meta["mode"] = "evaluate";
    meta["reference_objective"] = obj_ref;
    meta["mean_performance"] = spec.mean_performance();
    write_metadata(dir, cfg, meta);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"axisymmetric waveguide transition design toolkit"};
  app.require_subcommand(1);

  std::string config_path, design_path, out_path, spectrum_path, side_name;
  double freq = 10000.0, gamma = 0.0, fd_step = 1e-4;
  int samples = 10, n_thresholds = 1001, runs = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;

  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON configuration file")
        ->required();
  };

  auto* mesh_info = app.add_subcommand("mesh-info", "mesh statistics");
  add_config(mesh_info);

  auto* modes = app.add_subcommand("modes", "radial mode tables");
  add_config(modes);
  modes->add_option("--side", side_name, "boundary: L, R, or both");
  modes->add_option("--freq", freq, "frequency for the axial wavenumbers (Hz)")
      ->default_val(0.0);

  auto* solve = app.add_subcommand("solve", "single-frequency state solve");
  add_config(solve);
  solve->add_option("--freq", freq, "frequency (Hz)")->required();
  solve->add_option("--design", design_path, "design file (raw variables)");
  solve->add_option("--out", out_path, "nodal solution CSV (optional)");

  auto* spectrum = app.add_subcommand("spectrum", "performance over the grid");
  add_config(spectrum);
  spectrum->add_option("--design", design_path, "design file (raw variables)");
  spectrum->add_option("--out", out_path, "output CSV")->required();

  auto* cpd_cmd = app.add_subcommand("cpd", "cumulative performance density");
  cpd_cmd->add_option("--spectrum", spectrum_path, "spectrum CSV")->required();
  cpd_cmd->add_option("--out", out_path, "output CSV")->required();
  cpd_cmd->add_option("--thresholds", n_thresholds, "threshold count");

  auto* render = app.add_subcommand("render-design", "design file to PGM");
  render->add_option("--design", design_path, "design file")->required();
  render->add_option("--out", out_path, "output PGM")->required();

  auto* grad = app.add_subcommand("grad-check",
                                  "adjoint gradient vs finite differences");
  add_config(grad);
  grad->add_option("--freq", freq, "frequency (Hz)")->default_val(9000.0);
  grad->add_option("--gamma", gamma, "penalty weight");
  grad->add_option("--samples", samples, "probed elements");
  grad->add_option("--step", fd_step, "finite-difference step");
  grad->add_option("--seed", seed, "probe RNG seed");

  auto* optimize = app.add_subcommand("optimize", "run an optimizer");
  optimize->require_subcommand(1);
  for (const char* kind : {"mma", "sg", "csg"}) {
    auto* sub = optimize->add_subcommand(kind);
    add_config(sub);
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t v) { seed = v; seed_set = true; },
        "random seed (overrides config)");
  }

  auto* campaign = app.add_subcommand("campaign", "multi-run quantile study");
  add_config(campaign);
  campaign->add_option("--runs", runs, "number of runs (overrides config)");
  campaign->add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t v) { seed = v; seed_set = true; },
      "base seed (overrides config)");

  auto* evaluate = app.add_subcommand("evaluate", "report a stored design");
  add_config(evaluate);
  evaluate->add_option("--design", design_path, "design file")->required();
  evaluate->add_option("--out", out_path, "artifact directory (optional)");

  CLI11_PARSE(app, argc, argv);

  try {
    const RunConfig cfg =
        config_path.empty() ? RunConfig{} : load_config(config_path);
    const std::uint64_t effective_seed = seed_set ? seed : cfg.seed;
    if (mesh_info->parsed()) return cmd_mesh_info(cfg);
    if (modes->parsed()) return cmd_modes(cfg, side_name, freq);
    if (solve->parsed()) return cmd_solve(cfg, design_path, freq, out_path);
    if (spectrum->parsed()) return cmd_spectrum(cfg, design_path, out_path);
    if (cpd_cmd->parsed()) return cmd_cpd(spectrum_path, out_path, n_thresholds);
    if (render->parsed()) return cmd_render(design_path, out_path);
    if (grad->parsed())
      return cmd_grad_check(cfg, freq, gamma, samples, fd_step,
                            seed_set ? seed : 7);
    if (optimize->parsed())
      return cmd_optimize(cfg, optimize->get_subcommands().front()->get_name(),
                          effective_seed);
    if (campaign->parsed()) return cmd_campaign(cfg, runs, effective_seed);
    if (evaluate->parsed()) return cmd_evaluate(cfg, design_path, out_path);
  } catch (const ConfigError& err) {
    std::fprintf(stderr, "config error: %s\n", err.what());
    return 1;
  } catch (const std::invalid_argument& err) {
    std::fprintf(stderr, "config error: %s\n", err.what());
    return 1;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "solver error: %s\n", err.what());
    return 2;
  }
  return 0;
}
