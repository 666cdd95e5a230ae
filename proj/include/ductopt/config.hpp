#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ductopt/campaign.hpp"
#include "ductopt/mma.hpp"

namespace ductopt {

using Json = nlohmann::json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline int edit_distance(const std::string& a, const std::string& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1,
                         prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// Known misspellings / unit-free shorthands mapped to the canonical key.
inline const std::map<std::string, std::string>& key_aliases() {
  static const std::map<std::string, std::string> aliases = {
      {"speedofsound", "c_m_per_s"},   {"speed_of_sound", "c_m_per_s"},
      {"c", "c_m_per_s"},              {"radius", "radius_mm"},
      {"h", "h_mm"},                   {"f_min", "f_min_hz"},
      {"f_max", "f_max_hz"},           {"step", "step_hz"},
      {"freqs", "freqs_hz"},
  };
  return aliases;
}

inline void check_keys(const Json& obj, const std::string& section,
                       const std::vector<std::string>& allowed) {
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) != allowed.end())
      continue;
    std::string suggestion;
    if (auto it = key_aliases().find(key); it != key_aliases().end() &&
        std::find(allowed.begin(), allowed.end(), it->second) != allowed.end())
      suggestion = it->second;
    else {
      int best = 1 + static_cast<int>(key.size()) / 2;  // only close matches
      for (const auto& cand : allowed) {
        const int dist = edit_distance(key, cand);
        if (dist < best) {
          best = dist;
          suggestion = cand;
        }
      }
    }
    std::string msg = "unknown key '" + key + "' in " + section;
    if (!suggestion.empty()) msg += "; did you mean '" + suggestion + "'?";
    throw ConfigError(msg);
  }
}

template <typename T>
T get_or(const Json& obj, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError("invalid value for key '" + key + "'");
  }
}

}  // namespace detail

struct RunConfig {
  DomainSpec domain;
  FilterMode filter_mode = FilterMode::linear;
  double filter_radius = 1e-3;  // meters
  double filter_power = 8.0;
  double f_min = 4000.0, f_max = 16000.0, step = 20.0;
  int reference_count = 150;
  double epsilon = kDefaultEpsilon;
  std::string optimizer_kind;  // "mma", "sg", "csg", or empty
  MMAConfig mma;
  StochasticConfig stoch;
  int campaign_runs = 5;
  std::string output_dir = "out";
  std::uint64_t seed = 1;
  std::string initial_design;  // "", "uniform:<v>", or a design-file path

  std::vector<double> reference_freqs() const {
    return equidistant_frequencies(f_min, f_max, reference_count);
  }
  std::vector<double> evaluation_grid() const {
    return frequency_grid(f_min, f_max, step);
  }
};

inline RunConfig parse_config(const Json& root) {
  detail::check_keys(root, "config root",
                     {"geometry", "filter", "evaluation", "optimizer",
                      "campaign", "output_dir", "seed", "epsilon",
                      "initial_design"});
  RunConfig cfg;
  cfg.epsilon = detail::get_or(root, "epsilon", cfg.epsilon);
  cfg.output_dir = detail::get_or<std::string>(root, "output_dir", cfg.output_dir);
  cfg.seed = detail::get_or<std::uint64_t>(root, "seed", cfg.seed);
  cfg.initial_design =
      detail::get_or<std::string>(root, "initial_design", cfg.initial_design);

  const Json geom = root.value("geometry", Json::object());
  detail::check_keys(geom, "geometry",
                     {"r_design_mm", "l_design_mm", "r_left_mm", "r_right_mm",
                      "l_waveguide_mm", "h_mm", "c_m_per_s"});
  auto mm = [&](const char* key, double fallback_m) {
    return 1e-3 * detail::get_or(geom, key, 1e3 * fallback_m);
  };
  DomainSpec def;
  cfg.domain.r_design = mm("r_design_mm", def.r_design);
  cfg.domain.l_design = mm("l_design_mm", def.l_design);
  cfg.domain.r_left = mm("r_left_mm", def.r_left);
  cfg.domain.r_right = mm("r_right_mm", def.r_right);
  cfg.domain.l_wg = mm("l_waveguide_mm", def.l_wg);
  cfg.domain.h = mm("h_mm", def.h);
  cfg.domain.c = detail::get_or(geom, "c_m_per_s", def.c);
  try {
    cfg.domain.validate();
  } catch (const std::invalid_argument& err) {
    throw ConfigError(std::string("geometry: ") + err.what());
  }

  const Json filt = root.value("filter", Json::object());
  detail::check_keys(filt, "filter", {"mode", "radius_mm", "power"});
  try {
    cfg.filter_mode = parse_filter_mode(
        detail::get_or<std::string>(filt, "mode", "linear"));
  } catch (const std::invalid_argument& err) {
    throw ConfigError(err.what());
  }
  cfg.filter_radius = 1e-3 * detail::get_or(filt, "radius_mm", 1.0);
  cfg.filter_power = detail::get_or(filt, "power", cfg.filter_power);

  const Json ev = root.value("evaluation", Json::object());
  detail::check_keys(ev, "evaluation",
                     {"f_min_hz", "f_max_hz", "step_hz", "reference_count"});
  cfg.f_min = detail::get_or(ev, "f_min_hz", cfg.f_min);
  cfg.f_max = detail::get_or(ev, "f_max_hz", cfg.f_max);
  cfg.step = detail::get_or(ev, "step_hz", cfg.step);
  cfg.reference_count = detail::get_or(ev, "reference_count", cfg.reference_count);
  if (!(cfg.f_min < cfg.f_max))
    throw ConfigError("evaluation: f_min_hz must be below f_max_hz");
  if (cfg.step <= 0) throw ConfigError("evaluation: step_hz must be positive");
  if (cfg.reference_count < 1)
    throw ConfigError("evaluation: reference_count must be at least 1");

  const Json opt = root.value("optimizer", Json::object());
  cfg.optimizer_kind = detail::get_or<std::string>(opt, "kind", "");
  if (cfg.optimizer_kind == "mma") {
    detail::check_keys(opt, "optimizer",
                       {"kind", "freqs_hz", "gamma_schedule",
                        "max_iters_per_stage", "kkt_tol_rel", "move_limit",
                        "asymptote_init", "asymptote_grow", "asymptote_shrink"});
    MMAConfig& m = cfg.mma;
    m.freqs = detail::get_or<std::vector<double>>(
        opt, "freqs_hz", {4000.0, 8000.0, 12000.0, 16000.0});
    m.gamma_schedule = detail::get_or(opt, "gamma_schedule", m.gamma_schedule);
    m.max_iters_per_stage =
        detail::get_or(opt, "max_iters_per_stage", m.max_iters_per_stage);
    m.kkt_tol_rel = detail::get_or(opt, "kkt_tol_rel", m.kkt_tol_rel);
    m.move_limit = detail::get_or(opt, "move_limit", m.move_limit);
    m.asymptote_init = detail::get_or(opt, "asymptote_init", m.asymptote_init);
    m.asymptote_grow = detail::get_or(opt, "asymptote_grow", m.asymptote_grow);
    m.asymptote_shrink =
        detail::get_or(opt, "asymptote_shrink", m.asymptote_shrink);
    if (m.freqs.empty()) throw ConfigError("optimizer: freqs_hz is empty");
    if (m.max_iters_per_stage < 1)
      throw ConfigError("optimizer: max_iters_per_stage must be at least 1");
  } else if (cfg.optimizer_kind == "sg" || cfg.optimizer_kind == "csg") {
    detail::check_keys(
        opt, "optimizer",
        {"kind", "learning_rate", "move_c0", "iterations", "gamma",
         "rounding_threshold", "reference_every", "move_c_min", "adapt_down",
         "adapt_up", "c_f", "c_d"});
    StochasticConfig& s = cfg.stoch;
    s.learning_rate = detail::get_or(opt, "learning_rate", s.learning_rate);
    s.move_c0 = detail::get_or(opt, "move_c0", s.move_c0);
    s.iterations = detail::get_or(opt, "iterations", s.iterations);
    s.gamma = detail::get_or(opt, "gamma", s.gamma);
    s.rounding_threshold =
        detail::get_or(opt, "rounding_threshold", s.rounding_threshold);
    s.reference_every =
        detail::get_or(opt, "reference_every",
                       cfg.optimizer_kind == "csg" ? 1 : 0);
    s.move_c_min = detail::get_or(opt, "move_c_min", s.move_c_min);
    s.adapt_down = detail::get_or(opt, "adapt_down", s.adapt_down);
    s.adapt_up = detail::get_or(opt, "adapt_up", s.adapt_up);
    s.c_f = detail::get_or(opt, "c_f", s.c_f);
    s.c_d = detail::get_or(opt, "c_d", s.c_d);
    if (s.iterations < 1)
      throw ConfigError("optimizer: iterations must be at least 1");
  } else if (!cfg.optimizer_kind.empty()) {
    throw ConfigError("unknown optimizer kind '" + cfg.optimizer_kind +
                      "' (expected mma, sg, or csg)");
  } else {
    detail::check_keys(opt, "optimizer", {"kind"});
  }

  const Json camp = root.value("campaign", Json::object());
  detail::check_keys(camp, "campaign", {"n_runs"});
  cfg.campaign_runs = detail::get_or(camp, "n_runs", cfg.campaign_runs);
  if (cfg.campaign_runs < 1)
    throw ConfigError("campaign: n_runs must be at least 1");

  // shared fields threaded into the optimizer configs
  cfg.mma.epsilon = cfg.epsilon;
  cfg.mma.reference_freqs = cfg.reference_freqs();
  cfg.stoch.epsilon = cfg.epsilon;
  cfg.stoch.f_min = cfg.f_min;
  cfg.stoch.f_max = cfg.f_max;
  cfg.stoch.reference_freqs = cfg.reference_freqs();
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  Json root;
  try {
    root = Json::parse(in);
  } catch (const Json::exception& err) {
    throw ConfigError("config parse error in " + path + ": " + err.what());
  }
  if (!root.is_object()) throw ConfigError("config root must be an object");
  return parse_config(root);
}

// Every effective setting, for the run-metadata artifact.
inline Json effective_config_json(const RunConfig& cfg) {
  Json j;
  j["geometry"] = {{"r_design_mm", 1e3 * cfg.domain.r_design},
                   {"l_design_mm", 1e3 * cfg.domain.l_design},
                   {"r_left_mm", 1e3 * cfg.domain.r_left},
                   {"r_right_mm", 1e3 * cfg.domain.r_right},
                   {"l_waveguide_mm", 1e3 * cfg.domain.l_wg},
                   {"h_mm", 1e3 * cfg.domain.h},
                   {"c_m_per_s", cfg.domain.c}};
  j["filter"] = {{"mode", filter_mode_name(cfg.filter_mode)},
                 {"radius_mm", 1e3 * cfg.filter_radius},
                 {"power", cfg.filter_power}};
  j["evaluation"] = {{"f_min_hz", cfg.f_min},
                     {"f_max_hz", cfg.f_max},
                     {"step_hz", cfg.step},
                     {"reference_count", cfg.reference_count}};
  j["epsilon"] = cfg.epsilon;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  j["initial_design"] = cfg.initial_design;
  j["campaign"] = {{"n_runs", cfg.campaign_runs}};
  if (cfg.optimizer_kind == "mma") {
    j["optimizer"] = {{"kind", "mma"},
                      {"freqs_hz", cfg.mma.freqs},
                      {"gamma_schedule", cfg.mma.gamma_schedule},
                      {"max_iters_per_stage", cfg.mma.max_iters_per_stage},
                      {"kkt_tol_rel", cfg.mma.kkt_tol_rel},
                      {"move_limit", cfg.mma.move_limit},
                      {"asymptote_init", cfg.mma.asymptote_init},
                      {"asymptote_grow", cfg.mma.asymptote_grow},
                      {"asymptote_shrink", cfg.mma.asymptote_shrink},
                      {"objective", "aggregate sum over freqs_hz + penalty"}};
  } else if (cfg.optimizer_kind == "sg" || cfg.optimizer_kind == "csg") {
    j["optimizer"] = {{"kind", cfg.optimizer_kind},
                      {"learning_rate", cfg.stoch.learning_rate},
                      {"move_c0", cfg.stoch.move_c0},
                      {"iterations", cfg.stoch.iterations},
                      {"gamma", cfg.stoch.gamma},
                      {"rounding_threshold", cfg.stoch.rounding_threshold},
                      {"reference_every", cfg.stoch.reference_every},
                      {"move_c_min", cfg.stoch.move_c_min},
                      {"adapt_down", cfg.stoch.adapt_down},
                      {"adapt_up", cfg.stoch.adapt_up},
                      {"c_f", cfg.stoch.freq_weight()},
                      {"c_d", cfg.stoch.c_d},
                      {"evaluation_counting", "primal factorizations driven "
                                              "by the optimizer; reporting "
                                              "solves excluded"}};
  }
  return j;
}

}  // namespace ductopt
