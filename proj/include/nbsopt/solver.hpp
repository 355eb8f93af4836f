#pragma once

#include <bit>
#include <chrono>
#include <cstdint>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <csignal>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include "nbsopt/engine.hpp"
#include "nbsopt/error.hpp"
#include "nbsopt/instance.hpp"
#include "nbsopt/model.hpp"
#include "nbsopt/mps.hpp"

namespace nbsopt {

enum class Backend { Oracle, External };
enum class SolveStatus { Optimal, FeasibleTimeout, Infeasible, Error };

inline std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::FeasibleTimeout: return "feasible-timeout";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Error: return "error";
  }
  return "error";
}

inline SolveStatus status_from_string(std::string_view s) {
  if (s == "optimal") return SolveStatus::Optimal;
  if (s == "feasible-timeout") return SolveStatus::FeasibleTimeout;
  if (s == "infeasible") return SolveStatus::Infeasible;
  return SolveStatus::Error;
}

// The second write dumps every column bit-exactly; the plain solution file
// only carries 8 significant digits.
inline constexpr const char* kDefaultSolverCommand =
    "cbc {model} ratioGap {gap} sec {timelimit} solve solution {solution} printingOptions fixall solution {values}";
inline constexpr const char* kSolverCommandEnv = "NBSOPT_SOLVER_CMD";

struct SolveConfig {
  Backend backend = Backend::Oracle;
  double time_limit = 1800.0;  // seconds
  double gap = 0.0;
  std::string command;  // template with {model} {solution} {values} {timelimit} {gap}; empty = env or default
  std::size_t oracle_cap = 16;
  bool keep_files = false;
  std::filesystem::path work_dir;  // empty = fresh temporary directory
};

struct SolveResult {
  SolveStatus status = SolveStatus::Error;
  Placement placement;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double bound = std::numeric_limits<double>::quiet_NaN();
  double wall_time = 0.0;
  std::string backend;
  std::string message;
  /// Column values reported by an external solver, in model layout order.
  std::vector<double> values;
};

// ---------------------------------------------------------------------------
// Exhaustive oracle

/// Independent binary choices left after fixing masks: one per cluster plus,
/// for every cell not already hosting an NBS, one per type it may still take
/// individually.
struct DecisionUnits {
  struct ClusterUnit {
    std::size_t nbs;
    const Cluster* cells;
  };
  std::vector<ClusterUnit> clusters;
  std::vector<Cell> cells;
  std::vector<std::vector<std::size_t>> options;  // per cell: eligible NBS indices

  std::size_t count() const {
    std::size_t n = clusters.size();
    for (const auto& o : options) n += o.size();
    return n;
  }
};

inline DecisionUnits decision_units(const Instance& inst) {
  DecisionUnits du;
  const std::size_t T = inst.nbs_count();
  std::vector<Mask> clustered(T, Mask(inst.dims.width, inst.dims.height, 0));
  if (inst.clusters)
    for (std::size_t t = 0; t < T && t < inst.clusters->clusters.size(); ++t)
      for (const Cluster& q : inst.clusters->clusters[t]) {
        du.clusters.push_back({t, &q});
        for (const Cell& c : q) clustered[t][c] = 1;
      }
  const Mask occupied = inst.any_pre_existing_mask();
  std::vector<Mask> forbidden;
  for (std::size_t t = 0; t < T; ++t) forbidden.push_back(inst.forbidden_mask(t));
  for (int i = 0; i < inst.dims.width; ++i)
    for (int j = 0; j < inst.dims.height; ++j) {
      if (occupied(i, j)) continue;
      std::vector<std::size_t> opts;
      for (std::size_t t = 0; t < T; ++t)
        if (!forbidden[t](i, j) && !clustered[t](i, j)) opts.push_back(t);
      if (!opts.empty()) {
        du.cells.push_back({i, j});
        du.options.push_back(std::move(opts));
      }
    }
  return du;
}

/// Forbids randomly chosen free cells for every type until the instance has
/// at most `max_units` decision units. Existing clusters are dropped.
inline void restrict_decision_units(Instance& inst, std::size_t max_units, std::uint64_t seed) {
  inst.clusters.reset();
  DecisionUnits du = decision_units(inst);
  std::size_t units = du.count();
  if (units <= max_units) return;
  std::vector<std::size_t> order(du.cells.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t k : order) {
    if (units <= max_units) break;
    for (std::size_t t : du.options[k]) inst.masks.forbidden[t].push_back(du.cells[k]);
    units -= du.options[k].size();
  }
  validate(inst);
}

/// Exact optimum by enumerating every feasible placement and evaluating it
/// directly (no linearization). Ties resolve to the lexicographically
/// smallest placement. Throws SolveError when units exceed `cap`.
inline SolveResult solve_oracle(const Instance& inst, std::size_t cap = 16) {
  const auto start = std::chrono::steady_clock::now();
  const DecisionUnits du = decision_units(inst);
  if (du.count() > cap)
    throw SolveError("solver.cap", "instance has " + std::to_string(du.count()) +
                                       " decision units, oracle cap is " + std::to_string(cap));
  const Normalizers norm = objective_normalizers(inst);
  const GridDims& d = inst.dims;

  Placement current = pre_existing_placement(inst);
  Mask used = inst.any_pre_existing_mask();
  SolveResult best;
  best.backend = "oracle";
  double spend = 0.0;

  auto consider = [&]() {
    const double obj = evaluate_solution(inst, current, norm).total;
    const double tie = 1e-12 * std::max(1.0, std::abs(obj));
    if (std::isnan(best.objective) || obj < best.objective - tie ||
        (obj <= best.objective + tie && current < best.placement)) {
      best.objective = obj;
      best.placement = current;
    }
  };

  // clusters first, then cells; `used` tracks one-type occupancy
  auto cells_step = [&](auto&& self, std::size_t k) -> void {
    if (k == du.cells.size()) {
      consider();
      return;
    }
    const Cell c = du.cells[k];
    self(self, k + 1);
    if (used[c]) return;
    for (std::size_t t : du.options[k]) {
      const double cost = inst.nbs[t].cell_cost(d);
      if (spend + cost > inst.budget * (1.0 + 1e-12)) continue;
      current.x[t][c] = 1;
      used[c] = 1;
      spend += cost;
      self(self, k + 1);
      spend -= cost;
      used[c] = 0;
      current.x[t][c] = 0;
    }
  };
  auto cluster_step = [&](auto&& self, std::size_t k) -> void {
    if (k == du.clusters.size()) {
      cells_step(cells_step, 0);
      return;
    }
    self(self, k + 1);
    const auto& unit = du.clusters[k];
    const double cost = inst.nbs[unit.nbs].cell_cost(d) * static_cast<double>(unit.cells->size());
    if (spend + cost > inst.budget * (1.0 + 1e-12)) return;
    for (const Cell& c : *unit.cells)
      if (used[c]) return;
    for (const Cell& c : *unit.cells) {
      current.x[unit.nbs][c] = 1;
      used[c] = 1;
    }
    spend += cost;
    self(self, k + 1);
    spend -= cost;
    for (const Cell& c : *unit.cells) {
      current.x[unit.nbs][c] = 0;
      used[c] = 0;
    }
  };
  cluster_step(cluster_step, 0);

  best.status = SolveStatus::Optimal;
  best.bound = best.objective;
  best.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return best;
}

// ---------------------------------------------------------------------------
// External solver bridge

struct ParsedSolution {
  std::string status_line;
  std::optional<double> objective;
  std::vector<double> values;  // zero for columns the file omits
  std::vector<std::string> unknown;
};

/// Parses a solution file. Accepts plain "name value" lines and CBC's
/// "index name value reduced-cost" lines; an optional first status line
/// such as "Optimal - objective value 1.5" is recorded. Unknown names are
/// collected in `unknown`.
inline ParsedSolution parse_solution(std::string_view text,
                                     const std::unordered_map<std::string, std::size_t>& columns,
                                     std::size_t column_count) {
  ParsedSolution out;
  out.values.assign(column_count, 0.0);
  std::istringstream in{std::string(text)};
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string w; ls >> w;) tok.push_back(w);
    if (tok.empty()) continue;
    if (tok[0] == "**") tok.erase(tok.begin());  // CBC flags infeasible entries
    else if (tok[0].starts_with("**")) tok[0] = tok[0].substr(2);
    if (tok.empty()) continue;

    auto is_number = [](const std::string& s, double& v) {
      char* end = nullptr;
      v = std::strtod(s.c_str(), &end);
      return end && *end == '\0' && end != s.c_str();
    };
    std::string name;
    double value = 0.0;
    double idx = 0.0;
    if (tok.size() >= 3 && is_number(tok[0], idx) && is_number(tok[2], value)) {
      name = tok[1];
    } else if (tok.size() == 2 && is_number(tok[1], value)) {
      name = tok[0];
    } else if (first) {
      out.status_line = line;
      if (auto pos = line.find("objective value"); pos != std::string::npos) {
        double v = 0.0;
        std::istringstream os(line.substr(pos + 15));
        if (os >> v) out.objective = v;
      }
      first = false;
      continue;
    } else {
      throw SolveError("solver.parse", "unrecognized solution line: " + line);
    }
    first = false;
    auto it = columns.find(name);
    if (it == columns.end()) {
      out.unknown.push_back(name);
      continue;
    }
    out.values[it->second] = value;
  }
  return out;
}

/// Decodes CBC's 12-character exact double encoding: four 16-bit groups,
/// most significant first, each written as three base-64 digits low first.
inline std::optional<double> decode_exact_double(std::string_view code) {
  if (code.size() != 12) return std::nullopt;
  auto digit = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'z') return c - 'a' + 10;
    if (c >= 'A' && c <= 'Z') return c - 'A' + 36;
    if (c == '*') return 62;
    if (c == '+') return 63;
    return -1;
  };
  std::uint64_t bits = 0;
  for (int k = 0; k < 4; ++k) {
    std::uint32_t group = 0;
    for (int n = 0; n < 3; ++n) {
      const int d = digit(code[3 * k + n]);
      if (d < 0) return std::nullopt;
      group |= static_cast<std::uint32_t>(d) << (6 * n);
    }
    if (group > 0xffff) return std::nullopt;
    bits = (bits << 16) | group;
  }
  return std::bit_cast<double>(bits);
}

/// Overlays exact values from a CBC "fixall" dump (" FX BOUND name code"
/// lines) onto `values`. Returns the number of columns updated.
inline std::size_t overlay_exact_values(std::string_view text,
                                        const std::unordered_map<std::string, std::size_t>& columns,
                                        std::vector<double>& values) {
  std::size_t updated = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string kind, bound, name, code;
    if (!(ls >> kind >> bound >> name >> code) || kind != "FX") continue;
    const auto it = columns.find(name);
    if (it == columns.end()) continue;
    std::optional<double> v = decode_exact_double(code);
    if (!v) {
      char* end = nullptr;
      const double d = std::strtod(code.c_str(), &end);
      if (end && *end == '\0' && end != code.c_str()) v = d;
    }
    if (!v) throw SolveError("solver.parse", "unrecognized value '" + code + "' for column " + name);
    values[it->second] = *v;
    ++updated;
  }
  return updated;
}

namespace detail {

inline std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) {
    if (c == '\'') q += "'\\''";
    else q += c;
  }
  return q + "'";
}

inline std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size())
    s.replace(pos, from.size(), to);
  return s;
}

/// Runs `command` through /bin/sh with output appended to `log`. Kills the
/// process group after `deadline` seconds. Returns the exit status, or -1 if
/// killed.
inline int run_command(const std::string& command, const std::filesystem::path& log, double deadline) {
  const pid_t pid = fork();
  if (pid < 0) throw SolveError("solver.spawn", "fork failed");
  if (pid == 0) {
    setpgid(0, 0);
    const std::string full = command + " >" + shell_quote(log.string()) + " 2>&1";
    execl("/bin/sh", "sh", "-c", full.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  setpgid(pid, pid);
  const auto start = std::chrono::steady_clock::now();
  int status = 0;
  for (;;) {
    const pid_t r = waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (r < 0) throw SolveError("solver.spawn", "waitpid failed");
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (elapsed > deadline) {
      kill(-pid, SIGKILL);
      waitpid(pid, &status, 0);
      return -1;
    }
    usleep(2000);
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

inline std::filesystem::path make_work_dir() {
  std::string tmpl = (std::filesystem::temp_directory_path() / "nbsopt-XXXXXX").string();
  if (!mkdtemp(tmpl.data())) throw IoError("cannot create temporary directory");
  return tmpl;
}

}  // namespace detail

inline std::string resolve_solver_command(const SolveConfig& cfg) {
  if (!cfg.command.empty()) return cfg.command;
  if (const char* env = std::getenv(kSolverCommandEnv); env && *env) return env;
  return kDefaultSolverCommand;
}

/// Exports the model, runs the external solver, and reads its solution back.
/// The returned placement is re-verified and its objective recomputed
/// directly; disagreement with the solver's column values beyond 1e-6 is an
/// error. A timeout without a usable incumbent falls back to the
/// pre-existing-only placement, which is always feasible.
inline SolveResult solve_external(const Instance& inst, const MilpModel& model, const SolveConfig& cfg) {
  if (!(cfg.time_limit > 0.0)) throw SolveError("solver.config", "time limit must be > 0");
  if (!(cfg.gap >= 0.0)) throw SolveError("solver.config", "gap must be >= 0");
  const auto start = std::chrono::steady_clock::now();
  const bool temp = cfg.work_dir.empty();
  const std::filesystem::path dir = temp ? detail::make_work_dir() : cfg.work_dir;
  std::filesystem::create_directories(dir);
  const auto model_path = dir / "model.mps";
  const auto sol_path = dir / "solution.txt";
  const auto values_path = dir / "values.txt";
  const auto log_path = dir / "solver.log";
  std::filesystem::remove(sol_path);
  std::filesystem::remove(values_path);
  export_interchange(model, model_path);

  std::string cmd = resolve_solver_command(cfg);
  cmd = detail::replace_all(cmd, "{model}", detail::shell_quote(model_path.string()));
  cmd = detail::replace_all(cmd, "{solution}", detail::shell_quote(sol_path.string()));
  cmd = detail::replace_all(cmd, "{values}", detail::shell_quote(values_path.string()));
  cmd = detail::replace_all(cmd, "{timelimit}", format_number(cfg.time_limit));
  cmd = detail::replace_all(cmd, "{gap}", format_number(cfg.gap));

  const double deadline = cfg.time_limit * 1.5 + 10.0;
  const int rc = detail::run_command(cmd, log_path, deadline);

  SolveResult res;
  res.backend = "external";
  auto finish = [&](SolveResult r) {
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (temp && !cfg.keep_files) std::filesystem::remove_all(dir);
    return r;
  };
  auto fallback = [&](std::string why) {
    SolveResult r;
    r.backend = "external";
    r.status = SolveStatus::FeasibleTimeout;
    r.placement = pre_existing_placement(inst);
    r.objective = evaluate_solution(inst, r.placement).total;
    r.message = std::move(why);
    return finish(std::move(r));
  };

  const bool killed = rc == -1;
  if (!std::filesystem::exists(sol_path)) {
    if (killed) return fallback("solver killed at the time limit before writing a solution");
    std::string tail;
    if (std::ifstream lg(log_path); lg) {
      std::ostringstream ss;
      ss << lg.rdbuf();
      tail = ss.str();
      if (tail.size() > 400) tail = tail.substr(tail.size() - 400);
    }
    if (temp && !cfg.keep_files) std::filesystem::remove_all(dir);
    throw SolveError("solver.external", "solver exited with status " + std::to_string(rc) +
                                            " and no solution file; command: " + cmd + "\n" + tail);
  }

  std::unordered_map<std::string, std::size_t> columns;
  columns.reserve(model.var_count());
  for (std::size_t k = 0; k < model.var_count(); ++k) columns.emplace(model.var_name(k), k);
  std::string text;
  {
    std::ifstream in(sol_path);
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  ParsedSolution sol = parse_solution(text, columns, model.var_count());
  if (std::ifstream vin(values_path); vin) {
    std::ostringstream ss;
    ss << vin.rdbuf();
    overlay_exact_values(ss.str(), columns, sol.values);
  }
  res.message = sol.status_line;
  if (!sol.unknown.empty())
    res.message += " (ignored " + std::to_string(sol.unknown.size()) + " unknown names, e.g. " + sol.unknown.front() + ")";

  const std::string& st = sol.status_line;
  const bool infeasible = st.find("nfeasible") != std::string::npos && st.find("Optimal") == std::string::npos;
  const bool stopped = st.find("Stopped") != std::string::npos || st.find("stopped") != std::string::npos;
  if (infeasible && !stopped) {
    // CBC also prints this when the time limit interrupts preprocessing, so
    // trust it only if the pre-existing-only placement is infeasible too
    if (check_placement(inst, pre_existing_placement(inst)).empty())
      return fallback("solver reported '" + st + "' but the pre-existing-only placement is feasible");
    res.status = SolveStatus::Infeasible;
    return finish(std::move(res));
  }

  Placement p;
  try {
    p = placement_from_values(inst, model, sol.values);
  } catch (const SolveError&) {
    if (stopped || killed) return fallback("no integral incumbent at the time limit");
    throw;
  }
  if (auto v = check_placement(inst, p, 1e-7); !v.empty()) {
    if (stopped || killed) return fallback("incumbent at the time limit violates " + v.front().family);
    if (temp && !cfg.keep_files) std::filesystem::remove_all(dir);
    throw PlacementError(std::move(v));
  }

  const double direct = evaluate_solution(inst, p).total;
  const double reported = model_objective(model, sol.values);
  if (std::abs(direct - reported) > 1e-6 * std::max(1.0, std::abs(direct))) {
    if (temp && !cfg.keep_files) std::filesystem::remove_all(dir);
    throw SolveError("solver.mismatch", "solver objective " + format_number(reported) +
                                            " differs from direct evaluation " + format_number(direct));
  }
  res.placement = std::move(p);
  res.objective = direct;
  res.values = std::move(sol.values);
  if (st.find("Optimal") != std::string::npos && !stopped) {
    res.status = SolveStatus::Optimal;
    res.bound = direct;
  } else {
    res.status = SolveStatus::FeasibleTimeout;
  }
  return finish(std::move(res));
}

inline SolveResult solve(const Instance& inst, const SolveConfig& cfg) {
  if (cfg.backend == Backend::Oracle) return solve_oracle(inst, cfg.oracle_cap);
  return solve_external(inst, build_model(inst), cfg);
}

}  // namespace nbsopt
