// nbsopt command-line interface.
//
// Exit codes: 0 ok, 1 usage, 2 validation, 3 solve failure, 4 IO.
// Failures print one JSON line {"error": {...}} on stderr.

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nbsopt/nbsopt.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nbsopt;

namespace {

#ifndef NBSOPT_DEFAULT_CBC
#define NBSOPT_DEFAULT_CBC "cbc"
#endif

enum ExitCode { kOk = 0, kUsage = 1, kValidation = 2, kSolve = 3, kIo = 4 };

int report_error(const std::string& code, const std::string& message, const std::string& field = {}) {
  json e{{"code", code}, {"message", message}};
  if (!field.empty()) e["field"] = field;
  std::cerr << json{{"error", e}}.dump() << "\n";
  if (code == "io") return kIo;
  if (code.starts_with("solver.") || code == "model.infeasible") return kSolve;
  if (code == "usage") return kUsage;
  return kValidation;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("write failed for " + p.string());
}

json parse_json_file(const fs::path& p, const std::string& what) {
  try {
    return json::parse(read_text(p));
  } catch (const json::parse_error& e) {
    throw ParseError(what, e.what());
  }
}

struct GenArgs {
  std::uint64_t seed = 1;
  std::string size;
  int width = 0;
  int height = 0;
  double resolution = catalog::kDefaultResolution;
  int nbs = 4;
  int measures = 4;
  double forbidden = 0.3;
  double pre_existing = 0.05;
  std::size_t max_units = 0;
  bool cluster = false;
  std::size_t cluster_min = 5;
  std::size_t cluster_max = 50;
};

void add_gen_options(CLI::App* cmd, GenArgs& g) {
  cmd->add_option("--seed", g.seed, "Random seed (the only entropy source)");
  cmd->add_option("--size", g.size, "Size class: xs=50, s=100, m=200, l=300 cells per side")
      ->check(CLI::IsMember({"xs", "s", "m", "l"}));
  cmd->add_option("--width", g.width, "Grid width W (overrides --size)")->check(CLI::PositiveNumber);
  cmd->add_option("--height", g.height, "Grid height H (overrides --size)")->check(CLI::PositiveNumber);
  cmd->add_option("--resolution", g.resolution, "Meters per cell side");
  cmd->add_option("--nbs", g.nbs, "Number of NBS types drawn from the catalog")->check(CLI::Range(1, 4));
  cmd->add_option("--measures", g.measures, "Number of measures drawn from the catalog")->check(CLI::Range(0, 4));
  cmd->add_option("--forbidden", g.forbidden, "Fraction of cells forbidden for every type");
  cmd->add_option("--pre-existing", g.pre_existing, "Fraction of cells with a pre-existing NBS");
  cmd->add_option("--max-units", g.max_units, "Forbid extra cells until at most this many decision units remain");
  cmd->add_flag("--cluster", g.cluster, "Build Urban Park clusters after generation");
  cmd->add_option("--cluster-min", g.cluster_min, "Smallest cluster size");
  cmd->add_option("--cluster-max", g.cluster_max, "Largest cluster size");
}

Instance generate_from(const GenArgs& g, std::uint64_t seed) {
  SyntheticOptions opt;
  int side = g.size.empty() ? 50 : size_class_side(g.size);
  opt.dims.width = g.width > 0 ? g.width : side;
  opt.dims.height = g.height > 0 ? g.height : side;
  opt.dims.resolution = g.resolution;
  opt.nbs_count = g.nbs;
  opt.measure_count = g.measures;
  opt.forbidden_fraction = g.forbidden;
  opt.pre_existing_fraction = g.pre_existing;
  Instance inst = generate_synthetic(seed, opt);
  if (g.max_units > 0) restrict_decision_units(inst, g.max_units, seed);
  if (g.cluster && inst.nbs_index("UP") >= 0) {
    inst.clusters = build_partition(inst, {"UP"}, {g.cluster_min, g.cluster_max});
    validate(inst);
  }
  return inst;
}

struct SolveArgs {
  std::string backend = "oracle";
  double time_limit = 1800.0;
  double gap = 0.0;
  std::string solver_cmd;
  std::size_t cap = 16;
  std::string keep_dir;
};

void add_solve_options(CLI::App* cmd, SolveArgs& s) {
  cmd->add_option("--backend", s.backend, "oracle or external")->check(CLI::IsMember({"oracle", "external"}));
  cmd->add_option("--timelimit", s.time_limit, "External solver time limit in seconds")->check(CLI::PositiveNumber);
  cmd->add_option("--gap", s.gap, "Relative optimality gap passed to the solver")->check(CLI::NonNegativeNumber);
  cmd->add_option("--solver-cmd", s.solver_cmd,
                  std::string("Solver command template with {model} {solution} {values} {timelimit} {gap}; "
                              "falls back to $") + kSolverCommandEnv);
  cmd->add_option("--cap", s.cap, "Oracle limit on decision units");
  cmd->add_option("--keep-dir", s.keep_dir, "Keep model, solution, and solver log in this directory");
}

SolveConfig config_from(const SolveArgs& s) {
  SolveConfig cfg;
  cfg.backend = s.backend == "external" ? Backend::External : Backend::Oracle;
  cfg.time_limit = s.time_limit;
  cfg.gap = s.gap;
  cfg.oracle_cap = s.cap;
  cfg.command = s.solver_cmd;
  if (cfg.command.empty() && !std::getenv(kSolverCommandEnv)) {
    std::string def = kDefaultSolverCommand;
    cfg.command = std::string(NBSOPT_DEFAULT_CBC) + def.substr(3);  // swap the leading "cbc"
  }
  if (!s.keep_dir.empty()) {
    cfg.work_dir = s.keep_dir;
    cfg.keep_files = true;
  }
  return cfg;
}

json kernel_set_json() {
  json out{{"version", std::string(catalog::kVersion)}, {"kernels", json::array()}};
  for (const auto& e : catalog::kKernels) {
    const Kernel k = build_kernel({e.center, e.edge, e.size});
    out["kernels"].push_back({{"measure", std::string(e.measure)},
                              {"nbs", std::string(e.nbs)},
                              {"size", json::array({k.width(), k.height()})},
                              {"edge", e.edge},
                              {"center", e.center},
                              {"rows", detail::matrix_to_json(k.entries)}});
  }
  return out;
}

json instance_summary(const Instance& inst) {
  json s{{"width", inst.dims.width},
         {"height", inst.dims.height},
         {"resolution", inst.dims.resolution},
         {"budget", inst.budget},
         {"decision_units", decision_units(inst).count()}};
  for (const NbsType& n : inst.nbs) s["nbs"].push_back(n.id);
  s["measures"] = json::array();
  for (const UcMeasure& m : inst.measures)
    s["measures"].push_back({{"id", m.id}, {"delta", m.effective_delta()}, {"max", grid_max(m.observed)}});
  s["clusters"] = inst.clusters ? inst.clusters->cluster_count() : 0;
  return s;
}

struct BenchItem {
  Report report;
  std::string error;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal placement of nature-based solutions on urban grids"};
  app.set_config("--config", "", "INI/TOML file mirroring the command-line flags (flags win)");
  app.require_subcommand(1);

  GenArgs gen;
  std::string out_path;
  auto* c_gen = app.add_subcommand("gen", "Write a synthetic instance");
  add_gen_options(c_gen, gen);
  c_gen->add_option("--out", out_path, "Output instance file")->required();

  std::string instance_path;
  auto* c_validate = app.add_subcommand("validate", "Check an instance file");
  c_validate->add_option("instance,--instance", instance_path, "Instance file")->required();

  auto* c_kernels = app.add_subcommand("kernels", "Print the default kernel set");

  ClusterOptions copt;
  std::vector<std::string> cluster_nbs;
  auto* c_cluster = app.add_subcommand("cluster", "Annotate an instance with cluster partitions");
  c_cluster->add_option("instance,--instance", instance_path, "Instance file")->required();
  c_cluster->add_option("--out", out_path, "Output instance file")->required();
  c_cluster->add_option("--min", copt.min_size, "Smallest cluster size");
  c_cluster->add_option("--max", copt.max_size, "Largest cluster size");
  c_cluster->add_option("--nbs", cluster_nbs, "NBS ids to cluster (default UP)");

  auto* c_build = app.add_subcommand("build", "Write the MILP as an MPS file");
  c_build->add_option("instance,--instance", instance_path, "Instance file")->required();
  c_build->add_option("--out", out_path, "Output MPS file")->required();

  SolveArgs sargs;
  auto* c_solve = app.add_subcommand("solve", "Solve an instance");
  c_solve->add_option("instance,--instance", instance_path, "Instance file")->required();
  c_solve->add_option("--out", out_path, "Result file (stdout when omitted)");
  add_solve_options(c_solve, sargs);

  std::string result_path;
  std::string group;
  auto* c_report = app.add_subcommand("report", "Build the report and heatmaps for a solve result");
  c_report->add_option("instance,--instance", instance_path, "Instance file")->required();
  c_report->add_option("--result", result_path, "Result file from solve")->required();
  c_report->add_option("--out", out_path, "Output directory")->required();
  c_report->add_option("--group", group, "Group label used by batch statistics");

  GenArgs bgen;
  SolveArgs bsolve;
  std::size_t count = 10;
  unsigned jobs = 1;
  auto* c_bench = app.add_subcommand("bench", "Generate and solve a seeded suite; write batch statistics");
  add_gen_options(c_bench, bgen);
  add_solve_options(c_bench, bsolve);
  c_bench->add_option("--count", count, "Number of instances");
  c_bench->add_option("--jobs", jobs, "Concurrent solves")->check(CLI::PositiveNumber);
  c_bench->add_option("--out", out_path, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Error& e) {
    return report_error("usage", e.what());
  }

  try {
    if (*c_gen) {
      const Instance inst = generate_from(gen, gen.seed);
      save_instance(inst, out_path);
      std::cout << instance_summary(inst).dump() << "\n";
    } else if (*c_validate) {
      const Instance inst = load_instance(instance_path);
      std::cout << instance_summary(inst).dump() << "\n";
    } else if (*c_kernels) {
      std::cout << kernel_set_json().dump(2) << "\n";
    } else if (*c_cluster) {
      Instance inst = load_instance(instance_path);
      if (cluster_nbs.empty()) cluster_nbs.push_back("UP");
      inst.clusters = build_partition(inst, cluster_nbs, copt);
      validate(inst);
      save_instance(inst, out_path);
      std::cout << instance_summary(inst).dump() << "\n";
    } else if (*c_build) {
      const Instance inst = load_instance(instance_path);
      const MilpModel m = build_model(inst);
      export_interchange(m, out_path);
      std::cout << json{{"columns", m.var_count()}, {"rows", m.row_count()}}.dump() << "\n";
    } else if (*c_solve) {
      const Instance inst = load_instance(instance_path);
      const SolveResult r = solve(inst, config_from(sargs));
      const std::string text = result_to_json(inst, r).dump(2) + "\n";
      if (out_path.empty()) std::cout << text;
      else write_text(out_path, text);
      if (r.status == SolveStatus::Infeasible || r.status == SolveStatus::Error)
        return report_error("solver.status", "solver returned " + to_string(r.status));
    } else if (*c_report) {
      const Instance inst = load_instance(instance_path);
      const SolveResult r = result_from_json(inst, parse_json_file(result_path, "result"));
      if (r.placement.x.empty()) return report_error("solver.status", "result has no placement");
      const Report rep = build_report(inst, r, group);
      fs::create_directories(out_path);
      write_text(fs::path(out_path) / "report.json", report_to_json(inst, rep).dump(2) + "\n");
      export_heatmaps(inst, rep, r.placement, out_path);
    } else if (*c_bench) {
      std::vector<BenchItem> items(count);
      std::atomic<std::size_t> next{0};
      const SolveConfig base = config_from(bsolve);
      const std::string label = bgen.size.empty() ? std::to_string(bgen.width > 0 ? bgen.width : 50) + "x" +
                                                        std::to_string(bgen.height > 0 ? bgen.height : 50)
                                                  : bgen.size;
      auto worker = [&]() {
        for (std::size_t k = next++; k < count; k = next++) {
          const fs::path dir = fs::path(out_path) / ("instance_" + std::to_string(k));
          try {
            fs::create_directories(dir);
            const Instance inst = generate_from(bgen, bgen.seed + k);
            save_instance(inst, dir / "instance.json");
            SolveConfig cfg = base;
            if (cfg.backend == Backend::External) {
              cfg.work_dir = dir / "solver";
              cfg.keep_files = true;
            }
            const SolveResult r = solve(inst, cfg);
            write_text(dir / "result.json", result_to_json(inst, r).dump(2) + "\n");
            if (r.placement.x.empty()) throw SolveError("solver.status", "no placement");
            items[k].report = build_report(inst, r, label);
            write_text(dir / "report.json", report_to_json(inst, items[k].report).dump(2) + "\n");
          } catch (const std::exception& e) {
            items[k].error = e.what();
          }
        }
      };
      std::vector<std::thread> pool;
      for (unsigned w = 0; w < std::max(1u, jobs); ++w) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
      std::vector<Report> ok;
      json failures = json::array();
      for (std::size_t k = 0; k < count; ++k) {
        if (items[k].error.empty()) ok.push_back(items[k].report);
        else failures.push_back({{"instance", k}, {"error", items[k].error}});
      }
      if (ok.empty()) return report_error("solver.bench", "every instance failed: " + failures.dump());
      json summary{{"groups", batch_stats_to_json(batch_stats(ok))}, {"failures", failures}};
      write_text(fs::path(out_path) / "summary.json", summary.dump(2) + "\n");
      std::cout << summary.dump() << "\n";
      if (!failures.empty()) return kSolve;
    }
  } catch (const ParseError& e) {
    return report_error(e.code(), e.what(), e.field());
  } catch (const Error& e) {
    return report_error(e.code(), e.what());
  } catch (const fs::filesystem_error& e) {
    return report_error("io", e.what());
  } catch (const std::exception& e) {
    return report_error("internal", e.what());
  }
  return kOk;
}
