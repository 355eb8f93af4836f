#pragma once

// Shared fixtures and independent reference implementations for the tests.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nbsopt/nbsopt.hpp"

namespace nbsopt::test {

#ifndef NBSOPT_TEST_CBC
#define NBSOPT_TEST_CBC ""
#endif

inline std::string cbc_path() { return NBSOPT_TEST_CBC; }

inline bool have_cbc() { return !cbc_path().empty(); }

inline SolveConfig external_config(double time_limit = 60.0) {
  SolveConfig cfg;
  cfg.backend = Backend::External;
  cfg.time_limit = time_limit;
  cfg.command = cbc_path() + std::string(kDefaultSolverCommand).substr(3);
  return cfg;
}

/// Small hand-built instance with catalog kernels. Fields come from `field`
/// (default: a tilted plane), population is uniform, budget is generous.
inline Instance make_instance(int w, int h, std::vector<std::string> nbs_ids, std::vector<std::string> measure_ids,
                              std::function<double(std::size_t, int, int)> field = {}) {
  Instance inst;
  inst.dims = {w, h, catalog::kDefaultResolution};
  for (const std::string& id : nbs_ids)
    for (const auto& e : catalog::kNbs)
      if (e.id == id) inst.nbs.push_back({id, std::string(e.name), e.total_cost});
  if (!field) field = [](std::size_t u, int i, int j) { return 20.0 + 3.0 * u + i + 0.5 * j; };
  for (std::size_t u = 0; u < measure_ids.size(); ++u) {
    UcMeasure m{measure_ids[u], "", Field(w, h), std::nullopt};
    for (int i = 0; i < w; ++i)
      for (int j = 0; j < h; ++j) m.observed(i, j) = field(u, i, j);
    inst.measures.push_back(std::move(m));
  }
  for (const UcMeasure& m : inst.measures) {
    std::vector<Kernel> row;
    for (const NbsType& n : inst.nbs) row.push_back(build_kernel(default_impact_spec(m.id, n.id)));
    inst.kernels.push_back(std::move(row));
  }
  for (const NbsType& n : inst.nbs)
    inst.fairness_kernels.push_back(build_kernel(default_impact_spec(catalog::kFairness, n.id)));
  inst.masks.forbidden.assign(inst.nbs.size(), {});
  inst.masks.pre_existing.assign(inst.nbs.size(), {});
  inst.population = Field(w, h, 1.0);
  double max_cost = 0.0;
  for (const NbsType& n : inst.nbs) max_cost = std::max(max_cost, n.cell_cost(inst.dims));
  inst.budget = max_cost * w * h;
  const double wt = 1.0 / static_cast<double>(2 * inst.measures.size() + 2);
  inst.weights.peak.assign(inst.measures.size(), wt);
  inst.weights.average.assign(inst.measures.size(), wt);
  inst.weights.cost = wt;
  inst.weights.fairness = wt;
  validate(inst);
  return inst;
}

/// Synthetic instance small enough for the oracle.
inline Instance small_synthetic(std::uint64_t seed, int side, int nbs, int measures, std::size_t max_units) {
  SyntheticOptions opt;
  opt.dims = {side, side, catalog::kDefaultResolution};
  opt.nbs_count = nbs;
  opt.measure_count = measures;
  opt.forbidden_fraction = 0.3;
  opt.pre_existing_fraction = 0.1;
  Instance inst = generate_synthetic(seed, opt);
  restrict_decision_units(inst, max_units, seed);
  return inst;
}

/// Gather-form window sum: z(i,j) = sum_ab K(a,b) x(i - hw + a, j - hh + b).
inline Field window_sum(const Mask& x, const Kernel& k, const Mask* excluded = nullptr) {
  const int rows = static_cast<int>(x.rows());
  const int cols = static_cast<int>(x.cols());
  Field z(x.rows(), x.cols(), 0.0);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      double s = 0.0;
      for (int a = 0; a < k.width(); ++a)
        for (int b = 0; b < k.height(); ++b) {
          const int si = i - k.half_width() + a;
          const int sj = j - k.half_height() + b;
          if (si < 0 || sj < 0 || si >= rows || sj >= cols) continue;
          if (excluded && (*excluded)(si, sj)) continue;
          if (x(si, sj)) s += k.entries(a, b);
        }
      z(i, j) = s;
    }
  return z;
}

/// Random placement honoring one-type, forbidden, and pre-existing (budget ignored).
inline Placement random_placement(const Instance& inst, std::mt19937_64& rng, double density = 0.3) {
  Placement p = pre_existing_placement(inst);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Mask occupied = inst.any_pre_existing_mask();
  for (int i = 0; i < inst.dims.width; ++i)
    for (int j = 0; j < inst.dims.height; ++j) {
      if (occupied(i, j) || unit(rng) >= density) continue;
      std::vector<std::size_t> ok;
      for (std::size_t t = 0; t < inst.nbs_count(); ++t)
        if (!inst.forbidden_mask(t)(i, j)) ok.push_back(t);
      if (!ok.empty()) p.x[ok[std::uniform_int_distribution<std::size_t>(0, ok.size() - 1)(rng)]](i, j) = 1;
    }
  return p;
}

/// Enumerates every assignment of {none, t0, t1, ...} to every cell, keeps
/// those the checker accepts, and returns the minimum objective.
inline double brute_force_optimum(const Instance& inst) {
  const std::size_t g = inst.dims.cells();
  const std::size_t T = inst.nbs_count();
  std::vector<std::size_t> choice(g, 0);
  const Normalizers norm = objective_normalizers(inst);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    Placement p = Placement::empty(inst.dims, T);
    for (std::size_t c = 0; c < g; ++c)
      if (choice[c]) p.x[choice[c] - 1](static_cast<int>(c) / inst.dims.height, static_cast<int>(c) % inst.dims.height) = 1;
    if (check_placement(inst, p).empty()) best = std::min(best, evaluate_solution(inst, p, norm).total);
    std::size_t c = 0;
    while (c < g && ++choice[c] > T) choice[c++] = 0;
    if (c == g) break;
  }
  return best;
}

/// Minimal free-format MPS reader, written against the dialect rather than
/// the writer.
struct MpsModel {
  std::vector<std::string> row_names;
  std::map<std::string, char> row_sense;
  std::vector<std::string> col_names;
  std::map<std::string, std::size_t> col_index;
  std::map<std::string, bool> integer;
  std::map<std::string, std::map<std::string, double>> coef;  // row -> col -> value
  std::map<std::string, double> rhs;
  std::map<std::string, std::pair<double, double>> bounds;
};

inline MpsModel read_mps(const std::string& text) {
  MpsModel m;
  std::istringstream in(text);
  std::string line;
  std::string section;
  bool in_int = false;
  const double inf = std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string w; ls >> w;) tok.push_back(w);
    if (line[0] != ' ') {
      section = tok[0];
      continue;
    }
    if (section == "ROWS") {
      if (tok[0] != "N") m.row_names.push_back(tok[1]);
      m.row_sense[tok[1]] = tok[0][0];
    } else if (section == "COLUMNS") {
      if (tok.size() == 3 && tok[1] == "'MARKER'") {
        in_int = tok[2] == "'INTORG'";
        continue;
      }
      if (!m.col_index.count(tok[0])) {
        m.col_index[tok[0]] = m.col_names.size();
        m.col_names.push_back(tok[0]);
        m.integer[tok[0]] = in_int;
        m.bounds[tok[0]] = {0.0, inf};
      }
      for (std::size_t k = 1; k + 1 < tok.size(); k += 2) m.coef[tok[k]][tok[0]] += std::stod(tok[k + 1]);
    } else if (section == "RHS") {
      for (std::size_t k = 1; k + 1 < tok.size(); k += 2) m.rhs[tok[k]] = std::stod(tok[k + 1]);
    } else if (section == "BOUNDS") {
      auto& b = m.bounds.at(tok[2]);
      if (tok[0] == "BV") b = {0.0, 1.0};
      else if (tok[0] == "FR") b = {-inf, inf};
      else if (tok[0] == "MI") b.first = -inf;
      else if (tok[0] == "LO") b.first = std::stod(tok[3]);
      else if (tok[0] == "UP") b.second = std::stod(tok[3]);
    }
  }
  return m;
}

}  // namespace nbsopt::test
