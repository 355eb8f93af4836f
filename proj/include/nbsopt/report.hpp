#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "nbsopt/engine.hpp"
#include "nbsopt/error.hpp"
#include "nbsopt/instance.hpp"
#include "nbsopt/model.hpp"
#include "nbsopt/mps.hpp"
#include "nbsopt/solver.hpp"

namespace nbsopt {

/// Gini coefficient: sum_i sum_j |v_i - v_j| / (2 n^2 mean). Zero for an
/// all-zero vector. Computed on the sorted values in O(n log n).
inline double gini(std::span<const double> values) {
  if (values.empty()) throw ValidationError("report.gini", "gini of an empty vector");
  std::vector<double> v(values.begin(), values.end());
  for (double x : v)
    if (!(x >= 0.0)) throw ValidationError("report.gini", "gini requires nonnegative values");
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double total = 0.0;
  double weighted = 0.0;  // sum over sorted ranks k of (2k - n - 1) v_k
  for (std::size_t k = 0; k < v.size(); ++k) {
    total += v[k];
    weighted += (2.0 * static_cast<double>(k + 1) - n - 1.0) * v[k];
  }
  if (total == 0.0) return 0.0;
  return weighted / (n * total);
}

struct MeasureReport {
  std::string id;
  double initial_peak = 0.0;
  double final_peak = 0.0;
  double initial_average = 0.0;
  double final_average = 0.0;
  Field delta;  // observed minus final, i.e. the realized reduction
  std::size_t negative_cells = 0;  // cells where the final value drops below zero
};

struct NbsReport {
  std::string id;
  std::size_t pre_existing_cells = 0;
  std::size_t new_cells = 0;
  double spend = 0.0;
  double budget_percent = 0.0;
};

struct Report {
  std::string group;
  std::vector<MeasureReport> measures;
  std::vector<NbsReport> nbs;
  double budget = 0.0;
  double spent = 0.0;
  double fairness_initial = 0.0;
  double fairness_final = 0.0;
  double gini_initial = 0.0;
  double gini_final = 0.0;
  ObjectiveBreakdown objective;
  SolveStatus status = SolveStatus::Error;
  std::string backend;
  double wall_time = 0.0;
};

inline Report build_report(const Instance& inst, const SolveResult& result, std::string group = {}) {
  const Placement initial = pre_existing_placement(inst);
  const Placement& fin = result.placement;
  const Normalizers norm = objective_normalizers(inst);
  Report r;
  r.group = std::move(group);
  r.status = result.status;
  r.backend = result.backend;
  r.wall_time = result.wall_time;
  r.budget = inst.budget;
  r.objective = evaluate_solution(inst, fin, norm);

  const std::vector<Mask> pre = pre_existing_masks(inst);
  for (std::size_t u = 0; u < inst.measure_count(); ++u) {
    const UcMeasure& m = inst.measures[u];
    const double delta = m.effective_delta();
    const Field before = reduced_measure(m.observed, clamp_reduction(impact_field(initial, inst.kernels[u], pre), delta));
    const Field after = reduced_measure(m.observed, clamp_reduction(impact_field(fin, inst.kernels[u], pre), delta));
    MeasureReport mr;
    mr.id = m.id;
    mr.initial_peak = grid_max(before);
    mr.final_peak = grid_max(after);
    mr.initial_average = grid_sum(before) / static_cast<double>(inst.dims.cells());
    mr.final_average = grid_sum(after) / static_cast<double>(inst.dims.cells());
    mr.delta = reduced_measure(m.observed, after);
    for (double v : after.values()) mr.negative_cells += v < 0.0 ? 1 : 0;
    r.measures.push_back(std::move(mr));
  }

  for (std::size_t t = 0; t < inst.nbs_count(); ++t) {
    NbsReport nr;
    nr.id = inst.nbs[t].id;
    for (int i = 0; i < inst.dims.width; ++i)
      for (int j = 0; j < inst.dims.height; ++j) {
        if (pre[t](i, j)) ++nr.pre_existing_cells;
        else if (fin.x[t](i, j)) ++nr.new_cells;
      }
    nr.spend = static_cast<double>(nr.new_cells) * inst.nbs[t].cell_cost(inst.dims);
    nr.budget_percent = inst.budget > 0.0 ? 100.0 * nr.spend / inst.budget : 0.0;
    r.spent += nr.spend;
    r.nbs.push_back(std::move(nr));
  }

  const Field f0 = fairness_field(inst, initial);
  const Field f1 = fairness_field(inst, fin);
  r.fairness_initial = grid_sum(f0);
  r.fairness_final = grid_sum(f1);
  r.gini_initial = gini(f0.values());
  r.gini_final = gini(f1.values());
  return r;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json placement_to_json(const Instance& inst, const Placement& p) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t t = 0; t < inst.nbs_count(); ++t) {
    nlohmann::json cells = nlohmann::json::array();
    for (int i = 0; i < inst.dims.width; ++i)
      for (int k = 0; k < inst.dims.height; ++k)
        if (p.x[t](i, k)) cells.push_back(nlohmann::json::array({i, k}));
    j[inst.nbs[t].id] = std::move(cells);
  }
  return j;
}

inline Placement placement_from_json(const Instance& inst, const nlohmann::json& j) {
  Placement p = Placement::empty(inst.dims, inst.nbs_count());
  const auto cells = detail::per_nbs_cells(j, inst.nbs, "placement");
  for (std::size_t t = 0; t < cells.size(); ++t) {
    detail::check_in_grid(inst.dims, cells[t], "placement/" + inst.nbs[t].id);
    for (const Cell& c : cells[t]) p.x[t][c] = 1;
  }
  return p;
}

inline nlohmann::json objective_to_json(const Instance& inst, const ObjectiveBreakdown& o) {
  nlohmann::json peak = nlohmann::json::object();
  nlohmann::json avg = nlohmann::json::object();
  for (std::size_t u = 0; u < inst.measure_count(); ++u) {
    peak[inst.measures[u].id] = {{"value", o.peak[u]}, {"term", o.peak_term[u]}};
    avg[inst.measures[u].id] = {{"value", o.average[u]}, {"term", o.average_term[u]}};
  }
  return {{"total", o.total},
          {"peak", peak},
          {"average", avg},
          {"cost", {{"value", o.cost}, {"term", o.cost_term}}},
          {"fairness", {{"value", o.fairness}, {"term", o.fairness_term}}}};
}

/// Solve result document. Timing lives under "metadata" only.
inline nlohmann::json result_to_json(const Instance& inst, const SolveResult& r) {
  nlohmann::json j;
  j["status"] = to_string(r.status);
  j["objective"] = std::isfinite(r.objective) ? nlohmann::json(r.objective) : nlohmann::json(nullptr);
  j["bound"] = std::isfinite(r.bound) ? nlohmann::json(r.bound) : nlohmann::json(nullptr);
  j["placement"] = r.status == SolveStatus::Infeasible || r.placement.x.empty()
                       ? nlohmann::json(nullptr)
                       : placement_to_json(inst, r.placement);
  j["metadata"] = {{"backend", r.backend}, {"wall_time", r.wall_time}, {"message", r.message}};
  return j;
}

inline SolveResult result_from_json(const Instance& inst, const nlohmann::json& j) {
  SolveResult r;
  try {
    r.status = status_from_string(j.at("status").get<std::string>());
    if (!j.at("objective").is_null()) r.objective = j.at("objective").get<double>();
    if (!j.at("bound").is_null()) r.bound = j.at("bound").get<double>();
    if (!j.at("placement").is_null()) r.placement = placement_from_json(inst, j.at("placement"));
    if (auto it = j.find("metadata"); it != j.end()) {
      r.backend = it->value("backend", "");
      r.wall_time = it->value("wall_time", 0.0);
      r.message = it->value("message", "");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("result", e.what());
  }
  return r;
}

inline nlohmann::json report_to_json(const Instance& inst, const Report& r) {
  using nlohmann::json;
  json j;
  j["group"] = r.group;
  j["status"] = to_string(r.status);
  json ms = json::array();
  for (const MeasureReport& m : r.measures)
    ms.push_back({{"id", m.id},
                  {"initial_peak", m.initial_peak},
                  {"final_peak", m.final_peak},
                  {"initial_average", m.initial_average},
                  {"final_average", m.final_average},
                  {"max_reduction", grid_max(m.delta)},
                  {"negative_cells", m.negative_cells}});
  j["measures"] = std::move(ms);
  json ns = json::array();
  for (const NbsReport& n : r.nbs)
    ns.push_back({{"id", n.id},
                  {"pre_existing_cells", n.pre_existing_cells},
                  {"new_cells", n.new_cells},
                  {"spend", n.spend},
                  {"budget_percent", n.budget_percent}});
  j["nbs"] = std::move(ns);
  j["budget"] = r.budget;
  j["spent"] = r.spent;
  j["fairness"] = {{"initial", r.fairness_initial}, {"final", r.fairness_final}};
  j["gini"] = {{"initial", r.gini_initial}, {"final", r.gini_final}};
  j["objective"] = objective_to_json(inst, r.objective);
  j["metadata"] = {{"backend", r.backend}, {"wall_time", r.wall_time}};
  return j;
}

// ---------------------------------------------------------------------------
// Heatmaps

/// RFC 4180 CSV of a matrix, one grid row per line, shortest round-trip numbers.
inline std::string field_to_csv(const Field& f) {
  std::string out;
  for (std::size_t i = 0; i < f.rows(); ++i) {
    for (std::size_t j = 0; j < f.cols(); ++j) {
      if (j) out += ',';
      append_number(out, f(i, j));
    }
    out += "\r\n";
  }
  return out;
}

inline Field field_from_csv(std::string_view text) {
  std::vector<std::vector<double>> rows;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t p = 0;
    while (p <= line.size()) {
      std::size_t q = line.find(',', p);
      if (q == std::string_view::npos) q = line.size();
      const std::string cellv(line.substr(p, q - p));
      double v = 0.0;
      auto res = std::from_chars(cellv.data(), cellv.data() + cellv.size(), v);
      if (res.ec != std::errc() || res.ptr != cellv.data() + cellv.size())
        throw ParseError("csv", "bad number '" + cellv + "'");
      row.push_back(v);
      p = q + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) throw ParseError("csv", "ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) return {};
  Field f(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) f(i, j) = rows[i][j];
  return f;
}

/// Binary PGM (P5). Larger values map to darker pixels; a constant field is white.
inline std::string field_to_pgm(const Field& f, double lo, double hi) {
  std::string out = "P5\n" + std::to_string(f.cols()) + " " + std::to_string(f.rows()) + "\n255\n";
  const double span = hi - lo;
  for (double v : f.values()) {
    const double s = span > 0.0 ? (v - lo) / span : 0.0;
    out += static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * (1.0 - std::clamp(s, 0.0, 1.0)))));
  }
  return out;
}

enum class CellCategory : std::uint8_t { Unused = 0, Forbidden = 1, PreExisting = 2, New = 3 };

/// Per-NBS category map: unused, forbidden, pre-existing, or new.
inline Grid<std::uint8_t> placement_categories(const Instance& inst, const Placement& p, std::size_t t) {
  Grid<std::uint8_t> g(inst.dims.width, inst.dims.height, static_cast<std::uint8_t>(CellCategory::Unused));
  for (const Cell& c : inst.masks.forbidden[t]) g[c] = static_cast<std::uint8_t>(CellCategory::Forbidden);
  for (int i = 0; i < inst.dims.width; ++i)
    for (int j = 0; j < inst.dims.height; ++j)
      if (p.x[t](i, j)) g(i, j) = static_cast<std::uint8_t>(CellCategory::New);
  for (const Cell& c : inst.masks.pre_existing[t]) g[c] = static_cast<std::uint8_t>(CellCategory::PreExisting);
  return g;
}

namespace detail {
inline void write_file(const std::filesystem::path& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed for " + path.string());
}
}  // namespace detail

/// Writes delta_<measure>.csv/.pgm/.scale.json per measure and
/// placement_<nbs>.csv/.pgm per NBS into `dir`. Returns the written paths.
inline std::vector<std::filesystem::path> export_heatmaps(const Instance& inst, const Report& report,
                                                          const Placement& placement,
                                                          const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string());
  std::vector<std::filesystem::path> written;
  for (const MeasureReport& m : report.measures) {
    const double lo = *std::min_element(m.delta.values().begin(), m.delta.values().end());
    const double hi = grid_max(m.delta);
    const auto base = dir / ("delta_" + m.id);
    detail::write_file(base.string() + ".csv", field_to_csv(m.delta));
    detail::write_file(base.string() + ".pgm", field_to_pgm(m.delta, lo, hi));
    detail::write_file(base.string() + ".scale.json",
                       nlohmann::json{{"measure", m.id}, {"min", lo}, {"max", hi},
                                      {"mapping", "pixel = 255 * (1 - (v - min) / (max - min))"}}
                               .dump(2) + "\n");
    written.push_back(base.string() + ".csv");
    written.push_back(base.string() + ".pgm");
    written.push_back(base.string() + ".scale.json");
  }
  static constexpr unsigned char kShade[4] = {160, 64, 0, 224};  // unused, forbidden, pre-existing, new
  for (std::size_t t = 0; t < inst.nbs_count(); ++t) {
    const auto cats = placement_categories(inst, placement, t);
    std::string csv;
    std::string pgm = "P5\n" + std::to_string(cats.cols()) + " " + std::to_string(cats.rows()) + "\n255\n";
    for (std::size_t i = 0; i < cats.rows(); ++i) {
      for (std::size_t j = 0; j < cats.cols(); ++j) {
        if (j) csv += ',';
        csv += std::to_string(cats(i, j));
        pgm += static_cast<char>(kShade[cats(i, j)]);
      }
      csv += "\r\n";
    }
    const auto base = dir / ("placement_" + inst.nbs[t].id);
    detail::write_file(base.string() + ".csv", csv);
    detail::write_file(base.string() + ".pgm", pgm);
    written.push_back(base.string() + ".csv");
    written.push_back(base.string() + ".pgm");
  }
  return written;
}

// ---------------------------------------------------------------------------
// Batch statistics

struct GroupStats {
  std::string group;
  std::size_t instances = 0;
  double mean_wall_time = 0.0;
  double percent_optimal = 0.0;
  std::map<std::string, double> mean_peak_reduction;     // initial - final, per measure
  std::map<std::string, double> mean_average_reduction;  // initial - final, per measure
  std::map<std::string, double> mean_budget_percent;     // per NBS
  double mean_gini_initial = 0.0;
  double mean_gini_final = 0.0;
};

inline std::vector<GroupStats> batch_stats(std::span<const Report> reports) {
  if (reports.empty()) throw ValidationError("report.batch", "no reports");
  std::map<std::string, std::vector<const Report*>> groups;
  for (const Report& r : reports) groups[r.group].push_back(&r);
  std::vector<GroupStats> out;
  for (const auto& [name, rs] : groups) {
    GroupStats g;
    g.group = name;
    g.instances = rs.size();
    std::map<std::string, std::size_t> mcount;
    std::map<std::string, std::size_t> ncount;
    std::size_t optimal = 0;
    for (const Report* r : rs) {
      g.mean_wall_time += r->wall_time;
      optimal += r->status == SolveStatus::Optimal ? 1 : 0;
      g.mean_gini_initial += r->gini_initial;
      g.mean_gini_final += r->gini_final;
      for (const MeasureReport& m : r->measures) {
        g.mean_peak_reduction[m.id] += m.initial_peak - m.final_peak;
        g.mean_average_reduction[m.id] += m.initial_average - m.final_average;
        ++mcount[m.id];
      }
      for (const NbsReport& n : r->nbs) {
        g.mean_budget_percent[n.id] += n.budget_percent;
        ++ncount[n.id];
      }
    }
    const double n = static_cast<double>(rs.size());
    g.mean_wall_time /= n;
    g.mean_gini_initial /= n;
    g.mean_gini_final /= n;
    g.percent_optimal = 100.0 * static_cast<double>(optimal) / n;
    for (auto& [id, v] : g.mean_peak_reduction) v /= static_cast<double>(mcount[id]);
    for (auto& [id, v] : g.mean_average_reduction) v /= static_cast<double>(mcount[id]);
    for (auto& [id, v] : g.mean_budget_percent) v /= static_cast<double>(ncount[id]);
    out.push_back(std::move(g));
  }
  return out;
}

inline nlohmann::json batch_stats_to_json(const std::vector<GroupStats>& stats) {
  nlohmann::json a = nlohmann::json::array();
  for (const GroupStats& g : stats)
    a.push_back({{"group", g.group},
                 {"instances", g.instances},
                 {"percent_optimal", g.percent_optimal},
                 {"mean_peak_reduction", g.mean_peak_reduction},
                 {"mean_average_reduction", g.mean_average_reduction},
                 {"mean_budget_percent", g.mean_budget_percent},
                 {"mean_gini_initial", g.mean_gini_initial},
                 {"mean_gini_final", g.mean_gini_final},
                 {"metadata", {{"mean_wall_time", g.mean_wall_time}}}});
  return a;
}

}  // namespace nbsopt
