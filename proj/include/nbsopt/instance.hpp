#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "nbsopt/catalog.hpp"
#include "nbsopt/error.hpp"
#include "nbsopt/grid.hpp"
#include "nbsopt/kernel.hpp"

namespace nbsopt {

struct GridDims {
  int width = 1;   // W, rows
  int height = 1;  // H, columns
  double resolution = catalog::kDefaultResolution;

  std::size_t cells() const { return static_cast<std::size_t>(width) * height; }
  double cell_area() const { return resolution * resolution; }
  bool operator==(const GridDims&) const = default;
};

struct NbsType {
  std::string id;
  std::string name;
  double cost_per_m2 = 0.0;  // currency / m^2 / yr

  double cell_cost(const GridDims& d) const { return cost_per_m2 * d.cell_area(); }
  bool operator==(const NbsType&) const = default;
};

struct UcMeasure {
  std::string id;
  std::string unit;
  Field observed;
  std::optional<double> delta;  // derived from `observed` when absent

  double effective_delta() const { return delta ? *delta : derive_delta(observed); }
  bool operator==(const UcMeasure&) const = default;
};

/// Forbidden and pre-existing cells, indexed by position in Instance::nbs.
/// Each list is kept sorted and duplicate-free.
struct Masks {
  std::vector<std::vector<Cell>> forbidden;
  std::vector<std::vector<Cell>> pre_existing;
  bool operator==(const Masks&) const = default;
};

/// Objective weights. `peak` and `average` are indexed like Instance::measures.
struct ObjectiveWeights {
  std::vector<double> peak;
  std::vector<double> average;
  double cost = 0.0;
  double fairness = 0.0;

  double total() const {
    double s = cost + fairness;
    for (double w : peak) s += w;
    for (double w : average) s += w;
    return s;
  }
  bool operator==(const ObjectiveWeights&) const = default;
};

using Cluster = std::vector<Cell>;

/// All-or-nothing placement units, one list per NBS (indexed like
/// Instance::nbs). `residual` lists eligible cells outside every cluster.
struct ClusterPartition {
  std::vector<std::vector<Cluster>> clusters;
  std::vector<std::vector<Cell>> residual;

  std::size_t cluster_count() const {
    std::size_t n = 0;
    for (const auto& c : clusters) n += c.size();
    return n;
  }
  bool operator==(const ClusterPartition& o) const { return clusters == o.clusters; }
};

struct Instance {
  GridDims dims;
  std::vector<NbsType> nbs;
  std::vector<UcMeasure> measures;
  /// kernels[u][t] for measure u, nbs t.
  std::vector<std::vector<Kernel>> kernels;
  std::vector<Kernel> fairness_kernels;
  Masks masks;
  Field population;
  double budget = 0.0;
  ObjectiveWeights weights;
  std::optional<ClusterPartition> clusters;

  std::size_t nbs_count() const { return nbs.size(); }
  std::size_t measure_count() const { return measures.size(); }

  int nbs_index(std::string_view id) const {
    for (std::size_t t = 0; t < nbs.size(); ++t)
      if (nbs[t].id == id) return static_cast<int>(t);
    return -1;
  }
  int measure_index(std::string_view id) const {
    for (std::size_t u = 0; u < measures.size(); ++u)
      if (measures[u].id == id) return static_cast<int>(u);
    return -1;
  }

  Mask forbidden_mask(std::size_t t) const {
    return mask_from_cells(dims.width, dims.height, masks.forbidden[t]);
  }
  Mask pre_existing_mask(std::size_t t) const {
    return mask_from_cells(dims.width, dims.height, masks.pre_existing[t]);
  }
  /// 1 where any NBS type already exists.
  Mask any_pre_existing_mask() const {
    Mask m(dims.width, dims.height, 0);
    for (const auto& cells : masks.pre_existing)
      for (const Cell& c : cells) m[c] = 1;
    return m;
  }

  bool operator==(const Instance&) const = default;
};

// ---------------------------------------------------------------------------
// Validation

namespace detail {

inline void sort_unique(std::vector<Cell>& cells) {
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
}

inline void check_in_grid(const GridDims& d, const std::vector<Cell>& cells,
                          const std::string& what) {
  std::vector<Cell> bad;
  for (const Cell& c : cells)
    if (c.i < 0 || c.j < 0 || c.i >= d.width || c.j >= d.height) bad.push_back(c);
  if (!bad.empty()) throw ValidationError("instance.range", what + ": cell outside the grid", bad);
}

inline void check_field_shape(const GridDims& d, const Field& f, const std::string& what) {
  if (f.rows() != static_cast<std::size_t>(d.width) ||
      f.cols() != static_cast<std::size_t>(d.height))
    throw ValidationError("instance.shape", what + ": expected " + std::to_string(d.width) + "x" +
                                                std::to_string(d.height) + " matrix");
}

}  // namespace detail

/// Residual (eligible, unclustered) cells for each NBS given its clusters.
/// Eligible means not forbidden for that NBS and not pre-existing for any.
inline std::vector<std::vector<Cell>> residual_cells(const Instance& inst,
                                                     const std::vector<std::vector<Cluster>>& clusters) {
  const Mask occupied = inst.any_pre_existing_mask();
  std::vector<std::vector<Cell>> out(inst.nbs_count());
  for (std::size_t t = 0; t < inst.nbs_count(); ++t) {
    Mask blocked = inst.forbidden_mask(t);
    if (t < clusters.size())
      for (const Cluster& q : clusters[t])
        for (const Cell& c : q) blocked[c] = 1;
    for (int i = 0; i < inst.dims.width; ++i)
      for (int j = 0; j < inst.dims.height; ++j)
        if (!blocked(i, j) && !occupied(i, j)) out[t].push_back({i, j});
  }
  return out;
}

/// Checks every instance invariant, sorts mask lists, and normalizes the
/// population to fractions summing to one. Throws ValidationError.
inline void validate(Instance& inst) {
  const GridDims& d = inst.dims;
  if (d.width < 1 || d.height < 1)
    throw ValidationError("instance.dims", "width and height must be >= 1");
  if (!(d.resolution > 0.0) || !std::isfinite(d.resolution))
    throw ValidationError("instance.dims", "resolution must be > 0");
  if (inst.nbs.empty()) throw ValidationError("instance.nbs", "at least one NBS type required");

  std::set<std::string> ids;
  for (const NbsType& n : inst.nbs) {
    if (!ids.insert(n.id).second)
      throw ValidationError("instance.nbs", "duplicate NBS id '" + n.id + "'");
    if (!(n.cost_per_m2 > 0.0) || !std::isfinite(n.cost_per_m2))
      throw ValidationError("instance.nbs", "cost of '" + n.id + "' must be > 0");
  }
  ids.clear();
  for (const UcMeasure& m : inst.measures) {
    if (!ids.insert(m.id).second)
      throw ValidationError("instance.measures", "duplicate measure id '" + m.id + "'");
    detail::check_field_shape(d, m.observed, "measure '" + m.id + "'");
    for (double v : m.observed.values())
      if (!std::isfinite(v))
        throw ValidationError("instance.measures", "measure '" + m.id + "' has non-finite values");
    if (m.delta && (!(*m.delta >= 0.0) || !std::isfinite(*m.delta)))
      throw ValidationError("instance.measures", "delta of '" + m.id + "' must be >= 0");
  }

  const std::size_t T = inst.nbs_count();
  if (inst.kernels.size() != inst.measure_count())
    throw ValidationError("instance.kernels", "missing kernels for some measure");
  for (std::size_t u = 0; u < inst.measure_count(); ++u) {
    if (inst.kernels[u].size() != T)
      throw ValidationError("instance.kernels",
                            "missing kernel for measure '" + inst.measures[u].id + "'");
    for (std::size_t t = 0; t < T; ++t)
      validate_kernel(inst.kernels[u][t], inst.measures[u].id + "/" + inst.nbs[t].id);
  }
  if (inst.fairness_kernels.size() != T)
    throw ValidationError("instance.fairness_kernels", "every NBS needs a fairness kernel");
  for (std::size_t t = 0; t < T; ++t)
    validate_kernel(inst.fairness_kernels[t], "fairness/" + inst.nbs[t].id);

  if (inst.masks.forbidden.size() > T || inst.masks.pre_existing.size() > T)
    throw ValidationError("instance.masks", "mask lists must match the NBS list");
  inst.masks.forbidden.resize(T);
  inst.masks.pre_existing.resize(T);
  Grid<int> owner(d.width, d.height, -1);
  for (std::size_t t = 0; t < T; ++t) {
    auto& f = inst.masks.forbidden[t];
    auto& e = inst.masks.pre_existing[t];
    detail::check_in_grid(d, f, "forbidden/" + inst.nbs[t].id);
    detail::check_in_grid(d, e, "pre_existing/" + inst.nbs[t].id);
    detail::sort_unique(f);
    detail::sort_unique(e);
    std::vector<Cell> both;
    std::set_intersection(f.begin(), f.end(), e.begin(), e.end(), std::back_inserter(both));
    if (!both.empty())
      throw ValidationError("instance.masks",
                            "cell both forbidden and pre-existing for '" + inst.nbs[t].id + "'",
                            both);
    std::vector<Cell> twice;
    for (const Cell& c : e) {
      if (owner[c] >= 0) twice.push_back(c);
      owner[c] = static_cast<int>(t);
    }
    if (!twice.empty())
      throw ValidationError("instance.masks", "cell pre-exists for two types", twice);
  }

  detail::check_field_shape(d, inst.population, "population");
  double total = 0.0;
  for (double v : inst.population.values()) {
    if (!std::isfinite(v) || v < 0.0)
      throw ValidationError("instance.population", "population must be finite and >= 0");
    total += v;
  }
  if (!(total > 0.0)) throw ValidationError("instance.population", "population must not be all zero");
  if (std::abs(total - 1.0) > 1e-12)
    for (double& v : inst.population.values()) v /= total;

  if (!(inst.budget >= 0.0) || !std::isfinite(inst.budget))
    throw ValidationError("instance.budget", "budget must be >= 0");

  const ObjectiveWeights& w = inst.weights;
  if (w.peak.size() != inst.measure_count() || w.average.size() != inst.measure_count())
    throw ValidationError("instance.weights", "one peak and one average weight per measure");
  auto nonneg = [](double v) { return v >= 0.0 && std::isfinite(v); };
  bool ok = nonneg(w.cost) && nonneg(w.fairness) && std::all_of(w.peak.begin(), w.peak.end(), nonneg) &&
            std::all_of(w.average.begin(), w.average.end(), nonneg);
  if (!ok) throw ValidationError("instance.weights", "weights must be >= 0");
  if (std::abs(w.total() - 1.0) > 1e-9)
    throw ValidationError("instance.weights", "weights must sum to 1");

  if (inst.clusters) {
    auto& part = *inst.clusters;
    part.clusters.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
      const Mask forbidden = inst.forbidden_mask(t);
      Mask seen(d.width, d.height, 0);
      for (Cluster& q : part.clusters[t]) {
        if (q.empty()) throw ValidationError("instance.clusters", "empty cluster");
        detail::check_in_grid(d, q, "clusters/" + inst.nbs[t].id);
        detail::sort_unique(q);
        std::vector<Cell> bad;
        for (const Cell& c : q) {
          if (forbidden[c]) bad.push_back(c);
        }
        if (!bad.empty())
          throw ValidationError("instance.clusters",
                                "cluster cell forbidden for '" + inst.nbs[t].id + "'", bad);
        for (const Cell& c : q) {
          if (seen[c]) bad.push_back(c);
          seen[c] = 1;
        }
        if (!bad.empty())
          throw ValidationError("instance.clusters", "clusters overlap", bad);
      }
    }
    part.residual = residual_cells(inst, part.clusters);
  }
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

using nlohmann::json;

inline const json& require(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) throw ParseError(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(path.empty() ? key : path + "." + key, "missing field");
  return *it;
}

inline double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ParseError(path, "expected a number");
  return j.get<double>();
}

inline int as_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ParseError(path, "expected an integer");
  return j.get<int>();
}

inline std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw ParseError(path, "expected a string");
  return j.get<std::string>();
}

inline Field matrix_from_json(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ParseError(path, "expected a nonempty array of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) throw ParseError(path, "rows must be nonempty arrays");
  Field f(j.size(), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string rp = path + "[" + std::to_string(i) + "]";
    if (!j[i].is_array() || j[i].size() != cols) throw ParseError(rp, "ragged matrix row");
    for (std::size_t k = 0; k < cols; ++k) f(i, k) = as_number(j[i][k], rp + "[" + std::to_string(k) + "]");
  }
  return f;
}

inline json matrix_to_json(const Field& f) {
  json rows = json::array();
  for (std::size_t i = 0; i < f.rows(); ++i) {
    json r = json::array();
    for (std::size_t k = 0; k < f.cols(); ++k) r.push_back(f(i, k));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<Cell> cells_from_json(const json& j, const std::string& path) {
  if (!j.is_array()) throw ParseError(path, "expected an array of [i, j] pairs");
  std::vector<Cell> out;
  out.reserve(j.size());
  for (std::size_t k = 0; k < j.size(); ++k) {
    const std::string cp = path + "[" + std::to_string(k) + "]";
    if (!j[k].is_array() || j[k].size() != 2) throw ParseError(cp, "expected [i, j]");
    out.push_back({as_int(j[k][0], cp + "[0]"), as_int(j[k][1], cp + "[1]")});
  }
  return out;
}

inline json cells_to_json(const std::vector<Cell>& cells) {
  json a = json::array();
  for (const Cell& c : cells) a.push_back(json::array({c.i, c.j}));
  return a;
}

inline Kernel kernel_from_json(const json& j, const std::string& path) {
  const json& size = require(j, "size", path);
  int w = 0;
  int h = 0;
  if (size.is_array() && size.size() == 2) {
    w = as_int(size[0], path + ".size[0]");
    h = as_int(size[1], path + ".size[1]");
  } else {
    w = h = as_int(size, path + ".size");
  }
  Kernel k{matrix_from_json(require(j, "rows", path), path + ".rows")};
  if (k.width() != w || k.height() != h)
    throw ParseError(path + ".size", "does not match the rows matrix");
  return k;
}

inline json kernel_to_json(const Kernel& k) {
  return json{{"size", json::array({k.width(), k.height()})}, {"rows", matrix_to_json(k.entries)}};
}

/// Looks up `obj[id]` for every NBS id, defaulting to an empty list.
inline std::vector<std::vector<Cell>> per_nbs_cells(const json& obj, const std::vector<NbsType>& nbs,
                                                    const std::string& path) {
  if (!obj.is_object()) throw ParseError(path, "expected an object keyed by NBS id");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = std::any_of(nbs.begin(), nbs.end(), [&](const NbsType& n) { return n.id == it.key(); });
    if (!known) throw ParseError(path + "." + it.key(), "unknown NBS id");
  }
  std::vector<std::vector<Cell>> out(nbs.size());
  for (std::size_t t = 0; t < nbs.size(); ++t) {
    auto it = obj.find(nbs[t].id);
    if (it != obj.end()) out[t] = cells_from_json(*it, path + "." + nbs[t].id);
  }
  return out;
}

}  // namespace detail

/// Parses an instance document. Throws ParseError naming the offending field;
/// does not validate invariants (see validate()).
inline Instance instance_from_json(const nlohmann::json& doc) {
  using detail::as_int;
  using detail::as_number;
  using detail::as_string;
  using detail::require;
  Instance inst;

  const auto& dims = require(doc, "dims", "");
  inst.dims.width = as_int(require(dims, "width", "dims"), "dims.width");
  inst.dims.height = as_int(require(dims, "height", "dims"), "dims.height");
  if (auto it = dims.find("resolution"); it != dims.end())
    inst.dims.resolution = as_number(*it, "dims.resolution");

  const auto& nbs = require(doc, "nbs", "");
  if (!nbs.is_array()) throw ParseError("nbs", "expected an array");
  for (std::size_t k = 0; k < nbs.size(); ++k) {
    const std::string p = "nbs[" + std::to_string(k) + "]";
    NbsType n;
    n.id = as_string(require(nbs[k], "id", p), p + ".id");
    n.name = nbs[k].contains("name") ? as_string(nbs[k]["name"], p + ".name") : n.id;
    n.cost_per_m2 = as_number(require(nbs[k], "cost_per_m2", p), p + ".cost_per_m2");
    inst.nbs.push_back(std::move(n));
  }

  const auto& measures = require(doc, "measures", "");
  if (!measures.is_array()) throw ParseError("measures", "expected an array");
  for (std::size_t k = 0; k < measures.size(); ++k) {
    const std::string p = "measures[" + std::to_string(k) + "]";
    UcMeasure m;
    m.id = as_string(require(measures[k], "id", p), p + ".id");
    m.unit = measures[k].contains("unit") ? as_string(measures[k]["unit"], p + ".unit") : "";
    m.observed = detail::matrix_from_json(require(measures[k], "field", p), p + ".field");
    if (auto it = measures[k].find("delta"); it != measures[k].end() && !it->is_null())
      m.delta = as_number(*it, p + ".delta");
    inst.measures.push_back(std::move(m));
  }

  const auto& kernels = require(doc, "kernels", "");
  if (!kernels.is_array()) throw ParseError("kernels", "expected an array");
  std::vector<std::vector<std::optional<Kernel>>> ks(inst.measures.size(),
                                                     std::vector<std::optional<Kernel>>(inst.nbs.size()));
  for (std::size_t k = 0; k < kernels.size(); ++k) {
    const std::string p = "kernels[" + std::to_string(k) + "]";
    const int u = inst.measure_index(as_string(require(kernels[k], "measure", p), p + ".measure"));
    const int t = inst.nbs_index(as_string(require(kernels[k], "nbs", p), p + ".nbs"));
    if (u < 0) throw ParseError(p + ".measure", "unknown measure id");
    if (t < 0) throw ParseError(p + ".nbs", "unknown NBS id");
    ks[u][t] = detail::kernel_from_json(kernels[k], p);
  }
  inst.kernels.resize(inst.measures.size());
  for (std::size_t u = 0; u < ks.size(); ++u)
    for (std::size_t t = 0; t < ks[u].size(); ++t) {
      if (!ks[u][t])
        throw ParseError("kernels", "missing kernel for (" + inst.measures[u].id + ", " +
                                        inst.nbs[t].id + ")");
      inst.kernels[u].push_back(std::move(*ks[u][t]));
    }

  const auto& fk = require(doc, "fairness_kernels", "");
  if (!fk.is_object()) throw ParseError("fairness_kernels", "expected an object keyed by NBS id");
  for (const NbsType& n : inst.nbs) {
    auto it = fk.find(n.id);
    if (it == fk.end()) throw ParseError("fairness_kernels." + n.id, "missing field");
    inst.fairness_kernels.push_back(detail::kernel_from_json(*it, "fairness_kernels." + n.id));
  }

  inst.masks.forbidden = detail::per_nbs_cells(require(doc, "forbidden", ""), inst.nbs, "forbidden");
  inst.masks.pre_existing =
      detail::per_nbs_cells(require(doc, "pre_existing", ""), inst.nbs, "pre_existing");
  inst.population = detail::matrix_from_json(require(doc, "population", ""), "population");
  inst.budget = as_number(require(doc, "budget", ""), "budget");

  const auto& w = require(doc, "weights", "");
  const auto& peak = require(w, "peak", "weights");
  const auto& avg = require(w, "average", "weights");
  for (const UcMeasure& m : inst.measures) {
    inst.weights.peak.push_back(as_number(require(peak, m.id.c_str(), "weights.peak"), "weights.peak." + m.id));
    inst.weights.average.push_back(
        as_number(require(avg, m.id.c_str(), "weights.average"), "weights.average." + m.id));
  }
  inst.weights.cost = as_number(require(w, "cost", "weights"), "weights.cost");
  inst.weights.fairness = as_number(require(w, "fairness", "weights"), "weights.fairness");

  if (auto it = doc.find("clusters"); it != doc.end() && !it->is_null()) {
    if (!it->is_object()) throw ParseError("clusters", "expected an object keyed by NBS id or null");
    ClusterPartition part;
    part.clusters.resize(inst.nbs.size());
    for (auto c = it->begin(); c != it->end(); ++c) {
      const int t = inst.nbs_index(c.key());
      if (t < 0) throw ParseError("clusters." + c.key(), "unknown NBS id");
      if (!c->is_array()) throw ParseError("clusters." + c.key(), "expected a list of clusters");
      for (std::size_t q = 0; q < c->size(); ++q)
        part.clusters[t].push_back(
            detail::cells_from_json((*c)[q], "clusters." + c.key() + "[" + std::to_string(q) + "]"));
    }
    inst.clusters = std::move(part);
  }
  return inst;
}

inline nlohmann::json instance_to_json(const Instance& inst) {
  using nlohmann::json;
  json doc;
  doc["dims"] = {{"width", inst.dims.width}, {"height", inst.dims.height},
                 {"resolution", inst.dims.resolution}};
  doc["nbs"] = json::array();
  for (const NbsType& n : inst.nbs)
    doc["nbs"].push_back({{"id", n.id}, {"name", n.name}, {"cost_per_m2", n.cost_per_m2}});
  doc["measures"] = json::array();
  for (const UcMeasure& m : inst.measures) {
    json jm{{"id", m.id}, {"unit", m.unit}, {"field", detail::matrix_to_json(m.observed)}};
    jm["delta"] = m.delta ? json(*m.delta) : json(nullptr);
    doc["measures"].push_back(std::move(jm));
  }
  doc["kernels"] = json::array();
  for (std::size_t u = 0; u < inst.kernels.size(); ++u)
    for (std::size_t t = 0; t < inst.kernels[u].size(); ++t) {
      json jk = detail::kernel_to_json(inst.kernels[u][t]);
      jk["measure"] = inst.measures[u].id;
      jk["nbs"] = inst.nbs[t].id;
      doc["kernels"].push_back(std::move(jk));
    }
  doc["fairness_kernels"] = json::object();
  for (std::size_t t = 0; t < inst.fairness_kernels.size(); ++t)
    doc["fairness_kernels"][inst.nbs[t].id] = detail::kernel_to_json(inst.fairness_kernels[t]);
  doc["forbidden"] = json::object();
  doc["pre_existing"] = json::object();
  for (std::size_t t = 0; t < inst.nbs.size(); ++t) {
    doc["forbidden"][inst.nbs[t].id] =
        detail::cells_to_json(t < inst.masks.forbidden.size() ? inst.masks.forbidden[t] : std::vector<Cell>{});
    doc["pre_existing"][inst.nbs[t].id] = detail::cells_to_json(
        t < inst.masks.pre_existing.size() ? inst.masks.pre_existing[t] : std::vector<Cell>{});
  }
  doc["population"] = detail::matrix_to_json(inst.population);
  doc["budget"] = inst.budget;
  json peak = json::object();
  json avg = json::object();
  for (std::size_t u = 0; u < inst.measures.size(); ++u) {
    peak[inst.measures[u].id] = inst.weights.peak[u];
    avg[inst.measures[u].id] = inst.weights.average[u];
  }
  doc["weights"] = {{"peak", peak}, {"average", avg}, {"cost", inst.weights.cost},
                    {"fairness", inst.weights.fairness}};
  if (inst.clusters) {
    json jc = json::object();
    for (std::size_t t = 0; t < inst.nbs.size(); ++t) {
      json list = json::array();
      if (t < inst.clusters->clusters.size())
        for (const Cluster& q : inst.clusters->clusters[t]) list.push_back(detail::cells_to_json(q));
      jc[inst.nbs[t].id] = std::move(list);
    }
    doc["clusters"] = std::move(jc);
  } else {
    doc["clusters"] = nullptr;
  }
  return doc;
}

inline Instance parse_instance(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("<document>", e.what());
  }
  Instance inst = instance_from_json(doc);
  validate(inst);
  return inst;
}

inline Instance load_instance(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_instance(ss.str());
}

inline std::string dump_instance(const Instance& inst) { return instance_to_json(inst).dump() + "\n"; }

inline void save_instance(const Instance& inst, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << dump_instance(inst);
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Synthetic instances

struct SyntheticOptions {
  GridDims dims;
  int nbs_count = 4;
  int measure_count = 4;
  double forbidden_fraction = 0.3;
  double pre_existing_fraction = 0.05;
};

namespace detail {

struct FieldScale {
  double base;
  double amplitude;
  double noise;
};

inline FieldScale field_scale(std::string_view measure) {
  if (measure == "TempMax") return {24.0, 11.0, 0.6};
  if (measure == "TempMin") return {14.0, 10.0, 0.5};
  if (measure == "PM2.5") return {6.0, 26.0, 1.0};
  if (measure == "PM10") return {2.0, 60.0, 2.0};
  return {1.0, 10.0, 0.5};
}

/// Sum of a few random Gaussian bumps plus uniform noise, clipped at zero.
inline Field smooth_surface(std::mt19937_64& rng, const GridDims& d, const FieldScale& s) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int bumps = 2 + static_cast<int>(unit(rng) * 3.0);
  struct Bump {
    double ci, cj, sigma, height;
  };
  std::vector<Bump> bs;
  const double extent = std::max(d.width, d.height);
  for (int b = 0; b < bumps; ++b)
    bs.push_back({unit(rng) * d.width, unit(rng) * d.height, (0.15 + 0.35 * unit(rng)) * extent,
                  (0.4 + 0.6 * unit(rng)) * s.amplitude});
  Field f(d.width, d.height);
  for (int i = 0; i < d.width; ++i)
    for (int j = 0; j < d.height; ++j) {
      double v = s.base;
      for (const Bump& b : bs) {
        const double di = i - b.ci;
        const double dj = j - b.cj;
        v += b.height * std::exp(-(di * di + dj * dj) / (2.0 * b.sigma * b.sigma));
      }
      v += (unit(rng) - 0.5) * 2.0 * s.noise;
      f(i, j) = std::max(0.0, v);
    }
  return f;
}

template <typename Catalog>
std::vector<std::size_t> pick_subset(std::mt19937_64& rng, const Catalog& items, int count) {
  std::vector<std::size_t> idx(items.size());
  for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(count));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace detail

/// Deterministic synthetic instance drawn from the default catalog.
/// Each cell is pre-existing for one random type with probability
/// `pre_existing_fraction`, forbidden for all types with probability
/// `forbidden_fraction`, and free otherwise.
inline Instance generate_synthetic(std::uint64_t seed, const SyntheticOptions& opt) {
  const double fb = opt.forbidden_fraction;
  const double pe = opt.pre_existing_fraction;
  if (!(fb >= 0.0 && fb <= 1.0 && pe >= 0.0 && pe <= 1.0) || fb + pe > 1.0 + 1e-12)
    throw ValidationError("instance.generate", "fractions must lie in [0,1] and sum to <= 1");
  if (opt.nbs_count < 1 || opt.nbs_count > static_cast<int>(catalog::kNbs.size()))
    throw ValidationError("instance.generate", "nbs count must be in [1, 4]");
  if (opt.measure_count < 0 || opt.measure_count > static_cast<int>(catalog::kMeasures.size()))
    throw ValidationError("instance.generate", "measure count must be in [0, 4]");
  if (opt.dims.width < 1 || opt.dims.height < 1)
    throw ValidationError("instance.generate", "grid dimensions must be >= 1");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Instance inst;
  inst.dims = opt.dims;

  for (std::size_t k : detail::pick_subset(rng, catalog::kNbs, opt.nbs_count)) {
    const auto& e = catalog::kNbs[k];
    inst.nbs.push_back({std::string(e.id), std::string(e.name), e.total_cost});
  }
  for (std::size_t k : detail::pick_subset(rng, catalog::kMeasures, opt.measure_count)) {
    const auto& e = catalog::kMeasures[k];
    UcMeasure m{std::string(e.id), std::string(e.unit), {}, std::nullopt};
    m.observed = detail::smooth_surface(rng, inst.dims, detail::field_scale(e.id));
    m.delta = derive_delta(m.observed);
    inst.measures.push_back(std::move(m));
  }

  for (const UcMeasure& m : inst.measures) {
    std::vector<Kernel> row;
    for (const NbsType& n : inst.nbs) row.push_back(build_kernel(default_impact_spec(m.id, n.id)));
    inst.kernels.push_back(std::move(row));
  }
  for (const NbsType& n : inst.nbs)
    inst.fairness_kernels.push_back(build_kernel(default_impact_spec(catalog::kFairness, n.id)));

  const std::size_t T = inst.nbs.size();
  inst.masks.forbidden.assign(T, {});
  inst.masks.pre_existing.assign(T, {});
  std::uniform_int_distribution<std::size_t> pick_type(0, T - 1);
  for (int i = 0; i < inst.dims.width; ++i)
    for (int j = 0; j < inst.dims.height; ++j) {
      const double r = unit(rng);
      const std::size_t t = pick_type(rng);
      if (r < pe) {
        inst.masks.pre_existing[t].push_back({i, j});
      } else if (r < pe + fb) {
        for (auto& f : inst.masks.forbidden) f.push_back({i, j});
      }
    }

  inst.population = detail::smooth_surface(rng, inst.dims, {0.2, 5.0, 0.2});

  double max_cost = 0.0;
  for (const NbsType& n : inst.nbs) max_cost = std::max(max_cost, n.cell_cost(inst.dims));
  const double fraction = 0.30 + 0.20 * unit(rng);
  inst.budget = fraction * max_cost * static_cast<double>(inst.dims.cells());

  const double w = 1.0 / static_cast<double>(2 * inst.measures.size() + 2);
  inst.weights.peak.assign(inst.measures.size(), w);
  inst.weights.average.assign(inst.measures.size(), w);
  inst.weights.cost = w;
  inst.weights.fairness = w;

  validate(inst);
  return inst;
}

/// Square grid side for a size label (xs, s, m, l).
inline int size_class_side(std::string_view label) {
  for (const auto& s : catalog::kSizes)
    if (s.label == label) return s.side;
  throw ValidationError("instance.size", "unknown size label '" + std::string(label) + "'");
}

/// Non-overlapping tile x tile windows in row-major order; trailing partial
/// tiles are dropped.
template <typename T>
std::vector<Grid<T>> split_grid(const Grid<T>& field, std::size_t tile) {
  std::vector<Grid<T>> out;
  if (tile == 0) throw ValidationError("instance.split", "tile side must be >= 1");
  for (std::size_t r0 = 0; r0 + tile <= field.rows(); r0 += tile)
    for (std::size_t c0 = 0; c0 + tile <= field.cols(); c0 += tile) {
      Grid<T> sub(tile, tile);
      for (std::size_t a = 0; a < tile; ++a)
        for (std::size_t b = 0; b < tile; ++b) sub(a, b) = field(r0 + a, c0 + b);
      out.push_back(std::move(sub));
    }
  return out;
}

}  // namespace nbsopt
