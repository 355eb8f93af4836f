#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "nbsopt/engine.hpp"
#include "nbsopt/error.hpp"
#include "nbsopt/instance.hpp"
#include "nbsopt/kernel.hpp"

namespace nbsopt {

enum class VarKind : std::uint8_t { X, Y, Z, ZBar, ZMax, ZAvg, Lambda, F };

/// Symbolic variable. Field meaning depends on kind:
/// X(t,i,j), Y/Z/ZBar(u,i,j), ZMax/ZAvg(u), Lambda(t,q), F(i,j).
struct VarRef {
  VarKind kind = VarKind::X;
  int a = 0;
  int b = 0;
  int c = 0;
  bool operator==(const VarRef&) const = default;
};

/// Bijection between VarRef and flat column index. Columns are laid out as
/// x | y | z | zbar | zmax | zavg | lambda | f.
class VarLayout {
 public:
  VarLayout() = default;
  VarLayout(const GridDims& d, std::size_t nbs, std::size_t measures, std::vector<std::size_t> clusters_per_nbs)
      : width_(d.width), height_(d.height), nbs_(nbs), measures_(measures),
        clusters_(std::move(clusters_per_nbs)) {
    clusters_.resize(nbs_, 0);
    const std::size_t g = cells();
    x_ = 0;
    y_ = x_ + g * nbs_;
    z_ = y_ + g * measures_;
    zbar_ = z_ + g * measures_;
    zmax_ = zbar_ + g * measures_;
    zavg_ = zmax_ + measures_;
    lambda_.resize(nbs_ + 1);
    lambda_[0] = zavg_ + measures_;
    for (std::size_t t = 0; t < nbs_; ++t) lambda_[t + 1] = lambda_[t] + clusters_[t];
    f_ = lambda_[nbs_];
    total_ = f_ + g;
  }

  std::size_t cells() const { return static_cast<std::size_t>(width_) * height_; }
  std::size_t size() const { return total_; }
  std::size_t cell(int i, int j) const { return static_cast<std::size_t>(i) * height_ + j; }

  std::size_t x(std::size_t t, int i, int j) const { return x_ + t * cells() + cell(i, j); }
  std::size_t y(std::size_t u, int i, int j) const { return y_ + u * cells() + cell(i, j); }
  std::size_t z(std::size_t u, int i, int j) const { return z_ + u * cells() + cell(i, j); }
  std::size_t zbar(std::size_t u, int i, int j) const { return zbar_ + u * cells() + cell(i, j); }
  std::size_t zmax(std::size_t u) const { return zmax_ + u; }
  std::size_t zavg(std::size_t u) const { return zavg_ + u; }
  std::size_t lambda(std::size_t t, std::size_t q) const { return lambda_[t] + q; }
  std::size_t f(int i, int j) const { return f_ + cell(i, j); }

  std::size_t index(const VarRef& r) const {
    switch (r.kind) {
      case VarKind::X: return x(r.a, r.b, r.c);
      case VarKind::Y: return y(r.a, r.b, r.c);
      case VarKind::Z: return z(r.a, r.b, r.c);
      case VarKind::ZBar: return zbar(r.a, r.b, r.c);
      case VarKind::ZMax: return zmax(r.a);
      case VarKind::ZAvg: return zavg(r.a);
      case VarKind::Lambda: return lambda(r.a, r.b);
      case VarKind::F: return f(r.a, r.b);
    }
    return total_;
  }

  VarRef ref(std::size_t k) const {
    const auto g = cells();
    auto split = [&](VarKind kind, std::size_t base) {
      const std::size_t off = k - base;
      const std::size_t cell = off % g;
      return VarRef{kind, static_cast<int>(off / g), static_cast<int>(cell / height_),
                    static_cast<int>(cell % height_)};
    };
    if (k < y_) return split(VarKind::X, x_);
    if (k < z_) return split(VarKind::Y, y_);
    if (k < zbar_) return split(VarKind::Z, z_);
    if (k < zmax_) return split(VarKind::ZBar, zbar_);
    if (k < zavg_) return {VarKind::ZMax, static_cast<int>(k - zmax_), 0, 0};
    if (k < lambda_[0]) return {VarKind::ZAvg, static_cast<int>(k - zavg_), 0, 0};
    if (k < f_) {
      std::size_t t = 0;
      while (k >= lambda_[t + 1]) ++t;
      return {VarKind::Lambda, static_cast<int>(t), static_cast<int>(k - lambda_[t]), 0};
    }
    const std::size_t cell = k - f_;
    return {VarKind::F, static_cast<int>(cell / height_), static_cast<int>(cell % height_), 0};
  }

  /// Export name, zero-based: x_t0_i1_j2, y_u0_i1_j2, zmax_u0, lambda_t3_q0, f_i1_j2, ...
  std::string name(std::size_t k) const {
    const VarRef r = ref(k);
    auto cellname = [](int i, int j) { return "_i" + std::to_string(i) + "_j" + std::to_string(j); };
    switch (r.kind) {
      case VarKind::X: return "x_t" + std::to_string(r.a) + cellname(r.b, r.c);
      case VarKind::Y: return "y_u" + std::to_string(r.a) + cellname(r.b, r.c);
      case VarKind::Z: return "z_u" + std::to_string(r.a) + cellname(r.b, r.c);
      case VarKind::ZBar: return "zbar_u" + std::to_string(r.a) + cellname(r.b, r.c);
      case VarKind::ZMax: return "zmax_u" + std::to_string(r.a);
      case VarKind::ZAvg: return "zavg_u" + std::to_string(r.a);
      case VarKind::Lambda: return "lambda_t" + std::to_string(r.a) + "_q" + std::to_string(r.b);
      case VarKind::F: return "f" + cellname(r.a, r.b);
    }
    return {};
  }

  bool is_binary(std::size_t k) const { return k < z_ || (k >= lambda_[0] && k < f_); }

  std::size_t nbs() const { return nbs_; }
  std::size_t measures() const { return measures_; }

 private:
  int width_ = 0;
  int height_ = 0;
  std::size_t nbs_ = 0;
  std::size_t measures_ = 0;
  std::vector<std::size_t> clusters_;
  std::size_t x_ = 0, y_ = 0, z_ = 0, zbar_ = 0, zmax_ = 0, zavg_ = 0, f_ = 0, total_ = 0;
  std::vector<std::size_t> lambda_;
};

enum class Sense : std::uint8_t { LessEqual, Equal, GreaterEqual };

struct Term {
  std::size_t var;
  double coef;
};

/// One row. `tag` names the constraint family; `name` is unique in the model.
struct LinearConstraint {
  std::vector<Term> terms;
  Sense sense = Sense::LessEqual;
  double rhs = 0.0;
  std::string tag;
  std::string name;
};

struct Variable {
  double lower = 0.0;
  double upper = std::numeric_limits<double>::infinity();
  bool integer = false;
};

struct MilpModel {
  VarLayout layout;
  std::vector<Variable> variables;
  std::vector<LinearConstraint> constraints;
  std::vector<Term> objective;  // minimized
  double objective_constant = 0.0;

  std::size_t var_count() const { return variables.size(); }
  std::size_t row_count() const { return constraints.size(); }
  std::string var_name(std::size_t k) const { return layout.name(k); }

  std::size_t count_tag(std::string_view tag) const {
    return static_cast<std::size_t>(std::count_if(constraints.begin(), constraints.end(),
                                                  [&](const LinearConstraint& c) { return c.tag == tag; }));
  }
};

/// Per-term scale factors that bring each objective term into [0, 1].
struct Normalizers {
  std::vector<double> peak;     // 1 / max observed
  std::vector<double> average;  // 1 / max observed
  double cost = 1.0;            // 1 / budget
  double fairness = 1.0;        // 1 / (fairness_max - fairness_min)
  double fairness_min = 0.0;
  double fairness_max = 0.0;
};

namespace detail {
inline double inverse_or_one(double v) { return v > 1e-12 ? 1.0 / v : 1.0; }
}  // namespace detail

inline Normalizers objective_normalizers(const Instance& inst) {
  Normalizers n;
  for (const UcMeasure& m : inst.measures) {
    const double s = detail::inverse_or_one(grid_max(m.observed));
    n.peak.push_back(s);
    n.average.push_back(s);
  }
  n.cost = detail::inverse_or_one(inst.budget);

  const Placement base = pre_existing_placement(inst);
  n.fairness_min = grid_sum(fairness_field(inst, base));
  n.fairness_max = n.fairness_min;
  const Mask occupied = inst.any_pre_existing_mask();
  for (std::size_t t = 0; t < inst.nbs_count(); ++t) {
    Placement full = base;
    const Mask forbidden = inst.forbidden_mask(t);
    for (int i = 0; i < inst.dims.width; ++i)
      for (int j = 0; j < inst.dims.height; ++j)
        if (!forbidden(i, j) && !occupied(i, j)) full.x[t](i, j) = 1;
    n.fairness_max = std::max(n.fairness_max, grid_sum(fairness_field(inst, full)));
  }
  n.fairness = detail::inverse_or_one(n.fairness_max - n.fairness_min);
  return n;
}

/// Big-M per measure: the kernel envelope bound, raised to delta when the
/// cap is larger so that the y = 1 branch stays feasible at z = 0.
inline double measure_big_m(const Instance& inst, std::size_t u) {
  std::vector<const Kernel*> ks;
  for (const Kernel& k : inst.kernels[u]) ks.push_back(&k);
  return std::max(compute_big_m(ks), inst.measures[u].effective_delta());
}

/// Builds the full MILP: one-type, budget, forbidden / pre-existing fixing,
/// cluster linking, convolution, big-M clamp, peak, average, and fairness rows.
inline MilpModel build_model(const Instance& inst) {
  const GridDims& d = inst.dims;
  const std::size_t T = inst.nbs_count();
  const std::size_t U = inst.measure_count();
  if (inst.kernels.size() != U || inst.fairness_kernels.size() != T)
    throw ValidationError("model.kernels", "missing kernel");
  for (const auto& row : inst.kernels)
    if (row.size() != T) throw ValidationError("model.kernels", "missing kernel");

  std::vector<std::size_t> nclusters(T, 0);
  if (inst.clusters)
    for (std::size_t t = 0; t < T && t < inst.clusters->clusters.size(); ++t)
      nclusters[t] = inst.clusters->clusters[t].size();

  MilpModel m;
  m.layout = VarLayout(d, T, U, nclusters);
  const VarLayout& L = m.layout;
  m.variables.resize(L.size());
  for (std::size_t k = 0; k < L.size(); ++k)
    if (L.is_binary(k)) m.variables[k] = {0.0, 1.0, true};
  // peak and average may be negative for fields with negative observations
  for (std::size_t u = 0; u < U; ++u) {
    m.variables[L.zmax(u)].lower = -std::numeric_limits<double>::infinity();
    m.variables[L.zavg(u)].lower = -std::numeric_limits<double>::infinity();
  }

  const std::vector<Mask> pre = pre_existing_masks(inst);
  std::vector<Mask> forbidden;
  for (std::size_t t = 0; t < T; ++t) forbidden.push_back(inst.forbidden_mask(t));
  auto cellname = [](int i, int j) { return "_i" + std::to_string(i) + "_j" + std::to_string(j); };
  auto add = [&m](std::vector<Term> terms, Sense s, double rhs, const char* tag, std::string name) {
    m.constraints.push_back({std::move(terms), s, rhs, tag, std::move(name)});
  };

  // (a) at most one type per cell
  for (int i = 0; i < d.width; ++i)
    for (int j = 0; j < d.height; ++j) {
      std::vector<Term> terms;
      for (std::size_t t = 0; t < T; ++t) terms.push_back({L.x(t, i, j), 1.0});
      add(std::move(terms), Sense::LessEqual, 1.0, "one_type", "one_type" + cellname(i, j));
    }

  // (b) budget over newly installed cells
  {
    std::vector<Term> terms;
    for (std::size_t t = 0; t < T; ++t) {
      const double c = inst.nbs[t].cell_cost(d);
      for (int i = 0; i < d.width; ++i)
        for (int j = 0; j < d.height; ++j)
          if (!pre[t](i, j)) terms.push_back({L.x(t, i, j), c});
    }
    add(std::move(terms), Sense::LessEqual, inst.budget, "budget", "budget");
  }

  // (c) forbidden and pre-existing fixing
  for (std::size_t t = 0; t < T; ++t) {
    for (const Cell& c : inst.masks.forbidden[t])
      add({{L.x(t, c.i, c.j), 1.0}}, Sense::Equal, 0.0, "forbidden",
          "forbidden_t" + std::to_string(t) + cellname(c.i, c.j));
    for (const Cell& c : inst.masks.pre_existing[t])
      add({{L.x(t, c.i, c.j), 1.0}}, Sense::Equal, 1.0, "pre_existing",
          "pre_existing_t" + std::to_string(t) + cellname(c.i, c.j));
  }

  // (d) cluster linking x = lambda
  if (inst.clusters) {
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t q = 0; q < nclusters[t]; ++q)
        for (const Cell& c : inst.clusters->clusters[t][q]) {
          if (forbidden[t][c])
            throw ValidationError("model.cluster", "cluster cell forbidden", {c});
          add({{L.x(t, c.i, c.j), 1.0}, {L.lambda(t, q), -1.0}}, Sense::Equal, 0.0, "cluster",
              "cluster_t" + std::to_string(t) + "_q" + std::to_string(q) + cellname(c.i, c.j));
        }
  }

  // window terms: coefficient of x^t at every source feeding target (i, j)
  auto window_terms = [&](std::vector<Term>& terms, const Kernel& k, std::size_t t, int i, int j,
                          const Mask* excluded) {
    for (int a = 0; a < k.width(); ++a) {
      const int si = i - k.half_width() + a;
      if (si < 0 || si >= d.width) continue;
      for (int b = 0; b < k.height(); ++b) {
        const int sj = j - k.half_height() + b;
        if (sj < 0 || sj >= d.height) continue;
        if (excluded && (*excluded)(si, sj)) continue;
        const double v = k.entries(a, b);
        if (v != 0.0) terms.push_back({L.x(t, si, sj), -v});
      }
    }
  };

  const double inv_cells = 1.0 / static_cast<double>(d.cells());
  for (std::size_t u = 0; u < U; ++u) {
    const std::string us = "_u" + std::to_string(u);
    const double delta = inst.measures[u].effective_delta();
    const double M = measure_big_m(inst, u);
    const Field& a = inst.measures[u].observed;

    // (e) z = sum of kernel windows over newly installed cells
    for (int i = 0; i < d.width; ++i)
      for (int j = 0; j < d.height; ++j) {
        std::vector<Term> terms{{L.z(u, i, j), 1.0}};
        for (std::size_t t = 0; t < T; ++t) window_terms(terms, inst.kernels[u][t], t, i, j, &pre[t]);
        add(std::move(terms), Sense::Equal, 0.0, "conv", "conv" + us + cellname(i, j));
      }

    // (f) zbar = min(z, delta), y = 1 iff z <= delta
    for (int i = 0; i < d.width; ++i)
      for (int j = 0; j < d.height; ++j) {
        const std::size_t z = L.z(u, i, j);
        const std::size_t zb = L.zbar(u, i, j);
        const std::size_t y = L.y(u, i, j);
        const std::string cn = us + cellname(i, j);
        add({{z, 1.0}, {y, M}}, Sense::LessEqual, delta + M, "bigm", "bigm1" + cn);
        add({{z, 1.0}, {y, M}}, Sense::GreaterEqual, delta, "bigm", "bigm2" + cn);
        add({{zb, 1.0}, {z, -1.0}}, Sense::LessEqual, 0.0, "bigm", "bigm3" + cn);
        add({{zb, 1.0}}, Sense::LessEqual, delta, "bigm", "bigm4" + cn);
        add({{zb, 1.0}, {z, -1.0}, {y, -M}}, Sense::GreaterEqual, -M, "bigm", "bigm5" + cn);
        add({{zb, 1.0}, {y, M}}, Sense::GreaterEqual, delta, "bigm", "bigm6" + cn);
      }

    // (g) zmax >= a - zbar
    for (int i = 0; i < d.width; ++i)
      for (int j = 0; j < d.height; ++j)
        add({{L.zmax(u), 1.0}, {L.zbar(u, i, j), 1.0}}, Sense::GreaterEqual, a(i, j), "peak",
            "peak" + us + cellname(i, j));

    // (h) zavg = mean(a - zbar)
    {
      std::vector<Term> terms{{L.zavg(u), 1.0}};
      double mean_a = 0.0;
      for (int i = 0; i < d.width; ++i)
        for (int j = 0; j < d.height; ++j) {
          terms.push_back({L.zbar(u, i, j), inv_cells});
          mean_a += a(i, j);
        }
      add(std::move(terms), Sense::Equal, mean_a * inv_cells, "average", "average" + us);
    }
  }

  // (i) f = population * fairness windows, pre-existing included
  for (int i = 0; i < d.width; ++i)
    for (int j = 0; j < d.height; ++j) {
      std::vector<Term> terms{{L.f(i, j), 1.0}};
      const double pop = inst.population(i, j);
      if (pop != 0.0) {
        for (std::size_t t = 0; t < T; ++t) window_terms(terms, inst.fairness_kernels[t], t, i, j, nullptr);
        for (std::size_t k = 1; k < terms.size(); ++k) terms[k].coef *= pop;
      }
      add(std::move(terms), Sense::Equal, 0.0, "fairness", "fairness" + cellname(i, j));
    }

  // objective
  const Normalizers n = objective_normalizers(inst);
  const ObjectiveWeights& w = inst.weights;
  for (std::size_t u = 0; u < U; ++u) {
    if (w.peak[u] != 0.0) m.objective.push_back({L.zmax(u), w.peak[u] * n.peak[u]});
    if (w.average[u] != 0.0) m.objective.push_back({L.zavg(u), w.average[u] * n.average[u]});
  }
  if (w.cost != 0.0)
    for (std::size_t t = 0; t < T; ++t) {
      const double c = w.cost * n.cost * inst.nbs[t].cell_cost(d);
      for (int i = 0; i < d.width; ++i)
        for (int j = 0; j < d.height; ++j)
          if (!pre[t](i, j)) m.objective.push_back({L.x(t, i, j), c});
    }
  if (w.fairness != 0.0) {
    for (int i = 0; i < d.width; ++i)
      for (int j = 0; j < d.height; ++j) m.objective.push_back({L.f(i, j), -w.fairness * n.fairness});
    m.objective_constant = w.fairness * n.fairness * n.fairness_min;
  }
  return m;
}

/// Value of the model objective at a full column vector.
inline double model_objective(const MilpModel& m, std::span<const double> values) {
  double v = m.objective_constant;
  for (const Term& t : m.objective) v += t.coef * values[t.var];
  return v;
}

struct RowViolation {
  std::string tag;
  std::string name;
  double amount = 0.0;
};

/// Rows, bounds, and integrality violated by more than `tol` (scaled by the
/// row's magnitude for rows).
inline std::vector<RowViolation> check_model_point(const MilpModel& m, std::span<const double> values,
                                                   double tol = 1e-6) {
  std::vector<RowViolation> out;
  for (std::size_t k = 0; k < m.var_count(); ++k) {
    const Variable& v = m.variables[k];
    const double x = values[k];
    double viol = std::max({v.lower - x, x - v.upper, 0.0});
    if (v.integer) viol = std::max(viol, std::abs(x - std::round(x)));
    if (!(viol <= tol)) out.push_back({"bound", m.var_name(k), viol});
  }
  for (const LinearConstraint& c : m.constraints) {
    double lhs = 0.0;
    double scale = std::abs(c.rhs);
    for (const Term& t : c.terms) {
      lhs += t.coef * values[t.var];
      scale = std::max(scale, std::abs(t.coef * values[t.var]));
    }
    double viol = 0.0;
    if (c.sense != Sense::GreaterEqual) viol = std::max(viol, lhs - c.rhs);
    if (c.sense != Sense::LessEqual) viol = std::max(viol, c.rhs - lhs);
    if (!(viol <= tol * std::max(1.0, scale))) out.push_back({c.tag, c.name, viol});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Direct evaluation

struct Violation {
  std::string family;
  int nbs = -1;
  Cell cell{};
  std::string message;
};

class PlacementError : public Error {
 public:
  explicit PlacementError(std::vector<Violation> v)
      : Error("model.infeasible", summarize(v)), violations_(std::move(v)) {}
  const std::vector<Violation>& violations() const { return violations_; }

 private:
  static std::string summarize(const std::vector<Violation>& v) {
    std::string s = "infeasible placement:";
    for (std::size_t k = 0; k < v.size() && k < 5; ++k) s += " [" + v[k].family + "] " + v[k].message + ";";
    return s;
  }
  std::vector<Violation> violations_;
};

/// Independent feasibility check of the placement families: shape, binary,
/// one-type, budget, forbidden, pre-existing, cluster all-or-nothing.
inline std::vector<Violation> check_placement(const Instance& inst, const Placement& p, double tol = 1e-9) {
  std::vector<Violation> out;
  const GridDims& d = inst.dims;
  const std::size_t T = inst.nbs_count();
  if (p.x.size() != T) {
    out.push_back({"shape", -1, {}, "placement has " + std::to_string(p.x.size()) + " layers"});
    return out;
  }
  for (std::size_t t = 0; t < T; ++t)
    if (p.x[t].rows() != static_cast<std::size_t>(d.width) || p.x[t].cols() != static_cast<std::size_t>(d.height)) {
      out.push_back({"shape", static_cast<int>(t), {}, "layer shape mismatch"});
      return out;
    }
  auto where = [](Cell c) { return "(" + std::to_string(c.i) + "," + std::to_string(c.j) + ")"; };
  for (int i = 0; i < d.width; ++i)
    for (int j = 0; j < d.height; ++j) {
      int used = 0;
      for (std::size_t t = 0; t < T; ++t) {
        if (p.x[t](i, j) > 1)
          out.push_back({"binary", static_cast<int>(t), {i, j}, "non-binary value at " + where({i, j})});
        used += p.x[t](i, j) ? 1 : 0;
      }
      if (used > 1) out.push_back({"one_type", -1, {i, j}, "several NBS at " + where({i, j})});
    }
  double spend = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    const Mask pre = inst.pre_existing_mask(t);
    for (int i = 0; i < d.width; ++i)
      for (int j = 0; j < d.height; ++j)
        if (p.x[t](i, j) && !pre(i, j)) spend += inst.nbs[t].cell_cost(d);
    for (const Cell& c : inst.masks.forbidden[t])
      if (p.x[t][c])
        out.push_back({"forbidden", static_cast<int>(t), c, inst.nbs[t].id + " on forbidden " + where(c)});
    for (const Cell& c : inst.masks.pre_existing[t])
      if (!p.x[t][c])
        out.push_back({"pre_existing", static_cast<int>(t), c, inst.nbs[t].id + " removed at " + where(c)});
  }
  if (spend > inst.budget * (1.0 + tol) + tol)
    out.push_back({"budget", -1, {}, "spend " + std::to_string(spend) + " exceeds budget " +
                                         std::to_string(inst.budget)});
  if (inst.clusters) {
    for (std::size_t t = 0; t < T && t < inst.clusters->clusters.size(); ++t)
      for (const Cluster& q : inst.clusters->clusters[t]) {
        std::size_t on = 0;
        for (const Cell& c : q) on += p.x[t][c] ? 1 : 0;
        if (on != 0 && on != q.size())
          out.push_back({"cluster", static_cast<int>(t), q.front(),
                         "cluster at " + where(q.front()) + " partially used"});
      }
  }
  return out;
}

/// Raw quantities and weighted normalized terms of the objective.
struct ObjectiveBreakdown {
  std::vector<double> peak;     // z_max per measure
  std::vector<double> average;  // z_avg per measure
  double cost = 0.0;            // spend on new cells
  double fairness = 0.0;        // sum of f
  std::vector<double> peak_term;
  std::vector<double> average_term;
  double cost_term = 0.0;
  double fairness_term = 0.0;  // enters the objective with a minus sign
  double total = 0.0;
};

/// Evaluates the objective of a placement directly through the kernel engine.
/// Throws PlacementError when the placement is infeasible.
inline ObjectiveBreakdown evaluate_solution(const Instance& inst, const Placement& p,
                                            const Normalizers& n) {
  if (auto v = check_placement(inst, p); !v.empty()) throw PlacementError(std::move(v));
  const GridDims& d = inst.dims;
  const ObjectiveWeights& w = inst.weights;
  ObjectiveBreakdown r;
  const std::vector<Mask> pre = pre_existing_masks(inst);
  for (std::size_t u = 0; u < inst.measure_count(); ++u) {
    const Field zbar = clamp_reduction(impact_field(p, inst.kernels[u], pre), inst.measures[u].effective_delta());
    const Field left = reduced_measure(inst.measures[u].observed, zbar);
    r.peak.push_back(grid_max(left));
    r.average.push_back(grid_sum(left) / static_cast<double>(d.cells()));
    r.peak_term.push_back(w.peak[u] * n.peak[u] * r.peak.back());
    r.average_term.push_back(w.average[u] * n.average[u] * r.average.back());
  }
  for (std::size_t t = 0; t < inst.nbs_count(); ++t)
    for (int i = 0; i < d.width; ++i)
      for (int j = 0; j < d.height; ++j)
        if (p.x[t](i, j) && !pre[t](i, j)) r.cost += inst.nbs[t].cell_cost(d);
  r.cost_term = w.cost * n.cost * r.cost;
  r.fairness = grid_sum(fairness_field(inst, p));
  r.fairness_term = w.fairness * n.fairness * (r.fairness - n.fairness_min);
  r.total = 0.0;
  for (std::size_t u = 0; u < inst.measure_count(); ++u) r.total += r.peak_term[u] + r.average_term[u];
  r.total += r.cost_term - r.fairness_term;
  return r;
}

inline ObjectiveBreakdown evaluate_solution(const Instance& inst, const Placement& p) {
  return evaluate_solution(inst, p, objective_normalizers(inst));
}

/// Full model column vector for a placement: x and lambda from the placement,
/// z/zbar/f from the engine, y = 1 where z <= delta, zmax/zavg at their
/// tight values.
inline std::vector<double> model_point(const Instance& inst, const MilpModel& m, const Placement& p) {
  const VarLayout& L = m.layout;
  const GridDims& d = inst.dims;
  std::vector<double> v(L.size(), 0.0);
  for (std::size_t t = 0; t < inst.nbs_count(); ++t)
    for (int i = 0; i < d.width; ++i)
      for (int j = 0; j < d.height; ++j) v[L.x(t, i, j)] = p.x[t](i, j);
  if (inst.clusters)
    for (std::size_t t = 0; t < inst.nbs_count() && t < inst.clusters->clusters.size(); ++t)
      for (std::size_t q = 0; q < inst.clusters->clusters[t].size(); ++q) {
        const Cell c = inst.clusters->clusters[t][q].front();
        v[L.lambda(t, q)] = p.x[t][c];
      }
  for (std::size_t u = 0; u < inst.measure_count(); ++u) {
    const double delta = inst.measures[u].effective_delta();
    const Field z = impact_field(inst, p, u);
    const Field& a = inst.measures[u].observed;
    double peak = -std::numeric_limits<double>::infinity();
    double total = 0.0;
    for (int i = 0; i < d.width; ++i)
      for (int j = 0; j < d.height; ++j) {
        const double zb = std::min(z(i, j), delta);
        v[L.z(u, i, j)] = z(i, j);
        v[L.zbar(u, i, j)] = zb;
        v[L.y(u, i, j)] = z(i, j) <= delta ? 1.0 : 0.0;
        peak = std::max(peak, a(i, j) - zb);
        total += a(i, j) - zb;
      }
    v[L.zmax(u)] = peak;
    v[L.zavg(u)] = total / static_cast<double>(d.cells());
  }
  const Field f = fairness_field(inst, p);
  for (int i = 0; i < d.width; ++i)
    for (int j = 0; j < d.height; ++j) v[L.f(i, j)] = f(i, j);
  return v;
}

/// Placement read back from x columns, rounding within `tol` of 0 or 1.
inline Placement placement_from_values(const Instance& inst, const MilpModel& m, std::span<const double> values,
                                       double tol = 1e-4) {
  Placement p = Placement::empty(inst.dims, inst.nbs_count());
  for (std::size_t t = 0; t < inst.nbs_count(); ++t)
    for (int i = 0; i < inst.dims.width; ++i)
      for (int j = 0; j < inst.dims.height; ++j) {
        const double x = values[m.layout.x(t, i, j)];
        if (std::abs(x - std::round(x)) > tol || x < -tol || x > 1.0 + tol)
          throw SolveError("solver.integrality", "x column " + m.layout.name(m.layout.x(t, i, j)) +
                                                     " is not binary: " + std::to_string(x));
        p.x[t](i, j) = x > 0.5 ? 1 : 0;
      }
  return p;
}

}  // namespace nbsopt
