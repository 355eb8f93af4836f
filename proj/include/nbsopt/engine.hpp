#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "nbsopt/error.hpp"
#include "nbsopt/grid.hpp"
#include "nbsopt/instance.hpp"
#include "nbsopt/kernel.hpp"

namespace nbsopt {

/// Binary installation map per NBS type, indexed like Instance::nbs.
struct Placement {
  std::vector<Mask> x;

  static Placement empty(const GridDims& d, std::size_t nbs_count) {
    return Placement{std::vector<Mask>(nbs_count, Mask(d.width, d.height, 0))};
  }
  bool operator==(const Placement&) const = default;
  bool operator<(const Placement& o) const {
    for (std::size_t t = 0; t < x.size() && t < o.x.size(); ++t) {
      const auto a = x[t].values();
      const auto b = o.x[t].values();
      if (auto c = std::lexicographical_compare_three_way(a.begin(), a.end(), b.begin(), b.end()); c != 0)
        return c < 0;
    }
    return x.size() < o.x.size();
  }
};

/// The placement that installs exactly the pre-existing NBS.
inline Placement pre_existing_placement(const Instance& inst) {
  Placement p = Placement::empty(inst.dims, inst.nbs_count());
  for (std::size_t t = 0; t < inst.nbs_count(); ++t)
    for (const Cell& c : inst.masks.pre_existing[t]) p.x[t][c] = 1;
  return p;
}

/// Accumulates the centered cross-correlation of `x` with `k` into `out`.
/// Source cells outside the grid contribute nothing; so do source cells
/// flagged in `excluded` when given.
template <typename MaskT>
void accumulate_window(Field& out, const Grid<MaskT>& x, const Kernel& k,
                       const Grid<MaskT>* excluded = nullptr) {
  const int rows = static_cast<int>(x.rows());
  const int cols = static_cast<int>(x.cols());
  const int hw = k.half_width();
  const int hh = k.half_height();
  // scatter from each installed source instead of gathering at each target
  for (int si = 0; si < rows; ++si) {
    for (int sj = 0; sj < cols; ++sj) {
      if (!x(si, sj)) continue;
      if (excluded && (*excluded)(si, sj)) continue;
      const double weight = static_cast<double>(x(si, sj));
      // source (si, sj) sits at kernel entry (a, b) of target (si + hw - a, sj + hh - b)
      for (int a = 0; a < k.width(); ++a) {
        const int ti = si + hw - a;
        if (ti < 0 || ti >= rows) continue;
        for (int b = 0; b < k.height(); ++b) {
          const int tj = sj + hh - b;
          if (tj < 0 || tj >= cols) continue;
          out(ti, tj) += weight * k.entries(a, b);
        }
      }
    }
  }
}

/// Raw impact z for one measure: sum over types of the kernel window sum of
/// newly installed cells. Pre-existing cells are excluded since their effect
/// is already part of the observed field.
inline Field impact_field(const Placement& p, std::span<const Kernel> kernels,
                          std::span<const Mask> pre_existing) {
  if (kernels.size() != p.x.size() || pre_existing.size() != p.x.size())
    throw ValidationError("engine.mismatch", "one kernel and one pre-existing mask per NBS type");
  if (p.x.empty()) return {};
  Field z(p.x[0].rows(), p.x[0].cols(), 0.0);
  for (std::size_t t = 0; t < p.x.size(); ++t) accumulate_window(z, p.x[t], kernels[t], &pre_existing[t]);
  return z;
}

/// z̄ = min(z, delta) elementwise.
inline Field clamp_reduction(const Field& z, double delta) {
  Field out = z;
  for (double& v : out.values()) v = std::min(v, delta);
  return out;
}

/// Fairness f = population * window sum of the fairness kernels, including
/// pre-existing installations.
inline Field fairness_field(const Placement& p, std::span<const Kernel> kernels, const Field& population) {
  if (kernels.size() != p.x.size())
    throw ValidationError("engine.mismatch", "one fairness kernel per NBS type");
  Field f(population.rows(), population.cols(), 0.0);
  for (std::size_t t = 0; t < p.x.size(); ++t) accumulate_window(f, p.x[t], kernels[t]);
  for (std::size_t i = 0; i < f.rows(); ++i)
    for (std::size_t j = 0; j < f.cols(); ++j) f(i, j) *= population(i, j);
  return f;
}

/// Observed minus realized reduction. Not floored at zero.
inline Field reduced_measure(const Field& observed, const Field& reduction) {
  if (!observed.same_shape(reduction)) throw ValidationError("engine.shape", "field shapes differ");
  Field out = observed;
  auto o = out.values();
  auto r = reduction.values();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] -= r[k];
  return out;
}

// Instance-level conveniences.

inline std::vector<Mask> pre_existing_masks(const Instance& inst) {
  std::vector<Mask> m;
  for (std::size_t t = 0; t < inst.nbs_count(); ++t) m.push_back(inst.pre_existing_mask(t));
  return m;
}

inline Field impact_field(const Instance& inst, const Placement& p, std::size_t u) {
  return impact_field(p, inst.kernels.at(u), pre_existing_masks(inst));
}

inline Field fairness_field(const Instance& inst, const Placement& p) {
  return fairness_field(p, inst.fairness_kernels, inst.population);
}

}  // namespace nbsopt
