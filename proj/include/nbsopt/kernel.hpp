#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <span>
#include <string>
#include <utility>

#include "nbsopt/catalog.hpp"
#include "nbsopt/error.hpp"
#include "nbsopt/grid.hpp"

namespace nbsopt {

/// Impact matrix of one NBS on one measure. Rows span the W axis (width
/// w̄), columns the H axis (height h̄); both odd, centered on the installed cell.
struct Kernel {
  Field entries;

  int width() const { return static_cast<int>(entries.rows()); }
  int height() const { return static_cast<int>(entries.cols()); }
  int half_width() const { return width() / 2; }
  int half_height() const { return height() / 2; }
  double center() const { return entries(entries.rows() / 2, entries.cols() / 2); }
  double sum() const { return grid_sum(entries); }
  double at_offset(int di, int dj) const {
    return entries(static_cast<std::size_t>(di + half_width()),
                   static_cast<std::size_t>(dj + half_height()));
  }

  bool operator==(const Kernel&) const = default;
};

/// Throws ValidationError unless sizes are odd, entries nonnegative and
/// finite, and the center holds the maximum.
inline void validate_kernel(const Kernel& k, const std::string& label) {
  if (k.width() < 1 || k.height() < 1 || k.width() % 2 == 0 || k.height() % 2 == 0)
    throw ValidationError("kernel.size", label + ": kernel sides must be odd and positive");
  for (double v : k.entries.values()) {
    if (!std::isfinite(v) || v < 0.0)
      throw ValidationError("kernel.entries", label + ": kernel entries must be finite and >= 0");
  }
  if (k.center() < grid_max(k.entries))
    throw ValidationError("kernel.center", label + ": center entry must be the maximum");
}

struct ImpactSpec {
  double center = 0.0;
  double edge = 0.0;
  int size = 1;
};

/// Square kernel decaying linearly over Chebyshev rings from `center`
/// (ring 0) to `edge` (outermost ring).
inline Kernel build_kernel(const ImpactSpec& spec) {
  if (spec.size < 1 || spec.size % 2 == 0)
    throw ValidationError("kernel.size", "kernel size must be odd and >= 1, got " +
                                             std::to_string(spec.size));
  if (!(spec.center > 0.0) || spec.edge < 0.0 || spec.edge > spec.center)
    throw ValidationError("kernel.spec", "require center > 0 and 0 <= edge <= center");
  const int rings = spec.size / 2;
  Kernel k{Field(static_cast<std::size_t>(spec.size), static_cast<std::size_t>(spec.size))};
  for (int a = 0; a < spec.size; ++a) {
    for (int b = 0; b < spec.size; ++b) {
      const int d = std::max(std::abs(a - rings), std::abs(b - rings));
      double v = spec.center;
      if (rings > 0) {
        // endpoints are assigned verbatim so they reproduce the table exactly
        if (d == rings)
          v = spec.edge;
        else if (d > 0)
          v = spec.center - d * (spec.center - spec.edge) / rings;
      }
      k.entries(a, b) = v;
    }
  }
  return k;
}

/// Kernels for (measure, nbs) and fairness kernels per nbs.
struct KernelSet {
  std::map<std::pair<std::string, std::string>, Kernel> impact;
  std::map<std::string, Kernel> fairness;
};

inline ImpactSpec default_impact_spec(std::string_view measure, std::string_view nbs) {
  for (const auto& e : catalog::kKernels) {
    if (e.measure == measure && e.nbs == nbs) return {e.center, e.edge, e.size};
  }
  throw ValidationError("kernel.unknown", "no default kernel for (" + std::string(measure) +
                                              ", " + std::string(nbs) + ")");
}

inline KernelSet default_kernel_set() {
  KernelSet set;
  for (const auto& e : catalog::kKernels) {
    Kernel k = build_kernel({e.center, e.edge, e.size});
    if (e.measure == catalog::kFairness)
      set.fairness.emplace(std::string(e.nbs), std::move(k));
    else
      set.impact.emplace(std::pair{std::string(e.measure), std::string(e.nbs)}, std::move(k));
  }
  return set;
}

/// Cap on achievable reduction: 0.2 times the field maximum.
inline double derive_delta(const Field& observed) {
  if (observed.empty()) throw ValidationError("kernel.delta", "observed field is empty");
  return catalog::kDeltaFraction * grid_max(observed);
}

/// Upper bound on the raw impact z at any cell. Each window offset is hosted
/// by at most one NBS type, so summing the per-offset maximum over the
/// centered kernels bounds z; when one kernel dominates the others entrywise
/// this is the largest kernel sum.
inline double compute_big_m(std::span<const Kernel* const> kernels) {
  if (kernels.empty()) throw ValidationError("kernel.big_m", "at least one kernel required");
  int hw = 0;
  int hh = 0;
  for (const Kernel* k : kernels) {
    hw = std::max(hw, k->half_width());
    hh = std::max(hh, k->half_height());
  }
  double total = 0.0;
  for (int di = -hw; di <= hw; ++di) {
    for (int dj = -hh; dj <= hh; ++dj) {
      double best = 0.0;
      for (const Kernel* k : kernels) {
        if (std::abs(di) <= k->half_width() && std::abs(dj) <= k->half_height())
          best = std::max(best, k->at_offset(di, dj));
      }
      total += best;
    }
  }
  return total;
}

}  // namespace nbsopt
