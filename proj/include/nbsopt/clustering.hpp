#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "nbsopt/grid.hpp"
#include "nbsopt/instance.hpp"

namespace nbsopt {

/// Maximal 4-connected regions of nonzero cells, each sorted, ordered by
/// their first cell in row-major scan.
template <typename T>
std::vector<std::vector<Cell>> label_components(const Grid<T>& mask) {
  std::vector<std::vector<Cell>> components;
  Grid<std::uint8_t> visited(mask.rows(), mask.cols(), 0);
  std::vector<Cell> stack;
  constexpr int kDi[4] = {-1, 1, 0, 0};
  constexpr int kDj[4] = {0, 0, -1, 1};
  for (std::size_t i = 0; i < mask.rows(); ++i) {
    for (std::size_t j = 0; j < mask.cols(); ++j) {
      if (!mask(i, j) || visited(i, j)) continue;
      std::vector<Cell> comp;
      stack.push_back({static_cast<int>(i), static_cast<int>(j)});
      visited(i, j) = 1;
      while (!stack.empty()) {
        const Cell c = stack.back();
        stack.pop_back();
        comp.push_back(c);
        for (int k = 0; k < 4; ++k) {
          const int ni = c.i + kDi[k];
          const int nj = c.j + kDj[k];
          if (mask.contains(ni, nj) && mask(ni, nj) && !visited(ni, nj)) {
            visited(ni, nj) = 1;
            stack.push_back({ni, nj});
          }
        }
      }
      std::sort(comp.begin(), comp.end());
      components.push_back(std::move(comp));
    }
  }
  return components;
}

struct ClusterOptions {
  std::size_t min_size = 5;
  std::size_t max_size = 50;
};

/// Candidate mask for NBS t: not forbidden for t and not already hosting any NBS.
inline Mask eligibility_mask(const Instance& inst, std::size_t t) {
  Mask m(inst.dims.width, inst.dims.height, 1);
  for (const Cell& c : inst.masks.forbidden[t]) m[c] = 0;
  for (const auto& cells : inst.masks.pre_existing)
    for (const Cell& c : cells) m[c] = 0;
  return m;
}

/// Clusters for one NBS: components whose size lies in [min, max]. Smaller
/// and larger components are left as individually placeable cells.
inline std::vector<Cluster> build_clusters(const Instance& inst, std::size_t t,
                                           const ClusterOptions& opt = {}) {
  if (opt.min_size > opt.max_size)
    throw ValidationError("cluster.options", "min size exceeds max size");
  std::vector<Cluster> out;
  for (auto& comp : label_components(eligibility_mask(inst, t)))
    if (comp.size() >= opt.min_size && comp.size() <= opt.max_size) out.push_back(std::move(comp));
  return out;
}

/// Partition for the NBS ids in `clustered`; the others get no clusters.
inline ClusterPartition build_partition(const Instance& inst, const std::vector<std::string>& clustered,
                                        const ClusterOptions& opt = {}) {
  ClusterPartition part;
  part.clusters.resize(inst.nbs_count());
  for (const std::string& id : clustered) {
    const int t = inst.nbs_index(id);
    if (t < 0) throw ValidationError("cluster.nbs", "unknown NBS id '" + id + "'");
    part.clusters[t] = build_clusters(inst, static_cast<std::size_t>(t), opt);
  }
  part.residual = residual_cells(inst, part.clusters);
  return part;
}

}  // namespace nbsopt
