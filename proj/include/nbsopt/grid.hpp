#pragma once

#include <algorithm>
#include <cassert>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace nbsopt {

/// Grid coordinate. `i` indexes the W (row) axis, `j` the H (column) axis.
struct Cell {
  int i = 0;
  int j = 0;
  auto operator<=>(const Cell&) const = default;
};

/// Dense row-major matrix used for fields, masks, and kernels.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t i, std::size_t j) {
    assert(i < rows_ && j < cols_);
    return data_[i * cols_ + j];
  }
  const T& operator()(std::size_t i, std::size_t j) const {
    assert(i < rows_ && j < cols_);
    return data_[i * cols_ + j];
  }
  T& operator[](Cell c) { return (*this)(c.i, c.j); }
  const T& operator[](Cell c) const { return (*this)(c.i, c.j); }

  bool contains(int i, int j) const {
    return i >= 0 && j >= 0 && static_cast<std::size_t>(i) < rows_ &&
           static_cast<std::size_t>(j) < cols_;
  }
  bool contains(Cell c) const { return contains(c.i, c.j); }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  std::span<const T> row(std::size_t i) const {
    return std::span<const T>(data_).subspan(i * cols_, cols_);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Grid& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  bool operator==(const Grid&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Field = Grid<double>;
using Mask = Grid<std::uint8_t>;

template <typename T>
T grid_max(const Grid<T>& g) {
  assert(!g.empty());
  return *std::max_element(g.values().begin(), g.values().end());
}

template <typename T>
T grid_sum(const Grid<T>& g) {
  T s{};
  for (const T& v : g.values()) s += v;
  return s;
}

inline Mask mask_from_cells(std::size_t rows, std::size_t cols, std::span<const Cell> cells) {
  Mask m(rows, cols, 0);
  for (const Cell& c : cells) m[c] = 1;
  return m;
}

}  // namespace nbsopt
