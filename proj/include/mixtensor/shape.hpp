#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mixtensor/errors.hpp"

namespace mixtensor {

// Category counts (c_1, ..., c_M) of a multivariate categorical response.
//
// Dense tensors over a Shape are linearized row-major with mode 1 slowest:
// cell (j_1, ..., j_M) lives at ((j_1*c_2 + j_2)*c_3 + ...) + j_M with all
// j_m zero-based. Serialized tensors use this layout.
struct Shape {
  std::vector<int> dims;

  Shape() = default;
  explicit Shape(std::vector<int> d) : dims(std::move(d)) { validate(); }

  int num_responses() const { return static_cast<int>(dims.size()); }

  void validate() const {
    if (dims.empty()) throw dimension_error("shape: needs at least one response");
    for (std::size_t m = 0; m < dims.size(); ++m) {
      if (dims[m] < 2)
        throw dimension_error("shape: category count must be >= 2 at response " +
                              std::to_string(m + 1));
    }
    cell_count();
  }

  // Total number of cells; dense storage is capped at 2^26 cells.
  std::size_t cell_count() const {
    std::size_t total = 1;
    const std::size_t cap = std::size_t{1} << 26;
    for (int c : dims) {
      total *= static_cast<std::size_t>(c);
      if (total > cap)
        throw dimension_error("shape: tensor exceeds dense cap of 2^26 cells");
    }
    return total;
  }

  int total_categories() const {  // C = sum_m c_m
    int s = 0;
    for (int c : dims) s += c;
    return s;
  }

  std::size_t linear_index(const std::vector<int>& cell) const {
    if (cell.size() != dims.size())
      throw dimension_error("shape: cell arity mismatch");
    std::size_t idx = 0;
    for (std::size_t m = 0; m < dims.size(); ++m) {
      if (cell[m] < 0 || cell[m] >= dims[m])
        throw dimension_error("shape: cell index out of range at response " +
                              std::to_string(m + 1));
      idx = idx * static_cast<std::size_t>(dims[m]) + static_cast<std::size_t>(cell[m]);
    }
    return idx;
  }

  std::vector<int> cell_of(std::size_t idx) const {
    std::vector<int> cell(dims.size());
    for (int m = num_responses() - 1; m >= 0; --m) {
      cell[m] = static_cast<int>(idx % static_cast<std::size_t>(dims[m]));
      idx /= static_cast<std::size_t>(dims[m]);
    }
    return cell;
  }

  bool operator==(const Shape& o) const { return dims == o.dims; }
};

}  // namespace mixtensor
