#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "muse/common.hpp"

namespace muse {

struct Triplet {
  TrackId row = 0;
  TrackId col = 0;
  double value = 0.0;
};

/// Square sparse matrix held in both compressed-row and compressed-column
/// form, so row slices and column slices each cost O(nnz of that slice).
/// Indices within a slice are sorted. Immutable after construction.
class SparseMatrix {
 public:
  /// A read-only slice: parallel arrays of indices and values.
  struct Slice {
    std::span<const TrackId> index;
    std::span<const double> value;

    std::size_t size() const { return index.size(); }
    bool empty() const { return index.empty(); }
    double sum() const {
      double s = 0.0;
      for (double v : value) s += v;
      return s;
    }
  };

  SparseMatrix() = default;

  /// Duplicate coordinates are summed; explicit zeros are dropped.
  SparseMatrix(std::size_t dimension, std::vector<Triplet> entries) : dim_(dimension) {
    for (const auto& t : entries) {
      if (t.row >= dim_ || t.col >= dim_) throw index_error("sparse entry outside matrix dimension");
    }
    std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    std::vector<Triplet> merged;
    merged.reserve(entries.size());
    for (const auto& t : entries) {
      if (!merged.empty() && merged.back().row == t.row && merged.back().col == t.col) {
        merged.back().value += t.value;
      } else {
        merged.push_back(t);
      }
    }
    std::erase_if(merged, [](const Triplet& t) { return t.value == 0.0; });

    row_ptr_.assign(dim_ + 1, 0);
    col_ptr_.assign(dim_ + 1, 0);
    for (const auto& t : merged) {
      ++row_ptr_[t.row + 1];
      ++col_ptr_[t.col + 1];
    }
    for (std::size_t i = 0; i < dim_; ++i) {
      row_ptr_[i + 1] += row_ptr_[i];
      col_ptr_[i + 1] += col_ptr_[i];
    }
    row_cols_.resize(merged.size());
    row_vals_.resize(merged.size());
    col_rows_.resize(merged.size());
    col_vals_.resize(merged.size());
    std::vector<std::size_t> next_col(col_ptr_.begin(), col_ptr_.end() - 1);
    // merged is row-major sorted, so filling columns in this order keeps
    // each column's row indices sorted too
    for (std::size_t k = 0; k < merged.size(); ++k) {
      const auto& t = merged[k];
      row_cols_[k] = t.col;
      row_vals_[k] = t.value;
      std::size_t slot = next_col[t.col]++;
      col_rows_[slot] = t.row;
      col_vals_[slot] = t.value;
    }
  }

  std::size_t dimension() const { return dim_; }
  std::size_t nnz() const { return row_cols_.size(); }

  Slice row(std::size_t i) const {
    std::size_t b = row_ptr_.at(i), e = row_ptr_.at(i + 1);
    return {std::span<const TrackId>(row_cols_).subspan(b, e - b),
            std::span<const double>(row_vals_).subspan(b, e - b)};
  }

  Slice col(std::size_t j) const {
    std::size_t b = col_ptr_.at(j), e = col_ptr_.at(j + 1);
    return {std::span<const TrackId>(col_rows_).subspan(b, e - b),
            std::span<const double>(col_vals_).subspan(b, e - b)};
  }

  /// Stored value at (i, j), or 0 when absent.
  double get(std::size_t i, std::size_t j) const {
    auto r = row(i);
    auto it = std::lower_bound(r.index.begin(), r.index.end(), static_cast<TrackId>(j));
    if (it == r.index.end() || *it != j) return 0.0;
    return r.value[static_cast<std::size_t>(it - r.index.begin())];
  }

  bool contains(std::size_t i, std::size_t j) const {
    auto r = row(i);
    return std::binary_search(r.index.begin(), r.index.end(), static_cast<TrackId>(j));
  }

  /// Entries in row-major order.
  std::vector<Triplet> triplets() const {
    std::vector<Triplet> out;
    out.reserve(nnz());
    for (std::size_t i = 0; i < dim_; ++i) {
      for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
        out.push_back({static_cast<TrackId>(i), row_cols_[k], row_vals_[k]});
      }
    }
    return out;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<TrackId> row_cols_;
  std::vector<double> row_vals_;
  std::vector<std::size_t> col_ptr_{0};
  std::vector<TrackId> col_rows_;
  std::vector<double> col_vals_;
};

}  // namespace muse
