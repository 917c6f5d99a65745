#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace viewclean {

// Dense row-major cost matrix.
class CostMatrix {
 public:
  CostMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> data_;
};

struct FlowEntry {
  std::size_t from = 0;
  std::size_t to = 0;
  std::int64_t amount = 0;
};

struct TransportSolution {
  double cost = 0.0;               // sum of amount * cost over the plan
  std::vector<FlowEntry> flows;    // non-zero entries only
  std::size_t pivots = 0;
};

// Exact solver for the balanced transportation problem with integral
// supplies and demands (transportation simplex with MODI potentials, started
// from the least-cost-cell basis). Supplies and demands must be positive and
// sum to the same total.
TransportSolution solve_transport(std::span<const std::int64_t> supply,
                                  std::span<const std::int64_t> demand, const CostMatrix& cost);

}  // namespace viewclean
