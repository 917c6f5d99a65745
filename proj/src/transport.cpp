#include "viewclean/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace viewclean {

namespace {

struct Cell {
  std::size_t row;
  std::size_t col;
  std::int64_t flow;
};

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent_[b] = a;
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
};

// Spanning-tree basis over the bipartite graph of rows (nodes 0..m-1) and
// columns (nodes m..m+n-1).
class Basis {
 public:
  Basis(std::size_t m, std::size_t n) : m_(m), n_(n), adj_(m + n), basic_(m * n, 0) {}

  std::size_t add(const Cell& c) {
    cells_.push_back(c);
    const std::size_t idx = cells_.size() - 1;
    link(idx);
    return idx;
  }

  void replace(std::size_t idx, const Cell& c) {
    unlink(idx);
    cells_[idx] = c;
    link(idx);
  }

  const std::vector<Cell>& cells() const { return cells_; }
  std::vector<Cell>& cells() { return cells_; }
  bool is_basic(std::size_t i, std::size_t j) const { return basic_[i * n_ + j] != 0; }

  // u_i + v_j = c_ij on every basic cell, with u_0 = 0.
  void potentials(const CostMatrix& cost, std::vector<double>& u, std::vector<double>& v) const {
    u.assign(m_, 0.0);
    v.assign(n_, 0.0);
    std::vector<char> seen(m_ + n_, 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      const std::size_t node = stack.back();
      stack.pop_back();
      for (std::size_t idx : adj_[node]) {
        const Cell& c = cells_[idx];
        const std::size_t r = c.row;
        const std::size_t k = m_ + c.col;
        if (node < m_) {
          if (seen[k]) continue;
          v[c.col] = cost(r, c.col) - u[r];
          seen[k] = 1;
          stack.push_back(k);
        } else {
          if (seen[r]) continue;
          u[r] = cost(r, c.col) - v[c.col];
          seen[r] = 1;
          stack.push_back(r);
        }
      }
    }
  }

  // Basic cells on the tree path from row `row` to column `col`, in order
  // starting at the row.
  std::vector<std::size_t> path(std::size_t row, std::size_t col) const {
    const std::size_t target = m_ + col;
    std::vector<std::size_t> via(m_ + n_, kNone);
    std::vector<char> seen(m_ + n_, 0);
    std::vector<std::size_t> stack{row};
    seen[row] = 1;
    while (!stack.empty() && !seen[target]) {
      const std::size_t node = stack.back();
      stack.pop_back();
      for (std::size_t idx : adj_[node]) {
        const Cell& c = cells_[idx];
        const std::size_t next = node < m_ ? m_ + c.col : c.row;
        if (seen[next]) continue;
        seen[next] = 1;
        via[next] = idx;
        stack.push_back(next);
      }
    }
    std::vector<std::size_t> out;
    std::size_t node = target;
    while (node != row) {
      const std::size_t idx = via[node];
      out.push_back(idx);
      const Cell& c = cells_[idx];
      node = node < m_ ? m_ + c.col : c.row;
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

 private:
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  void link(std::size_t idx) {
    const Cell& c = cells_[idx];
    adj_[c.row].push_back(idx);
    adj_[m_ + c.col].push_back(idx);
    basic_[c.row * n_ + c.col] = 1;
  }
  void unlink(std::size_t idx) {
    const Cell& c = cells_[idx];
    auto drop = [idx](std::vector<std::size_t>& v) { v.erase(std::find(v.begin(), v.end(), idx)); };
    drop(adj_[c.row]);
    drop(adj_[m_ + c.col]);
    basic_[c.row * n_ + c.col] = 0;
  }

  std::size_t m_;
  std::size_t n_;
  std::vector<Cell> cells_;
  std::vector<std::vector<std::size_t>> adj_;
  std::vector<char> basic_;
};

Basis least_cost_basis(std::span<const std::int64_t> supply, std::span<const std::int64_t> demand,
                       const CostMatrix& cost) {
  const std::size_t m = supply.size();
  const std::size_t n = demand.size();
  std::vector<std::size_t> order(m * n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return cost(a / n, a % n) < cost(b / n, b % n);
  });

  std::vector<std::int64_t> s(supply.begin(), supply.end());
  std::vector<std::int64_t> d(demand.begin(), demand.end());
  Basis basis(m, n);
  DisjointSets sets(m + n);
  for (std::size_t cell : order) {
    const std::size_t i = cell / n;
    const std::size_t j = cell % n;
    if (s[i] == 0 || d[j] == 0) continue;
    const std::int64_t amount = std::min(s[i], d[j]);
    s[i] -= amount;
    d[j] -= amount;
    sets.unite(i, m + j);
    basis.add({i, j, amount});
  }
  // Degenerate starts leave a forest; join it with zero-flow cells.
  for (std::size_t cell : order) {
    if (basis.cells().size() == m + n - 1) break;
    const std::size_t i = cell / n;
    const std::size_t j = cell % n;
    if (sets.unite(i, m + j)) basis.add({i, j, 0});
  }
  return basis;
}

}  // namespace

TransportSolution solve_transport(std::span<const std::int64_t> supply,
                                  std::span<const std::int64_t> demand, const CostMatrix& cost) {
  const std::size_t m = supply.size();
  const std::size_t n = demand.size();
  if (m == 0 || n == 0) throw std::invalid_argument("transportation problem needs supplies and demands");
  if (cost.rows() != m || cost.cols() != n) throw std::invalid_argument("cost matrix shape mismatch");
  const auto positive = [](std::int64_t x) { return x > 0; };
  if (!std::all_of(supply.begin(), supply.end(), positive) ||
      !std::all_of(demand.begin(), demand.end(), positive)) {
    throw std::invalid_argument("supplies and demands must be positive");
  }
  if (std::accumulate(supply.begin(), supply.end(), std::int64_t{0}) !=
      std::accumulate(demand.begin(), demand.end(), std::int64_t{0})) {
    throw std::invalid_argument("unbalanced transportation problem");
  }

  double scale = 1.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) scale = std::max(scale, std::abs(cost(i, j)));
  }
  const double tolerance = 1e-12 * scale;

  Basis basis = least_cost_basis(supply, demand, cost);
  std::vector<double> u;
  std::vector<double> v;
  TransportSolution solution;

  // Dantzig pricing; after a long run of degenerate pivots fall back to
  // Bland's smallest-index rule, which cannot cycle.
  const std::size_t degenerate_limit = 50 * (m + n);
  std::size_t degenerate_run = 0;
  for (;;) {
    basis.potentials(cost, u, v);
    const bool bland = degenerate_run > degenerate_limit;
    std::size_t enter_i = 0;
    std::size_t enter_j = 0;
    double best = -tolerance;
    bool found = false;
    for (std::size_t i = 0; i < m && !(bland && found); ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (basis.is_basic(i, j)) continue;
        const double reduced = cost(i, j) - u[i] - v[j];
        if (reduced < best) {
          enter_i = i;
          enter_j = j;
          found = true;
          if (bland) break;
          best = reduced;
        }
      }
    }
    if (!found) break;

    const auto cycle = basis.path(enter_i, enter_j);
    // cycle[0], cycle[2], ... lose flow; cycle[1], cycle[3], ... gain.
    std::size_t leaving = cycle[0];
    std::int64_t theta = std::numeric_limits<std::int64_t>::max();
    for (std::size_t k = 0; k < cycle.size(); k += 2) {
      const Cell& c = basis.cells()[cycle[k]];
      const bool better = c.flow < theta ||
                          (bland && c.flow == theta &&
                           c.row * n + c.col < basis.cells()[leaving].row * n + basis.cells()[leaving].col);
      if (better) {
        theta = c.flow;
        leaving = cycle[k];
      }
    }
    for (std::size_t k = 0; k < cycle.size(); ++k) {
      basis.cells()[cycle[k]].flow += (k % 2 == 0) ? -theta : theta;
    }
    basis.replace(leaving, {enter_i, enter_j, theta});
    ++solution.pivots;
    degenerate_run = theta == 0 ? degenerate_run + 1 : 0;
  }

  for (const Cell& c : basis.cells()) {
    if (c.flow == 0) continue;
    solution.flows.push_back({c.row, c.col, c.flow});
    solution.cost += static_cast<double>(c.flow) * cost(c.row, c.col);
  }
  std::sort(solution.flows.begin(), solution.flows.end(), [](const FlowEntry& a, const FlowEntry& b) {
    return a.from != b.from ? a.from < b.from : a.to < b.to;
  });
  return solution;
}

}  // namespace viewclean
