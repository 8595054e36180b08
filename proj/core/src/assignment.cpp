#include "bcg/assignment.hpp"

#include <algorithm>
#include <limits>

#include "bcg/error.hpp"

namespace bcg {

std::vector<int> min_cost_assignment(const CostMatrix& cost) {
  const std::size_t rows = cost.size();
  if (rows == 0) return {};
  const std::size_t cols = cost[0].size();
  for (const auto& r : cost)
    require(r.size() == cols, ErrorKind::kData, "ragged cost matrix");
  if (cols == 0) return std::vector<int>(rows, -1);

  // Square padding with zero-cost dummies keeps the potentials method simple.
  const std::size_t n = std::max(rows, cols);
  auto at = [&](std::size_t i, std::size_t j) {
    return (i < rows && j < cols) ? cost[i][j] : 0.0;
  };

  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based potentials; column 0 is the virtual start.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> owner(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    owner[0] = i;
    std::size_t j0 = 0;
    std::vector<double> min_to(n + 1, kInf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = owner[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double reduced = at(i0 - 1, j - 1) - u[i0] - v[j];
        if (reduced < min_to[j]) {
          min_to[j] = reduced;
          way[j] = j0;
        }
        if (min_to[j] < delta) {
          delta = min_to[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          min_to[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> result(rows, -1);
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t i = owner[j];
    if (i >= 1 && i <= rows && j <= cols) result[i - 1] = static_cast<int>(j - 1);
  }
  return result;
}

std::vector<int> max_weight_assignment(const CostMatrix& weight) {
  CostMatrix cost = weight;
  for (auto& row : cost)
    for (double& w : row) w = -w;
  return min_cost_assignment(cost);
}

}  // namespace bcg
