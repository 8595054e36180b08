#pragma once

#include <vector>

namespace bcg {

// Rectangular cost matrix, cost[row][col].
using CostMatrix = std::vector<std::vector<double>>;

// Hungarian method. Returns, for every row, the assigned column or -1 when
// the matrix has more rows than columns and the row is left out.
std::vector<int> min_cost_assignment(const CostMatrix& cost);

// Maximum total weight one-to-one assignment. For rectangular inputs the
// weights should be nonnegative, since padding uses zero-weight dummies.
std::vector<int> max_weight_assignment(const CostMatrix& weight);

}  // namespace bcg
