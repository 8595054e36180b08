#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "bcg/endmember.hpp"
#include "bcg/hsi.hpp"

namespace bcg {

struct NnlsResult {
  Eigen::VectorXd x;
  bool converged = true;
  int iterations = 0;
};

// Lawson-Hanson active set for min ||Ax - b||^2 s.t. x >= 0, capped at
// 3 * N outer iterations. On hitting the cap the best iterate comes back with
// converged = false.
NnlsResult nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b);

struct FclsResult {
  Eigen::VectorXd abundance;
  bool degenerate = false;  // nnls returned all zeros; abundance is uniform
  bool converged = true;
};

// Sum-to-one enforced by an augmented row of weight 1e3 * mean|E|, then exact
// renormalisation.
FclsResult fcls_pixel(const EndmemberSet& endmembers, std::span<const double> pixel);

struct FclsCubeResult {
  AbundanceCube abundance;
  std::vector<std::size_t> flagged;  // degenerate or non-converged pixels
};

FclsCubeResult fcls_cube(const EndmemberSet& endmembers, const HsiCube& cube);

struct PucResult {
  ChangeMap binary;
  ChangeMap multiclass;  // c1 * K + c2 for changed pixels, 0 otherwise
};

// Post-unmixing comparison: dominant classes of both dates compared directly.
PucResult puc_rule(const AbundanceCube& a1, const AbundanceCube& a2);

}  // namespace bcg
