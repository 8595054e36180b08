#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "bcg/hsi.hpp"

namespace bcg {

// C x K matrix whose columns are endmember signatures.
struct EndmemberSet {
  Eigen::MatrixXd signatures;
  // Linear pixel index each column was taken from, when pixel-anchored.
  std::vector<std::size_t> source_pixels;

  int count() const { return static_cast<int>(signatures.cols()); }
  int bands() const { return static_cast<int>(signatures.rows()); }
};

struct NoiseEstimate {
  HsiCube residual;               // per-pixel regression residuals
  Eigen::VectorXd variance;        // diagonal noise covariance, one entry per band
};

struct SubspaceEstimate {
  int k_hat = 0;
  Eigen::VectorXd noise_cov_diag;
  // Mean-squared projection error criterion for k = 1..C; argmin is k_hat.
  std::vector<double> projection_errors;
};

// Regresses every band on all other bands; the residual is the noise.
NoiseEstimate estimate_noise(const HsiCube& cube);

// Minimum-error signal subspace dimension from the signal and noise
// correlation matrices.
SubspaceEstimate estimate_subspace_dim(const HsiCube& cube);
SubspaceEstimate estimate_subspace_dim(const HsiCube& cube, const NoiseEstimate& noise);

// Vertex component analysis on PCA-reduced affine projections. Columns come
// back in selection order as the selected pixels projected onto the affine
// (k-1)-dim principal subspace.
EndmemberSet vca_extract(const HsiCube& cube, int k, std::uint64_t seed);

struct MultitemporalEndmembers {
  EndmemberSet endmembers;
  bool estimated_k = false;
  std::optional<SubspaceEstimate> subspace;
};

// Extracts endmembers from the width-concatenation of both dates.
MultitemporalEndmembers multitemporal_endmembers(const HsiCube& x, const HsiCube& y,
                                                 std::optional<int> k_override,
                                                 std::uint64_t seed);

// Angle between two spectra in radians, accurate near zero.
double spectral_angle(std::span<const double> a, std::span<const double> b);
double spectral_angle(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// For each estimated column, the index of the matched reference column
// (minimum total spectral angle), or -1 if unmatched.
std::vector<int> match_endmembers(const EndmemberSet& estimated, const EndmemberSet& reference);

void save_endmembers(const EndmemberSet& endmembers, const std::filesystem::path& path);
EndmemberSet load_endmembers(const std::filesystem::path& path);

}  // namespace bcg
