#include "bcg/endmember.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "bcg/assignment.hpp"
#include "bcg/error.hpp"
#include "bcg/rng.hpp"

namespace bcg {

namespace {

using ConstMatrixMap = Eigen::Map<const Eigen::MatrixXd>;

// bands x pixels view of the pixel-interleaved cube storage.
ConstMatrixMap as_matrix(const HsiCube& cube) {
  return ConstMatrixMap(cube.values().data(), cube.bands(),
                        static_cast<Eigen::Index>(cube.pixel_count()));
}

void check_bands_not_constant(const Eigen::MatrixXd& data) {
  for (Eigen::Index b = 0; b < data.rows(); ++b) {
    const double mean = data.row(b).mean();
    const double var = (data.row(b).array() - mean).square().mean();
    const double scale = std::max(mean * mean, data.row(b).array().square().mean());
    if (var <= 1e-20 * scale || var == 0.0)
      fail(ErrorKind::kNumeric,
           "degenerate regression: band " + std::to_string(b) + " is constant");
  }
}

}  // namespace

NoiseEstimate estimate_noise(const HsiCube& cube) {
  const int bands = cube.bands();
  const auto pixels = static_cast<Eigen::Index>(cube.pixel_count());
  require(bands >= 3, ErrorKind::kData, "noise estimation needs at least 3 bands");
  require(pixels > bands, ErrorKind::kData, "noise estimation needs more pixels than bands");

  const Eigen::MatrixXd data = as_matrix(cube);
  check_bands_not_constant(data);

  NoiseEstimate out;
  out.residual = HsiCube(cube.height(), cube.width(), bands);
  out.variance = Eigen::VectorXd::Zero(bands);
  Eigen::Map<Eigen::MatrixXd> residual(out.residual.values().data(), bands, pixels);

  Eigen::MatrixXd others(pixels, bands - 1);
  for (int b = 0; b < bands; ++b) {
    for (int j = 0, col = 0; j < bands; ++j) {
      if (j == b) continue;
      others.col(col++) = data.row(j).transpose();
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
    cod.setThreshold(1e-10);
    cod.compute(others);
    const Eigen::VectorXd target = data.row(b).transpose();
    const Eigen::VectorXd beta = cod.solve(target);
    const Eigen::VectorXd r = target - others * beta;
    residual.row(b) = r.transpose();
    out.variance(b) = r.squaredNorm() / static_cast<double>(pixels);
  }
  return out;
}

SubspaceEstimate estimate_subspace_dim(const HsiCube& cube) {
  return estimate_subspace_dim(cube, estimate_noise(cube));
}

SubspaceEstimate estimate_subspace_dim(const HsiCube& cube, const NoiseEstimate& noise) {
  const int bands = cube.bands();
  const auto pixels = static_cast<double>(cube.pixel_count());
  const ConstMatrixMap data = as_matrix(cube);
  const ConstMatrixMap w(noise.residual.values().data(), bands,
                         static_cast<Eigen::Index>(cube.pixel_count()));
  require(noise.residual.bands() == bands && noise.residual.pixel_count() == cube.pixel_count(),
          ErrorKind::kData, "noise estimate does not match cube");

  const Eigen::MatrixXd ry = data * data.transpose() / pixels;
  const Eigen::MatrixXd signal = data - w;
  const Eigen::MatrixXd rx = signal * signal.transpose() / pixels;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(rx);
  const Eigen::MatrixXd& vectors = eig.eigenvectors();  // ascending eigenvalues

  std::vector<double> cost(bands);
  for (int i = 0; i < bands; ++i) {
    const Eigen::VectorXd e = vectors.col(bands - 1 - i);
    const double py = e.dot(ry * e);
    const double pn = (e.array().square() * noise.variance.array()).sum();
    cost[i] = -py + 2.0 * pn;
  }

  // Directions with numerically zero power on both sides carry no signal.
  const double tolerance = 1e-10 * ry.trace();
  int k = 0;
  for (const double c : cost)
    if (c < -tolerance) ++k;

  SubspaceEstimate out;
  out.k_hat = std::clamp(k, 1, bands);
  out.noise_cov_diag = noise.variance;
  std::vector<double> ascending = cost;
  std::sort(ascending.begin(), ascending.end());
  double mse = ry.trace();
  out.projection_errors.reserve(bands);
  for (int i = 0; i < bands; ++i) {
    mse += ascending[i];
    out.projection_errors.push_back(mse);
  }
  return out;
}

namespace {

std::size_t count_distinct_pixels(const HsiCube& cube, std::size_t enough) {
  std::set<std::vector<double>> seen;
  for (std::size_t p = 0; p < cube.pixel_count() && seen.size() < enough; ++p) {
    const auto px = cube.pixel(p);
    seen.emplace(px.begin(), px.end());
  }
  return seen.size();
}

}  // namespace

EndmemberSet vca_extract(const HsiCube& cube, int k, std::uint64_t seed) {
  require(k >= 2, ErrorKind::kData, "VCA needs k >= 2");
  require(cube.pixel_count() >= static_cast<std::size_t>(k), ErrorKind::kData,
          "VCA needs at least k pixels");
  if (count_distinct_pixels(cube, static_cast<std::size_t>(k)) < static_cast<std::size_t>(k))
    fail(ErrorKind::kData, "VCA: fewer than " + std::to_string(k) + " distinct pixels");

  const ConstMatrixMap data = as_matrix(cube);
  const auto pixels = data.cols();
  const Eigen::VectorXd mean = data.rowwise().mean();
  const Eigen::MatrixXd centered = data.colwise() - mean;
  const Eigen::MatrixXd cov = centered * centered.transpose() / static_cast<double>(pixels);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const int reduced = std::min(k - 1, cube.bands());
  const Eigen::MatrixXd basis = eig.eigenvectors().rightCols(reduced).rowwise().reverse();

  Eigen::MatrixXd projected = Eigen::MatrixXd::Zero(k, pixels);
  projected.topRows(reduced) = basis.transpose() * centered;
  const Eigen::MatrixXd denoised = (basis * projected.topRows(reduced)).colwise() + mean;
  const double lift = projected.topRows(reduced).colwise().norm().maxCoeff();
  projected.row(k - 1).setConstant(lift > 0.0 ? lift : 1.0);

  Rng rng = make_rng(seed, 0x766361ULL);
  std::normal_distribution<double> normal(0.0, 1.0);

  Eigen::MatrixXd simplex = Eigen::MatrixXd::Zero(k, k);
  simplex(k - 1, 0) = 1.0;
  EndmemberSet out;
  out.signatures.resize(cube.bands(), k);
  for (int i = 0; i < k; ++i) {
    Eigen::VectorXd direction(k);
    for (int j = 0; j < k; ++j) direction(j) = normal(rng);
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(simplex);
    direction -= simplex * cod.solve(direction);
    direction.normalize();

    const Eigen::RowVectorXd scores = direction.transpose() * projected;
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index p = 0; p < pixels; ++p) {
      const double a = std::abs(scores(p));
      if (a > best_abs) {
        best_abs = a;
        best = p;
      }
    }
    simplex.col(i) = projected.col(best);
    out.signatures.col(i) = denoised.col(best);
    out.source_pixels.push_back(static_cast<std::size_t>(best));
  }
  return out;
}

MultitemporalEndmembers multitemporal_endmembers(const HsiCube& x, const HsiCube& y,
                                                 std::optional<int> k_override,
                                                 std::uint64_t seed) {
  const HsiCube z = concat_width(x, y);
  MultitemporalEndmembers out;
  int k = 0;
  if (k_override) {
    k = *k_override;
  } else {
    out.subspace = estimate_subspace_dim(z);
    out.estimated_k = true;
    k = std::max(2, out.subspace->k_hat);
  }
  out.endmembers = vca_extract(z, k, seed);
  return out;
}

double spectral_angle(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::kData, "spectral_angle: length mismatch");
  double na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na == 0.0 || nb == 0.0) return std::acos(0.0);
  double diff = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double u = a[i] / na, v = b[i] / nb;
    diff += (u - v) * (u - v);
    sum += (u + v) * (u + v);
  }
  return 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum));
}

double spectral_angle(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return spectral_angle(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
                        std::span<const double>(b.data(), static_cast<std::size_t>(b.size())));
}

std::vector<int> match_endmembers(const EndmemberSet& estimated, const EndmemberSet& reference) {
  require(estimated.bands() == reference.bands(), ErrorKind::kData,
          "match_endmembers: band count mismatch");
  CostMatrix cost(estimated.count(), std::vector<double>(reference.count()));
  for (int i = 0; i < estimated.count(); ++i)
    for (int j = 0; j < reference.count(); ++j)
      cost[i][j] = spectral_angle(Eigen::VectorXd(estimated.signatures.col(i)),
                                  Eigen::VectorXd(reference.signatures.col(j)));
  return min_cost_assignment(cost);
}

void save_endmembers(const EndmemberSet& endmembers, const std::filesystem::path& path) {
  HsiCube cube(endmembers.bands(), endmembers.count(), 1);
  for (int b = 0; b < endmembers.bands(); ++b)
    for (int j = 0; j < endmembers.count(); ++j) cube.at(b, j, 0) = endmembers.signatures(b, j);
  HeaderFields extra{{"role", "endmembers"}};
  if (!endmembers.source_pixels.empty()) {
    std::ostringstream sources;
    for (std::size_t i = 0; i < endmembers.source_pixels.size(); ++i)
      sources << (i ? "," : "") << endmembers.source_pixels[i];
    extra["sources"] = sources.str();
  }
  save_cube(cube, path, extra);
}

EndmemberSet load_endmembers(const std::filesystem::path& path) {
  CubeFile file = read_cube(path);
  const auto role = file.header.find("role");
  require(role != file.header.end() && role->second == "endmembers", ErrorKind::kData,
          path.string() + " is not an endmember file");
  require(file.cube.bands() == 1, ErrorKind::kData, "endmember file must have bands=1");
  EndmemberSet out;
  out.signatures.resize(file.cube.height(), file.cube.width());
  for (int b = 0; b < file.cube.height(); ++b)
    for (int j = 0; j < file.cube.width(); ++j) out.signatures(b, j) = file.cube.at(b, j, 0);
  const auto sources = file.header.find("sources");
  if (sources != file.header.end()) {
    std::istringstream in(sources->second);
    std::string token;
    while (std::getline(in, token, ',')) out.source_pixels.push_back(std::stoull(token));
  }
  return out;
}

}  // namespace bcg
