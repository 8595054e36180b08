#include "bcg/unmix.hpp"

#include <algorithm>
#include <cmath>

#include "bcg/error.hpp"
#include "bcg/parallel.hpp"

namespace bcg {

namespace {

Eigen::VectorXd solve_on_set(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                             const std::vector<bool>& passive) {
  std::vector<Eigen::Index> idx;
  for (std::size_t j = 0; j < passive.size(); ++j)
    if (passive[j]) idx.push_back(static_cast<Eigen::Index>(j));
  Eigen::VectorXd z = Eigen::VectorXd::Zero(a.cols());
  if (idx.empty()) return z;
  Eigen::MatrixXd sub(a.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) sub.col(static_cast<Eigen::Index>(i)) = a.col(idx[i]);
  const Eigen::VectorXd zs = sub.colPivHouseholderQr().solve(b);
  for (std::size_t i = 0; i < idx.size(); ++i) z(idx[i]) = zs(static_cast<Eigen::Index>(i));
  return z;
}

}  // namespace

NnlsResult nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  require(a.rows() >= 1 && a.cols() >= 1, ErrorKind::kData, "nnls: empty system");
  require(a.rows() == b.size(), ErrorKind::kData, "nnls: dimension mismatch");
  require(a.allFinite() && b.allFinite(), ErrorKind::kData, "nnls: non-finite input");

  const Eigen::Index n = a.cols();
  NnlsResult out;
  out.x = Eigen::VectorXd::Zero(n);
  const Eigen::VectorXd atb = a.transpose() * b;
  const double scale = atb.cwiseAbs().maxCoeff();
  if (scale == 0.0) return out;
  const double tolerance = 1e-10 * scale;

  std::vector<bool> passive(static_cast<std::size_t>(n), false);
  Eigen::VectorXd w = atb;
  const int max_outer = 3 * static_cast<int>(n);
  out.converged = false;
  for (int outer = 0; outer < max_outer; ++outer) {
    out.iterations = outer + 1;
    Eigen::Index t = -1;
    double best = tolerance;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!passive[j] && w(j) > best) {
        best = w(j);
        t = j;
      }
    }
    if (t < 0) {
      out.converged = true;
      out.iterations = outer;
      break;
    }
    passive[t] = true;

    for (Eigen::Index inner = 0; inner <= n; ++inner) {
      const Eigen::VectorXd z = solve_on_set(a, b, passive);
      bool feasible = true;
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[j] && z(j) <= 0.0) feasible = false;
      if (feasible) {
        out.x = z;
        break;
      }
      double alpha = 1.0;
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[j] && z(j) <= 0.0) alpha = std::min(alpha, out.x(j) / (out.x(j) - z(j)));
      out.x += alpha * (z - out.x);
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[j] && out.x(j) <= 1e-15 * std::max(1.0, out.x.cwiseAbs().maxCoeff())) {
          passive[j] = false;
          out.x(j) = 0.0;
        }
      }
    }
    w = a.transpose() * (b - a * out.x);
  }
  if (!out.converged) {
    // The cap can coincide with an optimal final iterate.
    bool kkt = true;
    for (Eigen::Index j = 0; j < n; ++j)
      if (!passive[j] && w(j) > tolerance) kkt = false;
    out.converged = kkt;
  }
  return out;
}

FclsResult fcls_pixel(const EndmemberSet& endmembers, std::span<const double> pixel) {
  const Eigen::MatrixXd& e = endmembers.signatures;
  require(e.rows() == static_cast<Eigen::Index>(pixel.size()), ErrorKind::kData,
          "fcls: pixel has " + std::to_string(pixel.size()) + " bands, endmembers " +
              std::to_string(e.rows()));
  const Eigen::Index bands = e.rows(), k = e.cols();
  const double rho = 1e3 * e.cwiseAbs().mean();

  Eigen::MatrixXd a(bands + 1, k);
  a.topRows(bands) = e;
  a.row(bands).setConstant(rho);
  Eigen::VectorXd b(bands + 1);
  for (Eigen::Index i = 0; i < bands; ++i) b(i) = pixel[static_cast<std::size_t>(i)];
  b(bands) = rho;

  const NnlsResult solved = nnls(a, b);
  FclsResult out;
  out.converged = solved.converged;
  const double total = solved.x.sum();
  if (!(total > 0.0)) {
    out.degenerate = true;
    out.abundance = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
    return out;
  }
  out.abundance = solved.x / total;
  return out;
}

FclsCubeResult fcls_cube(const EndmemberSet& endmembers, const HsiCube& cube) {
  require(endmembers.bands() == cube.bands(), ErrorKind::kData,
          "fcls_cube: endmember bands do not match cube");
  FclsCubeResult out;
  out.abundance = AbundanceCube(cube.height(), cube.width(), endmembers.count(),
                                AbundanceProducer::kFcls);
  std::vector<char> flags(cube.pixel_count(), 0);
  parallel_for(cube.pixel_count(), [&](std::size_t p) {
    const FclsResult r = fcls_pixel(endmembers, cube.pixel(p));
    auto dst = out.abundance.values.pixel(p);
    for (int j = 0; j < endmembers.count(); ++j) dst[j] = r.abundance(j);
    flags[p] = (r.degenerate || !r.converged) ? 1 : 0;
  });
  for (std::size_t p = 0; p < flags.size(); ++p)
    if (flags[p]) out.flagged.push_back(p);
  return out;
}

PucResult puc_rule(const AbundanceCube& a1, const AbundanceCube& a2) {
  require(a1.height() == a2.height() && a1.width() == a2.width() &&
              a1.endmembers() == a2.endmembers(),
          ErrorKind::kData, "puc_rule: abundance shapes differ");
  const int k = a1.endmembers();
  PucResult out{ChangeMap(a1.height(), a1.width()), ChangeMap(a1.height(), a1.width())};
  for (std::size_t p = 0; p < out.binary.pixel_count(); ++p) {
    const int c1 = dominant_class(a1.values.pixel(p));
    const int c2 = dominant_class(a2.values.pixel(p));
    if (c1 != c2) {
      out.binary[p] = 1;
      out.multiclass[p] = c1 * k + c2;
    }
  }
  return out;
}

}  // namespace bcg
