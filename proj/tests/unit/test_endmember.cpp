#include <doctest.h>

#include <cmath>
#include <random>

#include "bcg/endmember.hpp"
#include "bcg/error.hpp"
#include "bcg/synthetic.hpp"
#include "test_util.hpp"

using namespace bcg;

namespace {

// Dirichlet(1) abundances with the first k pixels pure.
HsiCube simplex_cube(const EndmemberSet& e, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> ex(1.0);
  const int k = e.count();
  AbundanceCube a(h, w, k);
  for (std::size_t p = 0; p < a.values.pixel_count(); ++p) {
    auto s = a.values.pixel(p);
    if (p < static_cast<std::size_t>(k)) {
      s[p] = 1.0;
      continue;
    }
    double sum = 0.0;
    for (double& v : s) sum += (v = ex(rng));
    for (double& v : s) v /= sum;
  }
  return mix_linear(e, a);
}

double best_match_angle(const EndmemberSet& est, const EndmemberSet& truth, int col) {
  double best = 10.0;
  for (int j = 0; j < est.count(); ++j)
    best = std::min(best, spectral_angle(Eigen::VectorXd(est.signatures.col(j)),
                                         Eigen::VectorXd(truth.signatures.col(col))));
  return best;
}

}  // namespace

TEST_CASE("spectral_angle") {
  const Eigen::VectorXd a = Eigen::Vector2d(1, 0), b = Eigen::Vector2d(1, 1);
  CHECK(spectral_angle(a, b) == doctest::Approx(M_PI / 4));
  CHECK(spectral_angle(a, Eigen::VectorXd(3.0 * a)) < 1e-15);
  const Eigen::VectorXd c = Eigen::Vector2d(1, 1e-9);
  CHECK(spectral_angle(a, c) == doctest::Approx(1e-9).epsilon(1e-6));
}

TEST_CASE("estimate_noise on a noiseless rank-deficient cube") {
  const EndmemberSet e = random_endmembers(12, 3, 5);
  const HsiCube cube = simplex_cube(e, 20, 20, 1);
  const NoiseEstimate n = estimate_noise(cube);
  for (Eigen::Index b = 0; b < n.variance.size(); ++b) CHECK(n.variance[b] < 1e-10);
}

TEST_CASE("estimate_noise recovers a known white-noise variance") {
  const EndmemberSet e = random_endmembers(60, 4, 6);
  HsiCube cube = simplex_cube(e, 100, 100, 2);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 0.1);
  for (double& v : cube.values()) v += g(rng);
  const NoiseEstimate n = estimate_noise(cube);
  for (Eigen::Index b = 0; b < n.variance.size(); ++b)
    CHECK(std::abs(n.variance[b] - 0.01) < 0.002);
}

TEST_CASE("estimate_noise rejects a constant cube") {
  CHECK_THROWS_AS(estimate_noise(HsiCube(10, 10, 5, 0.3)), Error);
}

TEST_CASE("estimate_subspace_dim on known-rank cubes") {
  const EndmemberSet e = random_endmembers(30, 4, 7);
  const HsiCube clean = simplex_cube(e, 40, 40, 4);
  CHECK(estimate_subspace_dim(clean).k_hat == 4);
  CHECK(estimate_subspace_dim(add_noise_snr(clean, 30.0, 9)).k_hat == 4);

  HsiCube rank1(20, 20, 10);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  for (int r = 0; r < 20; ++r)
    for (int c = 0; c < 20; ++c) {
      const double s = u(rng);
      for (int b = 0; b < 10; ++b) rank1.at(r, c, b) = s * e.signatures(b, 0);
    }
  const SubspaceEstimate est = estimate_subspace_dim(add_noise_snr(rank1, 40.0, 2));
  CHECK(est.k_hat == 1);
  CHECK(est.k_hat >= 1);
  CHECK(est.k_hat <= 10);
}

TEST_CASE("vca_extract recovers exact vertices of noiseless pure-pixel data") {
  for (int k = 2; k <= 5; ++k) {
    const EndmemberSet e = random_endmembers(25, k, 100 + k);
    const HsiCube cube = simplex_cube(e, 30, 30, k);
    const EndmemberSet est = vca_extract(cube, k, 1);
    REQUIRE(est.count() == k);
    for (int j = 0; j < k; ++j) CHECK(best_match_angle(est, e, j) < 1e-6);
  }
}

TEST_CASE("vca_extract columns are denoised selected pixels") {
  const EndmemberSet e = random_endmembers(15, 3, 1);
  const HsiCube cube = add_noise_snr(simplex_cube(e, 20, 20, 5), 30.0, 3);
  const EndmemberSet est = vca_extract(cube, 3, 4);
  REQUIRE(est.source_pixels.size() == 3);
  for (int j = 0; j < 3; ++j) {
    const auto px = cube.pixel(est.source_pixels[j]);
    const Eigen::VectorXd raw = Eigen::Map<const Eigen::VectorXd>(px.data(), cube.bands());
    const Eigen::VectorXd col = est.signatures.col(j);
    CHECK((raw - col).norm() < 0.1 * raw.norm());
  }

  const HsiCube clean = simplex_cube(e, 20, 20, 5);
  const EndmemberSet exact = vca_extract(clean, 3, 4);
  for (int j = 0; j < 3; ++j) {
    const auto px = clean.pixel(exact.source_pixels[j]);
    for (int b = 0; b < clean.bands(); ++b)
      CHECK(std::abs(exact.signatures(b, j) - px[b]) < 1e-12);
  }
}

TEST_CASE("vca_extract at 30 dB stays within 2 degrees") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    SynthConfig c;
    c.change_classes = 0;
    c.snr_db = 30.0;
    c.seed = 50 + seed;
    const SyntheticScene s = gen_synthetic_scene(c);
    const EndmemberSet est = vca_extract(s.cube_t1, 4, seed);
    for (int j = 0; j < 4; ++j)
      CHECK(best_match_angle(est, s.endmembers_true, j) < 2.0 * M_PI / 180.0);
  }
}

TEST_CASE("vca_extract is deterministic and rejects too few distinct pixels") {
  const EndmemberSet e = random_endmembers(10, 3, 8);
  const HsiCube cube = add_noise_snr(simplex_cube(e, 15, 15, 1), 30.0, 1);
  CHECK(vca_extract(cube, 3, 2).signatures == vca_extract(cube, 3, 2).signatures);
  HsiCube same(4, 4, 5, 0.7);
  CHECK_THROWS_AS(vca_extract(same, 2, 0), Error);
}

TEST_CASE("multitemporal_endmembers") {
  const EndmemberSet e = random_endmembers(20, 3, 9);
  const HsiCube x = simplex_cube(e, 16, 16, 2);
  const MultitemporalEndmembers both = multitemporal_endmembers(x, x, 3, 1);
  CHECK_FALSE(both.estimated_k);
  CHECK(both.endmembers.count() == 3);
  const EndmemberSet alone = vca_extract(x, 3, 1);
  for (int j = 0; j < 3; ++j) CHECK(best_match_angle(both.endmembers, alone, j) < 1e-12);

  const MultitemporalEndmembers est = multitemporal_endmembers(x, x, std::nullopt, 1);
  CHECK(est.estimated_k);
  CHECK(est.endmembers.count() == 3);
  CHECK_THROWS_AS(multitemporal_endmembers(x, simplex_cube(e, 15, 16, 2), 3, 1), Error);
}

TEST_CASE("match_endmembers undoes a permutation") {
  const EndmemberSet e = random_endmembers(20, 4, 10);
  EndmemberSet p;
  p.signatures.resize(20, 4);
  const int perm[4] = {2, 0, 3, 1};
  for (int j = 0; j < 4; ++j) p.signatures.col(j) = 1.7 * e.signatures.col(perm[j]);
  const std::vector<int> m = match_endmembers(p, e);
  for (int j = 0; j < 4; ++j) CHECK(m[j] == perm[j]);
}

TEST_CASE("endmember file round trip") {
  const auto dir = test::temp_dir("endmembers");
  EndmemberSet e = random_endmembers(7, 3, 11);
  for (Eigen::Index i = 0; i < e.signatures.size(); ++i)
    e.signatures.data()[i] = static_cast<float>(e.signatures.data()[i]);
  save_endmembers(e, dir / "e");
  const EndmemberSet back = load_endmembers(dir / "e");
  CHECK(back.signatures == e.signatures);
  CHECK_THROWS_AS(load_endmembers(dir / "missing"), Error);
}
