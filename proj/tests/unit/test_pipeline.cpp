#include <doctest.h>

#include <cmath>
#include <random>

#include "bcg/error.hpp"
#include "bcg/metrics.hpp"
#include "bcg/pipeline.hpp"

using namespace bcg;

namespace {

AbundanceCube random_abundance(int h, int w, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  AbundanceCube a(h, w, k);
  for (double& v : a.values.values()) v = u(rng);
  return a;
}

}  // namespace

TEST_CASE("score_maps matches the multiclass ids before scoring") {
  ChangeMap bin_ref(2, 4, 0), multi_ref(2, 4, 0);
  for (std::size_t i = 4; i < 8; ++i) {
    bin_ref[i] = 1;
    multi_ref[i] = i < 6 ? 2 : 5;
  }
  ChangeMap multi = multi_ref;
  for (std::size_t i = 4; i < 8; ++i) multi[i] = i < 6 ? 11 : 7;
  const MapScores s = score_maps(bin_ref, multi, bin_ref, multi_ref);
  CHECK(s.binary_oa == 1.0);
  CHECK(s.binary_kappa == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.multiclass_oa == 1.0);
  CHECK(s.multiclass_kappa == doctest::Approx(1.0).epsilon(1e-12));

  ChangeMap wrong = bin_ref;
  wrong[0] = 1;
  const MapScores w = score_maps(wrong, multi, bin_ref, multi_ref);
  CHECK(w.binary_oa == doctest::Approx(7.0 / 8.0));
}

TEST_CASE("align_abundance permutes bands") {
  const AbundanceCube a = random_abundance(3, 2, 3, 1);
  const AbundanceCube b = align_abundance(a, {2, 0, 1});
  for (std::size_t p = 0; p < 6; ++p) {
    CHECK(b.values.pixel(p)[2] == a.values.pixel(p)[0]);
    CHECK(b.values.pixel(p)[0] == a.values.pixel(p)[1]);
    CHECK(b.values.pixel(p)[1] == a.values.pixel(p)[2]);
  }
  CHECK_THROWS_AS(align_abundance(a, {0, 1}), Error);
  CHECK_THROWS_AS(align_abundance(a, {0, 1, -1}), Error);
}

TEST_CASE("bitemporal_mse averages the two dates") {
  const AbundanceCube e1 = random_abundance(4, 4, 2, 2), e2 = random_abundance(4, 4, 2, 3);
  const AbundanceCube t1 = random_abundance(4, 4, 2, 4), t2 = random_abundance(4, 4, 2, 5);
  const double expected =
      0.5 * (abundance_mse(e1, t1).average + abundance_mse(e2, t2).average);
  CHECK(std::abs(bitemporal_mse(e1, e2, t1, t2) - expected) < 1e-15);
  CHECK(bitemporal_mse(t1, t2, t1, t2) == 0.0);
}

TEST_CASE("compare table layout") {
  CompareResult r;
  r.rows.push_back({"FCLS+PUC", {0.9, 0.8, 0.7, 0.6}, 0.001});
  r.rows.push_back({"BCG-Net", {1.0, 1.0, 1.0, 1.0}, std::nan("")});
  const std::string t = format_compare_table(r);
  CHECK(t ==
        "method,binary_oa,binary_kappa,multiclass_oa,multiclass_kappa,abundance_mse\n"
        "FCLS+PUC,0.900000,0.800000,0.700000,0.600000,0.001\n"
        "BCG-Net,1.000000,1.000000,1.000000,1.000000,nan\n");
}
