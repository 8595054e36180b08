#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bcg/changemap.hpp"
#include "bcg/endmember.hpp"
#include "bcg/hsi.hpp"
#include "bcg/model.hpp"
#include "bcg/predetect.hpp"
#include "bcg/synthetic.hpp"

namespace bcg {

struct PredetectConfig {
  std::size_t n_unchanged = 400;
  std::size_t n_changed = 100;
  SamplingMode sampling = SamplingMode::kConfidence;
  EmOptions em;
};

struct PredetectResult {
  std::vector<double> magnitude;
  GaussMix2 mixture;
  double threshold = 0.0;
  PseudoLabelSet labels;
};

PredetectResult run_predetect(const HsiCube& x, const HsiCube& y, const PredetectConfig& config,
                              std::uint64_t seed);

// Binary map from the TC probabilities plus the from-to map built from the
// inferred abundances.
struct BcgMaps {
  ChangeMap binary;
  ChangeMap multiclass;
};

BcgMaps bcg_change_maps(const Inference& inference);

struct MapScores {
  double binary_oa = 0.0;
  double binary_kappa = 0.0;
  double multiclass_oa = 0.0;
  double multiclass_kappa = 0.0;
};

// The multiclass map is matched to the reference ids before scoring.
MapScores score_maps(const ChangeMap& binary, const ChangeMap& multiclass,
                     const ChangeMap& binary_ref, const ChangeMap& multiclass_ref);

// Abundance bands permuted so band j follows reference endmember j.
// `match[i]` is the reference index of estimated endmember i.
AbundanceCube align_abundance(const AbundanceCube& estimate, const std::vector<int>& match);

// Mean of the average abundance MSE of the two dates.
double bitemporal_mse(const AbundanceCube& est_t1, const AbundanceCube& est_t2,
                      const AbundanceCube& truth_t1, const AbundanceCube& truth_t2);

struct CompareConfig {
  TrainConfig train;
  PredetectConfig predetect;
  std::optional<int> k_override;
  std::uint64_t seed = 0;
};

struct CompareRow {
  std::string method;
  MapScores scores;
  double abundance_mse = 0.0;  // NaN when the endmember count differs from the truth
};

struct CompareResult {
  std::vector<CompareRow> rows;  // FCLS+PUC, UU-only+PUC, BCG-Net
  int endmembers = 0;
  double threshold = 0.0;
};

CompareResult run_compare(const SyntheticScene& scene, const CompareConfig& config);

// Comma-separated table with a header line.
std::string format_compare_table(const CompareResult& result);

}  // namespace bcg
