#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bcg/hsi.hpp"

namespace bcg {

// counts[r][c]: reference class ids[r] predicted as ids[c].
struct ConfusionMatrix {
  std::vector<std::int32_t> ids;
  std::vector<std::vector<std::size_t>> counts;

  std::size_t total() const;
};

// Pixels whose labels fall outside `ids` are an error.
ConfusionMatrix confusion_matrix(const ChangeMap& predicted, const ChangeMap& reference,
                                 const std::vector<std::int32_t>& ids);
// Uses the union of labels present in either map.
ConfusionMatrix confusion_matrix(const ChangeMap& predicted, const ChangeMap& reference);

double overall_accuracy(const ConfusionMatrix& cm);
// Chance-corrected agreement; 0 when the expected agreement is 1.
double kappa(const ConfusionMatrix& cm);

struct AbundanceMse {
  std::vector<double> per_endmember;
  double average = 0.0;
};

AbundanceMse abundance_mse(const AbundanceCube& estimate, const AbundanceCube& truth);

// Per pixel: mean over endmembers of the squared error.
std::vector<double> residual_map(const AbundanceCube& estimate, const AbundanceCube& truth);

}  // namespace bcg
