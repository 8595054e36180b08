#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bcg/hsi.hpp"

namespace bcg {

// 1 where p > 0.5, else 0. The probabilities are kept on the map.
ChangeMap binarize(std::span<const double> probability, int height, int width);

// Changed pixels get c1 * K + c2 + 1 from the dominant classes of each date.
ChangeMap multiclass_from_abundance(const AbundanceCube& a1, const AbundanceCube& a2,
                                    const ChangeMap& binary);

struct ClassMatch {
  std::int32_t predicted = 0;
  std::int32_t reference = kUnmatchedLabel;
  std::size_t overlap = 0;
};

struct MatchResult {
  ChangeMap relabeled;
  std::vector<ClassMatch> matches;  // one per predicted id, ascending
};

// One-to-one maximum-overlap assignment of predicted change ids to reference
// ids; predicted ids left without a positive-overlap partner become 255.
MatchResult match_classes_to_reference(const ChangeMap& predicted, const ChangeMap& reference);

// `pred_id -> ref_id overlap` lines.
std::string format_match_report(const MatchResult& result);

}  // namespace bcg
