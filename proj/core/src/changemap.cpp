#include "bcg/changemap.hpp"

#include <map>
#include <set>
#include <sstream>

#include "bcg/assignment.hpp"
#include "bcg/error.hpp"

namespace bcg {

ChangeMap binarize(std::span<const double> probability, int height, int width) {
  ChangeMap out(height, width);
  require(probability.size() == out.pixel_count(), ErrorKind::kData,
          "binarize: probability map size mismatch");
  for (std::size_t p = 0; p < probability.size(); ++p) out[p] = probability[p] > 0.5 ? 1 : 0;
  out.probability.assign(probability.begin(), probability.end());
  return out;
}

ChangeMap multiclass_from_abundance(const AbundanceCube& a1, const AbundanceCube& a2,
                                    const ChangeMap& binary) {
  require(a1.height() == a2.height() && a1.width() == a2.width() &&
              a1.endmembers() == a2.endmembers(),
          ErrorKind::kData, "multiclass: abundance shapes differ");
  require(binary.height() == a1.height() && binary.width() == a1.width(), ErrorKind::kData,
          "multiclass: binary map shape differs from abundances");
  const int k = a1.endmembers();
  ChangeMap out(binary.height(), binary.width());
  for (std::size_t p = 0; p < out.pixel_count(); ++p) {
    if (binary[p] == 0) continue;
    out[p] = dominant_class(a1.values.pixel(p)) * k + dominant_class(a2.values.pixel(p)) + 1;
  }
  return out;
}

MatchResult match_classes_to_reference(const ChangeMap& predicted, const ChangeMap& reference) {
  require(predicted.height() == reference.height() && predicted.width() == reference.width(),
          ErrorKind::kData, "match: map shapes differ");
  std::set<std::int32_t> pred_ids, ref_ids;
  for (std::size_t p = 0; p < predicted.pixel_count(); ++p) {
    if (predicted[p] != 0) pred_ids.insert(predicted[p]);
    if (reference[p] != 0) ref_ids.insert(reference[p]);
  }
  const std::vector<std::int32_t> pred(pred_ids.begin(), pred_ids.end());
  const std::vector<std::int32_t> ref(ref_ids.begin(), ref_ids.end());
  std::map<std::int32_t, std::size_t> pred_index, ref_index;
  for (std::size_t i = 0; i < pred.size(); ++i) pred_index[pred[i]] = i;
  for (std::size_t j = 0; j < ref.size(); ++j) ref_index[ref[j]] = j;

  std::vector<std::vector<std::size_t>> overlap(pred.size(),
                                                std::vector<std::size_t>(ref.size(), 0));
  for (std::size_t p = 0; p < predicted.pixel_count(); ++p)
    if (predicted[p] != 0 && reference[p] != 0)
      ++overlap[pred_index[predicted[p]]][ref_index[reference[p]]];

  MatchResult out;
  out.relabeled = predicted;
  out.relabeled.probability = predicted.probability;
  std::map<std::int32_t, std::int32_t> mapping;
  std::vector<int> assigned(pred.size(), -1);
  if (!pred.empty() && !ref.empty()) {
    CostMatrix weight(pred.size(), std::vector<double>(ref.size()));
    for (std::size_t i = 0; i < pred.size(); ++i)
      for (std::size_t j = 0; j < ref.size(); ++j)
        weight[i][j] = static_cast<double>(overlap[i][j]);
    assigned = max_weight_assignment(weight);
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ClassMatch m;
    m.predicted = pred[i];
    const int j = assigned[i];
    if (j >= 0 && overlap[i][static_cast<std::size_t>(j)] > 0) {
      m.reference = ref[static_cast<std::size_t>(j)];
      m.overlap = overlap[i][static_cast<std::size_t>(j)];
    }
    mapping[m.predicted] = m.reference;
    out.matches.push_back(m);
  }
  for (std::size_t p = 0; p < out.relabeled.pixel_count(); ++p)
    if (out.relabeled[p] != 0) out.relabeled[p] = mapping[out.relabeled[p]];
  return out;
}

std::string format_match_report(const MatchResult& result) {
  std::ostringstream out;
  for (const ClassMatch& m : result.matches)
    out << m.predicted << " -> " << m.reference << ' ' << m.overlap << '\n';
  return out.str();
}

}  // namespace bcg
