#include "bcg/metrics.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "bcg/error.hpp"

namespace bcg {

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (const auto& row : counts)
    for (const std::size_t v : row) n += v;
  return n;
}

ConfusionMatrix confusion_matrix(const ChangeMap& predicted, const ChangeMap& reference,
                                 const std::vector<std::int32_t>& ids) {
  require(predicted.height() == reference.height() && predicted.width() == reference.width(),
          ErrorKind::kData, "confusion_matrix: map shapes differ");
  std::map<std::int32_t, std::size_t> index;
  for (std::size_t i = 0; i < ids.size(); ++i) index[ids[i]] = i;
  require(index.size() == ids.size(), ErrorKind::kData, "confusion_matrix: duplicate class id");
  ConfusionMatrix cm;
  cm.ids = ids;
  cm.counts.assign(ids.size(), std::vector<std::size_t>(ids.size(), 0));
  for (std::size_t p = 0; p < predicted.pixel_count(); ++p) {
    const auto r = index.find(reference[p]);
    const auto c = index.find(predicted[p]);
    if (r == index.end() || c == index.end())
      fail(ErrorKind::kData, "confusion_matrix: label outside the class list at pixel " +
                                 std::to_string(p));
    ++cm.counts[r->second][c->second];
  }
  return cm;
}

ConfusionMatrix confusion_matrix(const ChangeMap& predicted, const ChangeMap& reference) {
  std::set<std::int32_t> ids;
  for (const auto v : predicted.labels()) ids.insert(v);
  for (const auto v : reference.labels()) ids.insert(v);
  return confusion_matrix(predicted, reference, {ids.begin(), ids.end()});
}

double overall_accuracy(const ConfusionMatrix& cm) {
  const std::size_t total = cm.total();
  require(total > 0, ErrorKind::kData, "overall_accuracy: empty confusion matrix");
  std::size_t trace = 0;
  for (std::size_t i = 0; i < cm.counts.size(); ++i) trace += cm.counts[i][i];
  return static_cast<double>(trace) / static_cast<double>(total);
}

double kappa(const ConfusionMatrix& cm) {
  const std::size_t total = cm.total();
  require(total > 0, ErrorKind::kData, "kappa: empty confusion matrix");
  const std::size_t l = cm.counts.size();
  double chance = 0.0;
  for (std::size_t i = 0; i < l; ++i) {
    double row = 0.0, col = 0.0;
    for (std::size_t j = 0; j < l; ++j) {
      row += static_cast<double>(cm.counts[i][j]);
      col += static_cast<double>(cm.counts[j][i]);
    }
    chance += row * col;
  }
  const double n = static_cast<double>(total);
  const double pe = chance / (n * n);
  if (pe >= 1.0) return 0.0;
  return (overall_accuracy(cm) - pe) / (1.0 - pe);
}

namespace {

void check_same_shape(const AbundanceCube& a, const AbundanceCube& b, const char* op) {
  require(a.height() == b.height() && a.width() == b.width() && a.endmembers() == b.endmembers(),
          ErrorKind::kData, std::string(op) + ": abundance shapes differ");
}

}  // namespace

AbundanceMse abundance_mse(const AbundanceCube& estimate, const AbundanceCube& truth) {
  check_same_shape(estimate, truth, "abundance_mse");
  const int k = truth.endmembers();
  const std::size_t n = truth.values.pixel_count();
  AbundanceMse out;
  out.per_endmember.assign(static_cast<std::size_t>(k), 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    const auto e = estimate.values.pixel(p);
    const auto t = truth.values.pixel(p);
    for (int i = 0; i < k; ++i) out.per_endmember[i] += (t[i] - e[i]) * (t[i] - e[i]);
  }
  for (double& v : out.per_endmember) {
    v /= static_cast<double>(n);
    out.average += v;
  }
  out.average /= static_cast<double>(k);
  return out;
}

std::vector<double> residual_map(const AbundanceCube& estimate, const AbundanceCube& truth) {
  check_same_shape(estimate, truth, "residual_map");
  const int k = truth.endmembers();
  std::vector<double> out(truth.values.pixel_count());
  for (std::size_t p = 0; p < out.size(); ++p) {
    const auto e = estimate.values.pixel(p);
    const auto t = truth.values.pixel(p);
    double s = 0.0;
    for (int i = 0; i < k; ++i) s += (t[i] - e[i]) * (t[i] - e[i]);
    out[p] = s / static_cast<double>(k);
  }
  return out;
}

}  // namespace bcg
