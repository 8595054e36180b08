#include "bcg/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "bcg/error.hpp"
#include "bcg/metrics.hpp"
#include "bcg/unmix.hpp"

namespace bcg {

PredetectResult run_predetect(const HsiCube& x, const HsiCube& y, const PredetectConfig& config,
                              std::uint64_t seed) {
  PredetectResult out;
  out.magnitude = cva_magnitude(x, y);
  out.mixture = em_fit_2gauss(out.magnitude, config.em);
  out.threshold = bayes_threshold(out.mixture);
  out.labels = select_pseudo_labels(out.magnitude, x.height(), x.width(), out.threshold,
                                    config.n_unchanged, config.n_changed, config.sampling, seed);
  return out;
}

BcgMaps bcg_change_maps(const Inference& inference) {
  const AbundanceCube& a1 = inference.abundance_t1;
  BcgMaps out;
  out.binary = binarize(inference.probability, a1.height(), a1.width());
  out.multiclass = multiclass_from_abundance(a1, inference.abundance_t2, out.binary);
  return out;
}

MapScores score_maps(const ChangeMap& binary, const ChangeMap& multiclass,
                     const ChangeMap& binary_ref, const ChangeMap& multiclass_ref) {
  MapScores s;
  const ConfusionMatrix bin = confusion_matrix(binary, binary_ref, {0, 1});
  s.binary_oa = overall_accuracy(bin);
  s.binary_kappa = kappa(bin);
  const MatchResult matched = match_classes_to_reference(multiclass, multiclass_ref);
  const ConfusionMatrix multi = confusion_matrix(matched.relabeled, multiclass_ref);
  s.multiclass_oa = overall_accuracy(multi);
  s.multiclass_kappa = kappa(multi);
  return s;
}

AbundanceCube align_abundance(const AbundanceCube& estimate, const std::vector<int>& match) {
  const int k = estimate.endmembers();
  require(static_cast<int>(match.size()) == k, ErrorKind::kData,
          "align_abundance: match size differs from endmember count");
  AbundanceCube out(estimate.height(), estimate.width(), k, estimate.producer);
  for (std::size_t p = 0; p < estimate.values.pixel_count(); ++p) {
    const auto src = estimate.values.pixel(p);
    auto dst = out.values.pixel(p);
    for (int i = 0; i < k; ++i) {
      require(match[i] >= 0 && match[i] < k, ErrorKind::kData,
              "align_abundance: incomplete endmember match");
      dst[match[i]] = src[i];
    }
  }
  return out;
}

double bitemporal_mse(const AbundanceCube& est_t1, const AbundanceCube& est_t2,
                      const AbundanceCube& truth_t1, const AbundanceCube& truth_t2) {
  return 0.5 * (abundance_mse(est_t1, truth_t1).average + abundance_mse(est_t2, truth_t2).average);
}

CompareResult run_compare(const SyntheticScene& scene, const CompareConfig& config) {
  const HsiCube& x = scene.cube_t1;
  const HsiCube& y = scene.cube_t2;
  CompareResult out;
  const MultitemporalEndmembers em = multitemporal_endmembers(x, y, config.k_override, config.seed);
  const EndmemberSet& e = em.endmembers;
  out.endmembers = e.count();
  const bool comparable = e.count() == scene.endmembers_true.count();
  const std::vector<int> match =
      comparable ? match_endmembers(e, scene.endmembers_true) : std::vector<int>{};
  auto mse = [&](const AbundanceCube& a1, const AbundanceCube& a2) {
    if (!comparable) return std::numeric_limits<double>::quiet_NaN();
    return bitemporal_mse(align_abundance(a1, match), align_abundance(a2, match),
                          scene.true_abund_t1, scene.true_abund_t2);
  };
  auto score = [&](const ChangeMap& b, const ChangeMap& m) {
    return score_maps(b, m, scene.binary_ref, scene.multiclass_ref);
  };

  {
    const AbundanceCube a1 = fcls_cube(e, x).abundance;
    const AbundanceCube a2 = fcls_cube(e, y).abundance;
    const PucResult puc = puc_rule(a1, a2);
    out.rows.push_back({"FCLS+PUC", score(puc.binary, puc.multiclass), mse(a1, a2)});
  }

  const PredetectResult pre = run_predetect(x, y, config.predetect, config.seed);
  out.threshold = pre.threshold;
  TrainConfig tc = config.train;
  tc.seed = config.seed;
  {
    tc.mode = TrainMode::kUuOnly;
    const TrainResult trained = train(x, y, e, pre.labels, tc);
    const Inference inf = infer_change_prob(trained.model, x, y, e, false);
    const PucResult puc = puc_rule(inf.abundance_t1, inf.abundance_t2);
    out.rows.push_back({"UU-only+PUC", score(puc.binary, puc.multiclass),
                        mse(inf.abundance_t1, inf.abundance_t2)});
  }
  {
    tc.mode = TrainMode::kFull;
    const TrainResult trained = train(x, y, e, pre.labels, tc);
    const Inference inf = infer_change_prob(trained.model, x, y, e, true);
    const BcgMaps maps = bcg_change_maps(inf);
    out.rows.push_back({"BCG-Net", score(maps.binary, maps.multiclass),
                        mse(inf.abundance_t1, inf.abundance_t2)});
  }
  return out;
}

std::string format_compare_table(const CompareResult& result) {
  std::ostringstream out;
  out << "method,binary_oa,binary_kappa,multiclass_oa,multiclass_kappa,abundance_mse\n";
  char buf[256];
  for (const CompareRow& r : result.rows) {
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f,%.6g\n", r.method.c_str(),
                  r.scores.binary_oa, r.scores.binary_kappa, r.scores.multiclass_oa,
                  r.scores.multiclass_kappa, r.abundance_mse);
    out << buf;
  }
  return out.str();
}

}  // namespace bcg
