// Runs the ten acceptance criteria and prints one PASS/FAIL line for each.
// Exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bcg/endmember.hpp"
#include "bcg/hsi.hpp"
#include "bcg/metrics.hpp"
#include "bcg/model.hpp"
#include "bcg/pipeline.hpp"
#include "bcg/predetect.hpp"
#include "bcg/synthetic.hpp"
#include "bcg/unmix.hpp"
#include "grad_suite.hpp"
#include "test_util.hpp"

using namespace bcg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_name;
  int checks = 0;
  std::uint64_t seed = 1;
  for (const test::GradCase& c : test::gradient_cases()) {
    std::mt19937_64 rng(seed++);
    for (int i = 0; i < 20; ++i, ++checks) {
      const double e = c.check(rng, rng());
      if (!(e <= worst)) {
        worst = e;
        worst_name = c.name;
      }
    }
  }
  const double t = seconds_since(t0);
  return {worst < 1e-4 && t < 120.0,
          std::to_string(checks) + " checks, worst " + fmt("%.2e", worst) + " (" + worst_name +
              "), " + fmt("%.1f s", t)};
}

Outcome constraint_suite() {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  int fcls_bad = 0, uu_bad = 0, uu_zero = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    const int bands = 3 + static_cast<int>(rng() % 8), k = 2 + static_cast<int>(rng() % 4);
    EndmemberSet e;
    e.signatures.resize(bands, k);
    for (Eigen::Index i = 0; i < e.signatures.size(); ++i) e.signatures.data()[i] = u(rng);
    std::vector<double> x(bands);
    for (double& v : x) v = 2.0 * n(rng);
    const Eigen::VectorXd s = fcls_pixel(e, x).abundance;
    if (!(s.minCoeff() >= 0.0 && std::abs(s.sum() - 1.0) <= 1e-12)) ++fcls_bad;
  }
  const int bands = 8, k = 3, m = 5;
  BcgModel model = make_model(bands, k, m, {2, 2, 2, 4, 4}, 3);
  for (int t = 0; t < trials; ++t) {
    if (t % 500 == 0) {
      model = make_model(bands, k, m, {2, 2, 2, 4, 4}, 3 + t);
      for (ad::Parameter* p : model.uu.all())
        for (double& v : p->value.values()) v += 0.05 * n(rng);
    }
    Patch px, py;
    px.size = py.size = m;
    px.bands = py.bands = bands;
    px.values.resize(static_cast<std::size_t>(m) * m * bands);
    py.values.resize(px.values.size());
    for (double& v : px.values) v = u(rng);
    for (double& v : py.values) v = u(rng);
    const AbundancePair s = uu_forward(model.uu, px, py);
    for (const std::vector<double>* a : {&s.s1, &s.s2}) {
      double sum = 0.0;
      bool neg = false;
      for (double v : *a) {
        sum += v;
        neg = neg || v < 0.0;
      }
      if (neg || sum > 1.0 + 1e-6) ++uu_bad;
      if (sum == 0.0) ++uu_zero;
    }
  }
  return {fcls_bad == 0 && uu_bad == 0,
          "fcls " + std::to_string(trials - fcls_bad) + "/" + std::to_string(trials) +
              ", uu_forward " + std::to_string(2 * trials - uu_bad) + "/" +
              std::to_string(2 * trials) + " (" + std::to_string(uu_zero) + " all-zero)"};
}

Outcome fcls_optimality() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int ok = 0;
  double worst_gap = -1e300;
  const int problems = 200;
  for (int t = 0; t < problems; ++t) {
    const int bands = 3 + static_cast<int>(rng() % 8);
    EndmemberSet e;
    e.signatures.resize(bands, 3);
    for (Eigen::Index i = 0; i < e.signatures.size(); ++i) e.signatures.data()[i] = u(rng);
    Eigen::VectorXd x(bands);
    for (int i = 0; i < bands; ++i) x[i] = 1.5 * u(rng);
    const Eigen::VectorXd s = fcls_pixel(e, std::span<const double>(x.data(), bands)).abundance;
    const double f = (e.signatures * s - x).squaredNorm();
    // Quadratic form of the objective so each grid point costs O(K^2).
    const Eigen::Matrix3d q = e.signatures.transpose() * e.signatures;
    const Eigen::Vector3d l = e.signatures.transpose() * x;
    const double c = x.squaredNorm();
    double best = 1e300;
    for (int i = 0; i <= 200; ++i)
      for (int j = 0; i + j <= 200; ++j) {
        const Eigen::Vector3d g(0.005 * i, 0.005 * j, 0.005 * (200 - i - j));
        best = std::min(best, g.dot(q * g) - 2.0 * g.dot(l) + c);
      }
    worst_gap = std::max(worst_gap, f - best);
    if (f <= best + 1e-4) ++ok;
  }
  const double t = seconds_since(t0);
  return {ok == problems && t < 60.0, std::to_string(ok) + "/" + std::to_string(problems) +
                                          ", worst f - grid " + fmt("%.2e", worst_gap) + ", " +
                                          fmt("%.1f s", t)};
}

SynthConfig pure_scene(int k, double snr, std::uint64_t seed) {
  SynthConfig c;
  c.endmembers = k;
  c.change_classes = 0;
  c.snr_db = snr;
  c.seed = seed;
  return c;
}

double worst_best_match(const EndmemberSet& est, const EndmemberSet& truth) {
  double worst = 0.0;
  for (int j = 0; j < truth.count(); ++j) {
    double best = 10.0;
    for (int i = 0; i < est.count(); ++i)
      best = std::min(best, spectral_angle(Eigen::VectorXd(est.signatures.col(i)),
                                           Eigen::VectorXd(truth.signatures.col(j))));
    worst = std::max(worst, best);
  }
  return worst;
}

Outcome vca_recovery() {
  double exact_worst = 0.0;
  for (int k = 2; k <= 5; ++k) {
    const SyntheticScene s = gen_synthetic_scene(pure_scene(k, INFINITY, 40 + k));
    exact_worst = std::max(exact_worst,
                           worst_best_match(vca_extract(s.cube_t1, k, k), s.endmembers_true));
  }
  int good = 0;
  for (int t = 0; t < 20; ++t) {
    const int k = 2 + t % 4;
    const SyntheticScene s = gen_synthetic_scene(pure_scene(k, 30.0, 100 + t));
    if (worst_best_match(vca_extract(s.cube_t1, k, t), s.endmembers_true) < 2.0 * M_PI / 180.0)
      ++good;
  }
  return {exact_worst < 1e-6 && good >= 18, "noiseless worst angle " + fmt("%.2e rad", exact_worst) +
                                                ", 30 dB " + std::to_string(good) + "/20 < 2 deg"};
}

Outcome subspace_dimension() {
  bool pass = true;
  std::string detail;
  for (int k = 2; k <= 6; ++k) {
    int hits = 0;
    for (int t = 0; t < 20; ++t) {
      const SyntheticScene s = gen_synthetic_scene(pure_scene(k, 30.0, 1000 * k + t));
      if (estimate_subspace_dim(s.cube_t1).k_hat == k) ++hits;
    }
    pass = pass && hits >= 18;
    detail += (detail.empty() ? "" : ", ") + std::string("K=") + std::to_string(k) + " " +
              std::to_string(hits) + "/20";
  }
  return {pass, detail + " at 30 dB"};
}

Outcome em_threshold() {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> samples;
  for (int i = 0; i < 5000; ++i) samples.push_back(n(rng));
  for (int i = 0; i < 5000; ++i) samples.push_back(10.0 + n(rng));
  std::shuffle(samples.begin(), samples.end(), rng);
  const GaussMix2 mix = em_fit_2gauss(samples);
  const double thr = bayes_threshold(mix);
  int drops = 0;
  for (std::size_t i = 1; i < mix.log_likelihood.size(); ++i)
    if (mix.log_likelihood[i] < mix.log_likelihood[i - 1] - 1e-10 * std::abs(mix.log_likelihood[i - 1]))
      ++drops;
  return {std::abs(thr - 5.0) <= 0.25 && drops == 0 && !mix.log_likelihood.empty(),
          "threshold " + fmt("%.4f", thr) + ", " + std::to_string(mix.iterations) +
              " iterations, " + std::to_string(drops) + " likelihood decreases"};
}

Outcome metrics_oracle() {
  int bad = 0;
  auto expect = [&bad](double got, double want) {
    if (!(std::abs(got - want) <= 1e-12)) ++bad;
  };
  ConfusionMatrix cm;
  cm.ids = {0, 1};
  cm.counts = {{50, 10}, {5, 35}};
  expect(overall_accuracy(cm), 0.85);
  expect(kappa(cm), 0.34 / 0.49);
  cm.counts = {{60, 0}, {0, 40}};
  expect(overall_accuracy(cm), 1.0);
  expect(kappa(cm), 1.0);
  cm.counts = {{100, 0}, {0, 0}};
  expect(overall_accuracy(cm), 1.0);
  expect(kappa(cm), 0.0);

  ChangeMap pred(2, 2), ref(2, 2);
  pred[1] = 1;
  ref[2] = 1;
  pred[3] = ref[3] = 1;
  const ConfusionMatrix hand = confusion_matrix(pred, ref, {0, 1});
  if (hand.counts != std::vector<std::vector<std::size_t>>{{1, 1}, {1, 1}}) ++bad;
  expect(overall_accuracy(hand), 0.5);
  expect(kappa(hand), 0.0);

  AbundanceCube est(1, 1, 2), truth(1, 1, 2);
  est.values.at(0, 0, 0) = 0.6;
  est.values.at(0, 0, 1) = 0.4;
  truth.values.at(0, 0, 0) = truth.values.at(0, 0, 1) = 0.5;
  const AbundanceMse m = abundance_mse(est, truth);
  expect(m.per_endmember[0], 0.01);
  expect(m.per_endmember[1], 0.01);
  expect(m.average, 0.01);
  expect(residual_map(est, truth)[0], 0.01);
  expect(abundance_mse(truth, truth).average, 0.0);
  return {bad == 0, std::to_string(15 - bad) + "/15 hand values"};
}

struct TrendResult {
  std::map<std::string, std::vector<double>> mse, bin_kappa, multi_kappa, bin_oa;
  double seconds = 0.0;
};

const std::vector<std::string> kMethods{"FCLS+PUC", "UU-only+PUC", "BCG-Net"};

TrendResult run_trend(double snr) {
  TrendResult r;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    SynthConfig sc;
    sc.snr_db = snr;
    sc.seed = seed;
    const SyntheticScene scene = gen_synthetic_scene(sc);
    CompareConfig cc;
    cc.seed = seed;
    cc.train.epochs = 40;
    cc.train.channels.c11 = 2;
    cc.train.channels.c12 = 4;
    cc.train.channels.c3 = 4;
    const CompareResult res = run_compare(scene, cc);
    for (const CompareRow& row : res.rows) {
      r.mse[row.method].push_back(row.abundance_mse);
      r.bin_kappa[row.method].push_back(row.scores.binary_kappa);
      r.multi_kappa[row.method].push_back(row.scores.multiclass_kappa);
      r.bin_oa[row.method].push_back(row.scores.binary_oa);
    }
    std::printf("  snr %g seed %llu:\n%s", snr, static_cast<unsigned long long>(seed),
                format_compare_table(res).c_str());
    std::fflush(stdout);
  }
  r.seconds = seconds_since(t0);
  return r;
}

Outcome mse_trend(const std::map<double, TrendResult>& runs, double total_seconds) {
  bool pass = total_seconds < 1800.0;
  std::string detail;
  for (const auto& [snr, r] : runs) {
    const double f = median3(r.mse.at("FCLS+PUC"));
    const double uu = median3(r.mse.at("UU-only+PUC"));
    const double bcg = median3(r.mse.at("BCG-Net"));
    pass = pass && bcg <= uu && uu < f;
    detail += fmt("%g dB: ", snr) + "BCG " + fmt("%.3g", bcg) + " UU " + fmt("%.3g", uu) +
              " FCLS " + fmt("%.3g", f) + "; ";
  }
  return {pass, detail + fmt("%.0f s", total_seconds)};
}

Outcome kappa_trend(const std::map<double, TrendResult>& runs) {
  bool pass = true;
  std::string detail;
  for (const auto& [snr, r] : runs) {
    const double bb = median3(r.bin_kappa.at("BCG-Net")), mb = median3(r.multi_kappa.at("BCG-Net"));
    const double oa = median3(r.bin_oa.at("BCG-Net"));
    for (const char* other : {"UU-only+PUC", "FCLS+PUC"})
      pass = pass && bb >= median3(r.bin_kappa.at(other)) && mb >= median3(r.multi_kappa.at(other));
    pass = pass && oa >= 0.95;
    detail += fmt("%g dB: ", snr) + "kappa bin BCG/UU/FCLS " + fmt("%.3f", bb) + "/" +
              fmt("%.3f", median3(r.bin_kappa.at("UU-only+PUC"))) + "/" +
              fmt("%.3f", median3(r.bin_kappa.at("FCLS+PUC"))) + " multi " + fmt("%.3f", mb) +
              "/" + fmt("%.3f", median3(r.multi_kappa.at("UU-only+PUC"))) + "/" +
              fmt("%.3f", median3(r.multi_kappa.at("FCLS+PUC"))) + " OA " + fmt("%.4f", oa) +
              "; ";
  }
  return {pass, detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Every stage of the pipeline on a small scene, written under `dir`.
void run_stages(const fs::path& dir) {
  SynthConfig sc;
  sc.height = sc.width = 32;
  sc.bands = 12;
  sc.endmembers = 3;
  sc.change_classes = 2;
  sc.snr_db = 30.0;
  sc.seed = 11;
  const SyntheticScene s = gen_synthetic_scene(sc);
  save_cube(s.cube_t1, dir / "x");
  save_cube(s.cube_t2, dir / "y");
  save_abundance(s.true_abund_t1, dir / "truth_t1");
  save_label_map(s.multiclass_ref, dir / "multiclass_ref");

  const HsiCube x = load_cube(dir / "x"), y = load_cube(dir / "y");
  const EndmemberSet e = multitemporal_endmembers(x, y, std::nullopt, 11).endmembers;
  save_endmembers(e, dir / "endmembers");

  const FclsCubeResult f1 = fcls_cube(e, x), f2 = fcls_cube(e, y);
  save_abundance(f1.abundance, dir / "fcls_t1");
  const PucResult puc = puc_rule(f1.abundance, f2.abundance);
  save_label_map(puc.multiclass, dir / "puc_multiclass");

  PredetectConfig pc;
  pc.n_unchanged = 40;
  pc.n_changed = 12;
  const PredetectResult pre = run_predetect(x, y, pc, 11);
  save_pseudo_labels(pre.labels, dir / "pseudo_labels.txt");

  TrainConfig tc;
  tc.epochs = 6;
  tc.warmup_uu = 2;
  tc.warmup_tc = 2;
  tc.batch = 8;
  tc.seed = 11;
  tc.channels = {2, 2, 2, 4, 4};
  std::ofstream log(dir / "train_log.txt");
  const TrainResult tr = train(x, y, load_endmembers(dir / "endmembers"),
                               load_pseudo_labels(dir / "pseudo_labels.txt"), tc,
                               [&](const EpochLog& l) { log << format_log_line(l) << '\n'; });
  log.close();
  save_model(tr.model, dir / "model.ckpt");

  const Inference inf = infer_change_prob(load_model(dir / "model.ckpt"), x, y, e, true);
  save_abundance(inf.abundance_t1, dir / "abund_t1");
  save_abundance(inf.abundance_t2, dir / "abund_t2");
  const BcgMaps maps = bcg_change_maps(inf);
  save_label_map(maps.binary, dir / "binary");
  save_label_map(maps.multiclass, dir / "multiclass");
}

Outcome determinism() {
  const fs::path a = test::temp_dir("acceptance_det_a"), b = test::temp_dir("acceptance_det_b");
  run_stages(a);
  run_stages(b);
  int files = 0, same = 0;
  std::uint64_t combined = 0;
  std::vector<fs::path> names;
  for (const auto& entry : fs::directory_iterator(a)) names.push_back(entry.path().filename());
  std::sort(names.begin(), names.end());
  for (const fs::path& name : names) {
    const std::string ba = slurp(a / name), bb = slurp(b / name);
    ++files;
    if (ba == bb && fs::exists(b / name)) ++same;
    combined = combined * 31 + fnv1a(ba);
  }
  char sum[32];
  std::snprintf(sum, sizeof sum, "%016llx", static_cast<unsigned long long>(combined));
  return {files > 0 && same == files,
          std::to_string(same) + "/" + std::to_string(files) + " files identical, checksum " + sum};
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&failed](int id, const char* name, const Outcome& o) {
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  };
  auto guarded = [](const std::function<Outcome()>& f) -> Outcome {
    try {
      return f();
    } catch (const std::exception& e) {
      return {false, std::string("exception: ") + e.what()};
    }
  };

  report(1, "gradient suite", guarded(gradient_suite));
  report(2, "abundance constraints", guarded(constraint_suite));
  report(3, "FCLS optimality", guarded(fcls_optimality));
  report(4, "VCA recovery", guarded(vca_recovery));
  report(5, "subspace dimension", guarded(subspace_dimension));
  report(6, "EM threshold", guarded(em_threshold));
  report(7, "metrics oracle", guarded(metrics_oracle));

  std::map<double, TrendResult> runs;
  double trend_seconds = 0.0;
  Outcome trend_error;
  try {
    for (double snr : {20.0, 50.0}) {
      runs[snr] = run_trend(snr);
      trend_seconds += runs[snr].seconds;
    }
  } catch (const std::exception& e) {
    trend_error = {false, std::string("exception: ") + e.what()};
  }
  const bool trend_ok = runs.size() == 2;
  report(8, "abundance MSE trend", trend_ok ? mse_trend(runs, trend_seconds) : trend_error);
  report(9, "kappa trend", trend_ok ? kappa_trend(runs) : trend_error);

  report(10, "determinism", guarded(determinism));
  std::printf("%d of 10 criteria failed\n", failed);
  return failed;
}
