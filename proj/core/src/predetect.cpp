#include "bcg/predetect.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "bcg/error.hpp"
#include "bcg/rng.hpp"

namespace bcg {

std::vector<double> cva_magnitude(const HsiCube& x, const HsiCube& y) {
  require(x.height() == y.height() && x.width() == y.width() && x.bands() == y.bands(),
          ErrorKind::kData, "cva_magnitude: cube shapes differ");
  std::vector<double> out(x.pixel_count());
  for (std::size_t p = 0; p < out.size(); ++p) {
    const auto a = x.pixel(p), b = y.pixel(p);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = b[i] - a[i];
      s += d * d;
    }
    out[p] = std::sqrt(s);
  }
  return out;
}

namespace {

constexpr double kMinVariance = 1e-12;

double log_normal_pdf(double x, double mean, double variance) {
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * variance) + d * d / variance);
}

bool split_init(std::span<const double> samples, double percentile, GaussMix2& mix) {
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const auto pos = static_cast<std::size_t>(percentile / 100.0 * (sorted.size() - 1));
  const double cut = sorted[pos];
  double n[2] = {0, 0}, sum[2] = {0, 0}, sq[2] = {0, 0};
  for (const double v : samples) {
    const int c = v <= cut ? 0 : 1;
    n[c] += 1;
    sum[c] += v;
  }
  if (n[0] == 0 || n[1] == 0) return false;
  const double mean[2] = {sum[0] / n[0], sum[1] / n[1]};
  for (const double v : samples) {
    const int c = v <= cut ? 0 : 1;
    sq[c] += (v - mean[c]) * (v - mean[c]);
  }
  const double total = n[0] + n[1];
  mix.unchanged = {n[0] / total, mean[0], sq[0] / n[0]};
  mix.changed = {n[1] / total, mean[1], sq[1] / n[1]};
  return mix.unchanged.variance >= kMinVariance && mix.changed.variance >= kMinVariance;
}

enum class EmOutcome { kOk, kCollapsed };

EmOutcome run_em(std::span<const double> samples, const EmOptions& opt, GaussMix2& mix) {
  const std::size_t n = samples.size();
  std::vector<double> resp(n);
  double previous = -std::numeric_limits<double>::infinity();
  mix.log_likelihood.clear();
  for (int it = 0; it < opt.max_iter; ++it) {
    // E-step and log-likelihood of the current parameters.
    double ll = 0.0;
    const double lw0 = std::log(mix.unchanged.weight), lw1 = std::log(mix.changed.weight);
    for (std::size_t i = 0; i < n; ++i) {
      const double a = lw0 + log_normal_pdf(samples[i], mix.unchanged.mean, mix.unchanged.variance);
      const double b = lw1 + log_normal_pdf(samples[i], mix.changed.mean, mix.changed.variance);
      const double m = std::max(a, b);
      const double lse = m + std::log(std::exp(a - m) + std::exp(b - m));
      ll += lse;
      resp[i] = std::exp(b - lse);
    }
    mix.log_likelihood.push_back(ll);
    mix.iterations = it + 1;
    if (ll < previous - 1e-9 * std::abs(previous))
      fail(ErrorKind::kNumeric, "EM log-likelihood decreased at iteration " + std::to_string(it));
    if (std::abs(ll - previous) < opt.tol) break;
    previous = ll;

    // M-step.
    double r1 = 0.0, s0 = 0.0, s1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      r1 += resp[i];
      s0 += (1.0 - resp[i]) * samples[i];
      s1 += resp[i] * samples[i];
    }
    const double r0 = static_cast<double>(n) - r1;
    if (r0 <= 0.0 || r1 <= 0.0) return EmOutcome::kCollapsed;
    const double m0 = s0 / r0, m1 = s1 / r1;
    double v0 = 0.0, v1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      v0 += (1.0 - resp[i]) * (samples[i] - m0) * (samples[i] - m0);
      v1 += resp[i] * (samples[i] - m1) * (samples[i] - m1);
    }
    v0 /= r0;
    v1 /= r1;
    if (v0 < kMinVariance || v1 < kMinVariance) return EmOutcome::kCollapsed;
    mix.unchanged = {r0 / static_cast<double>(n), m0, v0};
    mix.changed = {r1 / static_cast<double>(n), m1, v1};
  }
  return EmOutcome::kOk;
}

}  // namespace

GaussMix2 em_fit_2gauss(std::span<const double> samples, const EmOptions& options) {
  require(samples.size() >= 10, ErrorKind::kData, "EM needs at least 10 samples");
  for (const double v : samples)
    require(std::isfinite(v), ErrorKind::kData, "EM: non-finite sample");

  GaussMix2 mix;
  bool ok = split_init(samples, options.init_percentile, mix) &&
            run_em(samples, options, mix) == EmOutcome::kOk;
  if (!ok) {
    ok = split_init(samples, 50.0, mix) && run_em(samples, options, mix) == EmOutcome::kOk;
    if (!ok) fail(ErrorKind::kNumeric, "EM: variance collapse");
  }
  if (mix.unchanged.mean > mix.changed.mean) std::swap(mix.unchanged, mix.changed);
  return mix;
}

double bayes_threshold(const GaussMix2& mix) {
  const double mu0 = mix.unchanged.mean, mu1 = mix.changed.mean;
  require(mu1 > mu0, ErrorKind::kNumeric, "bayes_threshold: degenerate mixture (equal means)");
  auto excess = [&](double t) {
    return (std::log(mix.changed.weight) + log_normal_pdf(t, mu1, mix.changed.variance)) -
           (std::log(mix.unchanged.weight) + log_normal_pdf(t, mu0, mix.unchanged.variance));
  };
  if (excess(mu0) >= 0.0) return mu0;
  constexpr int kScan = 1000;
  const double step = (mu1 - mu0) / kScan;
  double lo = mu0;
  double hi = mu1;
  bool bracketed = false;
  for (int i = 1; i <= kScan; ++i) {
    const double t = mu0 + step * i;
    if (excess(t) >= 0.0) {
      lo = t - step;
      hi = t;
      bracketed = true;
      break;
    }
  }
  if (!bracketed) return mu1;
  const double width = 1e-9 * (mu1 - mu0);
  while (hi - lo > width) {
    const double mid = 0.5 * (lo + hi);
    if (excess(mid) >= 0.0)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

PseudoLabelSet select_pseudo_labels(std::span<const double> magnitude, int height, int width,
                                    double threshold, std::size_t n_unchanged,
                                    std::size_t n_changed, SamplingMode mode,
                                    std::uint64_t seed) {
  require(magnitude.size() == static_cast<std::size_t>(height) * width, ErrorKind::kData,
          "select_pseudo_labels: map size mismatch");
  std::vector<std::size_t> below, above;
  double lowest = threshold, highest = threshold;
  for (std::size_t p = 0; p < magnitude.size(); ++p) {
    if (magnitude[p] > threshold) {
      above.push_back(p);
      highest = std::max(highest, magnitude[p]);
    } else {
      below.push_back(p);
      lowest = std::min(lowest, magnitude[p]);
    }
  }
  if (below.size() < n_unchanged)
    fail(ErrorKind::kData, "insufficient unchanged pixels: requested " +
                               std::to_string(n_unchanged) + ", available " +
                               std::to_string(below.size()));
  if (above.size() < n_changed)
    fail(ErrorKind::kData, "insufficient changed pixels: requested " + std::to_string(n_changed) +
                               ", available " + std::to_string(above.size()));

  auto confidence = [&](std::size_t p) {
    if (magnitude[p] > threshold)
      return highest > threshold ? (magnitude[p] - threshold) / (highest - threshold) : 1.0;
    return threshold > lowest ? (threshold - magnitude[p]) / (threshold - lowest) : 1.0;
  };

  Rng rng = make_rng(seed, 0x70736575ULL);
  auto pick = [&](std::vector<std::size_t>& pool, std::size_t n, int label,
                  PseudoLabelSet& out) {
    if (mode == SamplingMode::kRandom) {
      std::shuffle(pool.begin(), pool.end(), rng);
    } else {
      std::stable_sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
        return confidence(a) > confidence(b);
      });
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t p = pool[i];
      out.samples.push_back({static_cast<int>(p / width), static_cast<int>(p % width), label,
                             confidence(p)});
    }
  };

  PseudoLabelSet out;
  pick(below, n_unchanged, 0, out);
  pick(above, n_changed, 1, out);
  out.n_unchanged = n_unchanged;
  out.n_changed = n_changed;
  return out;
}

void save_pseudo_labels(const PseudoLabelSet& labels, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << "n_unchanged=" << labels.n_unchanged << " n_changed=" << labels.n_changed << "\n";
  char buf[64];
  for (const auto& s : labels.samples) {
    std::snprintf(buf, sizeof buf, "%.17g", s.confidence);
    out << s.row << ' ' << s.col << ' ' << s.label << ' ' << buf << '\n';
  }
  if (!out) fail(ErrorKind::kIo, "write failed for " + path.string());
}

PseudoLabelSet load_pseudo_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot read " + path.string());
  PseudoLabelSet out;
  std::string header;
  std::getline(in, header);
  if (std::sscanf(header.c_str(), "n_unchanged=%zu n_changed=%zu", &out.n_unchanged,
                  &out.n_changed) != 2)
    fail(ErrorKind::kData, "bad pseudo-label header in " + path.string());
  std::string line;
  std::size_t counts[2] = {0, 0};
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    PseudoLabel s;
    if (!(fields >> s.row >> s.col >> s.label >> s.confidence) || (s.label != 0 && s.label != 1))
      fail(ErrorKind::kData, "bad pseudo-label line '" + line + "'");
    ++counts[s.label];
    out.samples.push_back(s);
  }
  require(counts[0] == out.n_unchanged && counts[1] == out.n_changed, ErrorKind::kData,
          "pseudo-label counts do not match header in " + path.string());
  return out;
}

}  // namespace bcg
