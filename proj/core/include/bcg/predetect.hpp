#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "bcg/hsi.hpp"

namespace bcg {

struct PseudoLabel {
  int row = 0;
  int col = 0;
  int label = 0;  // 0 unchanged, 1 changed
  double confidence = 0.0;
};

struct PseudoLabelSet {
  std::vector<PseudoLabel> samples;
  std::size_t n_unchanged = 0;
  std::size_t n_changed = 0;
};

struct GaussComponent {
  double weight = 0.0;
  double mean = 0.0;
  double variance = 0.0;
};

// Two-component 1-D mixture; component 0 is the unchanged (lower-mean) one.
struct GaussMix2 {
  GaussComponent unchanged;
  GaussComponent changed;
  std::vector<double> log_likelihood;  // one entry per EM iteration
  int iterations = 0;
};

// Row-major H*W map of ||y - x|| over bands.
std::vector<double> cva_magnitude(const HsiCube& x, const HsiCube& y);

struct EmOptions {
  int max_iter = 500;
  double tol = 1e-6;
  double init_percentile = 70.0;
};

GaussMix2 em_fit_2gauss(std::span<const double> samples, const EmOptions& options = {});

// Smallest t in [mu0, mu1] where w1 N(t; mu1, s1) >= w0 N(t; mu0, s0).
double bayes_threshold(const GaussMix2& mix);

enum class SamplingMode { kConfidence, kRandom };

PseudoLabelSet select_pseudo_labels(std::span<const double> magnitude, int height, int width,
                                    double threshold, std::size_t n_unchanged,
                                    std::size_t n_changed,
                                    SamplingMode mode = SamplingMode::kConfidence,
                                    std::uint64_t seed = 0);

void save_pseudo_labels(const PseudoLabelSet& labels, const std::filesystem::path& path);
PseudoLabelSet load_pseudo_labels(const std::filesystem::path& path);

}  // namespace bcg
