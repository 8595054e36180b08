#include "bcg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <set>
#include <utility>

#include "bcg/error.hpp"
#include "bcg/rng.hpp"

namespace bcg {

namespace {

constexpr std::uint64_t kStreamSignatures = 1;
constexpr std::uint64_t kStreamRegions = 2;
constexpr std::uint64_t kStreamEdits = 3;
constexpr std::uint64_t kStreamNoiseT1 = 4;
constexpr std::uint64_t kStreamNoiseT2 = 5;
constexpr std::uint64_t kStreamIllumination = 6;

struct Site {
  double row, col;
  int label;
};

int dominant(std::span<const double> a) { return dominant_class(a); }

AbundanceCube voronoi_abundance(const SynthConfig& cfg, Rng& rng) {
  const int k = cfg.endmembers;
  const int n_sites = cfg.regions > 0 ? cfg.regions : 3 * k;
  require(n_sites >= k, ErrorKind::kUsage, "need at least one region per endmember");

  std::uniform_real_distribution<double> urow(0.0, cfg.height - 1.0), ucol(0.0, cfg.width - 1.0);
  std::vector<int> labels(n_sites);
  for (int i = 0; i < n_sites; ++i) labels[i] = i % k;
  std::shuffle(labels.begin(), labels.end(), rng);
  std::vector<Site> sites;
  for (int i = 0; i < n_sites; ++i) sites.push_back({urow(rng), ucol(rng), labels[i]});

  AbundanceCube out(cfg.height, cfg.width, k, AbundanceProducer::kTruth);
  for (int r = 0; r < cfg.height; ++r) {
    for (int c = 0; c < cfg.width; ++c) {
      double best = std::numeric_limits<double>::infinity();
      int best_label = 0;
      for (const Site& s : sites) {
        const double d = std::hypot(r - s.row, c - s.col);
        if (d < best) {
          best = d;
          best_label = s.label;
        }
      }
      double other = std::numeric_limits<double>::infinity();
      int other_label = best_label;
      for (const Site& s : sites) {
        if (s.label == best_label) continue;
        const double d = std::hypot(r - s.row, c - s.col);
        if (d < other) {
          other = d;
          other_label = s.label;
        }
      }
      auto px = out.values.pixel(r, c);
      // Distance to the bisector with the nearest foreign site.
      const double margin = 0.5 * (other - best);
      if (other_label == best_label || margin >= cfg.border_width) {
        px[best_label] = 1.0;
      } else {
        const double share = 0.5 + 0.5 * margin / cfg.border_width;
        px[best_label] = share;
        px[other_label] = 1.0 - share;
      }
    }
  }

  // Regions can be too thin to leave pure interiors; pin one pure pixel per
  // endmember at its first site.
  for (int label = 0; label < k; ++label) {
    bool has_pure = false;
    for (std::size_t p = 0; p < out.values.pixel_count() && !has_pure; ++p)
      has_pure = out.values.pixel(p)[label] == 1.0;
    if (has_pure) continue;
    for (const Site& s : sites) {
      if (s.label != label) continue;
      auto px = out.values.pixel(static_cast<int>(std::lround(s.row)),
                                 static_cast<int>(std::lround(s.col)));
      std::fill(px.begin(), px.end(), 0.0);
      px[label] = 1.0;
      break;
    }
  }
  return out;
}

struct Block {
  int row, col, height, width;
  bool overlaps(const Block& o, int gap) const {
    return row < o.row + o.height + gap && o.row < row + height + gap &&
           col < o.col + o.width + gap && o.col < col + width + gap;
  }
};

bool block_dominated_by(const AbundanceCube& a, const Block& b, int label) {
  for (int r = b.row; r < b.row + b.height; ++r)
    for (int c = b.col; c < b.col + b.width; ++c)
      if (dominant(a.values.pixel(r, c)) != label) return false;
  return true;
}

std::vector<double> smooth_field(int height, int width, Rng& rng) {
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> freq(0.5, 2.0);
  std::vector<double> field(static_cast<std::size_t>(height) * width, 0.0);
  constexpr int kWaves = 4;
  for (int w = 0; w < kWaves; ++w) {
    const double fr = freq(rng) * 2.0 * std::numbers::pi / height;
    const double fc = freq(rng) * 2.0 * std::numbers::pi / width;
    const double ph = phase(rng);
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c)
        field[static_cast<std::size_t>(r) * width + c] += std::sin(fr * r + fc * c + ph);
  }
  double peak = 0.0;
  for (double v : field) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : field) v /= peak;
  return field;
}

HsiCube apply_illumination(const HsiCube& cube, double amplitude, Rng& rng) {
  if (amplitude == 0.0) return cube;
  const std::vector<double> field = smooth_field(cube.height(), cube.width(), rng);
  HsiCube out = cube;
  for (std::size_t p = 0; p < out.pixel_count(); ++p)
    for (double& v : out.pixel(p)) v *= 1.0 + amplitude * field[p];
  return out;
}

}  // namespace

EndmemberSet random_endmembers(int bands, int count, std::uint64_t seed, double min_angle_rad) {
  require(bands >= 2 && count >= 1, ErrorKind::kUsage, "random_endmembers: bad dimensions");
  Rng rng = make_rng(seed, kStreamSignatures);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  EndmemberSet out;
  out.signatures.resize(bands, count);
  constexpr int kMaxAttempts = 10000;
  for (int j = 0; j < count; ++j) {
    bool accepted = false;
    for (int attempt = 0; attempt < kMaxAttempts && !accepted; ++attempt) {
      Eigen::VectorXd s(bands);
      const double base = 0.1 + 0.3 * unit(rng);
      const double slope = -0.3 + 0.6 * unit(rng);
      double centers[3], widths[3], heights[3];
      for (int g = 0; g < 3; ++g) {
        centers[g] = unit(rng);
        widths[g] = 0.05 + 0.2 * unit(rng);
        heights[g] = -0.2 + 0.7 * unit(rng);
      }
      for (int b = 0; b < bands; ++b) {
        const double t = bands == 1 ? 0.0 : static_cast<double>(b) / (bands - 1);
        double v = base + slope * t;
        for (int g = 0; g < 3; ++g)
          v += heights[g] * std::exp(-0.5 * std::pow((t - centers[g]) / widths[g], 2));
        s(b) = v;
      }
      const double lo = s.minCoeff(), hi = s.maxCoeff();
      if (hi - lo < 1e-6) continue;
      // Rescale into a reflectance-like range.
      const double top = 0.4 + 0.5 * unit(rng);
      const double bottom = 0.02 + 0.1 * unit(rng);
      s = (s.array() - lo) / (hi - lo) * (top - bottom) + bottom;
      accepted = true;
      for (int i = 0; i < j && accepted; ++i)
        accepted = spectral_angle(s, Eigen::VectorXd(out.signatures.col(i))) >= min_angle_rad;
      if (accepted) out.signatures.col(j) = s;
    }
    if (!accepted) fail(ErrorKind::kUsage, "could not draw sufficiently distinct endmembers");
  }
  return out;
}

HsiCube mix_linear(const EndmemberSet& endmembers, const AbundanceCube& abundance) {
  require(endmembers.count() == abundance.endmembers(), ErrorKind::kData,
          "mix_linear: endmember count mismatch");
  HsiCube out(abundance.height(), abundance.width(), endmembers.bands());
  for (std::size_t p = 0; p < out.pixel_count(); ++p) {
    const auto a = abundance.values.pixel(p);
    auto x = out.pixel(p);
    for (int b = 0; b < endmembers.bands(); ++b) {
      double v = 0.0;
      for (int j = 0; j < endmembers.count(); ++j) v += endmembers.signatures(b, j) * a[j];
      x[b] = v;
    }
  }
  return out;
}

SyntheticScene gen_synthetic_scene(const SynthConfig& cfg) {
  require(cfg.height >= 4 && cfg.width >= 4 && cfg.bands >= 3, ErrorKind::kUsage,
          "scene must be at least 4x4x3");
  require(cfg.endmembers >= 2 && cfg.endmembers <= 8, ErrorKind::kUsage,
          "endmembers must be in 2..8");
  require(cfg.change_classes >= 0 && cfg.change_classes <= 8, ErrorKind::kUsage,
          "change_classes must be in 0..8");
  require(cfg.change_classes <= cfg.endmembers * (cfg.endmembers - 1), ErrorKind::kUsage,
          "more change classes than distinct from-to transitions");
  require(cfg.block_min >= 1 && cfg.block_max >= cfg.block_min &&
              cfg.block_max <= std::min(cfg.height, cfg.width),
          ErrorKind::kUsage, "bad block size range");
  require(cfg.border_width > 0.0, ErrorKind::kUsage, "border_width must be positive");

  SyntheticScene scene;
  scene.seed = cfg.seed;
  scene.snr_db = cfg.snr_db;
  scene.endmembers_true = random_endmembers(cfg.bands, cfg.endmembers, cfg.seed);

  Rng region_rng = make_rng(cfg.seed, kStreamRegions);
  scene.true_abund_t1 = voronoi_abundance(cfg, region_rng);
  scene.true_abund_t2 = scene.true_abund_t1;
  scene.binary_ref = ChangeMap(cfg.height, cfg.width, 0);
  scene.multiclass_ref = ChangeMap(cfg.height, cfg.width, 0);

  Rng edit_rng = make_rng(cfg.seed, kStreamEdits);
  std::uniform_int_distribution<int> size_dist(cfg.block_min, cfg.block_max);
  std::set<std::pair<int, int>> used_transitions;
  std::vector<Block> placed;
  constexpr int kPlacementTries = 20000;
  const AbundanceCube& t1 = scene.true_abund_t1;

  for (int cls = 1; cls <= cfg.change_classes; ++cls) {
    bool done = false;
    for (int attempt = 0; attempt < kPlacementTries && !done; ++attempt) {
      Block b{0, 0, size_dist(edit_rng), size_dist(edit_rng)};
      b.row = std::uniform_int_distribution<int>(0, cfg.height - b.height)(edit_rng);
      b.col = std::uniform_int_distribution<int>(0, cfg.width - b.width)(edit_rng);
      if (std::any_of(placed.begin(), placed.end(),
                      [&](const Block& o) { return b.overlaps(o, 2); }))
        continue;
      const int from = dominant(t1.values.pixel(b.row, b.col));
      if (!block_dominated_by(t1, b, from)) continue;
      std::vector<int> targets;
      for (int to = 0; to < cfg.endmembers; ++to)
        if (to != from && !used_transitions.count({from, to})) targets.push_back(to);
      if (targets.empty()) continue;
      const int to = targets[std::uniform_int_distribution<std::size_t>(
          0, targets.size() - 1)(edit_rng)];

      ChangeEdit edit{cls, from, to, b.row, b.col, b.height, b.width, EditKind::kInsert};
      // Every second class copies a real patch of the target material.
      std::optional<Block> donor;
      if (cls % 2 == 0) {
        for (int d = 0; d < 2000 && !donor; ++d) {
          Block cand{std::uniform_int_distribution<int>(0, cfg.height - b.height)(edit_rng),
                     std::uniform_int_distribution<int>(0, cfg.width - b.width)(edit_rng),
                     b.height, b.width};
          if (block_dominated_by(t1, cand, to)) donor = cand;
        }
      }
      auto& t2 = scene.true_abund_t2.values;
      for (int r = 0; r < b.height; ++r) {
        for (int c = 0; c < b.width; ++c) {
          auto dst = t2.pixel(b.row + r, b.col + c);
          if (donor) {
            const auto src = t1.values.pixel(donor->row + r, donor->col + c);
            std::copy(src.begin(), src.end(), dst.begin());
          } else {
            std::fill(dst.begin(), dst.end(), 0.0);
            dst[to] = 1.0;
          }
          scene.binary_ref.at(b.row + r, b.col + c) = 1;
          scene.multiclass_ref.at(b.row + r, b.col + c) = cls;
        }
      }
      if (donor) edit.kind = EditKind::kTransplant;
      used_transitions.insert({from, to});
      placed.push_back(b);
      scene.edits.push_back(edit);
      done = true;
    }
    if (!done)
      fail(ErrorKind::kUsage, "infeasible config: could not place change class " +
                                  std::to_string(cls));
  }

  HsiCube clean_t1 = mix_linear(scene.endmembers_true, scene.true_abund_t1);
  HsiCube clean_t2 = mix_linear(scene.endmembers_true, scene.true_abund_t2);
  Rng light_rng = make_rng(cfg.seed, kStreamIllumination);
  clean_t1 = apply_illumination(clean_t1, cfg.illumination, light_rng);
  clean_t2 = apply_illumination(clean_t2, cfg.illumination, light_rng);

  scene.cube_t1 = add_noise_snr(clean_t1, cfg.snr_db, derive_seed(cfg.seed, kStreamNoiseT1));
  scene.cube_t2 = add_noise_snr(clean_t2, cfg.snr_db, derive_seed(cfg.seed, kStreamNoiseT2));
  scene.cube_t1.role = TemporalRole::kT1;
  scene.cube_t2.role = TemporalRole::kT2;
  return scene;
}

}  // namespace bcg
