#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "bcg/endmember.hpp"
#include "bcg/hsi.hpp"

namespace bcg {

struct SynthConfig {
  int height = 64;
  int width = 64;
  int bands = 30;
  int endmembers = 4;       // 2..8
  int change_classes = 4;   // 0..8, distinct from-to transitions
  int block_min = 6;
  int block_max = 10;
  int regions = 0;          // Voronoi sites; 0 picks 3 per endmember
  double border_width = 2.0;  // half-width of the mixing band, pixels
  // Amplitude of a smooth multiplicative brightness field applied per date
  // (0 keeps the scene exactly linear-mixed).
  double illumination = 0.0;
  double snr_db = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;
};

enum class EditKind { kInsert, kTransplant };

struct ChangeEdit {
  int change_class = 0;  // id in multiclass_ref
  int from = 0;          // dominant endmember at t1
  int to = 0;            // dominant endmember at t2
  int row = 0, col = 0, height = 0, width = 0;
  EditKind kind = EditKind::kInsert;
};

struct SyntheticScene {
  HsiCube cube_t1;
  HsiCube cube_t2;
  AbundanceCube true_abund_t1;
  AbundanceCube true_abund_t2;
  ChangeMap binary_ref;
  ChangeMap multiclass_ref;
  EndmemberSet endmembers_true;
  std::vector<ChangeEdit> edits;
  std::uint64_t seed = 0;
  double snr_db = 0.0;
};

// Pure function of the config.
SyntheticScene gen_synthetic_scene(const SynthConfig& config);

// Smooth random signatures with pairwise spectral angle >= min_angle_rad.
EndmemberSet random_endmembers(int bands, int count, std::uint64_t seed,
                               double min_angle_rad = 10.0 * 3.14159265358979323846 / 180.0);

// cube(p) = E * abundance(p) for every pixel.
HsiCube mix_linear(const EndmemberSet& endmembers, const AbundanceCube& abundance);

}  // namespace bcg
