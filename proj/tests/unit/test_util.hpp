#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "bcg/hsi.hpp"

namespace bcg::test {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("bcg_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline HsiCube random_cube(int h, int w, int c, std::uint64_t seed, double lo = 0.0,
                           double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  HsiCube cube(h, w, c);
  for (double& v : cube.values()) v = u(rng);
  return cube;
}

}  // namespace bcg::test
