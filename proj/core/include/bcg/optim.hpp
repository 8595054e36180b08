#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bcg/autodiff.hpp"

namespace bcg::ad {

// i.i.d. N(0, 2 / fan_in).
Tensor he_normal_init(const Shape& shape, int fan_in, std::uint64_t seed);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // coupled L2: g += weight_decay * w
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long step = 0;
};

AdamState adam_init(std::span<Parameter* const> params);

// One bias-corrected Adam update of every parameter. A non-finite gradient
// throws before anything is modified.
void adam_step(std::span<Parameter* const> params, std::span<const Tensor> grads,
               AdamState& state, const AdamConfig& config);

// Text manifest (metadata lines, then `param <name> <kind> <shape>` lines) at
// `path`; little-endian binary64 payload at `path` + ".bin" in manifest order.
using CheckpointMeta = std::map<std::string, std::string>;

void save_checkpoint(std::span<const Parameter* const> params, const CheckpointMeta& meta,
                     const std::filesystem::path& path);
// Fills `params` by name; every name must be present with a matching shape.
CheckpointMeta load_checkpoint(std::span<Parameter* const> params,
                               const std::filesystem::path& path);
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

}  // namespace bcg::ad
