#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bcg/autodiff.hpp"
#include "bcg/endmember.hpp"
#include "bcg/hsi.hpp"
#include "bcg/predetect.hpp"

namespace bcg {

struct ChannelConfig {
  int c11 = 4;   // also C21
  int c12 = 8;   // also C22
  int c3 = 8;
  int head = 32;  // C4 / C6 width
  int tc = 32;    // TC hidden width
};

enum class TrainMode {
  kFull,    // warm-ups, then alternating TC / UU updates
  kUuOnly,  // reconstruction loss only, no TC-Module
};

struct TrainConfig {
  int patch = 7;
  int batch = 64;
  int epochs = 200;
  double lr = 1e-3;
  double weight_decay = 1e-3;
  double omega = 1.0;
  double gamma = 2.0;
  double alpha = 0.25;
  int warmup_uu = 20;
  int warmup_tc = 5;
  std::uint64_t seed = 0;
  ChannelConfig channels;
  TrainMode mode = TrainMode::kFull;
  // Drops the focal term from the UU update instead of weighting it by omega.
  bool drop_fc_term = false;
};

void validate(const TrainConfig& config);

struct UuParams {
  ad::Parameter c11_w, c11_b, c12_w, c12_b;
  ad::Parameter c21_w, c21_b, c22_w, c22_b;
  ad::Parameter eca1_w, eca1_b, eca2_w, eca2_b;
  ad::Parameter c3_w, c3_b;
  ad::Parameter c4_w, c4_b, c5_w, c5_b;  // head, date 1
  ad::Parameter c6_w, c6_b, c7_w, c7_b;  // head, date 2

  std::vector<ad::Parameter*> all();
  std::vector<const ad::Parameter*> all() const;
};

struct TcParams {
  ad::Parameter w11, b11, w12, b12, w2, b2, w3, b3;

  std::vector<ad::Parameter*> all();
  std::vector<const ad::Parameter*> all() const;
};

struct BcgModel {
  int bands = 0;
  int endmembers = 0;
  int patch = 7;
  ChannelConfig channels;
  UuParams uu;
  TcParams tc;
};

// He-normal weights, zero biases.
BcgModel make_model(int bands, int endmembers, int patch, const ChannelConfig& channels,
                    std::uint64_t seed);

void save_model(const BcgModel& model, const std::filesystem::path& path);
BcgModel load_model(const std::filesystem::path& path);

struct UuGraphOutput {
  ad::Var feature1;  // shared-trunk output (C3) for each date
  ad::Var feature2;
  ad::Var s1;
  ad::Var s2;
};

// Both dates through the shared trunk, then their own heads. Parameters are
// registered once per graph, so the two trunk passes read the same nodes.
UuGraphOutput uu_forward(ad::Graph& g, const UuParams& params, const Patch& px, const Patch& py,
                         bool trainable = true);

struct AbundancePair {
  std::vector<double> s1;
  std::vector<double> s2;
};

AbundancePair uu_forward(const UuParams& params, const Patch& px, const Patch& py);

// E s.
std::vector<double> reconstruct(const EndmemberSet& endmembers, std::span<const double> s);
ad::Var reconstruct(ad::Var endmembers, ad::Var s);
ad::Tensor endmember_tensor(const EndmemberSet& endmembers);

// (q0, q1) = (P(unchanged), P(changed)).
ad::Var tc_forward(ad::Graph& g, const TcParams& params, ad::Var s1, ad::Var s2,
                   bool trainable = true);
std::pair<double, double> tc_forward(const TcParams& params, std::span<const double> s1,
                                     std::span<const double> s2);

struct EpochLog {
  int epoch = 0;
  double l_cos_x = 0.0;
  double l_cos_y = 0.0;
  double l_fc = 0.0;
  double total = 0.0;
};

std::string format_log_line(const EpochLog& entry);

struct TrainResult {
  BcgModel model;
  std::vector<EpochLog> log;
};

// Called after each epoch, e.g. to stream the log.
using EpochCallback = std::function<void(const EpochLog&)>;

TrainResult train(const HsiCube& x, const HsiCube& y, const EndmemberSet& endmembers,
                  const PseudoLabelSet& labels, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

struct Inference {
  std::vector<double> probability;  // H*W, row-major
  AbundanceCube abundance_t1;
  AbundanceCube abundance_t2;
};

// Every pixel; the TC-Module is skipped when `with_tc` is false and the
// probability vector is left empty.
Inference infer_change_prob(const BcgModel& model, const HsiCube& x, const HsiCube& y,
                            const EndmemberSet& endmembers, bool with_tc = true);

}  // namespace bcg
