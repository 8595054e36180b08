#include "bcg/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "bcg/error.hpp"
#include "bcg/optim.hpp"
#include "bcg/parallel.hpp"
#include "bcg/rng.hpp"

namespace bcg {

using ad::Graph;
using ad::Parameter;
using ad::Shape;
using ad::Tensor;
using ad::Var;

void validate(const TrainConfig& c) {
  require(c.patch >= 1 && c.patch % 2 == 1, ErrorKind::kUsage, "patch size must be odd");
  require(c.batch >= 1, ErrorKind::kUsage, "batch size must be positive");
  require(c.epochs >= 1, ErrorKind::kUsage, "epochs must be positive");
  require(c.lr > 0.0, ErrorKind::kUsage, "learning rate must be positive");
  require(c.weight_decay >= 0.0, ErrorKind::kUsage, "weight decay must be nonnegative");
  require(c.omega >= 0.0, ErrorKind::kUsage, "omega must be nonnegative");
  require(c.alpha >= 0.0 && c.alpha <= 1.0, ErrorKind::kUsage, "focal alpha must lie in [0, 1]");
  require(c.gamma >= 0.0, ErrorKind::kUsage, "focal gamma must be nonnegative");
  require(c.warmup_uu >= 0 && c.warmup_tc >= 0, ErrorKind::kUsage,
          "warm-up lengths must be nonnegative");
  const ChannelConfig& ch = c.channels;
  require(ch.c11 >= 1 && ch.c12 >= 1 && ch.c3 >= 1 && ch.head >= 1 && ch.tc >= 1,
          ErrorKind::kUsage, "channel counts must be positive");
}

std::vector<Parameter*> UuParams::all() {
  return {&c11_w, &c11_b, &c12_w, &c12_b, &c21_w, &c21_b, &c22_w, &c22_b,
          &eca1_w, &eca1_b, &eca2_w, &eca2_b, &c3_w, &c3_b,
          &c4_w, &c4_b, &c5_w, &c5_b, &c6_w, &c6_b, &c7_w, &c7_b};
}

std::vector<const Parameter*> UuParams::all() const {
  auto* self = const_cast<UuParams*>(this);
  const auto v = self->all();
  return {v.begin(), v.end()};
}

std::vector<Parameter*> TcParams::all() { return {&w11, &b11, &w12, &b12, &w2, &b2, &w3, &b3}; }

std::vector<const Parameter*> TcParams::all() const {
  auto* self = const_cast<TcParams*>(this);
  const auto v = self->all();
  return {v.begin(), v.end()};
}

namespace {

struct Init {
  std::uint64_t seed;
  std::uint64_t stream = 0;

  void weight(Parameter& p, std::string name, std::string kind, Shape shape, int fan_in) {
    p.name = std::move(name);
    p.kind = std::move(kind);
    p.value = ad::he_normal_init(shape, fan_in, derive_seed(seed, stream++));
  }
  static void bias(Parameter& p, std::string name, std::string kind, Shape shape) {
    p.name = std::move(name);
    p.kind = std::move(kind);
    p.value = Tensor(std::move(shape), 0.0);
  }
};

}  // namespace

BcgModel make_model(int bands, int endmembers, int patch, const ChannelConfig& ch,
                    std::uint64_t seed) {
  require(bands >= 1, ErrorKind::kData, "model needs at least one band");
  require(endmembers >= 2, ErrorKind::kData, "model needs at least two endmembers");
  require(patch >= 1 && patch % 2 == 1, ErrorKind::kUsage, "patch size must be odd");
  BcgModel m;
  m.bands = bands;
  m.endmembers = endmembers;
  m.patch = patch;
  m.channels = ch;
  Init init{seed};
  UuParams& u = m.uu;
  const int cat = 2 * ch.c12;
  const int flat = bands * ch.c3;
  init.weight(u.c11_w, "uu.c11.w", "conv3d", {3, 3, 1, 1, ch.c11}, 9);
  Init::bias(u.c11_b, "uu.c11.b", "conv3d", {ch.c11});
  init.weight(u.c12_w, "uu.c12.w", "conv3d", {3, 3, 3, ch.c11, ch.c12}, 27 * ch.c11);
  Init::bias(u.c12_b, "uu.c12.b", "conv3d", {ch.c12});
  init.weight(u.c21_w, "uu.c21.w", "conv3d", {3, 3, 3, 1, ch.c11}, 27);
  Init::bias(u.c21_b, "uu.c21.b", "conv3d", {ch.c11});
  init.weight(u.c22_w, "uu.c22.w", "conv3d", {3, 3, 3, ch.c11, ch.c12}, 27 * ch.c11);
  Init::bias(u.c22_b, "uu.c22.b", "conv3d", {ch.c12});
  const int ek = ad::eca_kernel_size(ch.c12);
  init.weight(u.eca1_w, "uu.eca1.w", "eca", {ek}, ek);
  Init::bias(u.eca1_b, "uu.eca1.b", "eca", {1});
  init.weight(u.eca2_w, "uu.eca2.w", "eca", {ek}, ek);
  Init::bias(u.eca2_b, "uu.eca2.b", "eca", {1});
  init.weight(u.c3_w, "uu.c3.w", "conv3d", {3, 3, 1, cat, ch.c3}, 9 * cat);
  Init::bias(u.c3_b, "uu.c3.b", "conv3d", {ch.c3});
  init.weight(u.c4_w, "uu.c4.w", "pointwise", {flat, ch.head}, flat);
  Init::bias(u.c4_b, "uu.c4.b", "pointwise", {ch.head});
  init.weight(u.c5_w, "uu.c5.w", "pointwise", {ch.head, endmembers}, ch.head);
  Init::bias(u.c5_b, "uu.c5.b", "pointwise", {endmembers});
  init.weight(u.c6_w, "uu.c6.w", "pointwise", {flat, ch.head}, flat);
  Init::bias(u.c6_b, "uu.c6.b", "pointwise", {ch.head});
  init.weight(u.c7_w, "uu.c7.w", "pointwise", {ch.head, endmembers}, ch.head);
  Init::bias(u.c7_b, "uu.c7.b", "pointwise", {endmembers});

  TcParams& t = m.tc;
  init.weight(t.w11, "tc.w11", "dense", {ch.tc, endmembers}, endmembers);
  Init::bias(t.b11, "tc.b11", "dense", {ch.tc});
  init.weight(t.w12, "tc.w12", "dense", {ch.tc, endmembers}, endmembers);
  Init::bias(t.b12, "tc.b12", "dense", {ch.tc});
  init.weight(t.w2, "tc.w2", "dense", {ch.tc, 2 * ch.tc}, 2 * ch.tc);
  Init::bias(t.b2, "tc.b2", "dense", {ch.tc});
  init.weight(t.w3, "tc.w3", "dense", {2, ch.tc}, ch.tc);
  Init::bias(t.b3, "tc.b3", "dense", {2});
  return m;
}

void save_model(const BcgModel& model, const std::filesystem::path& path) {
  std::vector<const Parameter*> params = model.uu.all();
  for (const Parameter* p : model.tc.all()) params.push_back(p);
  const ad::CheckpointMeta meta = {
      {"bands", std::to_string(model.bands)},
      {"endmembers", std::to_string(model.endmembers)},
      {"patch", std::to_string(model.patch)},
      {"c11", std::to_string(model.channels.c11)},
      {"c12", std::to_string(model.channels.c12)},
      {"c3", std::to_string(model.channels.c3)},
      {"head", std::to_string(model.channels.head)},
      {"tc", std::to_string(model.channels.tc)},
  };
  ad::save_checkpoint(params, meta, path);
}

BcgModel load_model(const std::filesystem::path& path) {
  const ad::CheckpointMeta meta = ad::read_checkpoint_meta(path);
  auto get = [&](const char* key) {
    const auto it = meta.find(key);
    if (it == meta.end()) fail(ErrorKind::kData, std::string("checkpoint lacks key ") + key);
    try {
      return std::stoi(it->second);
    } catch (const std::exception&) {
      fail(ErrorKind::kData, std::string("bad checkpoint value for ") + key);
    }
  };
  ChannelConfig ch{get("c11"), get("c12"), get("c3"), get("head"), get("tc")};
  BcgModel model = make_model(get("bands"), get("endmembers"), get("patch"), ch, 0);
  std::vector<Parameter*> params = model.uu.all();
  for (Parameter* p : model.tc.all()) params.push_back(p);
  ad::load_checkpoint(params, path);
  return model;
}

namespace {

Tensor patch_tensor(const Patch& p) {
  return Tensor({p.size, p.size, p.bands, 1}, p.values);
}

Var trunk(Graph& g, const UuParams& u, Var input, int center, bool trainable) {
  auto P = [&](const Parameter& p) { return g.param(p, trainable); };
  Var a = ad::relu(ad::conv3d(input, P(u.c11_w), P(u.c11_b)));
  a = ad::relu(ad::conv3d(a, P(u.c12_w), P(u.c12_b)));
  a = ad::eca(a, P(u.eca1_w), P(u.eca1_b));
  Var b = ad::relu(ad::conv3d(input, P(u.c21_w), P(u.c21_b)));
  b = ad::relu(ad::conv3d(b, P(u.c22_w), P(u.c22_b)));
  b = ad::eca(b, P(u.eca2_w), P(u.eca2_b));
  const Var fused = ad::concat_channels(a, b);
  // The heads are per-pixel, so only the centre column of C3 is ever read.
  return ad::relu(ad::conv3d(fused, P(u.c3_w), P(u.c3_b), ad::Window{center, center, 1, 1}));
}

Var head(Graph& g, const Parameter& w1, const Parameter& b1, const Parameter& w2,
         const Parameter& b2, Var feature, bool trainable) {
  const int flat = static_cast<int>(feature.value().size());
  Var h = ad::reshape(feature, {1, 1, flat});
  h = ad::relu(ad::conv2d_pointwise(h, g.param(w1, trainable), g.param(b1, trainable)));
  h = ad::relu(ad::conv2d_pointwise(h, g.param(w2, trainable), g.param(b2, trainable)));
  return ad::sum_to_one(ad::reshape(h, {static_cast<int>(h.value().size())}));
}

}  // namespace

UuGraphOutput uu_forward(Graph& g, const UuParams& u, const Patch& px, const Patch& py,
                         bool trainable) {
  require(px.size == py.size && px.bands == py.bands, ErrorKind::kData,
          "uu_forward: patch shapes differ");
  const int flat_expected = static_cast<int>(u.c4_w.value.dim(0));
  require(px.bands * u.c3_w.value.dim(4) == flat_expected, ErrorKind::kData,
          "uu_forward: patch has " + std::to_string(px.bands) + " bands, model expects " +
              std::to_string(flat_expected / u.c3_w.value.dim(4)));
  const int center = px.size / 2;
  UuGraphOutput out;
  out.feature1 = trunk(g, u, g.constant(patch_tensor(px)), center, trainable);
  out.feature2 = trunk(g, u, g.constant(patch_tensor(py)), center, trainable);
  out.s1 = head(g, u.c4_w, u.c4_b, u.c5_w, u.c5_b, out.feature1, trainable);
  out.s2 = head(g, u.c6_w, u.c6_b, u.c7_w, u.c7_b, out.feature2, trainable);
  return out;
}

AbundancePair uu_forward(const UuParams& params, const Patch& px, const Patch& py) {
  Graph g;
  const UuGraphOutput out = uu_forward(g, params, px, py, false);
  const auto v1 = out.s1.value().values();
  const auto v2 = out.s2.value().values();
  return {{v1.begin(), v1.end()}, {v2.begin(), v2.end()}};
}

std::vector<double> reconstruct(const EndmemberSet& endmembers, std::span<const double> s) {
  require(static_cast<int>(s.size()) == endmembers.count(), ErrorKind::kData,
          "reconstruct: abundance length " + std::to_string(s.size()) + " vs " +
              std::to_string(endmembers.count()) + " endmembers");
  std::vector<double> out(static_cast<std::size_t>(endmembers.bands()), 0.0);
  for (int b = 0; b < endmembers.bands(); ++b) {
    double v = 0.0;
    for (int j = 0; j < endmembers.count(); ++j) v += endmembers.signatures(b, j) * s[j];
    out[b] = v;
  }
  return out;
}

Var reconstruct(Var endmembers, Var s) { return ad::matvec(endmembers, s); }

Tensor endmember_tensor(const EndmemberSet& endmembers) {
  Tensor t({endmembers.bands(), endmembers.count()});
  for (int b = 0; b < endmembers.bands(); ++b)
    for (int j = 0; j < endmembers.count(); ++j)
      t[static_cast<std::size_t>(b) * endmembers.count() + j] = endmembers.signatures(b, j);
  return t;
}

Var tc_forward(Graph& g, const TcParams& t, Var s1, Var s2, bool trainable) {
  auto P = [&](const Parameter& p) { return g.param(p, trainable); };
  const Var h1 = ad::relu(ad::dense(s1, P(t.w11), P(t.b11)));
  const Var h2 = ad::relu(ad::dense(s2, P(t.w12), P(t.b12)));
  const Var h = ad::relu(ad::dense(ad::concat_channels(h1, h2), P(t.w2), P(t.b2)));
  return ad::softmax(ad::dense(h, P(t.w3), P(t.b3)));
}

std::pair<double, double> tc_forward(const TcParams& params, std::span<const double> s1,
                                     std::span<const double> s2) {
  Graph g;
  const int k = static_cast<int>(s1.size());
  const Var a = g.constant(Tensor({k}, std::vector<double>(s1.begin(), s1.end())));
  const Var b = g.constant(Tensor({static_cast<int>(s2.size())},
                                  std::vector<double>(s2.begin(), s2.end())));
  const Tensor& q = tc_forward(g, params, a, b, false).value();
  return {q[0], q[1]};
}

std::string format_log_line(const EpochLog& e) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d %.9g %.9g %.9g %.9g", e.epoch, e.l_cos_x, e.l_cos_y, e.l_fc,
                e.total);
  return buf;
}

namespace {

struct Sample {
  Patch px;
  Patch py;
  Tensor x;  // centre spectra
  Tensor y;
  int label = 0;
};

struct SampleOutcome {
  std::vector<Tensor> grads;
  double l_cos_x = 0.0;
  double l_cos_y = 0.0;
  double l_fc = 0.0;
};

Tensor spectrum(const HsiCube& cube, int row, int col) {
  const auto px = cube.pixel(row, col);
  return Tensor({cube.bands()}, std::vector<double>(px.begin(), px.end()));
}

void check_finite(double v, int epoch, std::size_t batch, const char* what) {
  if (!std::isfinite(v))
    fail(ErrorKind::kNumeric, std::string("non-finite ") + what + " at epoch " +
                                  std::to_string(epoch) + ", batch " + std::to_string(batch));
}

class Trainer {
 public:
  Trainer(const HsiCube& x, const HsiCube& y, const EndmemberSet& e,
          const PseudoLabelSet& labels, const TrainConfig& cfg)
      : cfg_(cfg),
        model_(make_model(x.bands(), e.count(), cfg.patch, cfg.channels,
                          derive_seed(cfg.seed, 1))),
        endmembers_(endmember_tensor(e)),
        rng_(make_rng(cfg.seed, 0x73687566ULL)) {
    for (const PseudoLabel& l : labels.samples) {
      require(l.row >= 0 && l.row < x.height() && l.col >= 0 && l.col < x.width(),
              ErrorKind::kData, "pseudo-label outside the image");
      samples_.push_back({extract_patch(x, l.row, l.col, cfg.patch),
                          extract_patch(y, l.row, l.col, cfg.patch), spectrum(x, l.row, l.col),
                          spectrum(y, l.row, l.col), l.label});
    }
    uu_params_ = model_.uu.all();
    tc_params_ = model_.tc.all();
    uu_state_ = ad::adam_init(uu_params_);
    tc_state_ = ad::adam_init(tc_params_);
    adam_.lr = cfg.lr;
    adam_.weight_decay = cfg.weight_decay;
    order_.resize(samples_.size());
  }

  TrainResult run(const EpochCallback& on_epoch) {
    const int warm_uu = std::min(cfg_.warmup_uu, cfg_.epochs);
    const int warm_tc = std::min(cfg_.warmup_tc, cfg_.epochs - warm_uu);
    TrainResult result;
    for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
      shuffle();
      EpochLog entry;
      if (cfg_.mode == TrainMode::kUuOnly || epoch <= warm_uu) {
        entry = uu_pass(epoch, false);
      } else if (epoch <= warm_uu + warm_tc) {
        entry = tc_pass(epoch);
      } else {
        tc_pass(epoch);
        entry = uu_pass(epoch, !cfg_.drop_fc_term);
      }
      entry.epoch = epoch;
      entry.total = entry.l_cos_x + entry.l_cos_y + cfg_.omega * entry.l_fc;
      if (on_epoch) on_epoch(entry);
      result.log.push_back(entry);
    }
    result.model = std::move(model_);
    return result;
  }

 private:
  void shuffle() {
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    std::shuffle(order_.begin(), order_.end(), rng_);
  }

  template <typename PerSample>
  std::vector<SampleOutcome> batch_outcomes(std::size_t begin, std::size_t end, PerSample fn) {
    std::vector<SampleOutcome> out(end - begin);
    parallel_for(out.size(), [&](std::size_t i) { out[i] = fn(order_[begin + i]); });
    return out;
  }

  static std::vector<Tensor> reduce(const std::vector<SampleOutcome>& outcomes,
                                    const std::vector<Parameter*>& params) {
    std::vector<Tensor> total;
    for (const Parameter* p : params) total.emplace_back(p->value.shape(), 0.0);
    for (const SampleOutcome& o : outcomes)
      for (std::size_t k = 0; k < total.size(); ++k)
        for (std::size_t j = 0; j < total[k].size(); ++j) total[k][j] += o.grads[k][j];
    return total;
  }

  // UU update: mean reconstruction loss, plus (omega / N) * focal when
  // `with_fc`; TC parameters enter as constants.
  EpochLog uu_pass(int epoch, bool with_fc) {
    EpochLog log;
    const std::size_t n = samples_.size();
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < n; begin += cfg_.batch, ++batch_index) {
      const std::size_t end = std::min(n, begin + static_cast<std::size_t>(cfg_.batch));
      const double inv = 1.0 / static_cast<double>(end - begin);
      const auto outcomes = batch_outcomes(begin, end, [&](std::size_t idx) {
        const Sample& s = samples_[idx];
        Graph g;
        const UuGraphOutput f = uu_forward(g, model_.uu, s.px, s.py, true);
        const Var e = g.constant(endmembers_);
        const Var lx = ad::cos_loss(g.constant(s.x), reconstruct(e, f.s1));
        const Var ly = ad::cos_loss(g.constant(s.y), reconstruct(e, f.s2));
        Var loss = ad::scale(ad::add(lx, ly), inv);
        SampleOutcome o;
        if (with_fc) {
          const Var q = tc_forward(g, model_.tc, f.s1, f.s2, false);
          const Var lfc = ad::focal_loss(ad::pick(q, 1), s.label, cfg_.alpha, cfg_.gamma);
          loss = ad::add(loss, ad::scale(lfc, cfg_.omega * inv));
          o.l_fc = lfc.value()[0];
        }
        g.backward(loss);
        o.l_cos_x = lx.value()[0];
        o.l_cos_y = ly.value()[0];
        for (const Parameter* p : uu_params_) o.grads.push_back(g.param_grad(*p));
        return o;
      });
      double bx = 0.0, by = 0.0, bf = 0.0;
      for (const SampleOutcome& o : outcomes) {
        bx += o.l_cos_x;
        by += o.l_cos_y;
        bf += o.l_fc;
      }
      check_finite(bx + by + bf, epoch, batch_index, "loss");
      log.l_cos_x += bx;
      log.l_cos_y += by;
      log.l_fc += bf;
      ad::adam_step(uu_params_, reduce(outcomes, uu_params_), uu_state_, adam_);
    }
    log.l_cos_x /= static_cast<double>(n);
    log.l_cos_y /= static_cast<double>(n);
    log.l_fc /= static_cast<double>(n);
    return log;
  }

  // TC update on abundances from the current (frozen) UU-Module.
  EpochLog tc_pass(int epoch) {
    const std::size_t n = samples_.size();
    std::vector<AbundancePair> s(n);
    std::vector<double> lx(n), ly(n);
    parallel_for(n, [&](std::size_t i) {
      const Sample& smp = samples_[i];
      s[i] = uu_forward(model_.uu, smp.px, smp.py);
      Graph g;
      const Var e = g.constant(endmembers_);
      auto vec = [&](const std::vector<double>& v) {
        return g.constant(Tensor({static_cast<int>(v.size())}, v));
      };
      lx[i] = ad::cos_loss(g.constant(smp.x), reconstruct(e, vec(s[i].s1))).value()[0];
      ly[i] = ad::cos_loss(g.constant(smp.y), reconstruct(e, vec(s[i].s2))).value()[0];
    });
    EpochLog log;
    for (std::size_t i = 0; i < n; ++i) {
      log.l_cos_x += lx[i];
      log.l_cos_y += ly[i];
    }
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < n; begin += cfg_.batch, ++batch_index) {
      const std::size_t end = std::min(n, begin + static_cast<std::size_t>(cfg_.batch));
      const double inv = 1.0 / static_cast<double>(end - begin);
      const auto outcomes = batch_outcomes(begin, end, [&](std::size_t idx) {
        Graph g;
        const int k = static_cast<int>(s[idx].s1.size());
        const Var a = g.constant(Tensor({k}, s[idx].s1));
        const Var b = g.constant(Tensor({k}, s[idx].s2));
        const Var q = tc_forward(g, model_.tc, a, b, true);
        const Var lfc = ad::focal_loss(ad::pick(q, 1), samples_[idx].label, cfg_.alpha,
                                       cfg_.gamma);
        g.backward(ad::scale(lfc, inv));
        SampleOutcome o;
        o.l_fc = lfc.value()[0];
        for (const Parameter* p : tc_params_) o.grads.push_back(g.param_grad(*p));
        return o;
      });
      double bf = 0.0;
      for (const SampleOutcome& o : outcomes) bf += o.l_fc;
      check_finite(bf, epoch, batch_index, "focal loss");
      log.l_fc += bf;
      ad::adam_step(tc_params_, reduce(outcomes, tc_params_), tc_state_, adam_);
    }
    log.l_cos_x /= static_cast<double>(n);
    log.l_cos_y /= static_cast<double>(n);
    log.l_fc /= static_cast<double>(n);
    return log;
  }

  TrainConfig cfg_;
  BcgModel model_;
  Tensor endmembers_;
  Rng rng_;
  std::vector<Sample> samples_;
  std::vector<std::size_t> order_;
  std::vector<Parameter*> uu_params_;
  std::vector<Parameter*> tc_params_;
  ad::AdamState uu_state_;
  ad::AdamState tc_state_;
  ad::AdamConfig adam_;
};

}  // namespace

TrainResult train(const HsiCube& x, const HsiCube& y, const EndmemberSet& endmembers,
                  const PseudoLabelSet& labels, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  validate(config);
  require(x.height() == y.height() && x.width() == y.width() && x.bands() == y.bands(),
          ErrorKind::kData, "train: cube shapes differ");
  require(endmembers.bands() == x.bands(), ErrorKind::kData,
          "train: endmembers have " + std::to_string(endmembers.bands()) + " bands, cubes " +
              std::to_string(x.bands()));
  require(endmembers.count() >= 2, ErrorKind::kData, "train: need at least two endmembers");
  require(!labels.samples.empty(), ErrorKind::kData, "train: no pseudo-labels");
  if (config.mode == TrainMode::kFull) {
    bool seen[2] = {false, false};
    for (const PseudoLabel& l : labels.samples) seen[l.label == 1] = true;
    require(seen[0] && seen[1], ErrorKind::kData, "train: pseudo-labels contain a single class");
  }
  Trainer trainer(x, y, endmembers, labels, config);
  return trainer.run(on_epoch);
}

Inference infer_change_prob(const BcgModel& model, const HsiCube& x, const HsiCube& y,
                            const EndmemberSet& endmembers, bool with_tc) {
  require(x.height() == y.height() && x.width() == y.width() && x.bands() == y.bands(),
          ErrorKind::kData, "infer: cube shapes differ");
  require(x.bands() == model.bands, ErrorKind::kData,
          "infer: cubes have " + std::to_string(x.bands()) + " bands, model expects " +
              std::to_string(model.bands));
  require(endmembers.count() == model.endmembers && endmembers.bands() == model.bands,
          ErrorKind::kData, "infer: endmember set does not match the model");
  Inference out;
  out.abundance_t1 = AbundanceCube(x.height(), x.width(), model.endmembers,
                                   AbundanceProducer::kUuModule);
  out.abundance_t2 = AbundanceCube(x.height(), x.width(), model.endmembers,
                                   AbundanceProducer::kUuModule);
  if (with_tc) out.probability.assign(x.pixel_count(), 0.0);
  parallel_for(x.pixel_count(), [&](std::size_t p) {
    const int row = static_cast<int>(p / x.width());
    const int col = static_cast<int>(p % x.width());
    const AbundancePair s = uu_forward(model.uu, extract_patch(x, row, col, model.patch),
                                       extract_patch(y, row, col, model.patch));
    std::copy(s.s1.begin(), s.s1.end(), out.abundance_t1.values.pixel(p).begin());
    std::copy(s.s2.begin(), s.s2.end(), out.abundance_t2.values.pixel(p).begin());
    if (with_tc) out.probability[p] = tc_forward(model.tc, s.s1, s.s2).second;
  });
  return out;
}

}  // namespace bcg
