#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <random>

#include "bcg/error.hpp"
#include "bcg/model.hpp"
#include "bcg/pipeline.hpp"
#include "bcg/rng.hpp"
#include "bcg/synthetic.hpp"
#include "bcg_fixture.hpp"
#include "test_util.hpp"

using namespace bcg;
using namespace bcg::ad;

namespace {

struct SmallScene {
  SyntheticScene scene;
  EndmemberSet endmembers;
  PseudoLabelSet labels;
};

SmallScene small_scene(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.height = 32;
  cfg.width = 32;
  cfg.bands = 10;
  cfg.endmembers = 3;
  cfg.change_classes = 2;
  cfg.snr_db = 30.0;
  cfg.seed = seed;
  SmallScene s;
  s.scene = gen_synthetic_scene(cfg);
  s.endmembers = multitemporal_endmembers(s.scene.cube_t1, s.scene.cube_t2, 3, seed).endmembers;
  PredetectConfig pc;
  pc.n_unchanged = 24;
  pc.n_changed = 8;
  s.labels = run_predetect(s.scene.cube_t1, s.scene.cube_t2, pc, seed).labels;
  return s;
}

TrainConfig small_config(int epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch = 8;
  c.warmup_uu = 2;
  c.warmup_tc = 1;
  c.channels = ChannelConfig{2, 2, 2, 4, 4};
  c.seed = 5;
  return c;
}

std::vector<Tensor> values(const std::vector<const Parameter*>& ps) {
  std::vector<Tensor> out;
  for (const Parameter* p : ps) out.push_back(p->value);
  return out;
}

std::vector<Tensor> initial_uu(const SmallScene& s, const TrainConfig& c) {
  const BcgModel m = make_model(s.scene.cube_t1.bands(), s.endmembers.count(), c.patch,
                                c.channels, derive_seed(c.seed, 1));
  return values(m.uu.all());
}

std::vector<Tensor> initial_tc(const SmallScene& s, const TrainConfig& c) {
  const BcgModel m = make_model(s.scene.cube_t1.bands(), s.endmembers.count(), c.patch,
                                c.channels, derive_seed(c.seed, 1));
  return values(m.tc.all());
}

}  // namespace

TEST_CASE("make_model shapes, zero biases, determinism") {
  const BcgModel m = make_model(30, 4, 7, ChannelConfig{}, 3);
  CHECK(m.uu.c11_w.value.shape() == Shape{3, 3, 1, 1, 4});
  CHECK(m.uu.c12_w.value.shape() == Shape{3, 3, 3, 4, 8});
  CHECK(m.uu.c3_w.value.shape() == Shape{3, 3, 1, 16, 8});
  CHECK(m.uu.c4_w.value.shape() == Shape{240, 32});
  CHECK(m.uu.c5_w.value.shape() == Shape{32, 4});
  CHECK(m.tc.w11.value.shape() == Shape{32, 4});
  CHECK(m.tc.w2.value.shape() == Shape{32, 64});
  CHECK(m.tc.w3.value.shape() == Shape{2, 32});
  for (const Parameter* p : m.uu.all())
    if (p->name.back() == 'b' && p->name[p->name.size() - 2] == '.')
      for (double v : p->value.values()) CHECK(v == 0.0);
  for (double v : m.tc.b3.value.values()) CHECK(v == 0.0);
  const BcgModel m2 = make_model(30, 4, 7, ChannelConfig{}, 3);
  CHECK(m2.uu.c12_w.value == m.uu.c12_w.value);
  CHECK(m2.tc.w2.value == m.tc.w2.value);
}

TEST_CASE("uu_forward shares the trunk and respects the abundance constraints") {
  std::mt19937_64 rng(1);
  const BcgModel m = make_model(6, 3, 7, ChannelConfig{2, 3, 2, 5, 4}, 9);
  const HsiCube cube = test::random_cube(9, 9, 6, 2, 0.0, 1.0);
  const Patch p = extract_patch(cube, 4, 4, 7);
  Graph g;
  const UuGraphOutput out = uu_forward(g, m.uu, p, p, true);
  CHECK(out.feature1.value() == out.feature2.value());
  const Var* shared = g.find_param(m.uu.c11_w);
  REQUIRE(shared != nullptr);
  CHECK(g.param(m.uu.c11_w).id() == shared->id());
  CHECK(g.param(m.uu.c3_w).id() == g.find_param(m.uu.c3_w)->id());

  for (int trial = 0; trial < 200; ++trial) {
    const HsiCube a = test::random_cube(7, 7, 6, rng(), -1.0, 2.0);
    const HsiCube b = test::random_cube(7, 7, 6, rng(), -1.0, 2.0);
    const BcgModel mm = make_model(6, 3, 7, ChannelConfig{2, 2, 2, 4, 4}, rng());
    const AbundancePair s = uu_forward(mm.uu, extract_patch(a, 3, 3, 7), extract_patch(b, 3, 3, 7));
    for (const auto* v : {&s.s1, &s.s2}) {
      double sum = 0.0;
      for (double x : *v) {
        REQUIRE(x >= 0.0);
        sum += x;
      }
      REQUIRE(sum <= 1.0 + 1e-6);
    }
  }
  const Patch wrong = extract_patch(test::random_cube(9, 9, 5, 3), 4, 4, 7);
  CHECK_THROWS_AS(uu_forward(m.uu, wrong, wrong), Error);
}

TEST_CASE("reconstruct") {
  const EndmemberSet e = random_endmembers(8, 3, 4);
  const std::vector<double> col = reconstruct(e, std::vector<double>{0, 1, 0});
  for (int b = 0; b < 8; ++b) CHECK(col[b] == e.signatures(b, 1));
  for (double v : reconstruct(e, std::vector<double>{0, 0, 0})) CHECK(v == 0.0);
  const std::vector<double> s{0.2, 0.5, 0.3};
  const std::vector<double> r = reconstruct(e, s);
  Graph g;
  const Var rv = reconstruct(g.constant(endmember_tensor(e)), g.constant(Tensor({3}, s)));
  for (int b = 0; b < 8; ++b) {
    double acc = 0.0;
    for (int j = 0; j < 3; ++j) acc += e.signatures(b, j) * s[j];
    CHECK(std::abs(r[b] - acc) < 1e-15);
    CHECK(std::abs(rv.value()[b] - acc) < 1e-15);
  }
  CHECK_THROWS_AS(reconstruct(e, std::vector<double>{1, 0}), Error);
}

TEST_CASE("tc_forward probabilities and gradient to the abundances") {
  BcgModel m = make_model(6, 3, 7, ChannelConfig{}, 1);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    const Tensor a = test::random_tensor({3}, rng, 0.0, 1.0), b = test::random_tensor({3}, rng, 0.0, 1.0);
    const auto [q0, q1] = tc_forward(m.tc, a.values(), b.values());
    CHECK(std::abs(q0 + q1 - 1.0) < 1e-12);
  }
  BcgModel zero = m;
  for (Parameter* p : zero.tc.all()) p->value.fill(0.0);
  const auto [z0, z1] = tc_forward(zero.tc, std::vector<double>{1, 0, 0}, std::vector<double>{0, 1, 0});
  CHECK(z0 == 0.5);
  CHECK(z1 == 0.5);

  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    BcgModel mm = make_model(6, 3, 7, ChannelConfig{2, 2, 2, 4, 6}, rng());
    for (Parameter* p : mm.tc.all())
      if (p->name.find(".b") != std::string::npos) p->value.fill(0.1);
    Tensor a = test::random_tensor({3}, rng, 0.0, 1.0), b = test::random_tensor({3}, rng, 0.0, 1.0);
    worst = std::max(worst, test::gradient_error({&a, &b}, test::leaf_objective({&a, &b}, [&](const std::vector<Var>& v) {
      return pick(tc_forward(*v[0].graph(), mm.tc, v[0], v[1], false), 1);
    })));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("composite BCG loss passes finite-difference checks on the toy configuration") {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    test::ToyProblem t = test::toy_problem(seed);
    worst = std::max(worst, test::gradient_error(test::param_slots(t.model),
                                                 test::composite_objective(t, 1.0, 64.0, 0.25, 2.0)));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("UU update graph leaves TC gradients at zero") {
  test::ToyProblem t = test::toy_problem(3);
  Graph g;
  const UuGraphOutput f = uu_forward(g, t.model.uu, t.px, t.py, true);
  const Var q = tc_forward(g, t.model.tc, f.s1, f.s2, false);
  g.backward(focal_loss(pick(q, 1), 1, 0.25, 2.0));
  for (const Parameter* p : t.model.tc.all()) CHECK(g.param_grad(*p) == Tensor(p->value.shape(), 0.0));
  double norm = 0.0;
  for (const Parameter* p : t.model.uu.all())
    for (double v : g.param_grad(*p).values()) norm += v * v;
  CHECK(norm > 0.0);
}

TEST_CASE("config validation") {
  TrainConfig c;
  c.patch = 6;
  CHECK_THROWS_AS(validate(c), Error);
  c = TrainConfig{};
  c.alpha = 1.5;
  CHECK_THROWS_AS(validate(c), Error);
  c = TrainConfig{};
  c.gamma = -1;
  CHECK_THROWS_AS(validate(c), Error);
  c = TrainConfig{};
  c.omega = -1;
  CHECK_THROWS_AS(validate(c), Error);
  CHECK_NOTHROW(validate(TrainConfig{}));
}

TEST_CASE("train rejects single-class labels") {
  const SmallScene s = small_scene(1);
  PseudoLabelSet one = s.labels;
  std::erase_if(one.samples, [](const PseudoLabel& l) { return l.label == 1; });
  CHECK_THROWS_AS(train(s.scene.cube_t1, s.scene.cube_t2, s.endmembers, one, small_config(2)), Error);
  TrainConfig uu = small_config(2);
  uu.mode = TrainMode::kUuOnly;
  CHECK_NOTHROW(train(s.scene.cube_t1, s.scene.cube_t2, s.endmembers, one, uu));
}

TEST_CASE("training logs finite losses for all 200 epochs on a 32x32x10 scene") {
  const SmallScene s = small_scene(2);
  TrainConfig c = small_config(200);
  c.warmup_uu = 20;
  c.warmup_tc = 5;
  int streamed = 0;
  const TrainResult r = train(s.scene.cube_t1, s.scene.cube_t2, s.endmembers, s.labels, c,
                              [&](const EpochLog&) { ++streamed; });
  REQUIRE(r.log.size() == 200);
  CHECK(streamed == 200);
  for (std::size_t i = 0; i < r.log.size(); ++i) {
    const EpochLog& e = r.log[i];
    CHECK(e.epoch == static_cast<int>(i) + 1);
    REQUIRE(std::isfinite(e.l_cos_x));
    REQUIRE(std::isfinite(e.l_cos_y));
    REQUIRE(std::isfinite(e.l_fc));
    CHECK(e.total == doctest::Approx(e.l_cos_x + e.l_cos_y + c.omega * e.l_fc));
  }
  CHECK(r.log.front().l_fc == 0.0);
  CHECK(r.log[20].l_fc > 0.0);
  CHECK(r.log.back().l_cos_x < r.log.front().l_cos_x);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const SmallScene s = small_scene(3);
  const TrainConfig c = small_config(6);
  const TrainResult a = train(s.scene.cube_t1, s.scene.cube_t2, s.endmembers, s.labels, c);
  const TrainResult b = train(s.scene.cube_t1, s.scene.cube_t2, s.endmembers, s.labels, c);
  CHECK(values(a.model.uu.all()) == values(b.model.uu.all()));
  CHECK(values(a.model.tc.all()) == values(b.model.tc.all()));
  TrainConfig other = c;
  other.seed = 6;
  const TrainResult d = train(s.scene.cube_t1, s.scene.cube_t2, s.endmembers, s.labels, other);
  CHECK_FALSE(values(a.model.uu.all()) == values(d.model.uu.all()));
}

TEST_CASE("thread count does not change training or inference") {
  const SmallScene s = small_scene(4);
  const TrainConfig c = small_config(5);
  setenv("BCG_THREADS", "1", 1);
  const TrainResult a = train(s.scene.cube_t1, s.scene.cube_t2, s.endmembers, s.labels, c);
  const Inference ia = infer_change_prob(a.model, s.scene.cube_t1, s.scene.cube_t2, s.endmembers);
  setenv("BCG_THREADS", "4", 1);
  const TrainResult b = train(s.scene.cube_t1, s.scene.cube_t2, s.endmembers, s.labels, c);
  const Inference ib = infer_change_prob(b.model, s.scene.cube_t1, s.scene.cube_t2, s.endmembers);
  unsetenv("BCG_THREADS");
  CHECK(values(a.model.uu.all()) == values(b.model.uu.all()));
  CHECK(ia.probability == ib.probability);
  CHECK(ia.abundance_t1.values == ib.abundance_t1.values);
}

TEST_CASE("omega = 0 matches dropping the focal term bitwise") {
  const SmallScene s = small_scene(5);
  TrainConfig zero = small_config(7);
  zero.omega = 0.0;
  TrainConfig dropped = small_config(7);
  dropped.drop_fc_term = true;
  const TrainResult a = train(s.scene.cube_t1, s.scene.cube_t2, s.endmembers, s.labels, zero);
  const TrainResult b = train(s.scene.cube_t1, s.scene.cube_t2, s.endmembers, s.labels, dropped);
  CHECK(values(a.model.uu.all()) == values(b.model.uu.all()));
  CHECK(values(a.model.tc.all()) == values(b.model.tc.all()));
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].l_cos_x == b.log[i].l_cos_x);
    CHECK(a.log[i].l_cos_y == b.log[i].l_cos_y);
  }
}

TEST_CASE("phase freezing: UU warm-up leaves TC untouched, TC warm-up leaves UU untouched") {
  const SmallScene s = small_scene(6);
  TrainConfig uu_only_phase = small_config(2);
  uu_only_phase.warmup_uu = 2;
  const TrainResult a = train(s.scene.cube_t1, s.scene.cube_t2, s.endmembers, s.labels, uu_only_phase);
  CHECK(values(a.model.tc.all()) == initial_tc(s, uu_only_phase));
  CHECK_FALSE(values(a.model.uu.all()) == initial_uu(s, uu_only_phase));

  TrainConfig tc_phase = small_config(2);
  tc_phase.warmup_uu = 0;
  tc_phase.warmup_tc = 2;
  const TrainResult b = train(s.scene.cube_t1, s.scene.cube_t2, s.endmembers, s.labels, tc_phase);
  CHECK(values(b.model.uu.all()) == initial_uu(s, tc_phase));
  CHECK_FALSE(values(b.model.tc.all()) == initial_tc(s, tc_phase));

  TrainConfig uu_mode = small_config(4);
  uu_mode.mode = TrainMode::kUuOnly;
  const TrainResult c = train(s.scene.cube_t1, s.scene.cube_t2, s.endmembers, s.labels, uu_mode);
  CHECK(values(c.model.tc.all()) == initial_tc(s, uu_mode));
  for (const EpochLog& e : c.log) CHECK(e.l_fc == 0.0);
}

TEST_CASE("inference outputs satisfy their invariants") {
  const SmallScene s = small_scene(7);
  const TrainResult r = train(s.scene.cube_t1, s.scene.cube_t2, s.endmembers, s.labels, small_config(4));
  const Inference inf = infer_change_prob(r.model, s.scene.cube_t1, s.scene.cube_t2, s.endmembers);
  REQUIRE(inf.probability.size() == s.scene.cube_t1.pixel_count());
  for (double p : inf.probability) {
    REQUIRE(p >= 0.0);
    REQUIRE(p <= 1.0);
  }
  for (const AbundanceCube* a : {&inf.abundance_t1, &inf.abundance_t2}) {
    CHECK(a->producer == AbundanceProducer::kUuModule);
    for (std::size_t p = 0; p < a->values.pixel_count(); ++p) {
      double sum = 0.0;
      for (double v : a->values.pixel(p)) {
        REQUIRE(v >= 0.0);
        sum += v;
      }
      REQUIRE(sum <= 1.0 + 1e-6);
    }
  }
  const Inference no_tc = infer_change_prob(r.model, s.scene.cube_t1, s.scene.cube_t2, s.endmembers, false);
  CHECK(no_tc.probability.empty());
  CHECK(no_tc.abundance_t1.values == inf.abundance_t1.values);
  CHECK_THROWS_AS(infer_change_prob(r.model, s.scene.cube_t1, s.scene.cube_t2,
                                    random_endmembers(10, 4, 1)),
                  Error);
}

TEST_CASE("model checkpoint round trip") {
  const auto dir = test::temp_dir("model");
  const BcgModel m = make_model(10, 3, 5, ChannelConfig{2, 3, 2, 4, 5}, 8);
  save_model(m, dir / "m.ckpt");
  const BcgModel back = load_model(dir / "m.ckpt");
  CHECK(back.bands == 10);
  CHECK(back.endmembers == 3);
  CHECK(back.patch == 5);
  CHECK(back.channels.c12 == 3);
  CHECK(values(back.uu.all()) == values(m.uu.all()));
  CHECK(values(back.tc.all()) == values(m.tc.all()));
}

TEST_CASE("log line format") {
  EpochLog e;
  e.epoch = 3;
  e.l_cos_x = 0.5;
  e.l_cos_y = 0.25;
  e.l_fc = 0.125;
  e.total = 0.875;
  CHECK(format_log_line(e) == "3 0.5 0.25 0.125 0.875");
}
