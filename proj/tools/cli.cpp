#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "bcg/changemap.hpp"
#include "bcg/endmember.hpp"
#include "bcg/error.hpp"
#include "bcg/hsi.hpp"
#include "bcg/metrics.hpp"
#include "bcg/model.hpp"
#include "bcg/pipeline.hpp"
#include "bcg/predetect.hpp"
#include "bcg/render.hpp"
#include "bcg/synthetic.hpp"
#include "bcg/unmix.hpp"

namespace bcg {

namespace {

namespace fs = std::filesystem;

double parse_snr(const std::string& text) {
  if (text == "inf" || text == "none") return std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::kUsage, "bad --snr value '" + text + "'");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::kIo, "write failed for " + path.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct SynthFlags {
  SynthConfig config;
  std::string snr = "inf";

  void add(CLI::App* app) {
    app->add_option("--height", config.height, "Scene rows")->capture_default_str();
    app->add_option("--width", config.width, "Scene columns")->capture_default_str();
    app->add_option("--bands", config.bands, "Spectral bands")->capture_default_str();
    app->add_option("--endmembers", config.endmembers, "Number of endmembers")
        ->capture_default_str();
    app->add_option("--change-classes", config.change_classes, "Number of change blocks")
        ->capture_default_str();
    app->add_option("--block-min", config.block_min, "Smallest change block side")
        ->capture_default_str();
    app->add_option("--block-max", config.block_max, "Largest change block side")
        ->capture_default_str();
    app->add_option("--regions", config.regions, "Voronoi sites (0 = 3 per endmember)")
        ->capture_default_str();
    app->add_option("--border-width", config.border_width, "Mixing band half-width")
        ->capture_default_str();
    app->add_option("--illumination", config.illumination, "Brightness field amplitude")
        ->capture_default_str();
    app->add_option("--snr", snr, "Noise level in dB, or inf")->capture_default_str();
  }

  SynthConfig resolve(std::uint64_t seed) const {
    SynthConfig c = config;
    c.snr_db = parse_snr(snr);
    c.seed = seed;
    return c;
  }
};

struct TrainFlags {
  TrainConfig config;
  std::string mode = "full";

  void add(CLI::App* app) {
    TrainConfig& c = config;
    app->add_option("--patch", c.patch, "Patch side m (odd)")->capture_default_str();
    app->add_option("--batch", c.batch, "Batch size N")->capture_default_str();
    app->add_option("--epochs", c.epochs, "Total epochs, warm-ups included")
        ->capture_default_str();
    app->add_option("--lr", c.lr, "Adam learning rate")->capture_default_str();
    app->add_option("--weight-decay", c.weight_decay, "L2 weight decay")->capture_default_str();
    app->add_option("--omega", c.omega, "Weight of the focal term in the UU update")
        ->capture_default_str();
    app->add_option("--gamma", c.gamma, "Focal loss gamma")->capture_default_str();
    app->add_option("--alpha", c.alpha, "Focal loss alpha")->capture_default_str();
    app->add_option("--warmup-uu", c.warmup_uu, "UU-Module warm-up epochs")
        ->capture_default_str();
    app->add_option("--warmup-tc", c.warmup_tc, "TC-Module warm-up epochs")
        ->capture_default_str();
    app->add_option("--c11", c.channels.c11, "Channels of C11 and C21")->capture_default_str();
    app->add_option("--c12", c.channels.c12, "Channels of C12 and C22")->capture_default_str();
    app->add_option("--c3", c.channels.c3, "Channels of C3")->capture_default_str();
    app->add_option("--head-width", c.channels.head, "Width of C4 and C6")
        ->capture_default_str();
    app->add_option("--tc-width", c.channels.tc, "TC-Module hidden width")
        ->capture_default_str();
    app->add_option("--mode", mode, "full or uu-only")
        ->check(CLI::IsMember({"full", "uu-only"}))
        ->capture_default_str();
  }

  TrainConfig resolve(std::uint64_t seed) const {
    TrainConfig c = config;
    c.seed = seed;
    c.mode = mode == "uu-only" ? TrainMode::kUuOnly : TrainMode::kFull;
    return c;
  }
};

struct PredetectFlags {
  PredetectConfig config;
  std::string sampling = "confidence";

  void add(CLI::App* app) {
    app->add_option("--n-unchanged", config.n_unchanged, "Unchanged pseudo-labels")
        ->capture_default_str();
    app->add_option("--n-changed", config.n_changed, "Changed pseudo-labels")
        ->capture_default_str();
    app->add_option("--sampling", sampling, "confidence or random")
        ->check(CLI::IsMember({"confidence", "random"}))
        ->capture_default_str();
  }

  PredetectConfig resolve() const {
    PredetectConfig c = config;
    c.sampling = sampling == "random" ? SamplingMode::kRandom : SamplingMode::kConfidence;
    return c;
  }
};

CLI::App* subcommand(CLI::App& app, const std::string& name, const std::string& help) {
  CLI::App* sub = app.add_subcommand(name, help);
  sub->add_option("--config", "key=value file; flags override it");
  sub->fallthrough(false);
  return sub;
}

void add_seed(CLI::App* sub, std::uint64_t& seed) {
  sub->add_option("--seed", seed, "Random seed")->required();
}

void cmd_gen_data(const SynthFlags& flags, std::uint64_t seed, const fs::path& out) {
  const SyntheticScene s = gen_synthetic_scene(flags.resolve(seed));
  make_dir(out);
  save_cube(s.cube_t1, out / "x", {{"temporal", "t1"}});
  save_cube(s.cube_t2, out / "y", {{"temporal", "t2"}});
  save_abundance(s.true_abund_t1, out / "truth_t1");
  save_abundance(s.true_abund_t2, out / "truth_t2");
  save_label_map(s.binary_ref, out / "binary_ref", {{"role", "binary_ref"}});
  save_label_map(s.multiclass_ref, out / "multiclass_ref", {{"role", "multiclass_ref"}});
  save_endmembers(s.endmembers_true, out / "endmembers_true");
  std::ostringstream edits;
  edits << "class from to row col height width kind\n";
  for (const ChangeEdit& e : s.edits)
    edits << e.change_class << ' ' << e.from << ' ' << e.to << ' ' << e.row << ' ' << e.col << ' '
          << e.height << ' ' << e.width << ' '
          << (e.kind == EditKind::kInsert ? "insert" : "transplant") << '\n';
  write_text(out / "edits.txt", edits.str());
}

void cmd_endmembers(const std::string& x, const std::string& y, int k, std::uint64_t seed,
                    const fs::path& out) {
  const std::optional<int> override = k > 0 ? std::optional<int>(k) : std::nullopt;
  const MultitemporalEndmembers em = multitemporal_endmembers(load_cube(x), load_cube(y),
                                                              override, seed);
  make_dir(out);
  save_endmembers(em.endmembers, out / "endmembers");
  std::ostringstream info;
  info << "k=" << em.endmembers.count() << "\nestimated=" << (em.estimated_k ? 1 : 0) << '\n';
  if (em.subspace) info << "k_hat=" << em.subspace->k_hat << '\n';
  write_text(out / "endmembers.txt", info.str());
}

void cmd_unmix_fcls(const std::string& x, const std::string& y, const std::string& e,
                    const fs::path& out) {
  const EndmemberSet em = load_endmembers(e);
  const FclsCubeResult a1 = fcls_cube(em, load_cube(x));
  const FclsCubeResult a2 = fcls_cube(em, load_cube(y));
  make_dir(out);
  save_abundance(a1.abundance, out / "abund_t1");
  save_abundance(a2.abundance, out / "abund_t2");
  const PucResult puc = puc_rule(a1.abundance, a2.abundance);
  save_label_map(puc.binary, out / "binary", {{"role", "binary"}});
  save_label_map(puc.multiclass, out / "multiclass", {{"role", "multiclass"}});
  write_text(out / "fcls.txt", "flagged_t1=" + std::to_string(a1.flagged.size()) +
                                   "\nflagged_t2=" + std::to_string(a2.flagged.size()) + "\n");
}

void cmd_predetect(const std::string& x, const std::string& y, const PredetectFlags& flags,
                   std::uint64_t seed, const fs::path& out) {
  const HsiCube cx = load_cube(x);
  const PredetectResult r = run_predetect(cx, load_cube(y), flags.resolve(), seed);
  make_dir(out);
  save_pseudo_labels(r.labels, out / "pseudo_labels.txt");
  HsiCube magnitude(cx.height(), cx.width(), 1);
  std::copy(r.magnitude.begin(), r.magnitude.end(), magnitude.values().begin());
  save_cube(magnitude, out / "cva_magnitude", {{"role", "magnitude"}});
  const GaussMix2& m = r.mixture;
  write_text(out / "threshold.txt",
             "threshold=" + format_double(r.threshold) + "\nunchanged_weight=" +
                 format_double(m.unchanged.weight) + "\nunchanged_mean=" +
                 format_double(m.unchanged.mean) + "\nunchanged_variance=" +
                 format_double(m.unchanged.variance) + "\nchanged_weight=" +
                 format_double(m.changed.weight) + "\nchanged_mean=" +
                 format_double(m.changed.mean) + "\nchanged_variance=" +
                 format_double(m.changed.variance) + "\nem_iterations=" +
                 std::to_string(m.iterations) + "\n");
}

void cmd_train(const std::string& x, const std::string& y, const std::string& e,
               const std::string& labels, const TrainFlags& flags, std::uint64_t seed,
               const fs::path& out) {
  make_dir(out);
  std::ofstream log(out / "train_log.txt", std::ios::trunc);
  if (!log) fail(ErrorKind::kIo, "cannot write " + (out / "train_log.txt").string());
  log << "epoch l_cos_x l_cos_y l_fc total\n";
  const TrainResult r = train(load_cube(x), load_cube(y), load_endmembers(e),
                              load_pseudo_labels(labels), flags.resolve(seed),
                              [&](const EpochLog& entry) {
                                log << format_log_line(entry) << '\n';
                                log.flush();
                              });
  save_model(r.model, out / "model.ckpt");
}

void cmd_infer(const std::string& x, const std::string& y, const std::string& e,
               const std::string& model_path, bool uu_only, const fs::path& out) {
  const BcgModel model = load_model(model_path);
  const HsiCube cx = load_cube(x);
  const Inference inf = infer_change_prob(model, cx, load_cube(y), load_endmembers(e), !uu_only);
  make_dir(out);
  save_abundance(inf.abundance_t1, out / "abund_t1");
  save_abundance(inf.abundance_t2, out / "abund_t2");
  if (uu_only) {
    const PucResult puc = puc_rule(inf.abundance_t1, inf.abundance_t2);
    save_label_map(puc.binary, out / "binary", {{"role", "binary"}});
    save_label_map(puc.multiclass, out / "multiclass", {{"role", "multiclass"}});
    return;
  }
  const BcgMaps maps = bcg_change_maps(inf);
  save_probability(maps.binary, out / "probability");
  save_label_map(maps.binary, out / "binary", {{"role", "binary"}});
  save_label_map(maps.multiclass, out / "multiclass", {{"role", "multiclass"}});
}

struct EvaluateFiles {
  std::string binary, multiclass, binary_ref, multiclass_ref;
  std::string abund_t1, abund_t2, truth_t1, truth_t2, endmembers, endmembers_true;
};

void cmd_evaluate(const EvaluateFiles& f, const std::string& out) {
  std::ostringstream text;
  auto put = [&](const std::string& key, double v) { text << key << '=' << format_double(v) << '\n'; };
  std::string report;
  if (!f.binary.empty()) {
    require(!f.binary_ref.empty(), ErrorKind::kUsage, "--binary needs --binary-ref");
    const ConfusionMatrix cm =
        confusion_matrix(load_label_map(f.binary), load_label_map(f.binary_ref), {0, 1});
    put("binary_oa", overall_accuracy(cm));
    put("binary_kappa", kappa(cm));
  }
  if (!f.multiclass.empty()) {
    require(!f.multiclass_ref.empty(), ErrorKind::kUsage, "--multiclass needs --multiclass-ref");
    const ChangeMap ref = load_label_map(f.multiclass_ref);
    const MatchResult matched = match_classes_to_reference(load_label_map(f.multiclass), ref);
    const ConfusionMatrix cm = confusion_matrix(matched.relabeled, ref);
    put("multiclass_oa", overall_accuracy(cm));
    put("multiclass_kappa", kappa(cm));
    report = format_match_report(matched);
  }
  if (!f.abund_t1.empty() || !f.abund_t2.empty()) {
    require(!f.abund_t1.empty() && !f.abund_t2.empty() && !f.truth_t1.empty() &&
                !f.truth_t2.empty(),
            ErrorKind::kUsage, "abundance scoring needs --abund-t1/t2 and --truth-t1/t2");
    AbundanceCube a1 = load_abundance(f.abund_t1);
    AbundanceCube a2 = load_abundance(f.abund_t2);
    if (!f.endmembers.empty()) {
      require(!f.endmembers_true.empty(), ErrorKind::kUsage,
              "--endmembers needs --endmembers-true");
      const std::vector<int> match =
          match_endmembers(load_endmembers(f.endmembers), load_endmembers(f.endmembers_true));
      a1 = align_abundance(a1, match);
      a2 = align_abundance(a2, match);
    }
    const AbundanceCube t1 = load_abundance(f.truth_t1);
    const AbundanceCube t2 = load_abundance(f.truth_t2);
    const AbundanceMse m1 = abundance_mse(a1, t1);
    const AbundanceMse m2 = abundance_mse(a2, t2);
    for (std::size_t i = 0; i < m1.per_endmember.size(); ++i) {
      put("mse_t1_e" + std::to_string(i), m1.per_endmember[i]);
      put("mse_t2_e" + std::to_string(i), m2.per_endmember[i]);
    }
    put("mse_t1", m1.average);
    put("mse_t2", m2.average);
    put("abundance_mse", 0.5 * (m1.average + m2.average));
  }
  require(!text.str().empty(), ErrorKind::kUsage, "evaluate: nothing to score");
  std::cout << text.str();
  if (!out.empty()) {
    const fs::path dir(out);
    make_dir(dir);
    write_text(dir / "metrics.txt", text.str());
    if (!report.empty()) write_text(dir / "class_matching.txt", report);
  }
}

void cmd_compare(const SynthFlags& synth, const TrainFlags& train_flags,
                 const PredetectFlags& pre, int k, std::uint64_t seed, const std::string& out) {
  const SyntheticScene scene = gen_synthetic_scene(synth.resolve(seed));
  CompareConfig cfg;
  cfg.train = train_flags.resolve(seed);
  cfg.predetect = pre.resolve();
  if (k > 0) cfg.k_override = k;
  cfg.seed = seed;
  const std::string table = format_compare_table(run_compare(scene, cfg));
  std::cout << table;
  if (!out.empty()) {
    make_dir(out);
    write_text(fs::path(out) / "compare.csv", table);
  }
}

void cmd_render(const std::string& map, const std::string& kind, const std::string& out) {
  render_map(load_label_map(map), kind == "binary" ? RenderKind::kBinary : RenderKind::kMulticlass,
             out);
}

int exit_code(ErrorKind kind) { return kind == ErrorKind::kUsage ? 1 : 2; }

std::string flag_name(const std::string& arg) {
  if (arg.rfind("--", 0) != 0) return {};
  return arg.substr(2, arg.find('=') == std::string::npos ? std::string::npos : arg.find('=') - 2);
}

// Splices `--key value` pairs from every --config file in front of the
// explicit flags, skipping keys that are also given on the command line.
std::vector<std::string> expand_config(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::vector<std::string> files;
  std::set<std::string> explicit_flags;
  for (std::size_t i = 1; i < args.size(); ++i) {
    const std::string name = flag_name(args[i]);
    if (name.empty()) continue;
    if (name == "config") {
      const auto eq = args[i].find('=');
      if (eq != std::string::npos) files.push_back(args[i].substr(eq + 1));
      else if (i + 1 < args.size()) files.push_back(args[i + 1]);
    } else {
      explicit_flags.insert(name);
    }
  }
  if (files.empty() || args.size() < 2) return args;
  std::vector<std::string> injected;
  for (const std::string& file : files) {
    std::ifstream in(file);
    if (!in) fail(ErrorKind::kUsage, "cannot read config file " + file);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
      ++number;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        fail(ErrorKind::kUsage, file + ":" + std::to_string(number) + ": expected key=value");
      auto trim = [](std::string v) {
        const auto a = v.find_first_not_of(" \t\r");
        const auto b = v.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : v.substr(a, b - a + 1);
      };
      std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      std::replace(key.begin(), key.end(), '_', '-');
      if (explicit_flags.count(key)) continue;
      explicit_flags.insert(key);
      if (value == "true") {
        injected.push_back("--" + key);
      } else if (value != "false") {
        injected.push_back("--" + key);
        injected.push_back(value);
      }
    }
  }
  // args[1] is the subcommand.
  args.insert(args.begin() + 2, injected.begin(), injected.end());
  return args;
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv) {
  CLI::App app{"Binary-change-guided hyperspectral multiclass change detection"};
  app.name("bcg");
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string out, x, y, endmembers, labels, model, map, kind = "binary";
  int k = 0;
  SynthFlags synth;
  TrainFlags train_flags;
  PredetectFlags pre;
  EvaluateFiles eval;
  bool uu_only = false;

  CLI::App* gen = subcommand(app, "gen-data", "Write a synthetic bi-temporal scene");
  add_seed(gen, seed);
  synth.add(gen);
  gen->add_option("--out", out, "Output directory")->required();

  CLI::App* em = subcommand(app, "endmembers", "Extract multitemporal endmembers");
  add_seed(em, seed);
  em->add_option("--x", x, "Date-1 cube")->required();
  em->add_option("--y", y, "Date-2 cube")->required();
  em->add_option("--k", k, "Endmember count (0 = estimate)")->capture_default_str();
  em->add_option("--out", out, "Output directory")->required();

  CLI::App* fcls = subcommand(app, "unmix-fcls", "FCLS unmixing and PUC change maps");
  fcls->add_option("--x", x, "Date-1 cube")->required();
  fcls->add_option("--y", y, "Date-2 cube")->required();
  fcls->add_option("--endmembers", endmembers, "Endmember file")->required();
  fcls->add_option("--out", out, "Output directory")->required();

  CLI::App* predetect = subcommand(app, "predetect", "CVA + EM pre-detection and pseudo-labels");
  add_seed(predetect, seed);
  predetect->add_option("--x", x, "Date-1 cube")->required();
  predetect->add_option("--y", y, "Date-2 cube")->required();
  pre.add(predetect);
  predetect->add_option("--out", out, "Output directory")->required();

  CLI::App* tr = subcommand(app, "train", "Train the UU- and TC-Modules");
  add_seed(tr, seed);
  tr->add_option("--x", x, "Date-1 cube")->required();
  tr->add_option("--y", y, "Date-2 cube")->required();
  tr->add_option("--endmembers", endmembers, "Endmember file")->required();
  tr->add_option("--labels", labels, "Pseudo-label file")->required();
  train_flags.add(tr);
  tr->add_option("--out", out, "Output directory")->required();

  CLI::App* inf = subcommand(app, "infer", "Per-pixel abundances and change maps");
  inf->add_option("--x", x, "Date-1 cube")->required();
  inf->add_option("--y", y, "Date-2 cube")->required();
  inf->add_option("--endmembers", endmembers, "Endmember file")->required();
  inf->add_option("--model", model, "Checkpoint manifest")->required();
  inf->add_flag("--uu-only", uu_only, "Skip the TC-Module; maps come from PUC");
  inf->add_option("--out", out, "Output directory")->required();

  CLI::App* ev = subcommand(app, "evaluate", "OA, Kappa and abundance MSE");
  ev->add_option("--binary", eval.binary, "Predicted binary map");
  ev->add_option("--multiclass", eval.multiclass, "Predicted multiclass map");
  ev->add_option("--binary-ref", eval.binary_ref, "Reference binary map");
  ev->add_option("--multiclass-ref", eval.multiclass_ref, "Reference multiclass map");
  ev->add_option("--abund-t1", eval.abund_t1, "Estimated date-1 abundances");
  ev->add_option("--abund-t2", eval.abund_t2, "Estimated date-2 abundances");
  ev->add_option("--truth-t1", eval.truth_t1, "True date-1 abundances");
  ev->add_option("--truth-t2", eval.truth_t2, "True date-2 abundances");
  ev->add_option("--endmembers", eval.endmembers, "Estimated endmembers, for band alignment");
  ev->add_option("--endmembers-true", eval.endmembers_true, "True endmembers");
  ev->add_option("--out", out, "Output directory for metrics.txt");

  CLI::App* cmp = subcommand(app, "compare", "FCLS vs UU-only vs BCG-Net on a synthetic scene");
  add_seed(cmp, seed);
  synth.add(cmp);
  train_flags.add(cmp);
  pre.add(cmp);
  cmp->add_option("--k", k, "Endmember count (0 = estimate)")->capture_default_str();
  cmp->add_option("--out", out, "Output directory for compare.csv");

  CLI::App* render = subcommand(app, "render", "Write a label map as PGM or PPM");
  render->add_option("--map", map, "Label map")->required();
  render->add_option("--kind", kind, "binary or multiclass")
      ->check(CLI::IsMember({"binary", "multiclass"}))
      ->capture_default_str();
  render->add_option("--out", out, "Image path")->required();

  std::vector<std::string> args;
  try {
    args = expand_config(argc, argv);
  } catch (const Error& e) {
    std::cerr << "bcg: " << e.what() << '\n';
    return exit_code(e.kind());
  }
  std::vector<const char*> arg_ptrs;
  for (const std::string& a : args) arg_ptrs.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(arg_ptrs.size()), arg_ptrs.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    if (app.get_subcommands().empty()) std::cerr << app.help();
    return 1;
  }

  try {
    if (*gen) cmd_gen_data(synth, seed, out);
    else if (*em) cmd_endmembers(x, y, k, seed, out);
    else if (*fcls) cmd_unmix_fcls(x, y, endmembers, out);
    else if (*predetect) cmd_predetect(x, y, pre, seed, out);
    else if (*tr) cmd_train(x, y, endmembers, labels, train_flags, seed, out);
    else if (*inf) cmd_infer(x, y, endmembers, model, uu_only, out);
    else if (*ev) cmd_evaluate(eval, out);
    else if (*cmp) cmd_compare(synth, train_flags, pre, k, seed, out);
    else if (*render) cmd_render(map, kind, out);
  } catch (const Error& e) {
    std::cerr << "bcg: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "bcg: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace bcg
