#include "erfseg/cli/commands.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "erfseg/cli/images.hpp"
#include "erfseg/cli/manifest.hpp"
#include "erfseg/cli/run_config.hpp"
#include "erfseg/erf/erf.hpp"
#include "erfseg/error.hpp"
#include "erfseg/nn/checkpoint.hpp"
#include "erfseg/parallel.hpp"
#include "erfseg/tsr_io.hpp"

namespace erfseg::cli {

namespace fs = std::filesystem;

namespace {

/// A requested check did not hold; maps to kAssertion.
class AssertionFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::optional<std::string> precision;
};

struct SynthArgs {
  std::string config, out;
};

struct TrainArgs {
  std::string config, data, out;
  bool resume = false;
  std::string variant, base_channels, dilation, ratio, epochs, batch, lr;
};

struct EvalArgs {
  std::string checkpoint, data, out, split = "test";
  bool attention = false;
};

struct ErfArgs {
  std::string arch = "plain";
  std::vector<std::size_t> depths{5};
  std::size_t dilation = 1;
  bool residual = false;
  std::size_t samples = 32, seeds = 3, channels = 8;
  double tau = 0.9545;
  std::string out;
  std::string against_arch;
  std::optional<std::size_t> against_depth;
  std::size_t against_dilation = 1;
  bool against_residual = false;
  std::string expect;
};

struct VerifyArgs {
  std::string dir;
};

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

/// New output directories must be absent or empty so stale files never mix
/// with a run's artifacts.
void prepare_fresh_dir(const fs::path& dir) {
  if (dir.empty()) throw ConfigError("--out is required");
  if (fs::exists(dir) && !(fs::is_directory(dir) && fs::is_empty(dir))) {
    throw ConfigError("output directory " + dir.string() + " exists and is not empty");
  }
  fs::create_directories(dir);
}

RunConfig load_config(const std::string& path, const Overrides& overrides = {}) {
  return path.empty() ? parse_run_config("", overrides) : load_run_config(path, overrides);
}

Precision resolve_precision(const Globals& g, Precision fallback) {
  return g.precision ? parse_precision(*g.precision) : fallback;
}

void print_summary(std::ostream& out, const std::string& label, const Summary& s) {
  out << "  " << std::left << std::setw(8) << label << std::right;
  if (s.count == 0) {
    out << "undefined";
  } else {
    out << fixed(s.mean) << " +/- " << fixed(s.std);
  }
  out << "  (n=" << s.count << ", excluded " << s.excluded << ")\n";
}

void print_report(std::ostream& out, const MetricsReport& r, std::string_view title) {
  out << title << ": " << r.cases.size() << " cases, " << r.param_count << " parameters\n";
  print_summary(out, "iou", r.iou);
  print_summary(out, "hd95", r.hd95);
  print_summary(out, "fp_rate", r.fp_rate);
  print_summary(out, "fn_rate", r.fn_rate);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw IoError("cannot write " + path.string());
}

void write_metrics(const fs::path& path, const MetricsReport& r) {
  std::ofstream f(path, std::ios::binary);
  write_metrics_csv(f, r);
  if (!f) throw IoError("cannot write " + path.string());
}

std::vector<const Sample*> select_split(const Dataset& data, const std::string& split) {
  if (split == "all") {
    std::vector<const Sample*> all;
    for (const auto& s : data.samples) all.push_back(&s);
    return all;
  }
  return data.split(parse_split(split));
}

// ------------------------------------------------------------------ synth

int cmd_synth(const Globals& g, const SynthArgs& a, std::ostream& out) {
  RunConfig cfg = load_config(a.config);
  if (g.seed) cfg.data.synthetic.seed = *g.seed;
  const Dataset data = generate_synthetic(cfg.data.synthetic);
  const fs::path dir = a.out;
  prepare_fresh_dir(dir);

  RunManifest m;
  m.command = "synth";
  m.config_toml = cfg.to_toml();
  m.seed = cfg.data.synthetic.seed;
  m.artifacts.push_back({"index.csv", {}, {}});
  for (const auto& s : data.samples) {
    m.artifacts.push_back({"images/" + s.case_id + ".tsr", {}, {}});
    m.artifacts.push_back({"masks/" + s.case_id + ".tsr", {}, {}});
  }
  ManifestWriter mw(dir, std::move(m));
  write_dataset(dir, data);
  mw.finish();

  double fg = 0.0;
  for (const auto& s : data.samples) fg += s.foreground_fraction();
  out << "wrote " << data.samples.size() << " cases to " << dir.string() << " (train "
      << data.split(Split::Train).size() << ", val " << data.split(Split::Val).size() << ", test "
      << data.split(Split::Test).size() << "); mean foreground fraction "
      << fixed(fg / static_cast<double>(data.samples.size())) << '\n';
  return kOk;
}

// ------------------------------------------------------------------ train

Dataset load_training_data(const RunConfig& cfg, const std::string& data_dir) {
  if (!data_dir.empty()) return load_dataset(data_dir);
  if (cfg.data.kind == DataKind::TsrDir) {
    if (cfg.data.path.empty()) throw ConfigError("data.kind = 'tsr_dir' needs data.path or --data");
    return load_dataset(cfg.data.path);
  }
  return generate_synthetic(cfg.data.synthetic);
}

template <typename T>
int train_impl(const RunConfig& cfg, const Dataset& data, const fs::path& dir, bool resume, std::uint64_t seed,
               std::ostream& out) {
  const Network net(cfg.model);
  TrainState<T> state;
  if (resume) {
    state = load_train_state<T>(dir);
    ParamStore<T> shape_check = net.init<T>(0);
    assign_params(shape_check, state.params);
    out << "resuming after epoch " << state.epochs_done() << '\n';
  } else {
    state = TrainState<T>::start(net.init<T>(seed));
  }
  out << "model " << variant_name(cfg.model.variant) << ": " << net.param_count() << " parameters\n";

  RunManifest m;
  m.command = "train";
  m.config_toml = cfg.to_toml();
  m.seed = seed;
  m.param_count = net.param_count();
  for (const char* f : {"model.toml", "last.ckpt", "optimizer.ckpt", "checkpoint.ckpt", "curves.csv", "metrics.csv"}) {
    m.artifacts.push_back({f, {}, {}});
  }
  ManifestWriter mw(dir, std::move(m));
  write_text(dir / "model.toml", cfg.to_toml());

  auto t0 = std::chrono::steady_clock::now();
  train<T>(net, state, data, cfg.train, [&](const TrainState<T>& s, const EpochRecord& r) {
    save_train_state(dir, s);
    const auto now = std::chrono::steady_clock::now();
    out << "epoch " << r.epoch << '/' << cfg.train.epochs << "  loss " << fixed(r.train_loss);
    if (r.val_iou) out << "  val_iou " << fixed(*r.val_iou);
    if (r.val_hd95) out << "  val_hd95 " << fixed(*r.val_hd95, 2);
    if (r.val_fn) out << "  val_fn " << fixed(*r.val_fn);
    out << "  (" << fixed(std::chrono::duration<double>(now - t0).count(), 1) << " s)\n" << std::flush;
    t0 = now;
  });
  if (state.epochs_done() == 0 || !fs::exists(dir / "last.ckpt")) save_train_state(dir, state);

  std::string split = "test";
  auto cases = data.split(Split::Test);
  if (cases.empty()) split = "val", cases = data.split(Split::Val);
  if (cases.empty()) split = "train", cases = data.split(Split::Train);
  const auto ev = evaluate(net, state.best, cases, cfg.train.batch_size);
  write_metrics(dir / "metrics.csv", ev.report);
  mw.finish();
  print_report(out, ev.report, "best epoch " + std::to_string(state.best_epoch) + " on " + split);
  return kOk;
}

int cmd_train(const Globals& g, const TrainArgs& a, std::ostream& out) {
  Overrides ov;
  const std::pair<const char*, const std::string*> flags[] = {
      {"model.variant", &a.variant}, {"model.base_channels", &a.base_channels}, {"model.dilation", &a.dilation},
      {"model.ratio", &a.ratio},     {"train.epochs", &a.epochs},               {"train.batch", &a.batch},
      {"train.lr", &a.lr}};
  for (const auto& [key, value] : flags) {
    if (!value->empty()) ov.emplace_back(key, *value);
  }
  RunConfig cfg = load_config(a.config, ov);
  if (a.out.empty()) throw ConfigError("--out is required");
  const fs::path dir = a.out;
  const bool has_run = fs::exists(dir / "curves.csv");
  if (a.resume) {
    if (!has_run) throw ConfigError("--resume: no run found in " + dir.string());
    // Model, data and optimiser settings come from the stored run; only the
    // epoch budget may be extended.
    RunConfig stored = load_run_config(dir / "model.toml");
    stored.train.epochs = cfg.train.epochs;
    cfg = std::move(stored);
  } else {
    if (g.seed) cfg.train.seed = *g.seed;
    cfg.precision = resolve_precision(g, cfg.precision);
    if (has_run) throw ConfigError(dir.string() + " already holds a run; pass --resume to continue it");
    if (fs::exists(dir) && !fs::is_directory(dir)) throw ConfigError(dir.string() + " is not a directory");
  }
  const Dataset data = load_training_data(cfg, a.data);
  if (a.resume && data.channels() != cfg.model.in_channels) {
    throw ConfigError("data has " + std::to_string(data.channels()) + " channels but the run was trained with " +
                      std::to_string(cfg.model.in_channels));
  }
  cfg.model.in_channels = data.channels();
  cfg.model.validate();
  fs::create_directories(dir);
  return cfg.precision == Precision::F32 ? train_impl<float>(cfg, data, dir, a.resume, cfg.train.seed, out)
                                         : train_impl<double>(cfg, data, dir, a.resume, cfg.train.seed, out);
}

// ------------------------------------------------------------------ eval

std::string attention_name(const std::string& case_id, std::size_t stage, const char* ext) {
  return "attention/" + case_id + "_stage" + std::to_string(stage) + ext;
}

/// Per case and attention stage: the map A as a TSR1 tensor [C, h, w] and a
/// 16-bit heatmap of its channel mean.
template <typename T>
void export_attention(const Network& net, ParamStore<T>& params, const std::vector<const Sample*>& cases,
                      const fs::path& dir) {
  fs::create_directories(dir / "attention");
  for (const auto* s : cases) {
    Tape<T> tape;
    ParamBinder<T> binder(tape, params);
    const auto [x, y] = make_batch<T>({s});
    const auto result = net.forward<T>(binder, tape.constant(x));
    for (const auto& trace : result.attention) {
      const auto& a = trace.out.a.value();
      const auto d = a.dims4();
      save_tsr(dir / attention_name(s->case_id, trace.stage, ".tsr"), Tensor<T>(Shape{d.c, d.h, d.w}, std::vector<T>(a.data().begin(), a.data().end())));
      Tensor<double> heat(Shape{d.h, d.w});
      for (std::size_t c = 0; c < d.c; ++c) {
        for (std::size_t i = 0; i < d.h * d.w; ++i) heat[i] += static_cast<double>(a.data()[c * d.h * d.w + i]);
      }
      for (auto& v : heat.data()) v /= static_cast<double>(d.c);
      write_pgm16(dir / attention_name(s->case_id, trace.stage, ".pgm"), heat);
    }
  }
}

template <typename T>
int eval_impl(const RunConfig& cfg, const EvalArgs& a, const Dataset& data, std::ostream& out) {
  const Network net(cfg.model);
  ParamStore<T> params = net.init<T>(0);
  assign_params(params, load_checkpoint<T>(a.checkpoint));
  const auto cases = select_split(data, a.split);
  if (cases.empty()) throw ConfigError("split '" + a.split + "' has no cases");

  const fs::path dir = a.out;
  prepare_fresh_dir(dir);
  RunManifest m;
  m.command = "eval";
  m.config_toml = cfg.to_toml();
  m.seed = cfg.train.seed;
  m.param_count = net.param_count();
  m.artifacts.push_back({"metrics.csv", {}, {}});
  for (const auto* s : cases) m.artifacts.push_back({"diffmaps/" + s->case_id + ".ppm", {}, {}});
  if (a.attention) {
    for (const auto* s : cases) {
      for (std::size_t i = 1; i <= cfg.model.stages; ++i) {
        m.artifacts.push_back({attention_name(s->case_id, i, ".tsr"), {}, {}});
        m.artifacts.push_back({attention_name(s->case_id, i, ".pgm"), {}, {}});
      }
    }
  }
  ManifestWriter mw(dir, std::move(m));

  const auto ev = evaluate(net, params, cases, cfg.train.batch_size);
  write_metrics(dir / "metrics.csv", ev.report);
  fs::create_directories(dir / "diffmaps");
  for (const auto& p : ev.predictions) {
    write_ppm(dir / "diffmaps" / (p.case_id + ".ppm"), p.gt.h, p.gt.w, difference_map(p.pred, p.gt));
  }
  if (a.attention) export_attention(net, params, cases, dir);
  mw.finish();
  print_report(out, ev.report, "evaluation on " + a.split);
  return kOk;
}

int cmd_eval(const Globals& g, const EvalArgs& a, std::ostream& out) {
  if (a.checkpoint.empty() || a.data.empty()) throw ConfigError("--checkpoint and --data are required");
  const fs::path ckpt = a.checkpoint;
  if (!fs::is_regular_file(ckpt)) throw IoError("checkpoint not found: " + ckpt.string());
  const fs::path sidecar = ckpt.parent_path() / "model.toml";
  if (!fs::is_regular_file(sidecar)) throw IoError("model description not found: " + sidecar.string());
  RunConfig cfg = load_run_config(sidecar);
  const Dataset data = load_dataset(a.data);
  if (data.channels() != cfg.model.in_channels) {
    throw ConfigError("checkpoint expects " + std::to_string(cfg.model.in_channels) + "-channel input, data has " +
                      std::to_string(data.channels()));
  }
  Network(cfg.model).check_input(Shape{1, data.channels(), data.height(), data.width()});
  if (a.attention && cfg.model.variant != Variant::FPA && cfg.model.variant != Variant::RFNA) {
    throw ConfigError("--attention needs an fpa or rfna checkpoint, got " +
                      std::string(variant_name(cfg.model.variant)));
  }
  return resolve_precision(g, cfg.precision) == Precision::F32 ? eval_impl<float>(cfg, a, data, out)
                                                               : eval_impl<double>(cfg, a, data, out);
}

// ------------------------------------------------------------------ erf

ErfLabSpec lab_spec(const std::string& arch_text, bool residual, std::size_t depth, std::size_t dilation,
                    std::size_t channels) {
  ErfLabSpec s;
  s.arch = parse_arch(arch_text);
  if (residual) {
    if (s.arch == ErfArch::Dilated) throw ConfigError("--residual cannot be combined with a dilated stack");
    s.arch = ErfArch::Residual;
  }
  if (s.arch != ErfArch::Dilated && dilation != 1) {
    throw ConfigError("--dilation applies to --arch dilated only");
  }
  s.depth = depth;
  s.dilation = dilation;
  s.channels = channels;
  s.validate();
  return s;
}

std::string erf_map_name(const char* kind, const ErfLabSpec& s, std::uint64_t seed, const char* ext) {
  return std::string(kind) + "/" + std::string(arch_name(s.arch)) + "_depth" + std::to_string(s.depth) + "_dil" +
         std::to_string(s.layer_dilation()) + "_seed" + std::to_string(seed) + ext;
}

void erf_row(std::ostream& csv, const ErfLabSpec& s, const std::string& seed, std::size_t rf, double radius,
             double ratio) {
  csv << arch_name(s.arch) << ',' << s.depth << ',' << s.layer_dilation() << ',' << (s.arch == ErfArch::Residual ? 1 : 0)
      << ',' << seed << ',' << rf << ',' << format_number(radius) << ',' << format_number(ratio) << '\n';
}

struct ErfSeries {
  ErfLabSpec spec;
  std::vector<ERFReport> reports;
  double mean_radius = 0.0, mean_ratio = 0.0;
};

ErfSeries measure_series(const ErfLabSpec& spec, const ErfArgs& a, const std::vector<std::uint64_t>& seeds) {
  ErfSeries s{spec, {}, 0.0, 0.0};
  for (auto seed : seeds) {
    s.reports.push_back(measure_erf(spec, a.samples, seed, a.tau));
    s.mean_radius += s.reports.back().erf_radius / static_cast<double>(seeds.size());
    s.mean_ratio += s.reports.back().ratio / static_cast<double>(seeds.size());
  }
  return s;
}

int cmd_erf(const Globals& g, const ErfArgs& a, std::ostream& out) {
  if (a.samples == 0 || a.seeds == 0) throw ConfigError("--samples and --seeds must be >= 1");
  if (a.depths.empty()) throw ConfigError("--depth needs at least one value");
  const bool against = !a.against_arch.empty();
  if ((a.expect == "larger" || a.expect == "not-larger") && !against) {
    throw ConfigError("--expect " + a.expect + " needs --against-arch");
  }
  if (a.expect == "ratio-decreasing" && a.depths.size() < 2) {
    throw ConfigError("--expect ratio-decreasing needs at least two --depth values");
  }
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < a.seeds; ++i) seeds.push_back(g.seed.value_or(0) + i);

  std::vector<ErfSeries> subject, reference;
  for (auto d : a.depths) {
    const auto sa = lab_spec(a.arch, a.residual, d, a.dilation, a.channels);
    if (against) {
      const auto sb = lab_spec(a.against_arch, a.against_residual, a.against_depth.value_or(d), a.against_dilation,
                               a.channels);
      if (sa.side() != sb.side()) {
        throw ConfigError("compared stacks need the same input size (" + std::to_string(sa.side()) + " vs " +
                          std::to_string(sb.side()) + ")");
      }
      reference.push_back(measure_series(sb, a, seeds));
    }
    subject.push_back(measure_series(sa, a, seeds));
  }

  const fs::path dir = a.out;
  prepare_fresh_dir(dir);
  std::ostringstream cfg_text;
  cfg_text << "arch = \"" << a.arch << "\"\nresidual = " << (a.residual ? "true" : "false") << "\ndepths = [";
  for (std::size_t i = 0; i < a.depths.size(); ++i) cfg_text << (i ? ", " : "") << a.depths[i];
  cfg_text << "]\ndilation = " << a.dilation << "\nchannels = " << a.channels << "\nsamples = " << a.samples
           << "\nseeds = " << a.seeds << "\ntau = " << format_number(a.tau) << '\n';
  if (against) {
    cfg_text << "against_arch = \"" << a.against_arch << "\"\nagainst_dilation = " << a.against_dilation
             << "\nagainst_residual = " << (a.against_residual ? "true" : "false") << '\n';
  }
  RunManifest m;
  m.command = "erf";
  m.config_toml = cfg_text.str();
  m.seed = g.seed.value_or(0);
  m.artifacts.push_back({"erf.csv", {}, {}});
  std::vector<const ErfSeries*> all;
  for (const auto& s : subject) all.push_back(&s);
  for (const auto& s : reference) all.push_back(&s);
  for (const auto* s : all) {
    for (const auto& r : s->reports) {
      m.artifacts.push_back({erf_map_name("grids", s->spec, r.seed, ".tsr"), {}, {}});
      m.artifacts.push_back({erf_map_name("heatmaps", s->spec, r.seed, ".pgm"), {}, {}});
    }
  }
  ManifestWriter mw(dir, std::move(m));

  std::ostringstream csv;
  csv << "arch,depth,dilation,residual,seed,rf_extent,erf_radius,ratio\n";
  fs::create_directories(dir / "grids");
  fs::create_directories(dir / "heatmaps");
  for (const auto* s : all) {
    for (const auto& r : s->reports) {
      erf_row(csv, s->spec, std::to_string(r.seed), r.rf_extent, r.erf_radius, r.ratio);
      save_tsr(dir / erf_map_name("grids", s->spec, r.seed, ".tsr"), r.map.grid);
      write_pgm16(dir / erf_map_name("heatmaps", s->spec, r.seed, ".pgm"), r.map.grid);
    }
  }
  for (const auto* s : all) erf_row(csv, s->spec, "mean", s->spec.rf_extent(), s->mean_radius, s->mean_ratio);
  write_text(dir / "erf.csv", csv.str());
  mw.finish();

  auto label = [](const ErfLabSpec& s) {
    return std::string(arch_name(s.arch)) + " depth " + std::to_string(s.depth) + " dilation " +
           std::to_string(s.layer_dilation());
  };
  for (const auto* s : all) {
    out << std::left << std::setw(32) << label(s->spec) << std::right << " RF " << std::setw(4) << s->spec.rf_extent()
        << "  mean ERF radius " << fixed(s->mean_radius, 3) << "  ERF/RF " << fixed(s->mean_ratio, 3) << '\n';
  }

  bool held = true;
  if (a.expect == "larger" || a.expect == "not-larger") {
    for (std::size_t i = 0; i < subject.size(); ++i) {
      const bool ok = a.expect == "larger" ? subject[i].mean_radius > reference[i].mean_radius
                                           : subject[i].mean_radius <= reference[i].mean_radius;
      out << "check: " << label(subject[i].spec) << (a.expect == "larger" ? " > " : " <= ")
          << label(reference[i].spec) << ": " << (ok ? "held" : "FAILED") << '\n';
      held = held && ok;
    }
  } else if (a.expect == "ratio-decreasing") {
    for (std::size_t i = 1; i < subject.size(); ++i) {
      const bool ok = subject[i].mean_ratio < subject[i - 1].mean_ratio;
      out << "check: ERF/RF(depth " << subject[i].spec.depth << ") < ERF/RF(depth " << subject[i - 1].spec.depth
          << "): " << (ok ? "held" : "FAILED") << '\n';
      held = held && ok;
    }
  }
  if (!held) throw AssertionFailure("requested ERF ordering did not hold");
  return kOk;
}

// ------------------------------------------------------------------ verify

int cmd_verify(const VerifyArgs& a, std::ostream& out) {
  const auto problems = verify_manifest(a.dir);
  if (!problems.empty()) {
    std::ostringstream msg;
    msg << problems.size() << " problem(s) in " << a.dir << ":";
    for (const auto& p : problems) msg << "\n  " << p;
    throw AssertionFailure(msg.str());
  }
  out << "manifest ok: " << read_manifest(a.dir).artifacts.size() << " artifacts verified in " << a.dir << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Segmentation networks with false-positive / false-negative attention: data synthesis, training, "
               "evaluation and effective-receptive-field analysis."};
  app.name(args.empty() ? "erfseg" : fs::path(args.front()).filename().string());
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", code_version());

  Globals g;
  app.add_option("--seed", g.seed, "Random seed (data for synth, training for train, first ERF seed for erf)");
  app.add_option("--threads", g.threads, "Worker threads; 1 is fully deterministic")->check(CLI::PositiveNumber);
  app.add_option("--precision", g.precision, "Scalar type for training/evaluation")->check(CLI::IsMember({"f32", "f64"}));

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate the synthetic class-imbalanced dataset");
  synth->add_option("--config", sa.config, "TOML run config ([data] section)");
  synth->add_option("--out", sa.out, "Output directory (must be empty)")->required();

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "Train a segmentation network");
  trn->add_option("--config", ta.config, "TOML run config");
  trn->add_option("--data", ta.data, "Dataset directory (overrides [data])");
  trn->add_option("--out", ta.out, "Run directory")->required();
  trn->add_flag("--resume", ta.resume, "Continue the run stored in --out");
  trn->add_option("--model.variant", ta.variant, "unet, wunet, d6unet, d9unet, fpa or rfna");
  trn->add_option("--model.base_channels", ta.base_channels, "Stem width");
  trn->add_option("--model.dilation", ta.dilation, "Attention-branch dilation (fpa)");
  trn->add_option("--model.ratio", ta.ratio, "Downsampling ratio (rfna)");
  trn->add_option("--train.epochs", ta.epochs, "Epochs");
  trn->add_option("--train.batch", ta.batch, "Batch size");
  trn->add_option("--train.lr", ta.lr, "Learning rate");

  EvalArgs ea;
  auto* evl = app.add_subcommand("eval", "Evaluate a checkpoint and export difference maps");
  evl->add_option("--checkpoint", ea.checkpoint, "Checkpoint file (model.toml must sit next to it)")->required();
  evl->add_option("--data", ea.data, "Dataset directory")->required();
  evl->add_option("--out", ea.out, "Output directory (must be empty)")->required();
  evl->add_option("--split", ea.split, "Split to evaluate")->check(CLI::IsMember({"train", "val", "test", "all"}));
  evl->add_flag("--attention", ea.attention, "Also export per-stage attention maps (fpa/rfna)");

  ErfArgs ra;
  auto* erf = app.add_subcommand("erf", "Measure effective receptive fields of conv stacks");
  erf->add_option("--arch", ra.arch, "plain, dilated or residual")->check(CLI::IsMember({"plain", "dilated", "residual"}));
  erf->add_option("--depth", ra.depths, "Stack depth(s), comma separated")->delimiter(',');
  erf->add_option("--dilation", ra.dilation, "Dilation of every conv (dilated stacks)");
  erf->add_flag("--residual", ra.residual, "Use identity shortcuts");
  erf->add_option("--samples", ra.samples, "Random inputs per seed");
  erf->add_option("--seeds", ra.seeds, "Number of consecutive seeds starting at --seed");
  erf->add_option("--channels", ra.channels, "Channel width of the stack");
  erf->add_option("--tau", ra.tau, "Gradient-mass fraction defining the ERF radius");
  erf->add_option("--out", ra.out, "Output directory (must be empty)")->required();
  erf->add_option("--against-arch", ra.against_arch, "Reference stack to compare with")
      ->check(CLI::IsMember({"plain", "dilated", "residual"}));
  erf->add_option("--against-depth", ra.against_depth, "Reference depth (default: same as --depth)");
  erf->add_option("--against-dilation", ra.against_dilation, "Reference dilation");
  erf->add_flag("--against-residual", ra.against_residual, "Reference uses identity shortcuts");
  erf->add_option("--expect", ra.expect, "Ordering to assert; exit code 4 if it fails")
      ->check(CLI::IsMember({"larger", "not-larger", "ratio-decreasing"}));

  VerifyArgs va;
  auto* ver = app.add_subcommand("verify", "Check a run directory against its manifest");
  ver->add_option("dir", va.dir, "Directory containing manifest.json")->required();

  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    set_num_threads(g.threads);
    if (g.precision) parse_precision(*g.precision);
    if (synth->parsed()) return cmd_synth(g, sa, out);
    if (trn->parsed()) return cmd_train(g, ta, out);
    if (evl->parsed()) return cmd_eval(g, ea, out);
    if (erf->parsed()) return cmd_erf(g, ra, out);
    if (ver->parsed()) return cmd_verify(va, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ShapeError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kDivergence;
  } catch (const AssertionFailure& e) {
    err << "check failed: " << e.what() << '\n';
    return kAssertion;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}

}  // namespace erfseg::cli
