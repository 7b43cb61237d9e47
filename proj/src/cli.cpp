// SPDX-License-Identifier: Apache-2.0
#include "gaitloop/cli.hpp"

#include "gaitloop/control.hpp"
#include "gaitloop/csv.hpp"
#include "gaitloop/errors.hpp"
#include "gaitloop/ingest.hpp"
#include "gaitloop/metrics.hpp"
#include "gaitloop/neural.hpp"
#include "gaitloop/syngait.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <map>
#include <memory>
#include <optional>

namespace gaitloop::cli {
namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

struct UsageError : Error {
  using Error::Error;
};

void apply_thread_cap() {
  const char* env = std::getenv("GAITLOOP_THREADS");
  if (!env || !*env) return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw UsageError(std::string("GAITLOOP_THREADS must be a positive integer, got '") + env + "'");
  omp_set_num_threads(static_cast<int>(n));
}

class RunManifest {
 public:
  RunManifest(std::string command, const CLI::App& sub) : command_(std::move(command)) {
    for (const CLI::Option* opt : sub.get_options()) {
      if (opt->get_name() == "--help") continue;
      const auto results = opt->results();
      std::string value;
      if (opt->get_type_size() == 0)
        value = opt->count() > 0 ? "true" : "false";
      else if (!results.empty())
        value = results.back();
      else
        value = opt->get_default_str();
      flags_[opt->get_name()] = value;
    }
  }

  void seed(const std::string& name, std::uint64_t v) { seeds_[name] = v; }
  void input(const fs::path& p) { inputs_.push_back(p.generic_string()); }
  void output(const fs::path& p) { outputs_.push_back(p.generic_string()); }

  void write(const fs::path& dir) const {
    ojson j;
    j["command"] = command_;
    j["tool_version"] = kToolVersion;
    j["flags"] = flags_;
    j["seeds"] = seeds_;
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    j["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    csv::write_atomic(dir / "run_manifest.json", j.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::map<std::string, std::string> flags_;
  std::map<std::string, std::uint64_t> seeds_;
  std::vector<std::string> inputs_, outputs_;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void write_output(RunManifest& rm, const fs::path& path, std::string_view contents) {
  csv::write_atomic(path, contents);
  rm.output(path);
}

struct Corpus {
  fs::path manifest_path;
  fs::path dir;
  ingest::CorpusManifest manifest;

  static Corpus open(const std::string& arg) {
    if (arg.empty()) throw UsageError("--corpus is required");
    fs::path p(arg);
    if (fs::is_directory(p)) p /= "manifest.json";
    if (!fs::exists(p)) throw UsageError("corpus manifest not found: " + p.string());
    Corpus c;
    c.manifest_path = p;
    c.dir = p.parent_path();
    c.manifest = ingest::load_manifest(p);
    return c;
  }

  GaitTrial load(const ingest::ManifestEntry& e) const { return ingest::load_corpus_trial(manifest, dir, e); }
};

/// Train/test trials of one subject, loaded.
struct SubjectTrials {
  std::string subject;
  std::vector<GaitTrial> train;
  std::vector<GaitTrial> test;
  std::vector<std::string> test_ids;

  std::vector<const GaitTrial*> train_ptrs() const {
    std::vector<const GaitTrial*> v;
    for (const auto& t : train) v.push_back(&t);
    return v;
  }
  std::vector<const GaitTrial*> test_ptrs() const {
    std::vector<const GaitTrial*> v;
    for (const auto& t : test) v.push_back(&t);
    return v;
  }
};

SubjectTrials load_subject(const Corpus& c, const std::string& subject) {
  const auto entries = c.manifest.trials_of(subject);
  if (entries.empty()) throw UsageError("subject '" + subject + "' not in corpus");
  const auto split = ingest::split_corpus(entries, c.manifest.seed);
  SubjectTrials st;
  st.subject = subject;
  for (const auto& e : entries) {
    const bool is_test = std::find(split.test.begin(), split.test.end(), e.id) != split.test.end();
    (is_test ? st.test : st.train).push_back(c.load(e));
    if (is_test) st.test_ids.push_back(e.id);
  }
  return st;
}

std::vector<std::string> pick_subjects(const Corpus& c, const std::vector<std::string>& wanted) {
  if (wanted.empty()) return c.manifest.subjects();
  for (const auto& s : wanted)
    if (c.manifest.trials_of(s).empty()) throw UsageError("subject '" + s + "' not in corpus");
  return wanted;
}

fs::path ensure_dir(const std::string& out) {
  if (out.empty()) throw UsageError("--out is required");
  fs::path p(out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (!fs::is_directory(p)) throw IoError("cannot create output directory " + p.string());
  return p;
}

fs::path model_path(const fs::path& dir, const std::string& subject) { return dir / (subject + ".model"); }

struct DelayFlags {
  std::string file;
  std::optional<double> tdm, tdc, tdr;
  int loop_hz = 20;

  void add(CLI::App* app) {
    app->add_option("--delays", file, "key = value delay file (t_dm_s, t_dc_s, t_dr_s)");
    app->add_option("--tdm", tdm, "measurement delay in seconds [0.05]");
    app->add_option("--tdc", tdc, "compute delay in seconds [0.024]");
    app->add_option("--tdr", tdr, "actuator response delay in seconds [0.05]");
    app->add_option("--loop-hz", loop_hz, "controller rate in Hz")->capture_default_str();
  }

  control::LoopConfig config() const {
    control::LoopConfig lc;
    if (!file.empty()) lc.delays = control::load_delay_config(file);
    if (tdm) lc.delays.t_dm_s = *tdm;
    if (tdc) lc.delays.t_dc_s = *tdc;
    if (tdr) lc.delays.t_dr_s = *tdr;
    lc.loop_hz = loop_hz;
    return lc;
  }
};

// ---- generate ----

struct GenerateArgs {
  syngait::CorpusOptions opts;
  std::string out;
};

int cmd_generate(const GenerateArgs& a, const CLI::App& sub, std::ostream& out) {
  RunManifest rm("generate", sub);
  const fs::path dir = ensure_dir(a.out);
  rm.seed("corpus", a.opts.seed);
  const auto manifest = syngait::generate_corpus(a.opts, dir);
  rm.output(dir / "manifest.json");
  for (const auto& t : manifest.trials) rm.output(dir / t.path);
  rm.write(dir);
  out << "wrote " << manifest.trials.size() << " trials to " << dir.string() << "\n";
  return kOk;
}

// ---- train ----

struct TrainArgs {
  std::string corpus;
  std::vector<std::string> subjects;
  std::size_t n = 20, s = 20;
  neural::TrainConfig config;
  std::string out;
};

int cmd_train(const TrainArgs& a, const CLI::App& sub, std::ostream& out) {
  RunManifest rm("train", sub);
  const Corpus c = Corpus::open(a.corpus);
  const fs::path dir = ensure_dir(a.out);
  rm.input(c.manifest_path);
  for (const auto& subject : pick_subjects(c, a.subjects)) {
    const SubjectTrials st = load_subject(c, subject);
    neural::TrainConfig tc = a.config;
    tc.rng_seed = metrics::derive_seed(a.config.rng_seed, a.n, a.s, subject);
    rm.seed(subject, tc.rng_seed);
    const auto result = neural::train(st.train_ptrs(), a.n, a.s, tc, subject);
    write_output(rm, model_path(dir, subject), neural::serialize_model(result.model));
    write_output(rm, dir / (subject + "_train_log.csv"), neural::training_log_csv(result.log));
    const auto& best = result.log[static_cast<std::size_t>(result.best_epoch - 1)];
    out << subject << ": best epoch " << result.best_epoch << " of " << result.log.size() << ", val_mse "
        << best.val_mse << "\n";
  }
  rm.write(dir);
  return kOk;
}

// ---- eval ----

struct EvalArgs {
  std::string corpus;
  std::string models;
  std::vector<std::string> subjects;
  DelayFlags delays;
  std::string out;
};

int cmd_eval(const EvalArgs& a, const CLI::App& sub, std::ostream& out) {
  RunManifest rm("eval", sub);
  const Corpus c = Corpus::open(a.corpus);
  if (a.models.empty()) throw UsageError("--models is required");
  const fs::path dir = ensure_dir(a.out);
  const control::LoopConfig lc = a.delays.config();
  rm.input(c.manifest_path);
  std::vector<metrics::ErrorReport> parts;
  std::vector<phase::TimingComparison> timing;
  std::size_t late = 0;
  for (const auto& subject : pick_subjects(c, a.subjects)) {
    const fs::path mp = model_path(a.models, subject);
    if (!fs::exists(mp)) throw UsageError("no model for subject " + subject + " at " + mp.string());
    rm.input(mp);
    const neural::Model model = neural::load_model(mp);
    const SubjectTrials st = load_subject(c, subject);
    parts.push_back(metrics::prediction_error(model, st.test_ptrs()));
    for (const auto& t : st.test) {
      const auto trace = control::run_closed_loop(t, model, lc);
      timing.push_back(trace.comparison);
      late += trace.late_count;
    }
  }
  const auto report = metrics::merge_reports(parts);
  write_output(rm, dir / "errors.csv", metrics::error_csv(report, c.manifest.layout));
  write_output(rm, dir / "errors.json", metrics::error_json(report));
  write_output(rm, dir / "subjects.gp", metrics::subject_gnuplot("errors.csv"));
  const auto tr = metrics::timing_report(timing);
  write_output(rm, dir / "timing.csv", metrics::timing_csv(tr));
  write_output(rm, dir / "timing_pairs.csv", metrics::timing_pairs_csv(tr));
  write_output(rm, dir / "timing.json", metrics::timing_json(tr));
  write_output(rm, dir / "timing.gp", metrics::timing_gnuplot("timing_pairs.csv"));
  rm.write(dir);
  out << "MAE " << report.mae_N << " N (" << report.mae_pct_bw << " % BW); timing walking mean "
      << tr.walking.mean_abs_s << " s, starting mean " << tr.starting.mean_abs_s << " s, late " << late << "\n";
  return kOk;
}

// ---- simulate ----

struct SimulateArgs {
  std::string model;
  std::string trial;
  std::string corpus;
  bool oracle = false;
  bool realtime = false;
  std::size_t horizon = 20;
  std::size_t window = 20;
  double speed = 1.0;
  DelayFlags delays;
  std::string out;
};

int cmd_simulate(const SimulateArgs& a, const CLI::App& sub, std::ostream& out) {
  RunManifest rm("simulate", sub);
  if (a.trial.empty()) throw UsageError("--trial is required");
  if (a.oracle == !a.model.empty()) throw UsageError("give exactly one of --model or --oracle");
  GaitTrial trial;
  if (!a.corpus.empty()) {
    const Corpus c = Corpus::open(a.corpus);
    rm.input(c.manifest_path);
    trial = c.load(c.manifest.find(a.trial));
  } else {
    if (!fs::exists(a.trial)) throw UsageError("trial file not found: " + a.trial);
    trial = ingest::load_trial(a.trial);
  }
  rm.input(a.trial);
  const fs::path dir = ensure_dir(a.out);
  const control::LoopConfig lc = a.delays.config();

  std::optional<neural::Model> model;
  std::unique_ptr<control::Predictor> predictor;
  if (a.oracle) {
    predictor = std::make_unique<control::OraclePredictor>(trial, a.window, a.horizon);
  } else {
    rm.input(a.model);
    model = neural::load_model(a.model);
    model->check_compatible(static_cast<std::size_t>(model->meta.n), static_cast<std::size_t>(model->meta.s),
                            trial.layout, trial.clock.rate_hz());
    predictor = std::make_unique<control::ModelPredictor>(*model);
  }

  control::LoopTrace trace;
  ojson extra;
  if (a.realtime) {
    control::RealtimeOptions ro;
    ro.speed = a.speed;
    auto rt = control::run_realtime(trial, *predictor, lc, ro);
    trace = std::move(rt.trace);
    extra["wall_time_s"] = rt.wall_time_s;
    extra["trial_time_s"] = rt.trial_time_s;
    extra["frames_dropped"] = rt.frames_dropped;
    double mean = 0.0;
    for (double v : rt.compute_latency_s) mean += v;
    extra["mean_compute_latency_s"] = rt.compute_latency_s.empty() ? 0.0 : mean / static_cast<double>(rt.compute_latency_s.size());
  } else {
    trace = control::run_closed_loop(trial, *predictor, lc);
  }
  trace.trial_id = a.trial;
  write_output(rm, dir / "trace.csv", control::trace_csv(trace, trial.layout));
  write_output(rm, dir / "events.csv", control::events_csv(trace));
  std::string summary = control::summary_json(trace);
  if (a.realtime) {
    auto j = ojson::parse(summary);
    j["realtime"] = extra;
    summary = j.dump(2) + "\n";
  }
  write_output(rm, dir / "summary.json", summary);
  rm.write(dir);
  out << "walking mean |dt| " << trace.summary.walking_mean_abs_s << " s (" << trace.summary.walking_count
      << "), starting mean |dt| " << trace.summary.starting_mean_abs_s << " s (" << trace.summary.starting_count
      << "), late " << trace.late_count << "\n";
  return kOk;
}

// ---- sweep ----

struct SweepArgs {
  std::string corpus;
  std::vector<std::string> subjects;
  std::string grid = "cross";
  int epochs = 30;
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_sweep(const SweepArgs& a, const CLI::App& sub, std::ostream& out) {
  RunManifest rm("sweep", sub);
  const Corpus c = Corpus::open(a.corpus);
  const fs::path dir = ensure_dir(a.out);
  rm.input(c.manifest_path);
  rm.seed("master", a.seed);
  std::vector<SubjectTrials> loaded;
  for (const auto& subject : pick_subjects(c, a.subjects)) loaded.push_back(load_subject(c, subject));
  std::vector<metrics::SubjectData> data;
  for (const auto& st : loaded) data.push_back({st.subject, st.train_ptrs(), st.test_ptrs()});
  metrics::SweepConfig cfg;
  cfg.points = a.grid == "full" ? metrics::full_sweep_grid() : metrics::default_sweep_points();
  cfg.train.epochs = a.epochs;
  cfg.seed = a.seed;
  const auto result = metrics::run_sweep(data, cfg, [&](const metrics::SweepCell& cell) {
    out << "n=" << cell.n << " s=" << cell.s << ": "
        << (cell.present ? std::to_string(cell.mae_pct_bw) + " % BW" : std::string("absent")) << "\n";
  });
  write_output(rm, dir / "sweep.csv", metrics::sweep_csv(result));
  write_output(rm, dir / "sweep.gp", metrics::sweep_gnuplot("sweep.csv"));
  rm.write(dir);
  return kOk;
}

// ---- latency ----

struct LatencyArgs {
  std::vector<std::size_t> ns{1, 10, 20, 30, 40};
  std::size_t calls = 1000;
  std::string out;
};

int cmd_latency(const LatencyArgs& a, const CLI::App& sub, std::ostream& out) {
  RunManifest rm("latency", sub);
  const fs::path dir = ensure_dir(a.out);
  const auto rows = control::measure_inference_latency(neural::ModelShape{}, a.ns, a.calls);
  write_output(rm, dir / "latency.csv", control::latency_csv(rows));
  rm.write(dir);
  for (const auto& r : rows) out << "n=" << r.n << ": " << r.mean_s * 1e3 << " ms (cv " << r.cv << ")\n";
  return kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Plantar force prediction and delay-compensated assistance timing", "gaitloop"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic corpus");
  g->add_option("--subjects", gen.opts.subjects)->capture_default_str()->check(CLI::PositiveNumber);
  g->add_option("--trials", gen.opts.trials_per_subject, "trials per subject")->capture_default_str()->check(CLI::PositiveNumber);
  g->add_option("--seed", gen.opts.seed)->capture_default_str();
  g->add_option("--noise-imu", gen.opts.noise_std_imu, "IMU noise std relative to channel RMS")->capture_default_str()->check(CLI::NonNegativeNumber);
  g->add_option("--noise-plantar", gen.opts.noise_std_plantar, "plantar noise std in N")->capture_default_str()->check(CLI::NonNegativeNumber);
  g->add_option("--out", gen.out, "output directory")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train one model per subject");
  t->add_option("--corpus", tr.corpus, "corpus directory or manifest.json")->required();
  t->add_option("--subject", tr.subjects, "subject id (repeatable; default all)");
  t->add_option("--n", tr.n, "input window in frames")->capture_default_str()->check(CLI::PositiveNumber);
  t->add_option("--s", tr.s, "prediction horizon in frames")->capture_default_str()->check(CLI::PositiveNumber);
  t->add_option("--epochs", tr.config.epochs)->capture_default_str()->check(CLI::PositiveNumber);
  t->add_option("--seed", tr.config.rng_seed)->capture_default_str();
  t->add_option("--batch", tr.config.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
  t->add_option("--lr", tr.config.learning_rate)->capture_default_str()->check(CLI::PositiveNumber);
  t->add_option("--stride", tr.config.stride, "training pair stride in frames")->capture_default_str()->check(CLI::PositiveNumber);
  t->add_option("--patience", tr.config.patience)->capture_default_str()->check(CLI::PositiveNumber);
  t->add_option("--out", tr.out, "output directory")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Prediction error and closed-loop timing on test trials");
  e->add_option("--corpus", ev.corpus, "corpus directory or manifest.json")->required();
  e->add_option("--models", ev.models, "directory of <subject>.model files")->required();
  e->add_option("--subject", ev.subjects, "subject id (repeatable; default all)");
  ev.delays.add(e);
  e->add_option("--out", ev.out, "output directory")->required();

  SimulateArgs sm;
  auto* s = app.add_subcommand("simulate", "Run the closed loop on one trial");
  s->add_option("--trial", sm.trial, "trial CSV, or trial id with --corpus")->required();
  s->add_option("--corpus", sm.corpus, "corpus directory or manifest.json");
  s->add_option("--model", sm.model, "model file");
  s->add_flag("--oracle", sm.oracle, "predict with the recorded future force");
  s->add_flag("--realtime", sm.realtime, "replay at the sample rate on a producer thread");
  s->add_option("--speed", sm.speed, "real-time replay speed factor")->capture_default_str()->check(CLI::PositiveNumber);
  s->add_option("--horizon", sm.horizon, "oracle horizon s in frames")->capture_default_str()->check(CLI::PositiveNumber);
  s->add_option("--window", sm.window, "oracle window n in frames")->capture_default_str()->check(CLI::PositiveNumber);
  sm.delays.add(s);
  s->add_option("--out", sm.out, "output directory")->required();

  SweepArgs sw;
  auto* w = app.add_subcommand("sweep", "Error over window length and horizon");
  w->add_option("--corpus", sw.corpus, "corpus directory or manifest.json")->required();
  w->add_option("--subject", sw.subjects, "subject id (repeatable; default all)");
  w->add_option("--grid", sw.grid, "cross (two axes through n=20, s=20) or full")
      ->capture_default_str()
      ->check(CLI::IsMember({"cross", "full"}));
  w->add_option("--epochs", sw.epochs, "training epochs per grid point")->capture_default_str()->check(CLI::PositiveNumber);
  w->add_option("--seed", sw.seed)->capture_default_str();
  w->add_option("--out", sw.out, "output directory")->required();

  LatencyArgs la;
  auto* l = app.add_subcommand("latency", "Time forward() for several window lengths");
  l->add_option("--ns", la.ns, "window lengths")->capture_default_str()->delimiter(',');
  l->add_option("--calls", la.calls, "calls per window length")->capture_default_str()->check(CLI::Range(10, 100000000));
  l->add_option("--out", la.out, "output directory")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& pe) {
    const int rc = pe.get_exit_code();
    if (rc == 0) {
      out << (pe.get_name() == "CallForVersion" ? std::string(kToolVersion) + "\n" : app.help());
      return kOk;
    }
    err << "gaitloop: " << pe.what() << "\n";
    return kUsage;
  }

  try {
    apply_thread_cap();
    if (g->parsed()) return cmd_generate(gen, *g, out);
    if (t->parsed()) return cmd_train(tr, *t, out);
    if (e->parsed()) return cmd_eval(ev, *e, out);
    if (s->parsed()) return cmd_simulate(sm, *s, out);
    if (w->parsed()) return cmd_sweep(sw, *w, out);
    if (l->parsed()) return cmd_latency(la, *l, out);
  } catch (const UsageError& ex) {
    err << "gaitloop: " << ex.what() << "\n";
    return kUsage;
  } catch (const ConfigError& ex) {
    err << "gaitloop: configuration error: " << ex.what() << "\n";
    return kUsage;
  } catch (const NumericError& ex) {
    err << "gaitloop: numeric failure: " << ex.what() << "\n";
    return kNumericError;
  } catch (const Error& ex) {
    err << "gaitloop: " << ex.what() << "\n";
    return kDataError;
  } catch (const std::exception& ex) {
    err << "gaitloop: " << ex.what() << "\n";
    return kDataError;
  }
  return kUsage;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace gaitloop::cli
