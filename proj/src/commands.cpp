#include "analysparse/commands.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "analysparse/batch.hpp"
#include "analysparse/denoiser.hpp"
#include "analysparse/errors.hpp"
#include "analysparse/linalg.hpp"
#include "analysparse/report.hpp"

namespace analysparse {

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::NoiseSweep: return "noise-sweep";
    case ExperimentKind::Ablation: return "ablation";
    case ExperimentKind::BaselineCompare: return "baseline-compare";
    case ExperimentKind::SingleTrain: return "single-train";
  }
  return "?";
}

ExperimentKind parse_experiment_kind(const std::string& text) {
  if (text == "noise-sweep") return ExperimentKind::NoiseSweep;
  if (text == "ablation") return ExperimentKind::Ablation;
  if (text == "baseline-compare") return ExperimentKind::BaselineCompare;
  if (text == "single-train") return ExperimentKind::SingleTrain;
  throw ConfigError("unknown experiment kind '" + text +
                    "' (expected noise-sweep, ablation, baseline-compare or single-train)");
}

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "data.p", "data.L", "data.val_L", "data.n_jumps", "data.amp_mode", "data.sigma", "data.seed",
      "data.train_path", "data.val_path",
      "train.m", "train.eta2", "train.eta2_grid", "train.max_itr2", "train.batch_sz",
      "train.projection", "train.init_std", "train.seed", "train.validation_every",
      "train.max_itr1", "train.eval_max_itr1", "train.tol", "train.eta1_safety",
      "train.references",
      "baseline.epsilon", "baseline.inner_tol", "baseline.inner_max_iter", "baseline.eta2",
      "baseline.eta2_grid", "baseline.max_itr2", "baseline.batch_sz",
      "experiment.kind", "experiment.sigmas", "output_dir"};
  return keys;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out;
}

std::size_t get_count(const KeyValues& kv, const std::string& key, std::size_t fallback) {
  return static_cast<std::size_t>(kv.get_u64(key, fallback));
}

KeyValues load_with_overrides(const CommandOptions& opts) {
  KeyValues kv = KeyValues::load(opts.config);
  if (opts.seed) {
    kv.set("data.seed", std::to_string(*opts.seed));
    kv.set("train.seed", std::to_string(*opts.seed));
  }
  if (opts.out) kv.set("output_dir", opts.out->string());
  return kv;
}

struct Datasets {
  Dataset train;
  Dataset val;
};

Datasets obtain_datasets(const ExperimentConfig& cfg) {
  Datasets d;
  if (cfg.train_path) {
    d.train = load_dataset(*cfg.train_path);
  } else {
    d.train = gen_dataset(cfg.data, 0);
  }
  if (cfg.val_path) {
    d.val = load_dataset(*cfg.val_path);
  } else {
    DataConfig v = cfg.data;
    v.L = cfg.val_L;
    d.val = gen_dataset(v, 1);
  }
  if (d.train.config.p != d.val.config.p) throw ConfigError("training and validation signal lengths differ");
  return d;
}

// Maps library exceptions onto exit codes, reporting on `err`.
template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return exit_code::kConfigError;
  } catch (const FormatError& e) {
    err << "input error: " << e.what() << "\n";
    return exit_code::kConfigError;
  } catch (const DimensionError& e) {
    err << "input error: " << e.what() << "\n";
    return exit_code::kConfigError;
  } catch (const DivergenceError& e) {
    err << "diverged at iteration " << e.iteration() << ": " << e.what() << "\n";
    return exit_code::kDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::kValidationFailure;
  }
}

struct Outcome {
  std::string condition;
  bool ok = false;
  std::string error;
  TrainReport report;
  MatchReport match;
};

std::pair<Tensor, TrainReport> run_smoothed(const Datasets& d, const ExperimentConfig& cfg,
                                            std::vector<Eta2Trial>& trials) {
  TrainConfig shared = cfg.train;
  const std::vector<double> grid =
      cfg.baseline_grid.empty() ? std::vector<double>{cfg.baseline.eta2} : cfg.baseline_grid;
  std::optional<std::pair<Tensor, TrainReport>> best;
  if (grid.size() > 1) {
    if (!shared.references) shared.references = reference_losses(d.val, shared.m, shared.eval_cfg, shared.seed);
    shared.abort_worse_than_zero = true;
  }
  for (double eta2 : grid) {
    SmoothedConfig b = cfg.baseline;
    b.eta2 = eta2;
    Eta2Trial trial;
    trial.eta2 = eta2;
    try {
      auto run = train_smoothed(d.train, d.val, b, shared);
      trial.final_val_loss = run.second.final_val_loss();
      if (!best || trial.final_val_loss < best->second.final_val_loss()) best = std::move(run);
    } catch (const DivergenceError& e) {
      if (grid.size() == 1) throw;
      trial.diverged = true;
      trial.error = e.what();
      trial.final_val_loss = std::numeric_limits<double>::infinity();
    }
    trials.push_back(trial);
  }
  if (!best) throw DivergenceError("every baseline eta2 candidate diverged", 0);
  return std::move(*best);
}

std::pair<Tensor, TrainReport> run_learner(const Datasets& d, const ExperimentConfig& cfg,
                                           std::vector<Eta2Trial>& trials) {
  if (cfg.eta2_grid.empty()) return train(d.train, d.val, cfg.train);
  TunedRun tuned = tune_eta2(d.train, d.val, cfg.train, cfg.eta2_grid);
  trials = tuned.trials;
  return {std::move(tuned.D_hat), std::move(tuned.report)};
}

Outcome run_condition(const std::string& name, const std::filesystem::path& dir, const Datasets& d,
                      const ExperimentConfig& cfg, bool smoothed) {
  Outcome out;
  out.condition = name;
  try {
    std::vector<Eta2Trial> trials;
    auto run = smoothed ? run_smoothed(d, cfg, trials) : run_learner(d, cfg, trials);
    out.report = std::move(run.second);
    out.match = emit_run(dir, out.report, cfg, trials);
    out.ok = true;
  } catch (const DivergenceError& e) {
    out.error = "diverged at iteration " + std::to_string(e.iteration()) + ": " + e.what();
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c == '\n' ? ' ' : c;
  }
  return q + "\"";
}

void write_summary(const std::filesystem::path& path, const std::vector<Outcome>& outcomes) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "condition,status,method,projection,eta2,mean_abs_cosine,final_train_loss,final_val_loss,"
         "ref_zero_loss,ref_tv_loss,error\n";
  for (const auto& o : outcomes) {
    out << csv_cell(o.condition) << "," << (o.ok ? "ok" : "failed") << ",";
    if (o.ok) {
      const auto& r = o.report;
      out << r.method << "," << to_string(r.projection) << "," << format_double(r.eta2) << ","
          << format_double(o.match.mean_abs_cosine) << ","
          << (r.train_loss.empty() ? std::string("nan") : format_double(r.train_loss.back())) << ","
          << format_double(r.final_val_loss()) << "," << format_double(r.references.zero) << ","
          << (r.references.has_tv ? format_double(r.references.tv) : std::string()) << ",";
    } else {
      out << ",,,,,,,,";
    }
    out << csv_cell(o.error) << "\n";
  }
}

void write_overlay(const std::filesystem::path& path, const std::vector<Outcome>& outcomes) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "iteration";
  std::size_t rows = 0;
  for (const auto& o : outcomes) {
    out << "," << o.condition;
    rows = std::max(rows, o.report.train_loss.size());
  }
  out << "\n";
  for (std::size_t t = 0; t < rows; ++t) {
    out << t;
    for (const auto& o : outcomes) {
      out << ",";
      if (t < o.report.train_loss.size()) out << format_double(o.report.train_loss[t]);
    }
    out << "\n";
  }
}

}  // namespace

KeyValues ExperimentConfig::to_key_values() const {
  KeyValues kv;
  kv.set("data.p", std::to_string(data.p));
  kv.set("data.L", std::to_string(data.L));
  kv.set("data.val_L", std::to_string(val_L));
  kv.set("data.n_jumps", std::to_string(data.n_jumps));
  kv.set("data.amp_mode", to_string(data.amp_mode));
  kv.set("data.sigma", format_double(data.sigma));
  kv.set("data.seed", std::to_string(data.seed));
  if (train_path) kv.set("data.train_path", train_path->string());
  if (val_path) kv.set("data.val_path", val_path->string());
  kv.set("train.m", std::to_string(train.m));
  kv.set("train.eta2", format_double(train.eta2));
  if (!eta2_grid.empty()) kv.set("train.eta2_grid", join_doubles(eta2_grid));
  kv.set("train.max_itr2", std::to_string(train.max_itr2));
  kv.set("train.batch_sz", std::to_string(train.batch_sz));
  kv.set("train.projection", to_string(train.projection));
  kv.set("train.init_std", format_double(train.init_std));
  kv.set("train.seed", std::to_string(train.seed));
  kv.set("train.validation_every", std::to_string(train.validation_every));
  kv.set("train.max_itr1", std::to_string(train.denoise_cfg.max_itr1));
  kv.set("train.eval_max_itr1", std::to_string(train.eval_cfg.max_itr1));
  kv.set("train.tol", format_double(train.denoise_cfg.tol));
  kv.set("train.eta1_safety", format_double(train.denoise_cfg.eta1_safety));
  kv.set("train.references", train.compute_references ? "true" : "false");
  kv.set("baseline.epsilon", format_double(baseline.epsilon));
  kv.set("baseline.inner_tol", format_double(baseline.inner_tol));
  kv.set("baseline.inner_max_iter", std::to_string(baseline.inner_max_iter));
  kv.set("baseline.eta2", format_double(baseline.eta2));
  if (!baseline_grid.empty()) kv.set("baseline.eta2_grid", join_doubles(baseline_grid));
  kv.set("baseline.max_itr2", std::to_string(baseline.max_itr2));
  kv.set("baseline.batch_sz", std::to_string(baseline.batch_sz));
  kv.set("experiment.kind", to_string(kind));
  kv.set("experiment.sigmas", join_doubles(sigmas));
  kv.set("output_dir", output_dir.string());
  return kv;
}

ExperimentConfig parse_experiment_config(const KeyValues& kv, const std::vector<std::string>& required) {
  for (const auto& key : required) kv.require(key);
  for (const auto& [key, value] : kv.entries()) {
    // result.* lines are outputs recorded in a manifest; a manifest is a valid config.
    if (key.rfind("result.", 0) == 0) continue;
    if (!known_keys().count(key)) throw ConfigError("unknown key '" + key + "'");
  }

  ExperimentConfig cfg;
  cfg.data.p = get_count(kv, "data.p", cfg.data.p);
  cfg.data.L = get_count(kv, "data.L", cfg.data.L);
  cfg.val_L = get_count(kv, "data.val_L", cfg.val_L);
  cfg.data.n_jumps = get_count(kv, "data.n_jumps", cfg.data.n_jumps);
  cfg.data.amp_mode = parse_amplitude_mode(kv.get_string("data.amp_mode", to_string(cfg.data.amp_mode)));
  cfg.data.sigma = kv.get_double("data.sigma", cfg.data.sigma);
  cfg.data.seed = kv.get_u64("data.seed", cfg.data.seed);
  if (kv.has("data.train_path")) cfg.train_path = kv.get_string("data.train_path", "");
  if (kv.has("data.val_path")) cfg.val_path = kv.get_string("data.val_path", "");

  TrainConfig& t = cfg.train;
  t.m = get_count(kv, "train.m", cfg.data.p);
  t.eta2 = kv.get_double("train.eta2", t.eta2);
  cfg.eta2_grid = kv.get_doubles("train.eta2_grid", {});
  t.max_itr2 = get_count(kv, "train.max_itr2", t.max_itr2);
  t.batch_sz = get_count(kv, "train.batch_sz", t.batch_sz);
  t.projection = parse_projection(kv.get_string("train.projection", to_string(t.projection)));
  t.init_std = kv.get_double("train.init_std", t.init_std);
  t.seed = kv.get_u64("train.seed", t.seed);
  t.validation_every = get_count(kv, "train.validation_every", t.validation_every);
  t.denoise_cfg.max_itr1 = get_count(kv, "train.max_itr1", t.denoise_cfg.max_itr1);
  t.eval_cfg.max_itr1 = get_count(kv, "train.eval_max_itr1", t.eval_cfg.max_itr1);
  t.denoise_cfg.tol = t.eval_cfg.tol = kv.get_double("train.tol", t.denoise_cfg.tol);
  t.denoise_cfg.eta1_safety = t.eval_cfg.eta1_safety =
      kv.get_double("train.eta1_safety", t.denoise_cfg.eta1_safety);
  t.compute_references = kv.get_bool("train.references", t.compute_references);

  SmoothedConfig& b = cfg.baseline;
  b.epsilon = kv.get_double("baseline.epsilon", b.epsilon);
  b.inner_tol = kv.get_double("baseline.inner_tol", b.inner_tol);
  b.inner_max_iter = get_count(kv, "baseline.inner_max_iter", b.inner_max_iter);
  b.eta2 = kv.get_double("baseline.eta2", t.eta2);
  cfg.baseline_grid = kv.get_doubles("baseline.eta2_grid", cfg.eta2_grid);
  b.max_itr2 = get_count(kv, "baseline.max_itr2", t.max_itr2);
  b.batch_sz = get_count(kv, "baseline.batch_sz", t.batch_sz);

  cfg.kind = parse_experiment_kind(kv.get_string("experiment.kind", to_string(cfg.kind)));
  cfg.sigmas = kv.get_doubles("experiment.sigmas", cfg.sigmas);
  cfg.output_dir = kv.get_string("output_dir", "");

  if (!cfg.train_path) cfg.data.validate();
  t.validate();
  t.denoise_cfg.validate();
  t.eval_cfg.validate();
  b.validate();
  for (double e : cfg.eta2_grid) {
    if (!(e >= 0.0)) throw ConfigError("train.eta2_grid entries must be non-negative");
  }
  for (double e : cfg.baseline_grid) {
    if (!(e >= 0.0)) throw ConfigError("baseline.eta2_grid entries must be non-negative");
  }
  for (double s : cfg.sigmas) {
    if (!(s >= 0.0)) throw ConfigError("experiment.sigmas entries must be non-negative");
  }
  return cfg;
}

MatchReport emit_run(const std::filesystem::path& dir, const TrainReport& report,
                     const ExperimentConfig& cfg, const std::vector<Eta2Trial>& trials) {
  KeyValues manifest = cfg.to_key_values();
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const std::string k = "result.trial." + std::to_string(i) + ".";
    manifest.set(k + "eta2", format_double(trials[i].eta2));
    manifest.set(k + "status", trials[i].diverged ? "abandoned" : "ok");
    manifest.set(k + "final_val_loss", format_double(trials[i].final_val_loss));
  }
  return write_train_report(dir, report, manifest);
}

int cmd_gen(const CommandOptions& opts, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    const KeyValues kv = load_with_overrides(opts);
    ExperimentConfig cfg = parse_experiment_config(kv, {"data.p", "data.L", "data.sigma"});
    if (cfg.output_dir.empty()) throw ConfigError("no output directory (set output_dir or pass --out)");
    std::filesystem::create_directories(cfg.output_dir);
    const Dataset train_set = gen_dataset(cfg.data, 0);
    save_dataset(train_set, cfg.output_dir / "train.adsl");
    DataConfig v = cfg.data;
    v.L = cfg.val_L;
    save_dataset(gen_dataset(v, 1), cfg.output_dir / "val.adsl");
    log << "wrote " << (cfg.output_dir / "train.adsl").string() << " (" << cfg.data.L
        << " pairs) and " << (cfg.output_dir / "val.adsl").string() << " (" << cfg.val_L
        << " pairs)\n";
    return exit_code::kOk;
  });
}

int cmd_train(const CommandOptions& opts, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    const KeyValues kv = load_with_overrides(opts);
    const ExperimentConfig cfg = parse_experiment_config(kv, {"data.p", "data.sigma"});
    if (cfg.output_dir.empty()) throw ConfigError("no output directory (set output_dir or pass --out)");
    const Datasets d = obtain_datasets(cfg);
    std::vector<Eta2Trial> trials;
    auto [D, report] = run_learner(d, cfg, trials);
    const MatchReport match = emit_run(cfg.output_dir, report, cfg, trials);
    log << "eta2=" << format_double(report.eta2) << " final_val_loss="
        << format_double(report.final_val_loss()) << " ref_zero=" << format_double(report.references.zero);
    if (report.references.has_tv) log << " ref_tv=" << format_double(report.references.tv);
    log << " mean_abs_cosine=" << format_double(match.mean_abs_cosine) << "\n";
    return exit_code::kOk;
  });
}

int cmd_baseline_train(const CommandOptions& opts, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    const KeyValues kv = load_with_overrides(opts);
    const ExperimentConfig cfg = parse_experiment_config(kv, {"data.p", "data.sigma"});
    if (cfg.output_dir.empty()) throw ConfigError("no output directory (set output_dir or pass --out)");
    const Datasets d = obtain_datasets(cfg);
    std::vector<Eta2Trial> trials;
    auto [D, report] = run_smoothed(d, cfg, trials);
    const MatchReport match = emit_run(cfg.output_dir, report, cfg, trials);
    log << "eta2=" << format_double(report.eta2) << " final_val_loss="
        << format_double(report.final_val_loss())
        << " mean_abs_cosine=" << format_double(match.mean_abs_cosine) << "\n";
    return exit_code::kOk;
  });
}

int cmd_experiment(const CommandOptions& opts, const std::optional<std::string>& kind,
                   std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    KeyValues kv = load_with_overrides(opts);
    if (kind) kv.set("experiment.kind", *kind);
    const ExperimentConfig cfg = parse_experiment_config(kv, {"data.p", "data.sigma"});
    if (cfg.output_dir.empty()) throw ConfigError("no output directory (set output_dir or pass --out)");
    std::filesystem::create_directories(cfg.output_dir);

    struct Condition {
      std::string name;
      ExperimentConfig cfg;
      bool smoothed = false;
      std::size_t data_index = 0;
    };
    std::vector<Condition> conds;
    std::vector<ExperimentConfig> data_cfgs;  // one per distinct dataset
    switch (cfg.kind) {
      case ExperimentKind::NoiseSweep:
        for (double s : cfg.sigmas) {
          ExperimentConfig c = cfg;
          c.data.sigma = s;
          if (c.train_path || c.val_path) throw ConfigError("noise-sweep generates its own datasets; drop data.*_path");
          data_cfgs.push_back(c);
          conds.push_back({"sigma_" + format_double(s), c, false, data_cfgs.size() - 1});
        }
        break;
      case ExperimentKind::Ablation: {
        data_cfgs.push_back(cfg);
        ExperimentConfig on = cfg;
        on.train.projection = Projection::CenterColumns;
        ExperimentConfig off = cfg;
        off.train.projection = Projection::None;
        conds.push_back({"projected", on, false, 0});
        conds.push_back({"unprojected", off, false, 0});
        break;
      }
      case ExperimentKind::BaselineCompare: {
        data_cfgs.push_back(cfg);
        ExperimentConfig ad = cfg;
        ad.train.projection = Projection::CenterColumns;
        conds.push_back({"ad_projected", ad, false, 0});
        conds.push_back({"smoothed_l1", cfg, true, 0});
        break;
      }
      case ExperimentKind::SingleTrain:
        data_cfgs.push_back(cfg);
        conds.push_back({"run", cfg, false, 0});
        break;
    }

    // Paired arms share one dataset; it is also written out so the pairing
    // is inspectable.
    std::vector<Datasets> data;
    for (const auto& c : data_cfgs) data.push_back(obtain_datasets(c));
    for (std::size_t i = 0; i < data_cfgs.size(); ++i) {
      const std::string stem = data_cfgs.size() == 1 ? std::string("data") : conds[i].name;
      const auto ddir = cfg.output_dir / ("dataset_" + stem);
      std::filesystem::create_directories(ddir);
      save_dataset(data[i].train, ddir / "train.adsl");
      save_dataset(data[i].val, ddir / "val.adsl");
    }

    std::vector<Outcome> outcomes(conds.size());
    const int n = static_cast<int>(conds.size());
    // Conditions are independent; results never depend on the worker count.
#pragma omp parallel for schedule(dynamic, 1) num_threads(std::min(n, worker_count())) if (opts.parallel)
    for (int i = 0; i < n; ++i) {
      const auto& c = conds[static_cast<std::size_t>(i)];
      outcomes[static_cast<std::size_t>(i)] =
          run_condition(c.name, cfg.output_dir / c.name, data[c.data_index], c.cfg, c.smoothed);
    }

    for (const auto& o : outcomes) {
      log << o.condition << ": ";
      if (o.ok) {
        log << "mean_abs_cosine=" << format_double(o.match.mean_abs_cosine)
            << " final_val_loss=" << format_double(o.report.final_val_loss()) << "\n";
      } else {
        log << "FAILED " << o.error << "\n";
      }
    }
    write_summary(cfg.output_dir / "summary.csv", outcomes);
    if (cfg.kind == ExperimentKind::BaselineCompare) write_overlay(cfg.output_dir / "loss_overlay.csv", outcomes);
    {
      std::ofstream m(cfg.output_dir / "manifest.txt", std::ios::trunc);
      m << "# experiment settings; each condition directory has its own manifest\n" << cfg.to_key_values().to_text();
    }
    const bool all_ok = std::all_of(outcomes.begin(), outcomes.end(), [](const Outcome& o) { return o.ok; });
    if (all_ok) return exit_code::kOk;
    const bool any_diverged = std::any_of(outcomes.begin(), outcomes.end(), [](const Outcome& o) {
      return !o.ok && o.error.rfind("diverged", 0) == 0;
    });
    return any_diverged ? exit_code::kDivergence : exit_code::kValidationFailure;
  });
}

int cmd_denoise(const DenoiseOptions& opts, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    const Tensor D = read_matrix_csv(opts.dict);
    Tensor y = read_matrix_csv(opts.signal);
    if (y.rows() == 1 && y.cols() > 1) y = transpose(y);
    if (!y.is_vector()) throw DimensionError("signal must be a single row or column");
    if (y.rows() != D.rows()) {
      throw DimensionError("signal length " + std::to_string(y.rows()) + " does not match dictionary rows " +
                           std::to_string(D.rows()));
    }
    DenoiseConfig cfg = evaluation_denoise_config();
    cfg.tol = opts.tol;
    cfg.max_itr1 = opts.max_itr1;
    cfg.validate();
    Rng rng(opts.seed, Stream::Eval);
    const DenoiseResult r = denoise(D, y, cfg, rng);

    std::filesystem::create_directories(opts.out);
    write_vector_csv(opts.out / "w_hat.csv", r.w_hat, "w_hat");
    const double gap = r.duality_gap();
    const double rel = r.primal_objective > 0.0 ? gap / r.primal_objective : gap;
    KeyValues diag;
    diag.set("iterations", std::to_string(r.iterations));
    diag.set("converged", r.converged ? "true" : "false");
    diag.set("primal_objective", format_double(r.primal_objective));
    diag.set("dual_objective", format_double(r.dual_objective));
    diag.set("duality_gap", format_double(gap));
    diag.set("relative_duality_gap", format_double(rel));
    diag.set("tol", format_double(cfg.tol));
    diag.set("max_itr1", std::to_string(cfg.max_itr1));
    diag.set("seed", std::to_string(opts.seed));
    {
      std::ofstream out(opts.out / "diagnostics.txt", std::ios::trunc);
      if (!out) throw Error("cannot write diagnostics");
      out << diag.to_text();
    }
    log << diag.to_text();
    return exit_code::kOk;
  });
}

GradCheckResult gradcheck_instance(std::size_t p, std::size_t m, std::size_t iterations,
                                   std::uint64_t seed, double h, double exclusion_band) {
  DataConfig dc;
  dc.p = p;
  dc.n_jumps = std::min<std::size_t>(2, p - 1);
  dc.amp_mode = AmplitudeMode::Uniform;
  dc.sigma = 1.0;
  Rng data_rng(seed, Stream::Data);
  const Tensor w = gen_signal(dc, data_rng);
  const Tensor y = add_noise(w, dc.sigma, data_rng);
  Rng init_rng(seed, Stream::Init);
  const Tensor D = gaussian(p, m, 0.0, 1.0, init_rng);
  Rng batch_rng(seed, Stream::Batch);
  const Tensor q0 = draw_start(m, batch_rng);

  DenoiseConfig cfg;
  cfg.max_itr1 = iterations;
  cfg.fixed_iterations = true;
  cfg.record = true;
  const double eta1 = step_size(D, cfg);  // held fixed: a step-size constant, not differentiated
  const RecordableFn f = [&](Tape& tape, Var Dv) {
    return tape.sqdist(denoise_recorded(tape, Dv, y, q0, eta1, cfg), w);
  };
  return grad_check(f, D, h, exclusion_band);
}

int cmd_gradcheck(const GradcheckOptions& opts, std::ostream& log, std::ostream& err) {
  return guarded(err, [&] {
    if (opts.p < 2 || opts.m < 1 || opts.iterations < 1 || opts.seeds < 1) {
      throw ConfigError("gradcheck needs p >= 2, m >= 1, iterations >= 1, seeds >= 1");
    }
    if (!(opts.h > 0.0) || !(opts.exclusion_band >= 0.0) || !(opts.tolerance > 0.0)) {
      throw ConfigError("gradcheck needs h > 0, band >= 0, tolerance > 0");
    }
    log << "seed,max_rel_error,checked,skipped,status\n";
    bool ok = true;
    for (std::size_t s = 0; s < opts.seeds; ++s) {
      const GradCheckResult r =
          gradcheck_instance(opts.p, opts.m, opts.iterations, s, opts.h, opts.exclusion_band);
      const bool pass = r.checked > 0 && r.max_rel_error <= opts.tolerance;
      ok = ok && pass;
      std::ostringstream e;
      e << std::scientific << std::setprecision(3) << r.max_rel_error;
      log << s << "," << e.str() << "," << r.checked << "," << r.skipped << ","
          << (pass ? "pass" : "FAIL") << "\n";
    }
    return ok ? exit_code::kOk : exit_code::kValidationFailure;
  });
}

}  // namespace analysparse
