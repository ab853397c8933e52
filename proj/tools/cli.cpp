// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <optional>
#include <sstream>

#include "eegfmri/error.hpp"
#include "eegfmri/experiment.hpp"
#include "eegfmri/io.hpp"
#include "eegfmri/serialization.hpp"
#include "eegfmri/synthetic.hpp"

namespace eegfmri::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Flags that mirror ExperimentConfig fields. Each one set on the command
/// line overrides the config file.
struct ConfigFlags {
  std::string config;
  std::optional<std::string> dataset, preset, variant, optimizer, adversarial_mode, out;
  std::optional<std::size_t> epochs, batch_size, k, n_train, n_val, n_test, downsample_factor, hpo_budget,
      hpo_max_depth, hpo_max_width, hpo_trial_epochs, topk_pretrain_epochs, individuals;
  std::optional<double> lr, theta, margin, l1_eeg, l1_fmri, l1_dec, clip_norm, init_gain, adversarial_weight,
      wgan_clip, window_s, step_s, shift_s, stft_window_s;
  std::optional<bool> temporal, hpo;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;

  void attach(CLI::App& app, bool seed_required) {
    app.add_option("--config", config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    auto* s = app.add_option("--seed", seed, "rng_seed");
    if (seed_required) s->required();
    app.add_option("--out", out, "Output directory");
    app.add_option("--dataset", dataset, "Dataset directory")->check(CLI::ExistingDirectory);
    app.add_option("--preset", preset, "Generate this synthetic preset in memory instead of loading a dataset");
    app.add_option("--individuals", individuals, "Synthetic individuals (with --preset)");
    app.add_option("--variant", variant, "AE, LCOMB, GAN, WGAN or TOPK");
    app.add_option("--epochs", epochs);
    app.add_option("--lr", lr, "Learning rate");
    app.add_option("--batch-size", batch_size);
    app.add_option("--theta", theta);
    app.add_option("--margin", margin);
    app.add_option("--adversarial-mode", adversarial_mode, "entropy or earth_mover");
    app.add_option("--l1-eeg", l1_eeg);
    app.add_option("--l1-fmri", l1_fmri);
    app.add_option("--l1-dec", l1_dec);
    app.add_option("--k", k);
    app.add_option("--temporal", temporal, "Temporal encoding (true/false)");
    app.add_option("--optimizer", optimizer, "sgd or adam");
    app.add_option("--clip-norm", clip_norm, "Global gradient-norm cap (0 disables)");
    app.add_option("--wgan-clip", wgan_clip);
    app.add_option("--init-gain", init_gain);
    app.add_option("--adversarial-weight", adversarial_weight);
    app.add_option("--topk-pretrain-epochs", topk_pretrain_epochs);
    app.add_option("--n-train", n_train);
    app.add_option("--n-val", n_val);
    app.add_option("--n-test", n_test);
    app.add_option("--window-s", window_s);
    app.add_option("--step-s", step_s);
    app.add_option("--shift-s", shift_s);
    app.add_option("--stft-window-s", stft_window_s);
    app.add_option("--downsample-factor", downsample_factor);
    app.add_option("--hpo", hpo, "Enable hyperparameter search (true/false)");
    app.add_option("--hpo-budget", hpo_budget, "BO iterations per depth");
    app.add_option("--hpo-max-depth", hpo_max_depth);
    app.add_option("--hpo-max-width", hpo_max_width);
    app.add_option("--hpo-trial-epochs", hpo_trial_epochs);
    app.add_option("--set", sets, "Dotted override, e.g. train.loss.theta=0.3 (repeatable)");
  }

  ExperimentConfig resolve() const {
    json j = config.empty() ? to_json_value(ExperimentConfig{}) : json::parse(read_file(config));
    auto set = [&](const char* path, const auto& v) {
      if (v) apply_override(j, path, json(*v).dump());
    };
    if (dataset) j["dataset"] = {{"path", *dataset}};
    if (preset) j["dataset"] = {{"synthetic", {{"preset", *preset}}}};
    if (individuals) {
      if (!j["dataset"].contains("synthetic"))
        fail(ErrorKind::InvalidArgument, "--individuals applies to synthetic datasets only");
      j["dataset"]["synthetic"]["individuals"] = *individuals;
    }
    set("train.procedure", variant);
    set("train.epochs", epochs);
    set("train.learning_rate", lr);
    set("train.batch_size", batch_size);
    set("train.loss.theta", theta);
    set("train.loss.margin", margin);
    set("train.loss.adversarial_mode", adversarial_mode);
    set("train.l1_eeg", l1_eeg);
    set("train.l1_fmri", l1_fmri);
    set("train.l1_dec", l1_dec);
    set("train.k", k);
    set("train.temporal_encoding", temporal);
    set("train.optimizer", optimizer);
    set("train.clip_norm", clip_norm);
    set("train.wgan_clip", wgan_clip);
    set("train.init_gain", init_gain);
    set("train.adversarial_weight", adversarial_weight);
    set("train.topk_pretrain_epochs", topk_pretrain_epochs);
    set("individuals.train", n_train);
    set("individuals.val", n_val);
    set("individuals.test", n_test);
    set("preprocess.window_s", window_s);
    set("preprocess.step_s", step_s);
    set("preprocess.shift_s", shift_s);
    set("preprocess.stft_window_s", stft_window_s);
    set("preprocess.downsample_factor", downsample_factor);
    set("hpo.enabled", hpo);
    set("hpo.budget", hpo_budget);
    set("hpo.max_depth", hpo_max_depth);
    set("hpo.max_width", hpo_max_width);
    set("hpo.trial_epochs", hpo_trial_epochs);
    set("rng_seed", seed);
    set("output_dir", out);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) fail(ErrorKind::InvalidArgument, "--set expects key=value, got '" + s + "'");
      apply_override(j, s.substr(0, eq), s.substr(eq + 1));
    }
    ExperimentConfig cfg = experiment_config_from_json(j);
    cfg.validate();
    return cfg;
  }
};

void print_report(std::ostream& out, const ExperimentConfig& cfg, const MetricsReport& r) {
  std::ostringstream csv;
  write_metrics_csv(csv, {{cfg.variant(), r}});
  out << csv.str();
}

int report_divergence(std::ostream& err, const ExperimentResult& r) {
  const auto& d = *r.diagnostics;
  err << "training diverged (NonFiniteLoss) at epoch " << d.epoch << ", batch " << d.batch << ", phase " << d.phase
      << ": " << d.detail << "\n"
      << "diagnostics written to " << (r.output_dir / "diagnostics.json").string() << "\n";
  return kExitDiverged;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"EEG-to-fMRI synthesis: data generation, training, evaluation, search and rendering"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset to disk");
  std::string gen_preset = "tiny", gen_out;
  std::optional<std::size_t> g_individuals, g_channels, g_drivers;
  std::optional<double> g_duration, g_rate, g_tr, g_noise;
  std::optional<std::string> g_coupling;
  std::optional<std::vector<std::size_t>> g_grid;
  std::uint64_t g_seed = 0;
  gen->add_option("--preset", gen_preset, "tiny, noddi_like or oddball_like")->capture_default_str();
  gen->add_option("--out", gen_out, "Dataset directory")->required();
  gen->add_option("--seed", g_seed)->capture_default_str();
  gen->add_option("--individuals", g_individuals);
  gen->add_option("--duration-s", g_duration);
  gen->add_option("--channels", g_channels);
  gen->add_option("--sampling-rate", g_rate, "Hz");
  gen->add_option("--grid", g_grid, "x y z")->expected(3);
  gen->add_option("--tr", g_tr, "seconds");
  gen->add_option("--coupling", g_coupling, "linear or nonlinear");
  gen->add_option("--noise", g_noise, "noise level");
  gen->add_option("--drivers", g_drivers);

  ConfigFlags train_flags, hpo_flags, run_flags;
  auto* train_cmd = app.add_subcommand("train", "Preprocess, pair, optionally search, and train");
  train_flags.attach(*train_cmd, true);

  auto* eval_cmd = app.add_subcommand("evaluate", "Score a trained run on its test individuals");
  std::string eval_run;
  eval_cmd->add_option("--run", eval_run, "Run directory written by train")->required()->check(CLI::ExistingDirectory);

  auto* hpo_cmd = app.add_subcommand("hpo", "Hyperparameter and depth search only");
  hpo_flags.attach(*hpo_cmd, true);

  auto* render_cmd = app.add_subcommand("render", "Write an axial slice of a volume tensor as a graymap");
  std::string r_input, r_out;
  std::optional<std::size_t> r_t, r_z;
  render_cmd->add_option("--input", r_input, "Tensor file [x,y,z] or [t,x,y,z]")->required()->check(CLI::ExistingFile);
  render_cmd->add_option("--t", r_t, "Time index for 4-D input")->capture_default_str();
  render_cmd->add_option("--z", r_z, "Slice index (default: middle)");
  render_cmd->add_option("--out", r_out, "Output .pgm")->required();

  auto* run_cmd = app.add_subcommand("run", "train followed by evaluate, or a re-run from a manifest");
  run_flags.attach(*run_cmd, false);
  std::string manifest;
  run_cmd->add_option("--manifest", manifest, "Re-execute the config recorded in this manifest")->check(CLI::ExistingFile);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion& e) {
    out << kToolVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    // Subcommand help requests surface as CallForHelp on the subcommand.
    if (e.get_exit_code() == 0) {
      for (auto* sub : app.get_subcommands()) out << sub->help();
      return 0;
    }
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      SyntheticSpec spec = synthetic_preset(gen_preset);
      spec.seed = g_seed;
      if (g_individuals) spec.individuals = *g_individuals;
      if (g_duration) spec.duration_s = *g_duration;
      if (g_channels) spec.channels = *g_channels;
      if (g_rate) spec.sampling_rate_hz = *g_rate;
      if (g_grid) spec.grid = {(*g_grid)[0], (*g_grid)[1], (*g_grid)[2]};
      if (g_tr) spec.tr_s = *g_tr;
      if (g_coupling) spec.coupling = coupling_from_string(*g_coupling);
      if (g_noise) spec.noise_level = *g_noise;
      if (g_drivers) spec.drivers = *g_drivers;
      write_synthetic_dataset(gen_out, spec);
      out << "wrote " << spec.individuals << " individuals to " << gen_out << "\n";
      return 0;
    }
    if (train_cmd->parsed()) {
      const ExperimentConfig cfg = train_flags.resolve();
      const ExperimentResult r = run_train(cfg);
      if (r.diverged) return report_divergence(err, r);
      out << "trained " << cfg.variant() << " into " << cfg.output_dir << "\n";
      return 0;
    }
    if (eval_cmd->parsed()) {
      const ExperimentResult r = run_evaluate(eval_run);
      print_report(out, load_experiment_config(fs::path(eval_run) / "config.json"), *r.report);
      return 0;
    }
    if (hpo_cmd->parsed()) {
      const ExperimentConfig cfg = hpo_flags.resolve();
      fs::create_directories(cfg.output_dir);
      const PreparedData data = prepare_data(cfg);
      const HpoOutcome h = run_hpo(cfg, data, (fs::path(cfg.output_dir) / "trials.jsonl").string());
      const json best = {{"depth", h.depth},
                         {"cap_reached", h.nas ? json(h.nas->cap_reached) : json(nullptr)},
                         {"trial", json::parse(trial_to_json(h.best))},
                         {"train", h.best_config}};
      write_file(fs::path(cfg.output_dir) / "best_params.json", best.dump(2) + "\n");
      out << "best depth " << h.depth << ", validation score " << *h.best.score << "\n";
      return 0;
    }
    if (render_cmd->parsed()) {
      Tensor t = read_tensor(r_input);
      if (t.rank() == 4) {
        const std::size_t idx = r_t.value_or(0);
        if (idx >= t.dim(0))
          fail(ErrorKind::IndexOutOfRange, "t index " + std::to_string(idx) + " outside [0, " + std::to_string(t.dim(0)) + ")");
        const std::size_t vox = t.dim(1) * t.dim(2) * t.dim(3);
        t = Tensor({t.dim(1), t.dim(2), t.dim(3)}, t.data().segment(Eigen::Index(idx * vox), Eigen::Index(vox)));
      } else if (t.rank() != 3) {
        fail(ErrorKind::ShapeMismatch, "render needs a [x,y,z] or [t,x,y,z] tensor, got " + to_string(t.shape()));
      }
      emit_slice(t, r_z.value_or(t.dim(2) / 2), r_out);
      out << "wrote " << r_out << "\n";
      return 0;
    }
    if (run_cmd->parsed()) {
      ExperimentResult r;
      ExperimentConfig cfg;
      if (!manifest.empty()) {
        if (!run_flags.out) fail(ErrorKind::InvalidArgument, "--manifest needs --out");
        r = rerun_from_manifest(manifest, *run_flags.out);
        cfg = load_experiment_config(fs::path(*run_flags.out) / "config.json");
      } else {
        cfg = run_flags.resolve();
        r = run_experiment(cfg);
      }
      if (r.diverged) return report_divergence(err, r);
      print_report(out, cfg, *r.report);
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  } catch (const json::exception& e) {
    err << "error: invalid JSON: " << e.what() << "\n";
    return kExitError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitUsage;
}

}  // namespace eegfmri::cli
