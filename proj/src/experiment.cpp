// SPDX-License-Identifier: Apache-2.0
#include "eegfmri/experiment.hpp"

#include <Eigen/Core>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "eegfmri/error.hpp"
#include "eegfmri/io.hpp"
#include "eegfmri/random.hpp"
#include "eegfmri/serialization.hpp"

namespace eegfmri {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kTagSplit = 0x5B;
constexpr std::uint64_t kTagTrain = 0x7A;
constexpr std::uint64_t kTagHpo = 0x4850;

const char* const kOutputs[] = {"checkpoint.efck", "history.csv", "metrics.csv", "instances.csv",
                                "diagnostics.json", "best_params.json", "manifest.json"};

std::string message_of(const Error& e) {
  std::string m = e.what();
  const auto pos = m.find(": ");
  return pos == std::string::npos ? m : m.substr(pos + 2);
}

/// Re-raises library errors with the stage name in front; training
/// divergence passes through untouched so its diagnostics survive.
template <typename F>
auto staged(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const TrainingError&) {
    throw;
  } catch (const Error& e) {
    throw Error(e.kind(), stage + ": " + message_of(e));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::FormatError, stage + ": " + e.what());
  }
}

struct TrialLog {
  std::vector<TrialResult> replay;
  std::function<void(const TrialResult&)> on_trial;
};

/// Replays what an earlier (possibly interrupted) search logged and
/// rewrites the log as trials complete again.
TrialLog open_trial_log(const std::string& path) {
  TrialLog log;
  if (path.empty()) return log;
  if (fs::exists(path)) log.replay = read_trial_log(path);
  write_file(path, "");
  log.on_trial = [path](const TrialResult& t) { append_trial_log(path, t); };
  return log;
}

TrainConfig effective_train(const ExperimentConfig& cfg) {
  TrainConfig t = cfg.train;
  t.seed = derive_seed(cfg.rng_seed, {kTagTrain});
  return t;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json diagnostics_json(const TrainingDiagnostics& d, const std::string& message) {
  return {{"stage", "train"},
          {"error", "NonFiniteLoss"},
          {"message", message},
          {"epoch", d.epoch},
          {"batch", d.batch},
          {"phase", d.phase},
          {"detail", d.detail},
          {"last_finite_loss", d.last_finite_loss}};
}

void write_manifest(const fs::path& dir, const ExperimentConfig& cfg, const PreparedData& data,
                    const std::string& status) {
  json m;
  m["tool"] = "eegfmri";
  m["version"] = kToolVersion;
  m["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                       std::to_string(EIGEN_MINOR_VERSION);
#ifdef __VERSION__
  m["compiler"] = __VERSION__;
#endif
  m["config"] = to_json_value(cfg);
  m["config_hash"] = config_hash(cfg);
  m["rng_seed"] = cfg.rng_seed;
  m["dataset_checksum"] = data.dataset_checksum;
  m["status"] = status;
  json split;
  for (const auto& [name, part] : {std::pair{"train", &data.split.train}, std::pair{"val", &data.split.val},
                                   std::pair{"test", &data.split.test}}) {
    json ids = json::array();
    for (const auto& s : *part) ids.push_back(s.individual_id);
    split[name] = ids;
  }
  m["split"] = split;
  json outputs = json::object();
  for (const char* f : kOutputs)
    if (std::string(f) != "manifest.json" && fs::exists(dir / f)) outputs[f] = file_checksum(dir / f);
  if (fs::exists(dir / "slices")) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir / "slices")) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) outputs["slices/" + f.filename().string()] = file_checksum(f);
  }
  m["outputs"] = outputs;
  write_file(dir / "manifest.json", m.dump(2) + "\n");
}

void clear_outputs(const fs::path& dir) {
  for (const char* f : kOutputs) fs::remove(dir / f);
  fs::remove_all(dir / "slices");
}

std::string write_history(const TrainedModel& m) {
  std::string s = "epoch,train_loss,val_epv\n";
  for (const auto& e : m.history)
    s += std::to_string(e.epoch) + "," + fmt(e.train_loss) + "," + (e.val_epv ? fmt(*e.val_epv) : "") + "\n";
  return s;
}

}  // namespace

std::string ExperimentConfig::variant() const { return std::string(to_string(train.procedure)); }

void ExperimentConfig::validate() const {
  if (dataset_path.empty()) synthetic.validate();
  if (n_test == 0) fail(ErrorKind::InvalidArgument, "at least one test individual is required");
  const auto& p = preprocess;
  if (!(p.step_s > 0) || !(p.window_s > 0) || !(p.stft_window_s > 0) || !(p.shift_s >= 0))
    fail(ErrorKind::InvalidArgument, "window, step and STFT lengths must be positive");
  if (p.downsample_factor == 0) fail(ErrorKind::InvalidFactor, "downsample factor must be >= 1");
  steps_of(p.window_s, p.step_s, "window_s");
  steps_of(p.shift_s, p.step_s, "shift_s");
  train.validate();
  if (hpo.enabled && (hpo.budget == 0 || hpo.max_depth == 0 || hpo.max_width == 0))
    fail(ErrorKind::InvalidArgument, "hpo budget, max_depth and max_width must be positive");
}

json to_json_value(const ExperimentConfig& c) {
  json j;
  if (c.dataset_path.empty())
    j["dataset"] = {{"synthetic", to_json_value(c.synthetic)}};
  else
    j["dataset"] = {{"path", c.dataset_path}};
  j["individuals"] = {{"train", c.n_train}, {"val", c.n_val}, {"test", c.n_test}};
  j["preprocess"] = c.preprocess;
  json t = c.train;
  t.erase("seed");
  j["train"] = t;
  j["hpo"] = {{"enabled", c.hpo.enabled},
              {"budget", c.hpo.budget},
              {"max_depth", c.hpo.max_depth},
              {"max_width", c.hpo.max_width},
              {"trial_epochs", c.hpo.trial_epochs},
              {"architecture_from", c.hpo.architecture_from}};
  j["output_dir"] = c.output_dir;
  j["rng_seed"] = c.rng_seed;
  j["render"] = {{"z", c.slice_z ? json(*c.slice_z) : json(nullptr)}, {"windows", c.render_windows}};
  return j;
}

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig c;
  try {
    reject_unknown_keys(j, {"dataset", "individuals", "preprocess", "train", "hpo", "output_dir", "rng_seed", "render"},
                        "experiment");
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      reject_unknown_keys(d, {"path", "synthetic"}, "dataset");
      if (d.contains("path") && d.contains("synthetic"))
        fail(ErrorKind::InvalidArgument, "dataset: give either a path or a synthetic spec");
      if (d.contains("path")) c.dataset_path = d.at("path").get<std::string>();
      if (d.contains("synthetic")) c.synthetic = synthetic_spec_from_json(d.at("synthetic"));
    }
    if (j.contains("individuals")) {
      const auto& n = j.at("individuals");
      reject_unknown_keys(n, {"train", "val", "test"}, "individuals");
      if (n.contains("train")) c.n_train = n.at("train").get<std::size_t>();
      if (n.contains("val")) c.n_val = n.at("val").get<std::size_t>();
      if (n.contains("test")) c.n_test = n.at("test").get<std::size_t>();
    }
    if (j.contains("preprocess")) from_json(j.at("preprocess"), c.preprocess);
    if (j.contains("train")) {
      if (j.at("train").contains("seed"))
        fail(ErrorKind::InvalidArgument, "train.seed is derived from rng_seed; set rng_seed instead");
      from_json(j.at("train"), c.train);
    }
    if (j.contains("hpo")) {
      const auto& h = j.at("hpo");
      reject_unknown_keys(h, {"enabled", "budget", "max_depth", "max_width", "trial_epochs", "architecture_from"}, "hpo");
      c.hpo.enabled = h.value("enabled", c.hpo.enabled);
      c.hpo.budget = h.value("budget", c.hpo.budget);
      c.hpo.max_depth = h.value("max_depth", c.hpo.max_depth);
      c.hpo.max_width = h.value("max_width", c.hpo.max_width);
      c.hpo.trial_epochs = h.value("trial_epochs", c.hpo.trial_epochs);
      c.hpo.architecture_from = h.value("architecture_from", c.hpo.architecture_from);
    }
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("rng_seed")) c.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    if (j.contains("render")) {
      const auto& r = j.at("render");
      reject_unknown_keys(r, {"z", "windows"}, "render");
      if (r.contains("z") && !r.at("z").is_null()) c.slice_z = r.at("z").get<std::size_t>();
      c.render_windows = r.value("windows", c.render_windows);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidArgument, std::string("experiment config: ") + e.what());
  }
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::FormatError, path.string() + " at offset " + std::to_string(e.byte) + ": invalid JSON");
  }
  return experiment_config_from_json(j);
}

std::string config_hash(const ExperimentConfig& cfg) {
  json j = to_json_value(cfg);
  j.erase("output_dir");
  return hex64(fnv1a64(j.dump()));
}

void apply_override(json& cfg, const std::string& path, const std::string& value) {
  if (path.empty()) fail(ErrorKind::InvalidArgument, "empty override key");
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error&) {
    parsed = value;
  }
  json* node = &cfg;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    json& next = (*node)[parts[i]];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) fail(ErrorKind::InvalidArgument, "override '" + path + "' descends into a non-object");
    node = &next;
  }
  (*node)[parts.back()] = parsed;
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
  std::vector<RecordingSession> sessions;
  PreparedData out;
  if (!cfg.dataset_path.empty()) {
    const fs::path root = cfg.dataset_path;
    const auto ids = staged("load dataset", [&] { return dataset_individuals(root); });
    std::string digest = read_file(root / "dataset.json");
    for (const auto& id : ids) {
      const RawSession raw = staged("load " + id, [&] { return load_session(root, id); });
      digest += read_file(root / id / "session.json");
      sessions.push_back({raw.individual_id, staged("preprocess " + id, [&] {
                            return preprocess_recording(raw.eeg, raw.fmri, cfg.preprocess);
                          })});
    }
    out.dataset_checksum = hex64(fnv1a64(digest));
  } else {
    const SyntheticTruth truth = staged("generate dataset", [&] { return synthetic_truth(cfg.synthetic); });
    for (std::size_t i = 0; i < cfg.synthetic.individuals; ++i) {
      const RawSession raw = synthesize_session(cfg.synthetic, truth, i);
      sessions.push_back({raw.individual_id, staged("preprocess " + raw.individual_id, [&] {
                            return preprocess_recording(raw.eeg, raw.fmri, cfg.preprocess);
                          })});
    }
    out.dataset_checksum = hex64(fnv1a64(to_json_value(cfg.synthetic).dump()));
  }
  out.split = staged("split", [&] {
    return split_by_individual(sessions, cfg.n_test, cfg.n_val, derive_seed(cfg.rng_seed, {kTagSplit}));
  });
  if (cfg.n_train > 0) {
    if (cfg.n_train > out.split.train.size())
      fail(ErrorKind::NotEnoughIndividuals, "split: " + std::to_string(cfg.n_train) + " training individuals requested, " +
                                                std::to_string(out.split.train.size()) + " available");
    out.split.train.resize(cfg.n_train);
  }
  return out;
}

TrainConfig apply_point(const TrainConfig& base, std::size_t depth, const ParamPoint& p) {
  TrainConfig t = base;
  t.learning_rate = p.at("learning_rate");
  t.l1_eeg = p.at("l1_eeg");
  t.l1_fmri = p.at("l1_fmri");
  t.l1_dec = p.at("l1_dec");
  if (p.values.count("theta")) t.loss.theta = p.at("theta");
  t.batch_size = std::size_t(std::llround(p.at("batch_size")));
  if (p.widths.empty() && depth == base.architecture.depth()) return t;
  auto widths = [&](const char* name) {
    const auto it = p.widths.find(name);
    return it == p.widths.end() ? std::vector<std::size_t>(depth - 1, 4) : it->second;
  };
  t.architecture.eeg_widths = widths("eeg_widths");
  t.architecture.fmri_widths = widths("fmri_widths");
  t.architecture.decoder_widths = widths("decoder_widths");
  return t;
}

HpoOutcome run_hpo(const ExperimentConfig& cfg, const PreparedData& data, const std::string& trial_log) {
  const TrainConfig base = effective_train(cfg);
  const auto train_pairs = make_positive_pairs(data.split.train);
  const auto val_pairs = make_positive_pairs(data.split.val);
  auto score = [&](TrainConfig t, std::uint64_t seed) -> std::optional<double> {
    t.seed = seed;
    if (cfg.hpo.trial_epochs > 0) t.epochs = cfg.hpo.trial_epochs;
    try {
      const TrainedModel m = train(data.split.train, t, data.split.val);
      return validation_epv(m, val_pairs.empty() ? train_pairs : val_pairs);
    } catch (const TrainingError&) {
      return std::nullopt;
    }
  };

  HpoOutcome out;
  const Procedure proc = cfg.train.procedure;
  ArchitectureConfig arch = base.architecture;
  std::size_t depth = arch.depth();
  if (proc == Procedure::LCOMB || cfg.hpo.architecture_from.empty()) {
    TrainConfig lcomb = base;
    lcomb.procedure = Procedure::LCOMB;
    NasOptions opt;
    opt.n_iter_per_depth = cfg.hpo.budget;
    opt.max_depth = cfg.hpo.max_depth;
    opt.seed = derive_seed(cfg.rng_seed, {kTagHpo});
    // A non-LCOMB variant logs the prerequisite search next to its own.
    std::string path = trial_log;
    if (proc != Procedure::LCOMB && !path.empty()) path = fs::path(path).replace_extension(".lcomb.jsonl").string();
    TrialLog log = open_trial_log(path);
    opt.replay = log.replay;
    opt.on_trial = log.on_trial;
    auto space = [&](std::size_t d) { return default_space(d, cfg.hpo.max_width, true); };
    auto objective = [&](std::size_t d, const ParamPoint& p, std::uint64_t seed) {
      return score(apply_point(lcomb, d, p), seed);
    };
    out.nas = staged("hpo (depth search)", [&] { return nas_depth_search(space, objective, opt); });
    depth = out.nas->depth;
    out.depth = depth;
    out.best = out.nas->best;
    const TrainConfig found = apply_point(lcomb, depth, out.nas->best.params);
    arch = found.architecture;
    if (proc == Procedure::LCOMB) {
      out.best_config = found;
      out.best_config.procedure = proc;
      return out;
    }
  } else {
    staged("hpo (architecture)", [&] {
      const json best = json::parse(read_file(cfg.hpo.architecture_from));
      from_json(best.at("train").at("architecture"), arch);
    });
    depth = arch.depth();
  }

  TrainConfig fixed = base;
  fixed.architecture = arch;
  BoOptions bo;
  bo.n_iter = cfg.hpo.budget;
  bo.seed = derive_seed(cfg.rng_seed, {kTagHpo, 0xB0});
  bo.depth = depth;
  TrialLog log = open_trial_log(trial_log);
  bo.replay = log.replay;
  bo.on_trial = log.on_trial;
  const HyperParamSpace space = default_space(1, cfg.hpo.max_width, proc == Procedure::TOPK);
  out.bo = staged("hpo (fixed depth)", [&] {
    return bo_optimize(space, [&](const ParamPoint& p, std::uint64_t seed) { return score(apply_point(fixed, depth, p), seed); },
                       bo);
  });
  out.depth = depth;
  out.best = out.bo->best;
  out.best_config = apply_point(fixed, depth, out.bo->best.params);
  return out;
}

ExperimentResult run_train(const ExperimentConfig& cfg) {
  staged("config", [&] { cfg.validate(); });
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  clear_outputs(dir);
  write_file(dir / "config.json", to_json_value(cfg).dump(2) + "\n");
  const PreparedData data = prepare_data(cfg);

  ExperimentResult res;
  res.output_dir = dir;
  TrainConfig tc = effective_train(cfg);
  if (cfg.hpo.enabled) {
    const HpoOutcome h = run_hpo(cfg, data, (dir / "trials.jsonl").string());
    tc = h.best_config;
    json best = {{"depth", h.depth},
                 {"cap_reached", h.nas ? json(h.nas->cap_reached) : json(nullptr)},
                 {"trial", json::parse(trial_to_json(h.best))},
                 {"train", h.best_config}};
    write_file(dir / "best_params.json", best.dump(2) + "\n");
  } else {
    write_file(dir / "trials.jsonl", "");
  }

  try {
    const TrainedModel model = staged("train", [&] { return train(data.split.train, tc, data.split.val); });
    staged("write checkpoint", [&] {
      save_checkpoint(dir / "checkpoint.efck", model);
      write_file(dir / "history.csv", write_history(model));
    });
    write_manifest(dir, cfg, data, "trained");
  } catch (const TrainingError& e) {
    res.diverged = true;
    res.diagnostics = e.diagnostics();
    write_file(dir / "diagnostics.json", diagnostics_json(e.diagnostics(), message_of(e)).dump(2) + "\n");
    write_manifest(dir, cfg, data, "non_finite_loss");
  }
  return res;
}

ExperimentResult run_evaluate(const fs::path& run_dir) {
  ExperimentConfig cfg = load_experiment_config(run_dir / "config.json");
  cfg.output_dir = run_dir.string();
  ExperimentResult res;
  res.output_dir = run_dir;
  if (fs::exists(run_dir / "diagnostics.json"))
    fail(ErrorKind::NonFiniteLoss, "evaluate: training in " + run_dir.string() + " diverged; see diagnostics.json");
  const TrainedModel model = staged("load checkpoint", [&] { return load_checkpoint(run_dir / "checkpoint.efck"); });
  const PreparedData data = prepare_data(cfg);

  std::vector<MetricValues> rows;
  std::string instances = "individual,window";
  for (auto m : kMetricOrder) instances += "," + std::string(to_string(m));
  instances += "\n";
  fs::remove_all(run_dir / "slices");
  std::size_t rendered = 0;
  staged("evaluate", [&] {
    for (const auto& s : data.split.test)
      for (std::size_t w = 0; w < s.windows.size(); ++w) {
        const auto& win = s.windows[w];
        const Tensor pred = synthesize(model, win.eeg);
        rows.push_back(compute_metrics(win.fmri, pred));
        instances += s.individual_id + "," + std::to_string(w);
        for (double v : rows.back()) instances += "," + fmt(v);
        instances += "\n";
        if (rendered < cfg.render_windows) {
          const std::size_t T = pred.dim(0), X = pred.dim(1), Y = pred.dim(2), Z = pred.dim(3);
          const std::size_t z = cfg.slice_z.value_or(Z / 2);
          for (std::size_t t = 0; t < T; ++t) {
            char name[64];
            const auto vox = Eigen::Index(X * Y * Z);
            for (const auto& [tag, src] : {std::pair{"pred", &pred}, std::pair{"true", &win.fmri}}) {
              const Tensor vol({X, Y, Z}, src->data().segment(Eigen::Index(t) * vox, vox));
              std::snprintf(name, sizeof name, "%s_w%02zu_t%02zu_%s.pgm", s.individual_id.c_str(), w, t, tag);
              emit_slice(vol, z, run_dir / "slices" / name);
            }
          }
          ++rendered;
        }
      }
  });
  const MetricsReport report = staged("aggregate", [&] { return aggregate_metrics(rows); });
  std::ostringstream csv;
  write_metrics_csv(csv, {{cfg.variant(), report}});
  write_file(run_dir / "metrics.csv", csv.str());
  write_file(run_dir / "instances.csv", instances);
  write_manifest(run_dir, cfg, data, "evaluated");
  res.report = report;
  return res;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  ExperimentResult r = run_train(cfg);
  if (r.diverged) return r;
  return run_evaluate(cfg.output_dir);
}

ExperimentResult rerun_from_manifest(const fs::path& manifest, const fs::path& output_dir) {
  json m;
  try {
    m = json::parse(read_file(manifest));
  } catch (const json::parse_error& e) {
    fail(ErrorKind::FormatError, manifest.string() + " at offset " + std::to_string(e.byte) + ": invalid JSON");
  }
  if (!m.contains("config")) fail(ErrorKind::FormatError, manifest.string() + ": no recorded config");
  ExperimentConfig cfg = experiment_config_from_json(m.at("config"));
  cfg.output_dir = output_dir.string();
  if (m.contains("config_hash") && m.at("config_hash").get<std::string>() != config_hash(cfg))
    fail(ErrorKind::ChecksumMismatch, manifest.string() + ": config hash does not match the recorded config");
  return run_experiment(cfg);
}

}  // namespace eegfmri
