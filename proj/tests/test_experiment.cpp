// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "cli.hpp"
#include "eegfmri/experiment.hpp"
#include "eegfmri/io.hpp"
#include "test_util.hpp"

using namespace eegfmri;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("eegfmri_exp_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig small_config(Procedure p, const fs::path& out) {
  ExperimentConfig c;
  c.synthetic = synthetic_preset("tiny");
  c.synthetic.individuals = 3;
  c.synthetic.duration_s = 200;
  c.train.procedure = p;
  c.train.epochs = 2;
  c.train.learning_rate = 0.05;
  c.train.topk_pretrain_epochs = 1;
  c.rng_seed = 21;
  c.output_dir = out.string();
  return c;
}

int run_cli(std::vector<std::string> args, std::string* err_text = nullptr) {
  args.insert(args.begin(), "eegfmri");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (err_text) *err_text = err.str();
  return code;
}

}  // namespace

TEST_CASE("experiment config JSON") {
  ExperimentConfig c = small_config(Procedure::TOPK, "somewhere");
  c.slice_z = 1;
  c.hpo.enabled = true;
  const auto j = to_json_value(c);
  CHECK(to_json_value(experiment_config_from_json(j)) == j);
  CHECK(c.variant() == "TOPK");

  ExperimentConfig moved = c;
  moved.output_dir = "elsewhere";
  CHECK(config_hash(moved) == config_hash(c));
  moved.rng_seed = 22;
  CHECK(config_hash(moved) != config_hash(c));

  auto bad = j;
  bad["train"]["learning_rat"] = 0.1;
  CHECK_THROWS_AS_KIND(experiment_config_from_json(bad), ErrorKind::InvalidArgument);
  bad = j;
  bad["train"]["seed"] = 3;
  CHECK_THROWS(experiment_config_from_json(bad));

  auto o = j;
  apply_override(o, "train.loss.theta", "0.25");
  apply_override(o, "train.procedure", "GAN");
  const ExperimentConfig oc = experiment_config_from_json(o);
  CHECK(oc.train.loss.theta == 0.25);
  CHECK(oc.train.procedure == Procedure::GAN);

  ExperimentConfig shift = c;
  shift.preprocess.shift_s = 5.0;
  CHECK_THROWS(shift.validate());
}

TEST_CASE("an AE run writes a complete, reproducible report") {
  const fs::path a = scratch("ae_a"), b = scratch("ae_b"), r = scratch("ae_rerun");
  const auto res = run_experiment(small_config(Procedure::AE, a));
  REQUIRE_FALSE(res.diverged);
  REQUIRE(res.report.has_value());
  for (const char* f : {"config.json", "checkpoint.efck", "history.csv", "manifest.json", "metrics.csv", "instances.csv"})
    CHECK(fs::exists(a / f));
  CHECK(fs::exists(a / "slices"));
  CHECK_FALSE(fs::is_empty(a / "slices"));

  std::istringstream csv(read_file(a / "metrics.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "metric,AE");
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    const auto cell = line.substr(line.find(',') + 1);
    CHECK(std::isfinite(std::stod(cell.substr(0, cell.find("\xC2\xB1")))));
    ++rows;
  }
  CHECK(rows == 6);

  const auto manifest = nlohmann::json::parse(read_file(a / "manifest.json"));
  CHECK(manifest["status"] == "evaluated");
  CHECK(manifest["rng_seed"] == 21);
  CHECK(manifest["config_hash"] == config_hash(small_config(Procedure::AE, a)));

  run_experiment(small_config(Procedure::AE, b));
  CHECK(read_file(a / "metrics.csv") == read_file(b / "metrics.csv"));
  CHECK(read_file(a / "checkpoint.efck") == read_file(b / "checkpoint.efck"));

  rerun_from_manifest(a / "manifest.json", r);
  CHECK(read_file(a / "metrics.csv") == read_file(r / "metrics.csv"));

  for (const auto& p : {a, b, r}) fs::remove_all(p);
}

TEST_CASE("a diverging run leaves diagnostics and no report") {
  const fs::path d = scratch("gan_div");
  ExperimentConfig c = small_config(Procedure::GAN, d);
  c.train.learning_rate = 1e-3;
  c.train.clip_norm = 0.0;
  c.train.init_gain = 5.0;
  const auto res = run_experiment(c);
  CHECK(res.diverged);
  REQUIRE(res.diagnostics.has_value());
  CHECK(fs::exists(d / "diagnostics.json"));
  CHECK_FALSE(fs::exists(d / "metrics.csv"));
  CHECK_FALSE(fs::exists(d / "checkpoint.efck"));
  CHECK_FALSE(fs::exists(d / "slices"));
  const auto diag = nlohmann::json::parse(read_file(d / "diagnostics.json"));
  CHECK(diag["error"] == "NonFiniteLoss");
  CHECK(diag.contains("epoch"));
  CHECK(nlohmann::json::parse(read_file(d / "manifest.json"))["status"] == "non_finite_loss");
  CHECK_THROWS_AS_KIND(run_evaluate(d), ErrorKind::NonFiniteLoss);
  fs::remove_all(d);
}

TEST_CASE("hpo writes every trial") {
  {
    ExperimentConfig one = small_config(Procedure::LCOMB, scratch("hpo_one"));
    one.hpo.enabled = true;
    one.hpo.budget = 1;
    one.hpo.max_depth = 1;
    CHECK_THROWS_AS_KIND(run_hpo(one, prepare_data(one), ""), ErrorKind::AllTrialsFailed);
  }
  const fs::path d = scratch("hpo");
  ExperimentConfig c = small_config(Procedure::LCOMB, d);
  c.hpo.enabled = true;
  c.hpo.budget = 2;
  c.hpo.max_depth = 2;
  c.train.epochs = 1;
  c.synthetic.individuals = 4;  // negatives need two training individuals
  const auto data = prepare_data(c);
  const auto outcome = run_hpo(c, data, (d / "trials.jsonl").string());
  REQUIRE(outcome.nas.has_value());
  CHECK(outcome.depth >= 1);
  CHECK(outcome.depth <= 2);
  const auto log = read_trial_log(d / "trials.jsonl");
  CHECK(log.size() == 2 * outcome.nas->best_per_depth.size());
  CHECK(outcome.best_config.architecture.depth() == outcome.depth);
  fs::remove_all(d);
}

TEST_CASE("command line") {
  std::string err;
  CHECK(run_cli({"train"}, &err) == cli::kExitUsage);
  CHECK(err.find("--seed") != std::string::npos);
  CHECK(run_cli({"frobnicate"}) == cli::kExitUsage);

  const fs::path data = scratch("cli_data"), run = scratch("cli_run"), img = scratch("cli_img");
  REQUIRE(run_cli({"gen-data", "--preset", "tiny", "--individuals", "3", "--duration-s", "150", "--out", data.string()}) == 0);
  CHECK(fs::exists(data / "dataset.json"));
  REQUIRE(run_cli({"train", "--dataset", data.string(), "--seed", "3", "--epochs", "1", "--out", run.string()}, &err) == 0);
  CHECK(run_cli({"evaluate", "--run", run.string()}) == 0);
  CHECK(fs::exists(run / "metrics.csv"));

  REQUIRE(run_cli({"render", "--input", (data / "sub-01" / "fmri.bin").string(), "--t", "2", "--out",
               (img / "v.pgm").string()}) == 0);
  const GrayImage g = read_pgm(img / "v.pgm");
  CHECK(g.width == 12);
  CHECK(g.height == 12);

  CHECK(run_cli({"train", "--dataset", data.string(), "--seed", "3", "--lr", "-1", "--out", run.string()}) ==
        cli::kExitError);
  for (const auto& p : {data, run, img}) fs::remove_all(p);
}
