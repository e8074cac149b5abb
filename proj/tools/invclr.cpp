// Copyright 2026 The invclr Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <iostream>
#include <optional>

#include "CLI11.hpp"

#include "invclr/io/io.hpp"

namespace io = invclr::io;
namespace spiro = invclr::spiro;
namespace train = invclr::train;
using io::Json;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> set;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Experiment config (JSON)");
  cmd->add_option("--set", c.set, "Override a config key, e.g. reg.lambda=0.1")->take_all();
}

void print(const Json& j) { std::cout << j.dump(2) << "\n"; }

int fail(const std::string& type, const std::string& message, int code,
         const Json& extra = Json::object()) {
  Json err = {{"type", type}, {"message", message}};
  err.update(extra);
  std::cerr << Json{{"error", err}}.dump() << "\n";
  return code;
}

spiro::SpiroDataset load_or_generate(const std::string& path, const io::ExperimentConfig& cfg,
                                     bool test_split) {
  if (path.empty()) {
    return test_split ? spiro::generate_dataset(cfg.data.n_test, cfg.test_data_seed(),
                                                cfg.data.specs, cfg.grid())
                      : spiro::generate_dataset(cfg.data.n_train, cfg.train_data_seed(),
                                                cfg.data.specs, cfg.grid());
  }
  spiro::SpiroDataset ds = io::read_dataset(path);
  if (ds.grid.resolution != cfg.data.resolution || ds.grid.extent != cfg.data.extent) {
    throw io::ConfigError(path + ": dataset grid (" + std::to_string(ds.grid.resolution) + ", " +
                          std::to_string(ds.grid.extent) + ") does not match the config's data " +
                          "resolution and extent");
  }
  return ds;
}

void cmd_generate(const Common& c, const std::string& split, const std::string& out,
                  std::optional<std::size_t> n, std::optional<std::uint64_t> seed,
                  std::optional<int> resolution, const std::vector<std::string>& shift,
                  const std::vector<std::string>& widen) {
  std::vector<std::string> set = c.set;
  const bool test = split == "test";
  if (n) set.push_back(std::string(test ? "data.n_test=" : "data.n_train=") + std::to_string(*n));
  if (seed) set.push_back("seed=" + std::to_string(*seed));
  if (resolution) set.push_back("data.resolution=" + std::to_string(*resolution));
  for (const auto& s : shift) set.push_back("data.shift." + s);
  for (const auto& w : widen) set.push_back("data.widen." + w);
  const io::ExperimentConfig cfg = io::load_config(c.config, set, true);
  const spiro::SpiroDataset ds = load_or_generate("", cfg, test);
  io::write_dataset(out, ds);
  print({{"kind", "dataset"}, {"path", out}, {"split", split}, {"n", ds.size()}, {"seed", ds.seed},
         {"code_version", io::code_version()}});
}

void cmd_train(const Common& c, const std::string& data, const std::string& out,
               std::string metrics_path) {
  const io::ExperimentConfig cfg = io::load_config(c.config, c.set);
  const Json resolved = io::config_to_json(cfg);
  const spiro::SpiroDataset ds = load_or_generate(data, cfg, false);
  if (metrics_path.empty()) metrics_path = out + ".metrics.jsonl";
  io::MetricsWriter metrics(metrics_path, resolved);
  train::TrainHooks hooks;
  hooks.on_metrics = [&](const train::MetricsRecord& r) { metrics.write(r); };
  train::TrainResult res;
  try {
    res = train::train(ds, cfg.encoder, cfg.head, cfg.train, hooks);
  } catch (const train::TrainingAborted& e) {
    metrics.close();
    io::write_checkpoint(out + ".last_good", {resolved, e.step, e.last_good});
    throw;
  }
  metrics.close();
  const std::uint64_t steps = res.metrics.empty() ? 0 : res.metrics.back().step;
  io::write_checkpoint(out, {resolved, steps, res.params});
  Json summary = {{"kind", "checkpoint"}, {"path", out}, {"metrics", metrics_path},
                  {"steps", steps},       {"seed", cfg.seed}};
  if (!res.metrics.empty()) summary["final_infonce"] = res.metrics.back().infonce;
  print(summary);
}

void cmd_evaluate(const Common& c, const std::string& ckpt_path, const std::string& data,
                  const std::string& test, const std::string& out,
                  std::optional<std::size_t> fa_max_m, const std::vector<std::string>& sweeps) {
  const io::Checkpoint ckpt = io::read_checkpoint(ckpt_path);
  Json doc = ckpt.config;
  if (!c.config.empty()) doc = Json::parse(io::read_file(c.config));
  for (const auto& s : c.set) io::apply_override(doc, s);
  if (fa_max_m) io::apply_override(doc, "feature_averaging.max_M=" + std::to_string(*fa_max_m));
  io::ExperimentConfig cfg = io::config_from_json(doc);
  if (!sweeps.empty()) {
    std::vector<invclr::eval::SweepSpec> keep;
    for (const auto& name : sweeps) {
      auto it = std::find_if(cfg.eval.sweeps.begin(), cfg.eval.sweeps.end(),
                             [&](const auto& s) { return s.name == name; });
      if (it == cfg.eval.sweeps.end()) throw io::ConfigError("--sweep: no sweep named '" + name + "'");
      keep.push_back(*it);
    }
    cfg.eval.sweeps = std::move(keep);
  }
  const spiro::SpiroDataset train_set = load_or_generate(data, cfg, false);
  const spiro::SpiroDataset test_set = load_or_generate(test, cfg, true);
  const auto report = invclr::eval::evaluate(train_set, test_set, ckpt.params, cfg.encoder, cfg.eval);
  const Json body = io::report_artifact(cfg, report, train_set, test_set);
  io::write_atomic(out, body.dump(2) + "\n");
  print({{"kind", "report"}, {"path", out}, {"report", body["report"]}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive learning with gradient-penalty invariance on Spirograph data"};
  app.set_version_flag("--version", io::code_version());
  app.require_subcommand(1);

  Common gen_c, train_c, eval_c, pair_c, run_c;

  auto* gen = app.add_subcommand("generate", "Sample a Spirograph dataset file");
  add_common(gen, gen_c);
  std::string gen_out, gen_split = "train";
  std::optional<std::size_t> gen_n;
  std::optional<std::uint64_t> gen_seed;
  std::optional<int> gen_res;
  std::vector<std::string> gen_shift, gen_widen;
  gen->add_option("--out", gen_out, "Output dataset path")->required();
  gen->add_option("--split", gen_split, "Which split's size and seed to use")
      ->check(CLI::IsMember({"train", "test"}));
  gen->add_option("--n", gen_n, "Number of samples");
  gen->add_option("--seed", gen_seed, "Experiment seed");
  gen->add_option("--resolution", gen_res, "Image side length in pixels");
  gen->add_option("--shift", gen_shift, "Shift a factor's support, field=value")->take_all();
  gen->add_option("--widen", gen_widen, "Widen a factor's support, field=value")->take_all();

  auto* tr = app.add_subcommand("train", "Train an encoder and write a checkpoint");
  add_common(tr, train_c);
  std::string tr_data, tr_out, tr_metrics;
  tr->add_option("--data", tr_data, "Training dataset (generated from the config if omitted)");
  tr->add_option("--out", tr_out, "Checkpoint path")->required();
  tr->add_option("--metrics", tr_metrics, "Metrics JSONL path (default <out>.metrics.jsonl)");

  auto* ev = app.add_subcommand("evaluate", "Probe, condvar, feature averaging and sweeps");
  add_common(ev, eval_c);
  std::string ev_ckpt, ev_data, ev_test, ev_out;
  std::optional<std::size_t> ev_fa;
  std::vector<std::string> ev_sweeps;
  ev->add_option("--ckpt", ev_ckpt, "Checkpoint path")->required();
  ev->add_option("--data", ev_data, "Probe training dataset");
  ev->add_option("--test", ev_test, "Test dataset");
  ev->add_option("--out", ev_out, "Report path")->required();
  ev->add_option("--fa-max-M", ev_fa, "Largest feature-averaging M (0 disables)");
  ev->add_option("--sweep", ev_sweeps, "Run only the named robustness sweeps")->take_all();

  auto* pr = app.add_subcommand("pair", "Paired lambda = 0 and lambda > 0 runs with comparison");
  add_common(pr, pair_c);
  std::string pr_dir;
  pr->add_option("--out-dir", pr_dir, "Output directory")->required();

  auto* rn = app.add_subcommand("run", "generate, train and evaluate one configuration");
  add_common(rn, run_c);
  std::string rn_dir;
  rn->add_option("--out-dir", rn_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (gen->parsed()) {
      cmd_generate(gen_c, gen_split, gen_out, gen_n, gen_seed, gen_res, gen_shift, gen_widen);
    } else if (tr->parsed()) {
      cmd_train(train_c, tr_data, tr_out, tr_metrics);
    } else if (ev->parsed()) {
      cmd_evaluate(eval_c, ev_ckpt, ev_data, ev_test, ev_out, ev_fa, ev_sweeps);
    } else if (pr->parsed()) {
      print(io::run_paired(io::load_config(pair_c.config, pair_c.set), pr_dir)["comparison"]);
    } else if (rn->parsed()) {
      const auto cfg = io::load_config(run_c.config, run_c.set);
      const auto paths = io::run_paths(rn_dir);
      io::run_experiment(cfg, paths);
      print({{"kind", "run"}, {"report", paths.report.string()}});
    }
  } catch (const io::ConfigError& e) {
    return fail("config", e.what(), 2);
  } catch (const io::FormatError& e) {
    return fail("format", e.what(), 3);
  } catch (const io::StageError& e) {
    return fail("stage", e.what(), 4, {{"stage", e.stage}});
  } catch (const train::TrainingAborted& e) {
    return fail("training_aborted", e.what(), 4, {{"stage", "train"}, {"step", e.step}});
  } catch (const Json::exception& e) {
    return fail("config", e.what(), 2);
  } catch (const std::exception& e) {
    return fail("runtime", e.what(), 1);
  }
  return 0;
}
