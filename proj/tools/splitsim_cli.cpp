/**
 * Copyright 2026 The splitsim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// splitsim: run protocol experiments, print closed-form communication tables,
// and run the gradient and partition diagnostics.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "splitsim/data.hpp"
#include "splitsim/error.hpp"
#include "splitsim/gradcheck.hpp"
#include "splitsim/harness.hpp"
#include "splitsim/model.hpp"
#include "splitsim/simnet.hpp"

using namespace splitsim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRunFailure = 1;
constexpr int kExitConfigError = 2;

struct CommonFlags {
  std::uint64_t seed = 0;
  std::string out_dir;
  bool concurrent_phase3 = false;
  bool no_label_bytes = false;
  std::size_t jobs = 1;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--seed", f.seed, "Base seed (overrides the config)");
  cmd->add_option("--out-dir", f.out_dir, "Output directory (overrides output.dir)");
  cmd->add_flag("--concurrent-phase3", f.concurrent_phase3, "Overlap activation upload with server training");
  cmd->add_flag("--no-label-bytes", f.no_label_bytes, "Do not count label bytes in activation transfers");
  cmd->add_option("--jobs", f.jobs, "Runs executed in parallel")->check(CLI::PositiveNumber);
}

int execute_plan(const std::string& path, PlanMode mode, const CommonFlags& flags, const CLI::App& cmd) {
  ExperimentPlan plan = load_config(path, mode);
  PlanOverrides o;
  if (cmd.get_option("--seed")->count() > 0) o.seed = flags.seed;
  if (!flags.out_dir.empty()) o.output_dir = flags.out_dir;
  o.concurrent_phase3 = flags.concurrent_phase3;
  o.no_label_bytes = flags.no_label_bytes;
  apply_overrides(plan, o);

  const PlanResult result = run_plan(plan, flags.jobs);
  for (const auto& c : result.cells) {
    std::printf("%-20s alpha=%-5g runs=%zu acc=%.4f +- %.4f bytes=%.0f rounds=%.0f\n", c.cell.c_str(), c.alpha,
                c.seeds.size(), c.acc_mean, c.acc_std, c.bytes_total, c.rounds_total);
  }
  for (const auto& f : result.failures) std::fprintf(stderr, "run failed: %s\n", f.c_str());
  std::printf("summary: %s/summary.json\n", plan.output_dir.c_str());
  return result.failures.empty() ? kExitOk : kExitRunFailure;
}

ModelSpec resolve_model(const std::string& name, std::size_t classes) {
  if (name == "toy-mlp") return toy_mlp(8, classes);
  if (name == "toy-cnn") return toy_cnn({1, 8, 8}, classes);
  if (std::filesystem::exists(name)) {
    const ExperimentPlan plan = load_config(name, PlanMode::single);
    return plan.model.build(plan.data.shape, plan.data.classes);
  }
  throw ConfigError("unknown model '" + name + "' (expected toy-mlp, toy-cnn, or a config file)");
}

int print_cost(const std::string& model_name, std::size_t split, std::uint64_t epochs, std::uint64_t samples,
               std::size_t classes, double ratio, bool labels) {
  const ModelSpec spec = resolve_model(model_name, classes);
  const CostModel cm = make_cost_model(spec, samples, ratio, labels);
  const std::size_t layers = spec.layer_count();
  if (split < 1 || split >= layers) {
    throw ConfigError("--split must lie in [1, " + std::to_string(layers) + ")");
  }
  std::printf("model %s (%zu layers), %llu samples per device, %llu epochs, label bytes %s\n", spec.name.c_str(),
              layers, static_cast<unsigned long long>(samples), static_cast<unsigned long long>(epochs),
              labels ? "on" : "off");
  std::printf("%-3s %-16s %-12s %-12s %-12s %-14s %-14s %-14s %-14s\n", "p", "layer", "s_device", "s_server",
              "s_aux", "act_per_sample", "uit_split", "uit", "sfl");
  for (std::size_t p = 1; p < layers; ++p) {
    const std::string aux = cm.has_aux(p) ? std::to_string(cm.aux_bytes(p)) : "-";
    const std::string uit = cm.has_aux(p) ? std::to_string(closed_form_comm(cm, Variant::uit, p, epochs)) : "-";
    std::printf("%-3zu %-16s %-12llu %-12llu %-12s %-14llu %-14llu %-14s %-14llu%s\n", p,
                describe(spec.layers[p - 1]).c_str(), static_cast<unsigned long long>(cm.device_bytes(p)),
                static_cast<unsigned long long>(cm.server_bytes(p)), aux.c_str(),
                static_cast<unsigned long long>(cm.layer_output_bytes[p - 1]),
                static_cast<unsigned long long>(split_point_comm(cm, p, epochs)), uit.c_str(),
                static_cast<unsigned long long>(closed_form_comm(cm, Variant::sfl, p, epochs)),
                p == split ? "  <" : "");
  }
  std::printf("fl (any p): %llu\n", static_cast<unsigned long long>(closed_form_comm(cm, Variant::fl, split, epochs)));
  if (cm.has_aux(split)) {
    std::printf("split %zu: sfl-uit=%lld fl-uit=%lld\n", split,
                static_cast<long long>(comm_difference_vs_sfl(cm, split, epochs)),
                static_cast<long long>(comm_difference_vs_fl(cm, split, epochs)));
    if (const auto n0 = fl_break_even_epochs(cm, split)) {
      std::printf("uit < fl from N0=%llu epochs\n", static_cast<unsigned long long>(*n0));
    } else {
      std::printf("uit never undercuts fl at this split (s_aux >= s_server)\n");
    }
  } else {
    std::printf("split %zu: no auxiliary network (server block has no dense/conv layer)\n", split);
  }
  return kExitOk;
}

int print_gradcheck(std::size_t cases, std::uint64_t seed, double tolerance) {
  bool ok = true;
  for (const auto& r : gradcheck_all(cases, seed)) {
    const bool pass = r.max_rel_error < tolerance;
    ok = ok && pass;
    std::printf("%-14s cases=%-4zu entries=%-6zu max_rel_err=%.3e %s\n", r.name.c_str(), r.cases, r.entries,
                r.max_rel_error, pass ? "PASS" : "FAIL");
  }
  return ok ? kExitOk : kExitRunFailure;
}

int print_partition_stats(double alpha, std::size_t devices, std::size_t samples, std::size_t classes,
                          std::uint64_t seed, double epsilon) {
  const Dataset ds = make_synthetic(samples, classes, SyntheticKind::gaussian_blobs, {2}, seed);
  const Partition part = dirichlet_partition(ds, devices, alpha, epsilon, seed);
  std::vector<std::size_t> all(ds.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto global = label_distribution(ds, all);
  std::printf("alpha=%g concentration=%.6g devices=%zu samples=%zu classes=%zu\n", alpha,
              alpha / (1.0 - alpha + epsilon), devices, samples, classes);
  std::printf("%-7s %-7s", "device", "n_k");
  for (std::size_t c = 0; c < classes; ++c) std::printf(" c%-6zu", c);
  std::printf(" tv\n");
  for (std::size_t k = 0; k < devices; ++k) {
    const auto idx = part.indices_of(k);
    const auto dist = label_distribution(ds, idx);
    std::printf("%-7zu %-7zu", k, part.counts[k]);
    for (std::size_t c = 0; c < classes; ++c) {
      std::size_t count = 0;
      for (const auto i : idx) count += static_cast<std::size_t>(ds.labels[i]) == c;
      std::printf(" %-7zu", count);
    }
    std::printf(" %.4f\n", total_variation(dist, global));
  }
  std::printf("mean_tv=%.4f\n", mean_partition_tv(ds, part));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"splitsim: split and federated training protocol simulator"};
  app.require_subcommand(1);

  CommonFlags run_flags, sweep_flags;
  std::string run_config, sweep_config;
  auto* run = app.add_subcommand("run", "Run each protocol of a config once (train.alpha, seed)");
  run->add_option("config", run_config, "Config file")->required();
  add_common(run, run_flags);
  auto* sweep = app.add_subcommand("sweep", "Run the sweep.alpha x protocols x sweep.seeds grid");
  sweep->add_option("config", sweep_config, "Config file")->required();
  add_common(sweep, sweep_flags);

  std::string model = "toy-cnn";
  std::size_t split = 1, classes = 4;
  std::uint64_t epochs = 100, samples = 450;
  double ratio = 0.5;
  bool cost_no_labels = false;
  auto* cost = app.add_subcommand("cost", "Closed-form communication per split point");
  cost->add_option("--model", model, "toy-mlp, toy-cnn, or a config file")->capture_default_str();
  cost->add_option("--split", split, "Split point p")->capture_default_str();
  cost->add_option("--epochs", epochs, "Training epochs N")->capture_default_str();
  cost->add_option("--samples", samples, "Samples per device")->capture_default_str();
  cost->add_option("--classes", classes, "Class count for builtin models")->capture_default_str();
  cost->add_option("--ratio", ratio, "Auxiliary dimension ratio")->capture_default_str();
  cost->add_flag("--no-label-bytes", cost_no_labels, "Do not count label bytes");

  std::size_t grad_cases = 20;
  std::uint64_t grad_seed = 7;
  double grad_tol = 1e-5;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every layer's backward pass");
  grad->add_option("--cases", grad_cases, "Random cases per layer kind")->capture_default_str();
  grad->add_option("--seed", grad_seed)->capture_default_str();
  grad->add_option("--tolerance", grad_tol)->capture_default_str();

  double ps_alpha = 0.33, ps_epsilon = 1e-9;
  std::size_t ps_devices = 8, ps_samples = 10000, ps_classes = 10;
  std::uint64_t ps_seed = 1;
  auto* pstats = app.add_subcommand("partition-stats", "Per-device label histograms of a Dirichlet partition");
  pstats->add_option("--alpha", ps_alpha)->required();
  pstats->add_option("--devices", ps_devices)->capture_default_str();
  pstats->add_option("--samples", ps_samples)->capture_default_str();
  pstats->add_option("--classes", ps_classes)->capture_default_str();
  pstats->add_option("--seed", ps_seed)->capture_default_str();
  pstats->add_option("--epsilon", ps_epsilon)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (run->parsed()) return execute_plan(run_config, PlanMode::single, run_flags, *run);
    if (sweep->parsed()) return execute_plan(sweep_config, PlanMode::sweep, sweep_flags, *sweep);
    if (cost->parsed()) return print_cost(model, split, epochs, samples, classes, ratio, !cost_no_labels);
    if (grad->parsed()) return print_gradcheck(grad_cases, grad_seed, grad_tol);
    if (pstats->parsed()) return print_partition_stats(ps_alpha, ps_devices, ps_samples, ps_classes, ps_seed, ps_epsilon);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRunFailure;
  }
  return kExitOk;
}
