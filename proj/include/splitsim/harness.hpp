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

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "splitsim/data.hpp"
#include "splitsim/model.hpp"
#include "splitsim/protocols.hpp"

namespace splitsim {

struct DataSpec {
  SyntheticKind kind = SyntheticKind::gaussian_blobs;
  std::size_t samples = 4000;
  std::size_t classes = 4;
  Shape shape{8};
  double noise = 1.0;
  /// Fixed dataset seed; when unset each run draws its data from the run seed.
  std::optional<std::uint64_t> seed;

  Dataset generate(std::uint64_t run_seed) const;
};

/// Builtin name ("toy-mlp", "toy-cnn") or an explicit layer list.
struct ModelChoice {
  std::string name = "toy-mlp";
  std::vector<LayerSpec> layers;  // used when name == "custom"

  ModelSpec build(const Shape& input_shape, std::size_t classes) const;
};

/// One sweep cell: a protocol at one alpha, repeated over seeds.
struct PlanCell {
  std::string name;
  Protocol protocol = Protocol::uit;
  TrainingConfig config;  // alpha set for the cell; seed replaced per run
  std::vector<std::uint64_t> seeds;
};

struct ExperimentPlan {
  DataSpec data;
  ModelChoice model;
  std::vector<PlanCell> cells;
  std::string output_dir = "results";
};

enum class PlanMode {
  single,  // train.alpha and seed only
  sweep,   // sweep.alpha x protocols x sweep.seeds
};

/// Parse a `key = value` config file with dotted keys (`#` starts a
/// comment). Unknown keys, duplicate keys and invalid values raise
/// ConfigError with `path:line:` context.
ExperimentPlan load_config(const std::string& path, PlanMode mode = PlanMode::sweep);
ExperimentPlan parse_config(std::istream& in, const std::string& origin, PlanMode mode = PlanMode::sweep);

/// Overrides applied on top of a loaded plan (CLI flags).
struct PlanOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  bool concurrent_phase3 = false;
  bool no_label_bytes = false;
};
void apply_overrides(ExperimentPlan& plan, const PlanOverrides& overrides);

struct MetricsRow {
  std::string protocol;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  EpochRecord record;
};

struct CellSummary {
  std::string cell;
  std::string protocol;
  double alpha = 0.0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> accuracies;  // final accuracy per seed
  double acc_mean = 0.0;
  double acc_std = 0.0;            // sample std over seeds
  double bytes_total = 0.0;        // per-run mean
  double rounds_total = 0.0;       // per-run mean
  double device_flops = 0.0;       // per-run mean
  double server_flops = 0.0;       // per-run mean
  double sim_time_s = 0.0;         // per-run mean
};

struct PlanResult {
  std::vector<CellSummary> cells;
  std::vector<std::string> failures;  // "cell seed=..: message"
  std::vector<std::string> files;     // files written
};

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double sample_std(const std::vector<double>& values);

/// Std across alpha of the per-cell mean accuracy, for one protocol.
double accuracy_std_across_alpha(const PlanResult& result, const std::string& protocol);

/// Execute every cell and seed. Writes one metrics CSV and one ledger CSV per
/// run plus `summary.json` into plan.output_dir. Failed runs are recorded and
/// skipped. `jobs` > 1 runs independent runs on worker threads; outputs are
/// identical to the sequential order.
PlanResult run_plan(const ExperimentPlan& plan, std::size_t jobs = 1);

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);
std::string summary_json(const PlanResult& result);

}  // namespace splitsim
