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

#include "splitsim/harness.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "splitsim/error.hpp"

namespace splitsim {

Dataset DataSpec::generate(std::uint64_t run_seed) const {
  return make_synthetic(samples, classes, kind, shape, seed.value_or(run_seed), noise);
}

ModelSpec ModelChoice::build(const Shape& input_shape, std::size_t classes) const {
  if (name == "toy-mlp") {
    if (input_shape.size() != 1) throw ConfigError("toy-mlp needs a flat input shape");
    return toy_mlp(input_shape[0], classes);
  }
  if (name == "toy-cnn") return toy_cnn(input_shape, classes);
  if (name == "custom") {
    ModelSpec spec{"custom", input_shape, layers, classes};
    spec.validate();
    return spec;
  }
  throw ConfigError("unknown model '" + name + "'");
}

double sample_std(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  double mean = 0.0;
  for (const double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (const double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

double accuracy_std_across_alpha(const PlanResult& result, const std::string& protocol) {
  std::vector<double> means;
  for (const auto& c : result.cells) {
    if (c.protocol == protocol && !c.accuracies.empty()) means.push_back(c.acc_mean);
  }
  return sample_std(means);
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

struct RunOutcome {
  bool ok = false;
  std::string error;
  double accuracy = 0.0;
  std::uint64_t bytes = 0;
  std::uint64_t rounds = 0;
  std::uint64_t device_flops = 0;
  std::uint64_t server_flops = 0;
  double sim_time = 0.0;
  std::vector<std::string> files;
};

RunOutcome execute_run(const ExperimentPlan& plan, const PlanCell& cell, std::uint64_t seed) {
  RunOutcome out;
  try {
    TrainingConfig cfg = cell.config;
    cfg.seed = seed;
    const Dataset full = plan.data.generate(seed);
    const ModelSpec spec = plan.model.build(plan.data.shape, plan.data.classes);
    const FederatedData data = prepare_data(full, cfg);
    const RunReport report = run_protocol(cell.protocol, cfg, spec, data);

    std::vector<MetricsRow> rows;
    for (const auto& rec : report.epochs) rows.push_back({report.protocol, cfg.alpha, seed, rec});
    const std::string stem = plan.output_dir + "/" + cell.name + "_s" + std::to_string(seed);
    {
      std::ofstream csv(stem + ".csv");
      if (!csv) throw DataError("cannot write " + stem + ".csv");
      write_metrics_csv(csv, rows);
    }
    {
      std::ofstream ledger(stem + ".ledger.csv");
      if (!ledger) throw DataError("cannot write " + stem + ".ledger.csv");
      report.ledger.write_csv(ledger);
    }
    out.files = {stem + ".csv", stem + ".ledger.csv"};
    out.ok = true;
    out.accuracy = report.final_accuracy;
    out.bytes = report.ledger.total_bytes();
    out.rounds = report.ledger.round_count();
    out.device_flops = report.device_flops_total();
    out.server_flops = report.server_flops;
    out.sim_time = report.sim_time_s;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

}  // namespace

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << "protocol,alpha,seed,epoch,phase,loss,val_accuracy,cum_bytes_up,cum_bytes_down,cum_device_flops,"
         "cum_server_flops,sim_time_s\n";
  for (const auto& row : rows) {
    const auto& r = row.record;
    out << row.protocol << ',' << fmt(row.alpha) << ',' << row.seed << ',' << r.epoch << ',' << phase_name(r.phase)
        << ',' << fmt(r.train_loss) << ',' << fmt(r.val_accuracy) << ',' << r.cum_bytes_up << ',' << r.cum_bytes_down
        << ',' << r.cum_device_flops << ',' << r.cum_server_flops << ',' << fmt(r.sim_time_s) << '\n';
  }
}

PlanResult run_plan(const ExperimentPlan& plan, std::size_t jobs) {
  PlanResult result;
  struct Job {
    std::size_t cell;
    std::uint64_t seed;
  };
  std::vector<Job> queue;
  for (std::size_t c = 0; c < plan.cells.size(); ++c) {
    for (const auto s : plan.cells[c].seeds) queue.push_back({c, s});
  }
  std::filesystem::create_directories(plan.output_dir);

  std::vector<RunOutcome> outcomes(queue.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < queue.size(); i = next++) {
      outcomes[i] = execute_run(plan, plan.cells[queue[i].cell], queue[i].seed);
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, queue.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::size_t i = 0;
  for (const auto& cell : plan.cells) {
    CellSummary s;
    s.cell = cell.name;
    s.protocol = std::string(protocol_name(cell.protocol));
    s.alpha = cell.config.alpha;
    std::size_t ok = 0;
    for (const auto seed : cell.seeds) {
      const RunOutcome& o = outcomes[i++];
      if (!o.ok) {
        result.failures.push_back(cell.name + " seed=" + std::to_string(seed) + ": " + o.error);
        continue;
      }
      ++ok;
      s.seeds.push_back(seed);
      s.accuracies.push_back(o.accuracy);
      s.bytes_total += static_cast<double>(o.bytes);
      s.rounds_total += static_cast<double>(o.rounds);
      s.device_flops += static_cast<double>(o.device_flops);
      s.server_flops += static_cast<double>(o.server_flops);
      s.sim_time_s += o.sim_time;
      result.files.insert(result.files.end(), o.files.begin(), o.files.end());
    }
    if (ok > 0) {
      const double n = static_cast<double>(ok);
      double sum = 0.0;
      for (const double a : s.accuracies) sum += a;
      s.acc_mean = sum / n;
      s.acc_std = sample_std(s.accuracies);
      s.bytes_total /= n;
      s.rounds_total /= n;
      s.device_flops /= n;
      s.server_flops /= n;
      s.sim_time_s /= n;
    }
    result.cells.push_back(std::move(s));
  }

  const std::string path = plan.output_dir + "/summary.json";
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << summary_json(result);
  result.files.push_back(path);
  return result;
}

std::string summary_json(const PlanResult& result) {
  using nlohmann::ordered_json;
  ordered_json cells = ordered_json::array();
  std::vector<std::string> protocols;
  for (const auto& c : result.cells) {
    cells.push_back({{"cell", c.cell},
                     {"protocol", c.protocol},
                     {"alpha", c.alpha},
                     {"seeds", c.seeds},
                     {"acc_mean", c.acc_mean},
                     {"acc_std", c.acc_std},
                     {"bytes_total", c.bytes_total},
                     {"rounds_total", c.rounds_total},
                     {"device_flops", c.device_flops},
                     {"server_flops", c.server_flops},
                     {"sim_time_s", c.sim_time_s}});
    if (std::find(protocols.begin(), protocols.end(), c.protocol) == protocols.end()) protocols.push_back(c.protocol);
  }
  ordered_json per_protocol = ordered_json::object();
  for (const auto& p : protocols) per_protocol[p] = {{"acc_std_across_alpha", accuracy_std_across_alpha(result, p)}};
  ordered_json doc = {{"cells", cells}, {"protocols", per_protocol}, {"failures", result.failures}};
  return doc.dump(2) + "\n";
}

}  // namespace splitsim
