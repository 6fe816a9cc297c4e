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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "splitsim/block.hpp"
#include "splitsim/data.hpp"
#include "splitsim/model.hpp"
#include "splitsim/simnet.hpp"

namespace splitsim {

struct TrainingConfig {
  std::size_t devices = 8;            // K
  std::size_t devices_per_round = 8;  // m
  std::size_t split_point = 1;        // p
  double aux_ratio = 0.5;
  float lr_device = 0.05f;
  float lr_server = 0.05f;
  /// Epoch cap for FL, SFL and the device phase of UIT.
  std::size_t device_epochs = 40;
  /// Epoch cap for the server phase of UIT.
  std::size_t server_epochs = 40;
  std::size_t batch_device = 8;
  std::size_t batch_server = 8;
  std::size_t patience = 15;
  double alpha = 0.33;
  double epsilon = 1e-9;
  std::uint64_t seed = 1;
  double bandwidth_bps = 50e6;
  double validation_fraction = 0.1;
  /// Count 8 bytes per label alongside every activation sent up.
  bool label_bytes = true;
  /// UIT device phase samples m devices per epoch; when false all K train
  /// every epoch.
  bool sample_device_phase = true;
  /// Overlap activation upload with the first server epoch.
  bool concurrent_phase3 = false;

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;
};

/// Train/validation data plus the device partition of the training part.
struct FederatedData {
  Dataset train;
  Dataset validation;
  Partition partition;
  std::vector<Dataset> local;  // per-device datasets, partition order

  std::size_t devices() const { return local.size(); }
};

/// Hold out an IID validation slice and Dirichlet-partition the rest.
FederatedData prepare_data(const Dataset& full, const TrainingConfig& cfg);

enum class Phase { train, device, transfer, server };
std::string_view phase_name(Phase phase);

struct EpochRecord {
  std::size_t epoch = 0;
  Phase phase = Phase::train;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  std::uint64_t cum_bytes_up = 0;
  std::uint64_t cum_bytes_down = 0;
  std::uint64_t cum_device_flops = 0;
  std::uint64_t cum_server_flops = 0;
  double sim_time_s = 0.0;
};

/// Server-side store of the consolidated activations: one record per
/// training sample, grouped by originating device.
class ActivationSet {
 public:
  ActivationSet() = default;
  ActivationSet(Shape activation_shape, std::size_t devices);

  void append(std::size_t device, const Tensor& activations, std::span<const Label> labels);
  void mark_complete(std::size_t device);
  bool complete(std::size_t device) const { return complete_.at(device); }
  bool all_complete() const;

  std::size_t size() const { return labels_.size(); }
  const Shape& activation_shape() const { return shape_; }
  const std::vector<float>& values() const { return values_; }
  const std::vector<Label>& labels() const { return labels_; }
  const std::vector<std::size_t>& origins() const { return origins_; }
  /// Record indices contributed by `device`, in arrival order.
  std::vector<std::size_t> records_of(std::size_t device) const;
  /// Records `indices` as a batch tensor.
  Tensor gather(std::span<const std::size_t> indices) const;

 private:
  Shape shape_;
  std::size_t row_ = 0;
  std::vector<float> values_;
  std::vector<Label> labels_;
  std::vector<std::size_t> origins_;
  std::vector<bool> complete_;
};

struct RunReport {
  std::string protocol;
  std::vector<EpochRecord> epochs;
  double final_accuracy = 0.0;
  double best_accuracy = 0.0;
  CommLedger ledger;
  std::vector<std::uint64_t> device_flops;  // per device
  std::uint64_t server_flops = 0;
  double sim_time_s = 0.0;
  std::size_t device_epochs_run = 0;
  std::size_t server_epochs_run = 0;
  /// UIT only: validation accuracy of device block + auxiliary head at freeze.
  double device_phase_accuracy = 0.0;
  Block model;         // final full model
  AuxNet aux;          // UIT only
  ActivationSet activations;  // UIT only

  std::uint64_t device_flops_total() const;
};

/// Sample-count-weighted mean of congruent parameter lists, summed in list
/// order. Throws ProtocolError on incongruent shapes or invalid weights.
std::vector<Tensor> fedavg(std::span<const std::vector<Tensor>> models, std::span<const double> weights);

/// m distinct device ids out of K, uniform without replacement, sorted
/// ascending; deterministic in (seed, round).
std::vector<std::size_t> device_sampling(std::uint64_t round, std::size_t devices, std::size_t per_round,
                                         std::uint64_t seed);

/// Training halts once validation accuracy has not improved for `patience`
/// consecutive epochs.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}
  /// Returns true when training should stop after this epoch.
  bool update(double accuracy);
  double best() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t stale_ = 0;
  double best_ = -1.0;
};

double accuracy(const Block& model, const Dataset& ds);

RunReport run_fl(const TrainingConfig& cfg, const ModelSpec& spec, const FederatedData& data);
RunReport run_sfl(const TrainingConfig& cfg, const ModelSpec& spec, const FederatedData& data);
RunReport run_uit(const TrainingConfig& cfg, const ModelSpec& spec, const FederatedData& data);
/// UIT ablation: the server keeps K activation sets and trains K server
/// blocks, FedAvg-aggregated every epoch.
RunReport run_uit_no_consolidation(const TrainingConfig& cfg, const ModelSpec& spec, const FederatedData& data);

enum class CentralTarget { full_model, aux_head };

/// Plain minibatch SGD on the whole training set with the same shuffling
/// stream device 0 uses, for single-device equivalence checks. `aux_head`
/// trains the device block with its auxiliary network only.
RunReport run_centralized(const TrainingConfig& cfg, const ModelSpec& spec, const FederatedData& data,
                          CentralTarget target = CentralTarget::full_model);

enum class Protocol { fl, sfl, uit, uit_nc, centralized };
Protocol parse_protocol(std::string_view name);
std::string_view protocol_name(Protocol p);
RunReport run_protocol(Protocol protocol, const TrainingConfig& cfg, const ModelSpec& spec, const FederatedData& data);

}  // namespace splitsim
