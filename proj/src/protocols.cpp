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

#include "splitsim/protocols.hpp"

#include <algorithm>
#include <exception>
#include <optional>
#include <numeric>
#include <thread>

#include "activation_queue.hpp"
#include "splitsim/error.hpp"
#include "splitsim/rng.hpp"

namespace splitsim {

void TrainingConfig::validate() const {
  const auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (devices == 0) fail("devices must be >= 1");
  if (devices_per_round == 0 || devices_per_round > devices) fail("devices_per_round must lie in [1, devices]");
  if (split_point == 0) fail("split_point must be >= 1");
  if (!(aux_ratio > 0.0 && aux_ratio <= 1.0)) fail("aux_ratio must lie in (0, 1]");
  if (!(lr_device > 0.0f)) fail("lr_device must be positive");
  if (!(lr_server > 0.0f)) fail("lr_server must be positive");
  if (batch_device == 0 || batch_server == 0) fail("batch sizes must be positive");
  if (patience == 0) fail("patience must be positive");
  if (!(alpha > 0.0 && alpha <= 1.0)) fail("alpha must lie in (0, 1]");
  if (!(epsilon > 0.0)) fail("epsilon must be positive");
  if (!(bandwidth_bps > 0.0)) fail("bandwidth must be positive");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) fail("validation_fraction must lie in (0, 1)");
}

FederatedData prepare_data(const Dataset& full, const TrainingConfig& cfg) {
  cfg.validate();
  full.validate();
  FederatedData fd;
  auto [train, validation] = split_validation(full, cfg.validation_fraction, cfg.seed);
  fd.train = std::move(train);
  fd.validation = std::move(validation);
  fd.partition = dirichlet_partition(fd.train, cfg.devices, cfg.alpha, cfg.epsilon, cfg.seed);
  for (std::size_t k = 0; k < cfg.devices; ++k) {
    const auto idx = fd.partition.indices_of(k);
    fd.local.push_back(fd.train.subset(idx));
  }
  return fd;
}

std::string_view phase_name(Phase phase) {
  switch (phase) {
    case Phase::train:
      return "train";
    case Phase::device:
      return "device";
    case Phase::transfer:
      return "transfer";
    case Phase::server:
      return "server";
  }
  return "?";
}

// --- ActivationSet -------------------------------------------------------------

ActivationSet::ActivationSet(Shape activation_shape, std::size_t devices)
    : shape_(std::move(activation_shape)), row_(numel(shape_)), complete_(devices, false) {}

void ActivationSet::append(std::size_t device, const Tensor& activations, std::span<const Label> labels) {
  if (device >= complete_.size()) throw UsageError("activation from unknown device");
  if (complete_[device]) throw UsageError("device already completed its activation upload");
  if (activations.size() != labels.size() * row_) throw UsageError("activation batch does not match labels");
  values_.insert(values_.end(), activations.data().begin(), activations.data().end());
  labels_.insert(labels_.end(), labels.begin(), labels.end());
  origins_.insert(origins_.end(), labels.size(), device);
}

void ActivationSet::mark_complete(std::size_t device) { complete_.at(device) = true; }

bool ActivationSet::all_complete() const {
  return std::all_of(complete_.begin(), complete_.end(), [](bool c) { return c; });
}

std::vector<std::size_t> ActivationSet::records_of(std::size_t device) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < origins_.size(); ++i) {
    if (origins_[i] == device) out.push_back(i);
  }
  return out;
}

Tensor ActivationSet::gather(std::span<const std::size_t> indices) const {
  Shape shape{indices.size()};
  shape.insert(shape.end(), shape_.begin(), shape_.end());
  std::vector<float> out(indices.size() * row_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(indices[i] * row_), row_,
                out.begin() + static_cast<std::ptrdiff_t>(i * row_));
  }
  return Tensor(std::move(shape), std::move(out));
}

std::uint64_t RunReport::device_flops_total() const {
  return std::accumulate(device_flops.begin(), device_flops.end(), std::uint64_t{0});
}

// --- aggregation and sampling --------------------------------------------------

std::vector<Tensor> fedavg(std::span<const std::vector<Tensor>> models, std::span<const double> weights) {
  if (models.empty()) throw ProtocolError("nothing to aggregate");
  if (models.size() != weights.size()) throw ProtocolError("one weight per model required");
  double total = 0.0;
  for (const double w : weights) {
    if (!(w >= 0.0)) throw ProtocolError("aggregation weights must be non-negative");
    total += w;
  }
  if (!(total > 0.0)) throw ProtocolError("aggregation weights are all zero");
  const auto& first = models.front();
  for (const auto& m : models) {
    if (m.size() != first.size()) throw ProtocolError("models have different parameter counts");
    for (std::size_t t = 0; t < m.size(); ++t) {
      if (m[t].shape() != first[t].shape()) throw ProtocolError("models have incongruent parameter shapes");
    }
  }
  std::vector<Tensor> out;
  out.reserve(first.size());
  for (std::size_t t = 0; t < first.size(); ++t) {
    std::vector<double> acc(first[t].size(), 0.0);
    for (std::size_t k = 0; k < models.size(); ++k) {
      const double w = weights[k] / total;
      const auto src = models[k][t].data();
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += w * static_cast<double>(src[j]);
    }
    out.emplace_back(first[t].shape(), std::vector<float>(acc.begin(), acc.end()));
  }
  return out;
}

std::vector<std::size_t> device_sampling(std::uint64_t round, std::size_t devices, std::size_t per_round,
                                         std::uint64_t seed) {
  if (per_round > devices) throw ConfigError("cannot sample more devices than exist");
  std::vector<std::size_t> ids(devices);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  if (per_round == devices) return ids;
  Rng rng(derive_seed(seed, {kStreamSampling, round}));
  for (std::size_t i = 0; i < per_round; ++i) {
    const std::size_t remaining = devices - i;
    const auto j = i + std::min(static_cast<std::size_t>(uniform01(rng) * static_cast<double>(remaining)), remaining - 1);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(per_round);
  std::sort(ids.begin(), ids.end());
  return ids;
}

bool EarlyStopping::update(double accuracy) {
  if (accuracy > best_) {
    best_ = accuracy;
    stale_ = 0;
    return false;
  }
  return ++stale_ >= patience_;
}

// --- shared training machinery -------------------------------------------------

namespace {

constexpr std::size_t kEvalBatch = 256;

std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch)));
  }
  return out;
}

std::vector<Label> gather_labels(std::span<const Label> labels, std::span<const std::size_t> idx) {
  std::vector<Label> out;
  out.reserve(idx.size());
  for (const auto i : idx) out.push_back(labels[i]);
  return out;
}

/// Accuracy of a chain of blocks applied in order.
double chain_accuracy(std::initializer_list<const Block*> chain, const Dataset& ds) {
  if (ds.size() == 0) return 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ds.size(); start += kEvalBatch) {
    idx.resize(std::min(kEvalBatch, ds.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    Tensor x = gather_rows(ds.samples, idx);
    for (const Block* b : chain) x = b->predict(x);
    const auto pred = argmax_rows(x);
    for (std::size_t i = 0; i < idx.size(); ++i) correct += pred[i] == ds.labels[idx[i]] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

struct LossMeter {
  double sum = 0.0;
  std::size_t count = 0;
  void add(double loss, std::size_t n) {
    sum += loss * static_cast<double>(n);
    count += n;
  }
  double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
};

/// One SGD step on head(body(x)); `body` may be null. Returns the loss.
/// Both blocks see the same learning rate.
float chain_step(Block* body, Block& head, const Tensor& x, std::span<const Label> y, float lr) {
  if (body == nullptr) {
    auto fwd = head.forward(x);
    auto loss = softmax_xent(fwd.output, y);
    auto bwd = head.backward(fwd.cache, loss.grad);
    sgd_step(head.mutable_params(), bwd.param_grads, lr);
    return loss.loss;
  }
  auto fb = body->forward(x);
  auto fh = head.forward(fb.output);
  auto loss = softmax_xent(fh.output, y);
  auto bh = head.backward(fh.cache, loss.grad);
  auto bb = body->backward(fb.cache, bh.input_grad);
  sgd_step(head.mutable_params(), bh.param_grads, lr);
  sgd_step(body->mutable_params(), bb.param_grads, lr);
  return loss.loss;
}

/// Bookkeeping shared by all engines: ledger, time, FLOPs, epoch rows.
class Tracker {
 public:
  Tracker(RunReport& report, const TrainingConfig& cfg, std::size_t devices) : report_(report), cfg_(cfg) {
    report_.device_flops.assign(devices, 0);
  }

  void transfer(Direction dir, TransferKind kind, std::uint64_t bytes, std::uint64_t round, std::size_t device) {
    report_.ledger.record(dir, kind, bytes, round, device);
    report_.sim_time_s += simulated_time(bytes, cfg_.bandwidth_bps);
  }
  void device_flops(std::size_t device, std::uint64_t f) { report_.device_flops[device] += f; }
  void server_flops(std::uint64_t f) { report_.server_flops += f; }

  void close_epoch(Phase phase, double loss, double acc) {
    EpochRecord r;
    r.epoch = report_.epochs.size();
    r.phase = phase;
    r.train_loss = loss;
    r.val_accuracy = acc;
    r.cum_bytes_up = report_.ledger.bytes(Direction::up);
    r.cum_bytes_down = report_.ledger.bytes(Direction::down);
    r.cum_device_flops = report_.device_flops_total();
    r.cum_server_flops = report_.server_flops;
    r.sim_time_s = report_.sim_time_s;
    report_.epochs.push_back(r);
  }

 private:
  RunReport& report_;
  const TrainingConfig& cfg_;
};

std::vector<double> sample_weights(const FederatedData& data, std::span<const std::size_t> ids) {
  std::vector<double> w;
  for (const auto k : ids) w.push_back(static_cast<double>(data.local[k].size()));
  return w;
}

Rng shuffle_rng(const TrainingConfig& cfg, std::size_t device, std::size_t epoch) {
  return Rng(derive_seed(cfg.seed, {kStreamShuffle, device, epoch}));
}

void check_inputs(const TrainingConfig& cfg, const ModelSpec& spec, const FederatedData& data) {
  cfg.validate();
  spec.validate();
  if (data.devices() != cfg.devices) throw ConfigError("data is partitioned for a different device count");
  if (data.train.sample_shape() != spec.input_shape) throw ConfigError("dataset sample shape does not match model input");
  if (data.train.classes != spec.classes) throw ConfigError("dataset class count does not match model");
}

void check_split(const TrainingConfig& cfg, const ModelSpec& spec) {
  if (cfg.split_point >= spec.layer_count()) {
    throw ConfigError("split point " + std::to_string(cfg.split_point) + " outside [1, " +
                      std::to_string(spec.layer_count()) + ")");
  }
}

}  // namespace

double accuracy(const Block& model, const Dataset& ds) { return chain_accuracy({&model}, ds); }

// --- FL --------------------------------------------------------------------------

RunReport run_fl(const TrainingConfig& cfg, const ModelSpec& spec, const FederatedData& data) {
  check_inputs(cfg, spec, data);
  RunReport report;
  report.protocol = "fl";
  Tracker track(report, cfg, cfg.devices);
  Block global = spec.instantiate(cfg.seed);
  const std::uint64_t model_bytes = param_bytes(global);
  EarlyStopping stopper(cfg.patience);

  for (std::size_t epoch = 0; epoch < cfg.device_epochs; ++epoch) {
    const auto ids = device_sampling(epoch, cfg.devices, cfg.devices_per_round, cfg.seed);
    std::vector<std::vector<Tensor>> locals;
    LossMeter meter;
    for (const auto k : ids) {
      Block local = global;
      const Dataset& ds = data.local[k];
      Rng rng = shuffle_rng(cfg, k, epoch);
      for (const auto& idx : shuffled_batches(ds.size(), cfg.batch_device, rng)) {
        const auto y = gather_labels(ds.labels, idx);
        meter.add(chain_step(nullptr, local, gather_rows(ds.samples, idx), y, cfg.lr_device), idx.size());
        track.device_flops(k, flops(local, idx.size(), Pass::forward_backward));
      }
      track.transfer(Direction::up, TransferKind::model_up, model_bytes, epoch, k);
      locals.push_back(local.params());
    }
    global.mutable_params() = fedavg(locals, sample_weights(data, ids));
    for (const auto k : ids) track.transfer(Direction::down, TransferKind::model_down, model_bytes, epoch, k);

    const double acc = accuracy(global, data.validation);
    track.close_epoch(Phase::train, meter.mean(), acc);
    ++report.device_epochs_run;
    if (stopper.update(acc)) break;
  }
  report.final_accuracy = accuracy(global, data.validation);
  report.best_accuracy = std::max(stopper.best(), report.final_accuracy);
  report.model = std::move(global);
  return report;
}

// --- SFL -------------------------------------------------------------------------

RunReport run_sfl(const TrainingConfig& cfg, const ModelSpec& spec, const FederatedData& data) {
  check_inputs(cfg, spec, data);
  check_split(cfg, spec);
  RunReport report;
  report.protocol = "sfl";
  Tracker track(report, cfg, cfg.devices);
  auto [device, server] = split_model(spec, cfg.split_point, cfg.seed);
  const std::uint64_t device_bytes = param_bytes(device);
  const std::uint64_t act_bytes = activation_bytes_per_sample(spec, cfg.split_point);
  const std::uint64_t label_bytes = cfg.label_bytes ? kBytesPerLabel : 0;
  EarlyStopping stopper(cfg.patience);

  for (std::size_t epoch = 0; epoch < cfg.device_epochs; ++epoch) {
    const auto ids = device_sampling(epoch, cfg.devices, cfg.devices_per_round, cfg.seed);
    std::vector<std::vector<Tensor>> device_params, server_params;
    LossMeter meter;
    for (const auto k : ids) {
      Block dk = device;
      Block sk = server;  // one server block per participating device
      const Dataset& ds = data.local[k];
      Rng rng = shuffle_rng(cfg, k, epoch);
      for (const auto& idx : shuffled_batches(ds.size(), cfg.batch_device, rng)) {
        const auto y = gather_labels(ds.labels, idx);
        const std::uint64_t b = idx.size();
        auto fd = dk.forward(gather_rows(ds.samples, idx));
        track.transfer(Direction::up, TransferKind::activation, b * (act_bytes + label_bytes), epoch, k);
        auto fs = sk.forward(fd.output);
        auto loss = softmax_xent(fs.output, y);
        auto bs = sk.backward(fs.cache, loss.grad);
        track.transfer(Direction::down, TransferKind::gradient, b * act_bytes, epoch, k);
        auto bd = dk.backward(fd.cache, bs.input_grad);
        sgd_step(sk.mutable_params(), bs.param_grads, cfg.lr_server);
        sgd_step(dk.mutable_params(), bd.param_grads, cfg.lr_device);
        meter.add(loss.loss, idx.size());
        track.device_flops(k, flops(dk, b, Pass::forward_backward));
        track.server_flops(flops(sk, b, Pass::forward_backward));
      }
      track.transfer(Direction::up, TransferKind::model_up, device_bytes, epoch, k);
      device_params.push_back(dk.params());
      server_params.push_back(sk.params());
    }
    const auto w = sample_weights(data, ids);
    device.mutable_params() = fedavg(device_params, w);
    server.mutable_params() = fedavg(server_params, w);
    for (const auto k : ids) track.transfer(Direction::down, TransferKind::model_down, device_bytes, epoch, k);

    const double acc = chain_accuracy({&device, &server}, data.validation);
    track.close_epoch(Phase::train, meter.mean(), acc);
    ++report.device_epochs_run;
    if (stopper.update(acc)) break;
  }
  report.final_accuracy = chain_accuracy({&device, &server}, data.validation);
  report.best_accuracy = std::max(stopper.best(), report.final_accuracy);
  report.model = join_blocks(device, server);
  return report;
}

// --- UIT -------------------------------------------------------------------------

namespace {

struct DevicePhaseResult {
  Block device;
  Block server_init;
  AuxNet aux;
};

/// Device block + auxiliary head trained federatedly to convergence.
DevicePhaseResult uit_device_phase(const TrainingConfig& cfg, const ModelSpec& spec, const FederatedData& data,
                                   RunReport& report, Tracker& track) {
  auto [device, server] = split_model(spec, cfg.split_point, cfg.seed);
  AuxNet aux = generate_auxiliary(server, cfg.aux_ratio, spec.classes, cfg.seed);
  const std::uint64_t upload_bytes = param_bytes(device) + param_bytes(aux);
  EarlyStopping stopper(cfg.patience);

  for (std::size_t epoch = 0; epoch < cfg.device_epochs; ++epoch) {
    const auto ids = cfg.sample_device_phase ? device_sampling(epoch, cfg.devices, cfg.devices_per_round, cfg.seed)
                                             : device_sampling(epoch, cfg.devices, cfg.devices, cfg.seed);
    std::vector<std::vector<Tensor>> device_params, aux_params;
    LossMeter meter;
    for (const auto k : ids) {
      Block dk = device;
      Block ak = aux.block;
      const Dataset& ds = data.local[k];
      Rng rng = shuffle_rng(cfg, k, epoch);
      for (const auto& idx : shuffled_batches(ds.size(), cfg.batch_device, rng)) {
        const auto y = gather_labels(ds.labels, idx);
        meter.add(chain_step(&dk, ak, gather_rows(ds.samples, idx), y, cfg.lr_device), idx.size());
        track.device_flops(k, flops(dk, idx.size(), Pass::forward_backward) +
                                  flops(ak, idx.size(), Pass::forward_backward));
      }
      track.transfer(Direction::up, TransferKind::model_up, upload_bytes, epoch, k);
      device_params.push_back(dk.params());
      aux_params.push_back(ak.params());
    }
    const auto w = sample_weights(data, ids);
    device.mutable_params() = fedavg(device_params, w);
    aux.block.mutable_params() = fedavg(aux_params, w);
    for (const auto k : ids) track.transfer(Direction::down, TransferKind::model_down, upload_bytes, epoch, k);

    const double acc = chain_accuracy({&device, &aux.block}, data.validation);
    track.close_epoch(Phase::device, meter.mean(), acc);
    ++report.device_epochs_run;
    if (stopper.update(acc)) break;
  }
  report.device_phase_accuracy = chain_accuracy({&device, &aux.block}, data.validation);
  return {std::move(device), std::move(server), std::move(aux)};
}

/// Stream every device's activations (frozen device block) to the server.
/// In sequential mode the whole set is built before returning; the ledger
/// gets one activation entry per device.
ActivationSet uit_transfer_phase(const TrainingConfig& cfg, const Block& device, const FederatedData& data,
                                 RunReport& report, Tracker& track) {
  ActivationSet set(device.output_shape(), cfg.devices);
  const std::uint64_t per_sample =
      kBytesPerElement * numel(device.output_shape()) + (cfg.label_bytes ? kBytesPerLabel : 0);
  const std::uint64_t round = report.device_epochs_run;
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < cfg.devices; ++k) {
    const Dataset& ds = data.local[k];
    for (std::size_t start = 0; start < ds.size(); start += kEvalBatch) {
      idx.resize(std::min(kEvalBatch, ds.size() - start));
      std::iota(idx.begin(), idx.end(), start);
      const Tensor acts = device.predict(gather_rows(ds.samples, idx));
      set.append(k, acts, gather_labels(ds.labels, idx));
      track.device_flops(k, flops(device, idx.size(), Pass::forward));
    }
    set.mark_complete(k);
    track.transfer(Direction::up, TransferKind::activation, per_sample * ds.size(), round, k);
  }
  return set;
}

double train_server_epoch(Block& server, const ActivationSet& set, std::span<const std::size_t> records,
                          const TrainingConfig& cfg, Rng& rng, Tracker& track) {
  LossMeter meter;
  for (auto idx : shuffled_batches(records.size(), cfg.batch_server, rng)) {
    for (auto& i : idx) i = records[i];
    const auto y = gather_labels(set.labels(), idx);
    meter.add(chain_step(nullptr, server, set.gather(idx), y, cfg.lr_server), idx.size());
    track.server_flops(flops(server, idx.size(), Pass::forward_backward));
  }
  return meter.mean();
}

Rng server_rng(const TrainingConfig& cfg, std::size_t block, std::size_t epoch) {
  return Rng(derive_seed(cfg.seed, {kStreamServerShuffle, block, epoch}));
}

/// Concurrent transfer: a producer thread generates activations while the
/// server trains its first epoch on batches in arrival order. Returns the
/// mean loss of that first epoch.
double uit_concurrent_transfer(const TrainingConfig& cfg, const Block& device, Block& server,
                               const FederatedData& data, RunReport& report, Tracker& track) {
  ActivationSet set(device.output_shape(), cfg.devices);
  detail::ActivationQueue queue;
  std::vector<std::uint64_t> producer_flops(cfg.devices, 0);
  std::exception_ptr producer_error;
  std::thread producer([&] {
    try {
      std::vector<std::size_t> idx;
      for (std::size_t k = 0; k < cfg.devices; ++k) {
        const Dataset& ds = data.local[k];
        for (std::size_t start = 0; start < ds.size(); start += cfg.batch_server) {
          idx.resize(std::min(cfg.batch_server, ds.size() - start));
          std::iota(idx.begin(), idx.end(), start);
          detail::ActivationChunk chunk{k, device.predict(gather_rows(ds.samples, idx)),
                                        gather_labels(ds.labels, idx), start + idx.size() == ds.size()};
          producer_flops[k] += flops(device, idx.size(), Pass::forward);
          queue.push(std::move(chunk));
        }
      }
    } catch (...) {
      producer_error = std::current_exception();
    }
    queue.close();
  });

  const std::uint64_t per_sample =
      kBytesPerElement * numel(device.output_shape()) + (cfg.label_bytes ? kBytesPerLabel : 0);
  const std::uint64_t round = report.device_epochs_run;
  LossMeter meter;
  std::vector<std::size_t> received(cfg.devices, 0);
  while (auto chunk = queue.pop()) {
    set.append(chunk->device, chunk->activations, chunk->labels);
    received[chunk->device] += chunk->labels.size();
    meter.add(chain_step(nullptr, server, chunk->activations, chunk->labels, cfg.lr_server), chunk->labels.size());
    track.server_flops(flops(server, chunk->labels.size(), Pass::forward_backward));
    if (chunk->last) {
      set.mark_complete(chunk->device);
      track.transfer(Direction::up, TransferKind::activation, per_sample * received[chunk->device], round,
                     chunk->device);
    }
  }
  producer.join();
  if (producer_error) std::rethrow_exception(producer_error);
  for (std::size_t k = 0; k < cfg.devices; ++k) track.device_flops(k, producer_flops[k]);
  report.activations = std::move(set);
  return meter.mean();
}

}  // namespace

RunReport run_uit(const TrainingConfig& cfg, const ModelSpec& spec, const FederatedData& data) {
  check_inputs(cfg, spec, data);
  check_split(cfg, spec);
  RunReport report;
  report.protocol = "uit";
  Tracker track(report, cfg, cfg.devices);
  DevicePhaseResult dev = uit_device_phase(cfg, spec, data, report, track);
  const Block& device = dev.device;
  Block server = dev.server_init;

  EarlyStopping stopper(cfg.patience);
  std::size_t first_epoch = 0;
  if (cfg.concurrent_phase3 && cfg.server_epochs > 0) {
    const double loss = uit_concurrent_transfer(cfg, device, server, data, report, track);
    track.close_epoch(Phase::transfer, loss, report.device_phase_accuracy);
    const double acc = chain_accuracy({&device, &server}, data.validation);
    track.close_epoch(Phase::server, loss, acc);
    ++report.server_epochs_run;
    first_epoch = 1;
    if (stopper.update(acc)) first_epoch = cfg.server_epochs;
  } else {
    report.activations = uit_transfer_phase(cfg, device, data, report, track);
    const double last_loss = report.epochs.empty() ? 0.0 : report.epochs.back().train_loss;
    track.close_epoch(Phase::transfer, last_loss, report.device_phase_accuracy);
  }

  std::vector<std::size_t> all(report.activations.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (std::size_t epoch = first_epoch; epoch < cfg.server_epochs; ++epoch) {
    Rng rng = server_rng(cfg, 0, epoch);
    const double loss = train_server_epoch(server, report.activations, all, cfg, rng, track);
    const double acc = chain_accuracy({&device, &server}, data.validation);
    track.close_epoch(Phase::server, loss, acc);
    ++report.server_epochs_run;
    if (stopper.update(acc)) break;
  }
  report.final_accuracy = chain_accuracy({&device, &server}, data.validation);
  report.best_accuracy = std::max({stopper.best(), report.final_accuracy, report.device_phase_accuracy});
  report.model = join_blocks(device, server);
  report.aux = std::move(dev.aux);
  return report;
}

RunReport run_uit_no_consolidation(const TrainingConfig& cfg, const ModelSpec& spec, const FederatedData& data) {
  check_inputs(cfg, spec, data);
  check_split(cfg, spec);
  RunReport report;
  report.protocol = "uit-nc";
  Tracker track(report, cfg, cfg.devices);
  DevicePhaseResult dev = uit_device_phase(cfg, spec, data, report, track);
  const Block& device = dev.device;
  Block server = dev.server_init;

  report.activations = uit_transfer_phase(cfg, device, data, report, track);
  const double last_loss = report.epochs.empty() ? 0.0 : report.epochs.back().train_loss;
  track.close_epoch(Phase::transfer, last_loss, report.device_phase_accuracy);

  std::vector<std::vector<std::size_t>> per_device(cfg.devices);
  std::vector<double> weights(cfg.devices);
  for (std::size_t k = 0; k < cfg.devices; ++k) {
    per_device[k] = report.activations.records_of(k);
    weights[k] = static_cast<double>(per_device[k].size());
  }
  EarlyStopping stopper(cfg.patience);
  for (std::size_t epoch = 0; epoch < cfg.server_epochs; ++epoch) {
    std::vector<std::vector<Tensor>> server_params;
    LossMeter meter;
    for (std::size_t k = 0; k < cfg.devices; ++k) {
      Block sk = server;
      Rng rng = server_rng(cfg, k, epoch);
      meter.add(train_server_epoch(sk, report.activations, per_device[k], cfg, rng, track), per_device[k].size());
      server_params.push_back(sk.params());
    }
    server.mutable_params() = fedavg(server_params, weights);
    const double acc = chain_accuracy({&device, &server}, data.validation);
    track.close_epoch(Phase::server, meter.mean(), acc);
    ++report.server_epochs_run;
    if (stopper.update(acc)) break;
  }
  report.final_accuracy = chain_accuracy({&device, &server}, data.validation);
  report.best_accuracy = std::max({stopper.best(), report.final_accuracy, report.device_phase_accuracy});
  report.model = join_blocks(device, server);
  report.aux = std::move(dev.aux);
  return report;
}

// --- centralized reference ---------------------------------------------------------

RunReport run_centralized(const TrainingConfig& cfg, const ModelSpec& spec, const FederatedData& data,
                          CentralTarget target) {
  cfg.validate();
  spec.validate();
  RunReport report;
  report.protocol = target == CentralTarget::full_model ? "centralized" : "centralized-aux";
  Tracker track(report, cfg, 1);
  Block model = spec.instantiate(cfg.seed);
  std::optional<Block> device;
  AuxNet aux;
  if (target == CentralTarget::aux_head) {
    check_split(cfg, spec);
    auto [d, s] = split_model(model, cfg.split_point);
    aux = generate_auxiliary(s, cfg.aux_ratio, spec.classes, cfg.seed);
    device = std::move(d);
  }
  const auto evaluate = [&] {
    return device ? chain_accuracy({&*device, &aux.block}, data.validation) : accuracy(model, data.validation);
  };
  EarlyStopping stopper(cfg.patience);
  for (std::size_t epoch = 0; epoch < cfg.device_epochs; ++epoch) {
    Rng rng = shuffle_rng(cfg, 0, epoch);
    LossMeter meter;
    for (const auto& idx : shuffled_batches(data.train.size(), cfg.batch_device, rng)) {
      const auto y = gather_labels(data.train.labels, idx);
      const Tensor x = gather_rows(data.train.samples, idx);
      if (device) {
        meter.add(chain_step(&*device, aux.block, x, y, cfg.lr_device), idx.size());
        track.device_flops(0, flops(*device, idx.size(), Pass::forward_backward) +
                                  flops(aux.block, idx.size(), Pass::forward_backward));
      } else {
        meter.add(chain_step(nullptr, model, x, y, cfg.lr_device), idx.size());
        track.device_flops(0, flops(model, idx.size(), Pass::forward_backward));
      }
    }
    const double acc = evaluate();
    track.close_epoch(device ? Phase::device : Phase::train, meter.mean(), acc);
    ++report.device_epochs_run;
    if (stopper.update(acc)) break;
  }
  report.final_accuracy = evaluate();
  report.best_accuracy = std::max(stopper.best(), report.final_accuracy);
  if (device) {
    report.device_phase_accuracy = report.final_accuracy;
    report.model = std::move(*device);
    report.aux = std::move(aux);
  } else {
    report.model = std::move(model);
  }
  return report;
}

Protocol parse_protocol(std::string_view name) {
  if (name == "fl") return Protocol::fl;
  if (name == "sfl") return Protocol::sfl;
  if (name == "uit") return Protocol::uit;
  if (name == "uit-nc" || name == "uit_nc") return Protocol::uit_nc;
  if (name == "centralized") return Protocol::centralized;
  throw ConfigError("unknown protocol '" + std::string(name) + "'");
}

std::string_view protocol_name(Protocol p) {
  switch (p) {
    case Protocol::fl:
      return "fl";
    case Protocol::sfl:
      return "sfl";
    case Protocol::uit:
      return "uit";
    case Protocol::uit_nc:
      return "uit-nc";
    case Protocol::centralized:
      return "centralized";
  }
  return "?";
}

RunReport run_protocol(Protocol protocol, const TrainingConfig& cfg, const ModelSpec& spec,
                       const FederatedData& data) {
  switch (protocol) {
    case Protocol::fl:
      return run_fl(cfg, spec, data);
    case Protocol::sfl:
      return run_sfl(cfg, spec, data);
    case Protocol::uit:
      return run_uit(cfg, spec, data);
    case Protocol::uit_nc:
      return run_uit_no_consolidation(cfg, spec, data);
    case Protocol::centralized:
      return run_centralized(cfg, spec, data);
  }
  throw UsageError("unknown protocol");
}

}  // namespace splitsim
