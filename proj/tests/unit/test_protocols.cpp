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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "splitsim/error.hpp"
#include "splitsim/protocols.hpp"

using namespace splitsim;

namespace {

TrainingConfig small_config(std::size_t devices = 4, std::size_t epochs = 3) {
  TrainingConfig cfg;
  cfg.devices = devices;
  cfg.devices_per_round = devices;
  cfg.device_epochs = epochs;
  cfg.server_epochs = epochs;
  cfg.patience = 100;
  cfg.batch_device = 8;
  cfg.batch_server = 16;
  cfg.alpha = 0.5;
  cfg.seed = 3;
  return cfg;
}

struct Fixture {
  ModelSpec spec;
  FederatedData data;
};

Fixture mlp_fixture(const TrainingConfig& cfg, std::size_t n = 400) {
  return {toy_mlp(8, 4), prepare_data(make_synthetic(n, 4, SyntheticKind::gaussian_blobs, {8}, cfg.seed), cfg)};
}

Fixture cnn_fixture(const TrainingConfig& cfg, std::size_t n = 300) {
  return {toy_cnn({1, 8, 8}, 4),
          prepare_data(make_synthetic(n, 4, SyntheticKind::image_patches, {1, 8, 8}, cfg.seed), cfg)};
}

std::size_t iterations(const FederatedData& data, std::size_t batch) {
  std::size_t it = 0;
  for (const auto& ds : data.local) it += (ds.size() + batch - 1) / batch;
  return it;
}

std::vector<double> flatten(const std::vector<Tensor>& params) {
  std::vector<double> out;
  for (const auto& t : params) out.insert(out.end(), t.storage().begin(), t.storage().end());
  return out;
}

}  // namespace

// --- FedAvg -------------------------------------------------------------------

TEST(FedAvg, EqualWeightsSymmetric) {
  const std::vector<std::vector<Tensor>> models{{Tensor({2}, {0, 2})}, {Tensor({2}, {2, 0})}};
  const std::vector<double> w{1, 1};
  EXPECT_EQ(fedavg(models, w)[0].storage(), (std::vector<float>{1, 1}));
}

TEST(FedAvg, IdenticalModelsAreFixedPointBitwise) {
  const Block m = toy_cnn({1, 8, 8}, 4).instantiate(5);
  const std::vector<std::vector<Tensor>> models(5, m.params());
  for (const auto& w : {std::vector<double>{1, 1, 1, 1, 1}, std::vector<double>{3, 17, 1, 250, 9},
                        std::vector<double>{0.1, 0.2, 0.3, 0.4, 1e-3}}) {
    EXPECT_EQ(fedavg(models, w), m.params());
  }
}

TEST(FedAvg, MatchesBruteForceWeightedMean) {
  std::mt19937_64 rng(12);
  const ModelSpec spec = toy_mlp(8, 4);
  std::vector<std::vector<Tensor>> models;
  std::vector<std::vector<double>> flat;
  for (int k = 0; k < 3; ++k) {
    models.push_back(spec.instantiate(100 + k).params());
    flat.push_back(flatten(models.back()));
  }
  const std::vector<double> w{1, 2, 3};
  const auto avg = flatten(fedavg(models, w));
  const auto ref = oracle::weighted_mean(flat, w);
  ASSERT_EQ(avg.size(), ref.size());
  for (std::size_t j = 0; j < ref.size(); ++j) EXPECT_NEAR(avg[j], ref[j], 1e-6);
}

TEST(FedAvg, InvalidInputsRejected) {
  const std::vector<std::vector<Tensor>> models{{Tensor({2})}, {Tensor({3})}};
  EXPECT_THROW(fedavg(models, std::vector<double>{1, 1}), ProtocolError);
  const std::vector<std::vector<Tensor>> ok{{Tensor({2})}, {Tensor({2})}};
  EXPECT_THROW(fedavg(ok, std::vector<double>{1}), ProtocolError);
  EXPECT_THROW(fedavg(ok, std::vector<double>{0, 0}), ProtocolError);
  EXPECT_THROW(fedavg(ok, std::vector<double>{-1, 2}), ProtocolError);
  EXPECT_THROW(fedavg({}, {}), ProtocolError);
}

// --- device sampling ----------------------------------------------------------

TEST(Sampling, AllDevicesWhenMEqualsK) {
  EXPECT_EQ(device_sampling(7, 5, 5, 1), (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(Sampling, DeterministicDistinctSorted) {
  const auto a = device_sampling(42, 12, 5, 9);
  EXPECT_EQ(a, device_sampling(42, 12, 5, 9));
  EXPECT_EQ(a.size(), 5u);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(std::adjacent_find(a.begin(), a.end()), a.end());
  EXPECT_THROW(device_sampling(0, 3, 4, 1), ConfigError);
}

TEST(Sampling, FrequenciesWithinThreeSigmaOfBinomial) {
  const std::size_t k = 10, m = 3, rounds = 10000;
  std::vector<std::size_t> hits(k, 0);
  for (std::size_t r = 0; r < rounds; ++r) {
    for (const auto d : device_sampling(r, k, m, 77)) ++hits[d];
  }
  const double p = static_cast<double>(m) / k;
  const double sigma = std::sqrt(rounds * p * (1 - p));
  for (std::size_t d = 0; d < k; ++d) EXPECT_NEAR(static_cast<double>(hits[d]), rounds * p, 3 * sigma) << d;
}

// --- early stopping -----------------------------------------------------------

TEST(EarlyStop, StopsAfterPatienceNonImprovingEpochs) {
  EarlyStopping s(3);
  EXPECT_FALSE(s.update(0.5));
  EXPECT_FALSE(s.update(0.6));
  EXPECT_FALSE(s.update(0.6));
  EXPECT_FALSE(s.update(0.55));
  EXPECT_TRUE(s.update(0.59));
  EXPECT_DOUBLE_EQ(s.best(), 0.6);
}

TEST(EarlyStop, TrainingHonoursPatience) {
  TrainingConfig cfg = small_config(2, 60);
  cfg.patience = 2;
  const Fixture f = mlp_fixture(cfg);
  const RunReport r = run_fl(cfg, f.spec, f.data);
  EXPECT_LT(r.device_epochs_run, 60u);
  EXPECT_EQ(r.epochs.size(), r.device_epochs_run);
}

// --- ledger versus closed form ------------------------------------------------

TEST(Ledger, EveryVariantMatchesClosedForm) {
  for (const std::size_t n : {1u, 3u}) {
    const TrainingConfig cfg = small_config(4, n);
    for (const Fixture& f : {mlp_fixture(cfg), cnn_fixture(cfg)}) {
      const CostModel cm = make_cost_model(f.spec, f.data.train.size(), cfg.aux_ratio, cfg.label_bytes);
      EXPECT_EQ(run_fl(cfg, f.spec, f.data).ledger.total_bytes(), closed_form_comm(cm, Variant::fl, 1, n, 4));
      EXPECT_EQ(run_sfl(cfg, f.spec, f.data).ledger.total_bytes(), closed_form_comm(cm, Variant::sfl, 1, n, 4));
      EXPECT_EQ(run_uit(cfg, f.spec, f.data).ledger.total_bytes(), closed_form_comm(cm, Variant::uit, 1, n, 4));
    }
  }
}

TEST(Ledger, FlIsTwoModelsPerParticipantPerEpoch) {
  TrainingConfig cfg = small_config(6, 4);
  cfg.devices_per_round = 2;
  const Fixture f = mlp_fixture(cfg);
  const RunReport r = run_fl(cfg, f.spec, f.data);
  EXPECT_EQ(r.ledger.total_bytes(), 2u * 4 * 2 * param_bytes(f.spec.instantiate(0)));
  EXPECT_EQ(r.ledger.round_count(), 2u * 4 * 2);
}

TEST(Ledger, SflOneGradientPerIteration) {
  const TrainingConfig cfg = small_config(4, 2);
  const Fixture f = mlp_fixture(cfg);
  const RunReport r = run_sfl(cfg, f.spec, f.data);
  const std::size_t it = iterations(f.data, cfg.batch_device);
  EXPECT_EQ(r.ledger.count(TransferKind::gradient), 2 * it);
  EXPECT_EQ(r.ledger.count(TransferKind::activation), 2 * it);
}

TEST(Ledger, UitSendsNoGradients) {
  const TrainingConfig cfg = small_config(4, 3);
  const Fixture f = cnn_fixture(cfg);
  const RunReport r = run_uit(cfg, f.spec, f.data);
  EXPECT_EQ(r.ledger.count(TransferKind::gradient), 0u);
  for (const auto& e : r.ledger.entries()) EXPECT_NE(e.kind, TransferKind::gradient);
}

TEST(Ledger, UitActivationsShippedOnceIndependentOfServerEpochs) {
  TrainingConfig cfg = small_config(4, 2);
  cfg.validation_fraction = 0.2;
  const Fixture f = cnn_fixture(cfg, 1250);
  ASSERT_EQ(f.data.train.size(), 1000u);
  const std::uint64_t expected = activation_bytes(f.spec, 1, 1000);
  for (const std::size_t server_epochs : {1u, 5u}) {
    cfg.server_epochs = server_epochs;
    const RunReport r = run_uit(cfg, f.spec, f.data);
    EXPECT_EQ(r.ledger.bytes(TransferKind::activation), expected);
    EXPECT_EQ(r.ledger.count(TransferKind::activation), cfg.devices);
  }
}

TEST(Ledger, UitDevicePhaseCost) {
  const TrainingConfig cfg = small_config(4, 3);
  const Fixture f = mlp_fixture(cfg);
  const RunReport r = run_uit(cfg, f.spec, f.data);
  const auto [device, server] = split_model(f.spec, 1, 0);
  const std::uint64_t s = param_bytes(device) + param_bytes(generate_auxiliary(server, 0.5, 4, 0));
  EXPECT_EQ(r.ledger.bytes(TransferKind::model_up) + r.ledger.bytes(TransferKind::model_down),
            2u * r.device_epochs_run * cfg.devices * s);
}

TEST(Ledger, NoLabelBytesOption) {
  TrainingConfig cfg = small_config(4, 2);
  cfg.label_bytes = false;
  const Fixture f = mlp_fixture(cfg);
  const CostModel cm = make_cost_model(f.spec, f.data.train.size(), 0.5, false);
  EXPECT_EQ(run_sfl(cfg, f.spec, f.data).ledger.total_bytes(), closed_form_comm(cm, Variant::sfl, 1, 2, 4));
  EXPECT_EQ(run_uit(cfg, f.spec, f.data).ledger.total_bytes(), closed_form_comm(cm, Variant::uit, 1, 2, 4));
}

// --- protocol behaviour -------------------------------------------------------

TEST(Uit, RegeneratedActivationsAreBitIdentical) {
  const TrainingConfig cfg = small_config(3, 2);
  const Fixture f = cnn_fixture(cfg);
  const RunReport r = run_uit(cfg, f.spec, f.data);
  const Block device = r.model.slice(0, cfg.split_point);
  for (int rep = 0; rep < 3; ++rep) {
    std::vector<float> regenerated;
    for (const auto& ds : f.data.local) {
      const Tensor a = device.predict(ds.samples);
      regenerated.insert(regenerated.end(), a.storage().begin(), a.storage().end());
    }
    EXPECT_EQ(regenerated, r.activations.values());
  }
}

TEST(Uit, ConcurrentTransferKeepsLedgerAndActivations) {
  TrainingConfig cfg = small_config(4, 3);
  const Fixture f = mlp_fixture(cfg);
  const RunReport seq = run_uit(cfg, f.spec, f.data);
  cfg.concurrent_phase3 = true;
  const RunReport con = run_uit(cfg, f.spec, f.data);
  EXPECT_EQ(con.ledger, seq.ledger);
  EXPECT_EQ(con.activations.values(), seq.activations.values());
  EXPECT_EQ(con.activations.labels(), seq.activations.labels());
  EXPECT_EQ(con.server_epochs_run, cfg.server_epochs);
  EXPECT_EQ(run_uit(cfg, f.spec, f.data).model.params(), con.model.params());
}

TEST(Uit, TrainsPastDevicePhaseOnEasyData) {
  TrainingConfig cfg = small_config(4, 10);
  const Fixture f = mlp_fixture(cfg, 800);
  const RunReport r = run_uit(cfg, f.spec, f.data);
  EXPECT_GT(r.final_accuracy, 0.9);
  EXPECT_EQ(r.server_epochs_run, 10u);
  EXPECT_EQ(r.epochs.size(), r.device_epochs_run + 1 + r.server_epochs_run);
}

TEST(NoConsolidation, SingleDeviceMatchesUit) {
  const TrainingConfig cfg = small_config(1, 4);
  const Fixture f = mlp_fixture(cfg);
  const RunReport a = run_uit(cfg, f.spec, f.data);
  const RunReport b = run_uit_no_consolidation(cfg, f.spec, f.data);
  EXPECT_EQ(a.final_accuracy, b.final_accuracy);
  EXPECT_EQ(a.model.params(), b.model.params());
}

TEST(NoConsolidation, LedgerIdenticalToUit) {
  const TrainingConfig cfg = small_config(4, 3);
  const Fixture f = mlp_fixture(cfg);
  EXPECT_EQ(run_uit(cfg, f.spec, f.data).ledger, run_uit_no_consolidation(cfg, f.spec, f.data).ledger);
}

TEST(Fl, SingleDeviceEqualsCentralizedBitwise) {
  const TrainingConfig cfg = small_config(1, 3);
  const Fixture f = mlp_fixture(cfg);
  const RunReport fl = run_fl(cfg, f.spec, f.data);
  const RunReport c = run_centralized(cfg, f.spec, f.data);
  EXPECT_EQ(fl.model.params(), c.model.params());
  EXPECT_EQ(fl.final_accuracy, c.final_accuracy);
}

TEST(Fl, ZeroEpochsLeaveInitialModel) {
  const TrainingConfig cfg = small_config(2, 0);
  const Fixture f = mlp_fixture(cfg);
  const RunReport r = run_fl(cfg, f.spec, f.data);
  EXPECT_EQ(r.model.params(), f.spec.instantiate(cfg.seed).params());
  EXPECT_EQ(r.ledger.total_bytes(), 0u);
}

TEST(Sfl, SingleDeviceMatchesFlWithEqualRates) {
  const TrainingConfig cfg = small_config(1, 3);
  const Fixture f = mlp_fixture(cfg);
  const RunReport sfl = run_sfl(cfg, f.spec, f.data);
  const RunReport fl = run_fl(cfg, f.spec, f.data);
  EXPECT_NEAR(sfl.final_accuracy, fl.final_accuracy, 0.01);
  EXPECT_EQ(flops(sfl.model, 1, Pass::forward), flops(fl.model, 1, Pass::forward));
}

TEST(Determinism, RepeatedRunsIdentical) {
  TrainingConfig cfg = small_config(4, 3);
  cfg.devices_per_round = 2;
  const Fixture f = mlp_fixture(cfg);
  for (const auto p : {Protocol::fl, Protocol::sfl, Protocol::uit, Protocol::uit_nc}) {
    const RunReport a = run_protocol(p, cfg, f.spec, f.data);
    const RunReport b = run_protocol(p, cfg, f.spec, f.data);
    EXPECT_EQ(a.ledger, b.ledger) << protocol_name(p);
    EXPECT_EQ(a.model.params(), b.model.params()) << protocol_name(p);
    EXPECT_EQ(a.final_accuracy, b.final_accuracy) << protocol_name(p);
    EXPECT_EQ(a.device_flops, b.device_flops) << protocol_name(p);
  }
}

TEST(Reports, CumulativeColumnsMonotone) {
  const TrainingConfig cfg = small_config(4, 3);
  const Fixture f = mlp_fixture(cfg);
  const RunReport r = run_uit(cfg, f.spec, f.data);
  for (std::size_t i = 1; i < r.epochs.size(); ++i) {
    EXPECT_GE(r.epochs[i].cum_bytes_up, r.epochs[i - 1].cum_bytes_up);
    EXPECT_GE(r.epochs[i].cum_server_flops, r.epochs[i - 1].cum_server_flops);
    EXPECT_GE(r.epochs[i].sim_time_s, r.epochs[i - 1].sim_time_s);
  }
  EXPECT_EQ(r.epochs.back().cum_bytes_up + r.epochs.back().cum_bytes_down, r.ledger.total_bytes());
  EXPECT_DOUBLE_EQ(r.sim_time_s, [&] {
    double t = 0;
    for (const auto& e : r.ledger.entries()) t += simulated_time(e.bytes, cfg.bandwidth_bps);
    return t;
  }());
}

TEST(Inputs, MismatchesRejected) {
  TrainingConfig cfg = small_config(4, 1);
  const Fixture f = mlp_fixture(cfg);
  EXPECT_THROW(run_fl(cfg, toy_mlp(7, 4), f.data), ConfigError);
  EXPECT_THROW(run_fl(cfg, toy_mlp(8, 3), f.data), ConfigError);
  TrainingConfig other = cfg;
  other.devices = 3;
  other.devices_per_round = 3;
  EXPECT_THROW(run_sfl(other, f.spec, f.data), ConfigError);
  TrainingConfig bad_split = cfg;
  bad_split.split_point = 6;
  EXPECT_THROW(run_uit(bad_split, f.spec, f.data), ConfigError);
  TrainingConfig neg_lr = cfg;
  neg_lr.lr_device = -0.1f;
  EXPECT_THROW(neg_lr.validate(), ConfigError);
}

TEST(Inputs, ProtocolNames) {
  for (const auto p : {Protocol::fl, Protocol::sfl, Protocol::uit, Protocol::uit_nc, Protocol::centralized}) {
    EXPECT_EQ(parse_protocol(protocol_name(p)), p);
  }
  EXPECT_THROW(parse_protocol("gossip"), ConfigError);
}
