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
#include <string_view>
#include <vector>

#include "splitsim/model.hpp"

namespace splitsim {

enum class Direction { up, down };
enum class TransferKind { model_up, model_down, activation, gradient };

std::string_view direction_name(Direction d);
std::string_view transfer_kind_name(TransferKind k);

struct LedgerEntry {
  std::uint64_t round = 0;  // logical training round (epoch index)
  std::size_t device = 0;
  Direction direction = Direction::up;
  TransferKind kind = TransferKind::model_up;
  std::uint64_t bytes = 0;

  friend bool operator==(const LedgerEntry&, const LedgerEntry&) = default;
};

/// Append-only log of device/server transfers. Every entry is one
/// communication round: one model, one activation batch, or one gradient
/// batch. Payload bytes only, no framing overhead.
class CommLedger {
 public:
  /// Throws UsageError for bytes == 0 or a direction that contradicts the
  /// kind (models/activations go up, aggregated models/gradients come down).
  void record(Direction direction, TransferKind kind, std::uint64_t bytes, std::uint64_t round, std::size_t device);

  const std::vector<LedgerEntry>& entries() const { return entries_; }
  std::size_t round_count() const { return entries_.size(); }
  std::uint64_t total_bytes() const { return total_; }
  std::uint64_t bytes(TransferKind kind) const { return by_kind_[static_cast<std::size_t>(kind)]; }
  std::size_t count(TransferKind kind) const { return count_by_kind_[static_cast<std::size_t>(kind)]; }
  std::uint64_t bytes(Direction direction) const { return by_direction_[static_cast<std::size_t>(direction)]; }
  std::uint64_t bytes_for_device(std::size_t device) const;

  /// CSV with header `round,device,direction,kind,bytes`.
  void write_csv(std::ostream& out) const;

  friend bool operator==(const CommLedger& a, const CommLedger& b) { return a.entries_ == b.entries_; }

 private:
  std::vector<LedgerEntry> entries_;
  std::uint64_t total_ = 0;
  std::uint64_t by_kind_[4] = {0, 0, 0, 0};
  std::size_t count_by_kind_[4] = {0, 0, 0, 0};
  std::uint64_t by_direction_[2] = {0, 0};
};

/// Seconds to push `bytes` through a link of `bandwidth_bits_per_s`.
double simulated_time(std::uint64_t bytes, double bandwidth_bits_per_s);

/// Per-layer size table of a model, the input to the closed-form cost
/// expressions. Built from the model description, never by hand.
struct CostModel {
  std::vector<std::uint64_t> layer_param_bytes;   // per layer
  std::vector<std::uint64_t> layer_output_bytes;  // per layer, per sample
  /// Auxiliary-network bytes when splitting after layer index p-1; empty when
  /// the server block at that split has no layer to replicate.
  std::vector<std::optional<std::uint64_t>> aux_param_bytes;
  std::uint64_t label_bytes_per_sample = 0;
  std::uint64_t samples = 0;  // n, the activations shipped in one full pass

  std::size_t layer_count() const { return layer_param_bytes.size(); }
  std::uint64_t device_bytes(std::size_t p) const;  // s^(d)
  std::uint64_t server_bytes(std::size_t p) const;  // s^(s)
  std::uint64_t aux_bytes(std::size_t p) const;     // s^(aux); throws ConfigError if undefined
  bool has_aux(std::size_t p) const;
  /// s^(act): activations (and labels, when counted) for all samples.
  std::uint64_t activation_bytes(std::size_t p) const;
  /// Activation payload without labels.
  std::uint64_t activation_payload_bytes(std::size_t p) const;
};

CostModel make_cost_model(const ModelSpec& spec, std::uint64_t samples, double aux_ratio = 0.5,
                          bool with_labels = true);

enum class Variant { uit, sfl, fl };

std::string_view variant_name(Variant v);

/// Closed-form total payload bytes over `epochs` rounds with `participants`
/// devices exchanging models each round:
///   uit: 2N P (s_d + s_aux) + s_act
///   sfl: 2N (P s_d + s_act)       (labels ride up only: + N * label bytes)
///   fl : 2N P (s_d + s_s)
/// s_act covers all `samples`, i.e. every device passes its data once per round.
std::uint64_t closed_form_comm(const CostModel& cm, Variant variant, std::size_t p, std::uint64_t epochs,
                               std::uint64_t participants = 1);

/// Per-device volume as a function of the split point without an auxiliary
/// network: 2N * sum_{i<=p} s^l_i + s^o_p * samples.
std::uint64_t split_point_comm(const CostModel& cm, std::size_t p, std::uint64_t epochs);

/// C_SFL - C_UIT for one device.
std::int64_t comm_difference_vs_sfl(const CostModel& cm, std::size_t p, std::uint64_t epochs);

/// C_FL - C_UIT = 2N (s_s - s_aux) - s_act for one device.
std::int64_t comm_difference_vs_fl(const CostModel& cm, std::size_t p, std::uint64_t epochs);

/// Smallest N >= 1 with comm_difference_vs_fl > 0, or nullopt when s_s <= s_aux.
std::optional<std::uint64_t> fl_break_even_epochs(const CostModel& cm, std::size_t p);

}  // namespace splitsim
