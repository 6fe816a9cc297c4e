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

#include "splitsim/simnet.hpp"

#include <ostream>

#include "splitsim/error.hpp"

namespace splitsim {

std::string_view direction_name(Direction d) { return d == Direction::up ? "up" : "down"; }

std::string_view transfer_kind_name(TransferKind k) {
  switch (k) {
    case TransferKind::model_up:
      return "model_up";
    case TransferKind::model_down:
      return "model_down";
    case TransferKind::activation:
      return "activation";
    case TransferKind::gradient:
      return "gradient";
  }
  return "?";
}

void CommLedger::record(Direction direction, TransferKind kind, std::uint64_t bytes, std::uint64_t round,
                        std::size_t device) {
  if (bytes == 0) throw UsageError("ledger entries must carry at least one byte");
  const bool upward = kind == TransferKind::model_up || kind == TransferKind::activation;
  if (upward != (direction == Direction::up)) {
    throw UsageError(std::string(transfer_kind_name(kind)) + " cannot travel " + std::string(direction_name(direction)));
  }
  entries_.push_back({round, device, direction, kind, bytes});
  total_ += bytes;
  by_kind_[static_cast<std::size_t>(kind)] += bytes;
  ++count_by_kind_[static_cast<std::size_t>(kind)];
  by_direction_[static_cast<std::size_t>(direction)] += bytes;
}

std::uint64_t CommLedger::bytes_for_device(std::size_t device) const {
  std::uint64_t sum = 0;
  for (const auto& e : entries_) {
    if (e.device == device) sum += e.bytes;
  }
  return sum;
}

void CommLedger::write_csv(std::ostream& out) const {
  out << "round,device,direction,kind,bytes\n";
  for (const auto& e : entries_) {
    out << e.round << ',' << e.device << ',' << direction_name(e.direction) << ',' << transfer_kind_name(e.kind) << ','
        << e.bytes << '\n';
  }
}

double simulated_time(std::uint64_t bytes, double bandwidth_bits_per_s) {
  if (!(bandwidth_bits_per_s > 0.0)) throw ConfigError("bandwidth must be positive");
  return 8.0 * static_cast<double>(bytes) / bandwidth_bits_per_s;
}

// --- cost model ----------------------------------------------------------------

namespace {

void check_split(const CostModel& cm, std::size_t p) {
  if (p < 1 || p >= cm.layer_count()) {
    throw ConfigError("split point " + std::to_string(p) + " outside [1, " + std::to_string(cm.layer_count()) + ")");
  }
}

}  // namespace

std::uint64_t CostModel::device_bytes(std::size_t p) const {
  check_split(*this, p);
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < p; ++i) s += layer_param_bytes[i];
  return s;
}

std::uint64_t CostModel::server_bytes(std::size_t p) const {
  check_split(*this, p);
  std::uint64_t s = 0;
  for (std::size_t i = p; i < layer_param_bytes.size(); ++i) s += layer_param_bytes[i];
  return s;
}

bool CostModel::has_aux(std::size_t p) const {
  check_split(*this, p);
  return aux_param_bytes[p - 1].has_value();
}

std::uint64_t CostModel::aux_bytes(std::size_t p) const {
  if (!has_aux(p)) throw ConfigError("no auxiliary network exists for split point " + std::to_string(p));
  return *aux_param_bytes[p - 1];
}

std::uint64_t CostModel::activation_payload_bytes(std::size_t p) const {
  check_split(*this, p);
  return samples * layer_output_bytes[p - 1];
}

std::uint64_t CostModel::activation_bytes(std::size_t p) const {
  return activation_payload_bytes(p) + samples * label_bytes_per_sample;
}

CostModel make_cost_model(const ModelSpec& spec, std::uint64_t samples, double aux_ratio, bool with_labels) {
  spec.validate();
  CostModel cm;
  cm.samples = samples;
  cm.label_bytes_per_sample = with_labels ? kBytesPerLabel : 0;
  const auto outputs = spec.output_shapes();
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    cm.layer_param_bytes.push_back(param_bytes(spec.layers[i]));
    cm.layer_output_bytes.push_back(kBytesPerElement * numel(outputs[i]));
  }
  // Auxiliary sizes only depend on layer shapes; a throwaway block per split
  // keeps this in lockstep with generate_auxiliary.
  const Block full = spec.instantiate(0);
  for (std::size_t p = 1; p <= spec.layers.size(); ++p) {
    if (p == spec.layers.size()) {
      cm.aux_param_bytes.emplace_back();
      continue;
    }
    try {
      const Block server = full.slice(p, spec.layers.size());
      cm.aux_param_bytes.emplace_back(param_bytes(generate_auxiliary(server, aux_ratio, spec.classes, 0)));
    } catch (const ConfigError&) {
      cm.aux_param_bytes.emplace_back();
    }
  }
  return cm;
}

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::uit:
      return "uit";
    case Variant::sfl:
      return "sfl";
    case Variant::fl:
      return "fl";
  }
  return "?";
}

std::uint64_t closed_form_comm(const CostModel& cm, Variant variant, std::size_t p, std::uint64_t epochs,
                               std::uint64_t participants) {
  const std::uint64_t n = epochs;
  switch (variant) {
    case Variant::uit:
      return 2 * n * participants * (cm.device_bytes(p) + cm.aux_bytes(p)) + cm.activation_bytes(p);
    case Variant::sfl:
      // Activations go up with labels, gradients of the same size come down.
      return 2 * n * (participants * cm.device_bytes(p) + cm.activation_payload_bytes(p)) +
             n * cm.samples * cm.label_bytes_per_sample;
    case Variant::fl:
      return 2 * n * participants * (cm.device_bytes(p) + cm.server_bytes(p));
  }
  throw UsageError("unknown communication variant");
}

std::uint64_t split_point_comm(const CostModel& cm, std::size_t p, std::uint64_t epochs) {
  return 2 * epochs * cm.device_bytes(p) + cm.activation_bytes(p);
}

std::int64_t comm_difference_vs_sfl(const CostModel& cm, std::size_t p, std::uint64_t epochs) {
  return static_cast<std::int64_t>(closed_form_comm(cm, Variant::sfl, p, epochs)) -
         static_cast<std::int64_t>(closed_form_comm(cm, Variant::uit, p, epochs));
}

std::int64_t comm_difference_vs_fl(const CostModel& cm, std::size_t p, std::uint64_t epochs) {
  const auto s_s = static_cast<std::int64_t>(cm.server_bytes(p));
  const auto s_aux = static_cast<std::int64_t>(cm.aux_bytes(p));
  const auto s_act = static_cast<std::int64_t>(cm.activation_bytes(p));
  return 2 * static_cast<std::int64_t>(epochs) * (s_s - s_aux) - s_act;
}

std::optional<std::uint64_t> fl_break_even_epochs(const CostModel& cm, std::size_t p) {
  const std::uint64_t s_s = cm.server_bytes(p);
  const std::uint64_t s_aux = cm.aux_bytes(p);
  if (s_s <= s_aux) return std::nullopt;
  // 2N (s_s - s_aux) > s_act  <=>  N > s_act / (2 (s_s - s_aux))
  const std::uint64_t per_epoch = 2 * (s_s - s_aux);
  return cm.activation_bytes(p) / per_epoch + 1;
}

}  // namespace splitsim
