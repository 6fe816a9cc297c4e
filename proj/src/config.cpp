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

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "splitsim/error.hpp"
#include "splitsim/harness.hpp"

namespace splitsim {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

/// Split on commas that are not inside parentheses.
std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  int depth = 0;
  std::string cur;
  for (const char c : s) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == ',' && depth == 0) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
  return out;
}

struct Entry {
  std::string value;
  int line = 0;
};

class Reader {
 public:
  Reader(std::map<std::string, Entry> entries, std::string origin)
      : entries_(std::move(entries)), origin_(std::move(origin)) {}

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    const auto it = entries_.find(key);
    const std::string where = it == entries_.end() ? origin_ : origin_ + ":" + std::to_string(it->second.line);
    throw ConfigError(where + ": " + key + ": " + msg);
  }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::string& raw(const std::string& key) const { return entries_.at(key).value; }

  template <typename T>
  T number(const std::string& key, std::string_view text) const {
    T v{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
      fail(key, "invalid number '" + std::string(text) + "'");
    }
    return v;
  }

  template <typename T>
  void get(const std::string& key, T& target) const {
    if (!has(key)) return;
    target = number<T>(key, raw(key));
  }

  void get_bool(const std::string& key, bool& target) const {
    if (!has(key)) return;
    const std::string& v = raw(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") {
      target = true;
    } else if (v == "false" || v == "0" || v == "no" || v == "off") {
      target = false;
    } else {
      fail(key, "expected a boolean, got '" + v + "'");
    }
  }

  template <typename T>
  std::vector<T> list(const std::string& key) const {
    std::vector<T> out;
    for (const auto& item : split_list(raw(key))) out.push_back(number<T>(key, item));
    return out;
  }

  std::vector<std::string> keys() const {
    std::vector<std::string> k;
    for (const auto& [key, entry] : entries_) k.push_back(key);
    return k;
  }

 private:
  std::map<std::string, Entry> entries_;
  std::string origin_;
};

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "protocols",
      "seed",
      "output.dir",
      "data.kind",
      "data.samples",
      "data.classes",
      "data.shape",
      "data.noise",
      "data.seed",
      "model",
      "model.layers",
      "train.devices",
      "train.devices_per_round",
      "train.split_point",
      "train.aux_ratio",
      "train.lr_device",
      "train.lr_server",
      "train.device_epochs",
      "train.server_epochs",
      "train.batch_device",
      "train.batch_server",
      "train.patience",
      "train.alpha",
      "train.epsilon",
      "train.bandwidth_bps",
      "train.validation_fraction",
      "train.label_bytes",
      "train.sample_device_phase",
      "train.concurrent_phase3",
      "sweep.alpha",
      "sweep.seeds",
  };
  return keys;
}

Shape parse_shape(const Reader& r, const std::string& key) {
  Shape s;
  std::string text = r.raw(key);
  for (auto& c : text) {
    if (c == 'x' || c == 'X' || c == '*') c = ',';
  }
  for (const auto& item : split_list(text)) {
    const auto v = r.number<std::size_t>(key, item);
    if (v == 0) r.fail(key, "dimensions must be positive");
    s.push_back(v);
  }
  if (s.empty()) r.fail(key, "empty shape");
  return s;
}

std::string format_alpha(double alpha) {
  std::ostringstream os;
  os << alpha;
  return os.str();
}

}  // namespace

ExperimentPlan parse_config(std::istream& in, const std::string& origin, PlanMode mode) {
  std::map<std::string, Entry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(t.substr(0, eq));
    if (std::find(known_keys().begin(), known_keys().end(), key) == known_keys().end()) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    if (entries.count(key)) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    entries[key] = {trim(t.substr(eq + 1)), lineno};
  }
  const Reader r(std::move(entries), origin);

  ExperimentPlan plan;
  if (r.has("output.dir")) plan.output_dir = r.raw("output.dir");

  // data
  auto guarded = [&](const std::string& key, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      if (std::string(e.what()).rfind(origin, 0) == 0) throw;
      r.fail(key, e.what());
    }
  };
  if (r.has("data.kind")) guarded("data.kind", [&] { plan.data.kind = parse_synthetic_kind(r.raw("data.kind")); });
  r.get("data.samples", plan.data.samples);
  r.get("data.classes", plan.data.classes);
  r.get("data.noise", plan.data.noise);
  if (r.has("data.shape")) {
    plan.data.shape = parse_shape(r, "data.shape");
  } else if (plan.data.kind == SyntheticKind::image_patches) {
    plan.data.shape = {1, 8, 8};
  } else if (plan.data.kind == SyntheticKind::spirals) {
    plan.data.shape = {2};
  }
  if (r.has("data.seed")) {
    std::uint64_t s = 0;
    r.get("data.seed", s);
    plan.data.seed = s;
  }
  if (plan.data.classes == 0) r.fail("data.classes", "must be positive");
  if (plan.data.samples < plan.data.classes) r.fail("data.samples", "must be at least the class count");
  if (!(plan.data.noise >= 0.0)) r.fail("data.noise", "must be non-negative");

  // model
  if (r.has("model")) plan.model.name = r.raw("model");
  if (plan.model.name == "custom") {
    if (!r.has("model.layers")) r.fail("model", "custom model requires model.layers");
    guarded("model.layers", [&] {
      for (const auto& item : split_list(r.raw("model.layers"))) plan.model.layers.push_back(parse_layer(item));
    });
  } else if (r.has("model.layers")) {
    r.fail("model.layers", "only valid with model = custom");
  }
  guarded(r.has("model.layers") ? "model.layers" : "model",
          [&] { plan.model.build(plan.data.shape, plan.data.classes).validate(); });

  // training
  TrainingConfig cfg;
  r.get("train.devices", cfg.devices);
  cfg.devices_per_round = cfg.devices;
  r.get("train.devices_per_round", cfg.devices_per_round);
  r.get("train.split_point", cfg.split_point);
  r.get("train.aux_ratio", cfg.aux_ratio);
  r.get("train.lr_device", cfg.lr_device);
  r.get("train.lr_server", cfg.lr_server);
  r.get("train.device_epochs", cfg.device_epochs);
  r.get("train.server_epochs", cfg.server_epochs);
  r.get("train.batch_device", cfg.batch_device);
  r.get("train.batch_server", cfg.batch_server);
  r.get("train.patience", cfg.patience);
  r.get("train.alpha", cfg.alpha);
  r.get("train.epsilon", cfg.epsilon);
  r.get("train.bandwidth_bps", cfg.bandwidth_bps);
  r.get("train.validation_fraction", cfg.validation_fraction);
  r.get_bool("train.label_bytes", cfg.label_bytes);
  r.get_bool("train.sample_device_phase", cfg.sample_device_phase);
  r.get_bool("train.concurrent_phase3", cfg.concurrent_phase3);
  r.get("seed", cfg.seed);
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    // Attribute the message to the offending key when it names one.
    const std::string msg = e.what();
    for (const auto& key : r.keys()) {
      if (key.rfind("train.", 0) == 0 && msg.rfind(key.substr(6) + " ", 0) == 0) r.fail(key, msg);
    }
    throw ConfigError(origin + ": " + msg);
  }
  if (cfg.devices > plan.data.samples) r.fail("train.devices", "more devices than samples");

  std::vector<Protocol> protocols{Protocol::uit};
  if (r.has("protocols")) {
    protocols.clear();
    for (const auto& name : split_list(r.raw("protocols"))) {
      guarded("protocols", [&] { protocols.push_back(parse_protocol(name)); });
    }
  }

  std::vector<double> alphas{cfg.alpha};
  std::vector<std::uint64_t> seeds{cfg.seed};
  if (mode == PlanMode::sweep) {
    if (r.has("sweep.alpha")) alphas = r.list<double>("sweep.alpha");
    if (r.has("sweep.seeds")) {
      seeds = r.list<std::uint64_t>("sweep.seeds");
    } else {
      seeds.clear();
      for (std::uint64_t i = 0; i < 5; ++i) seeds.push_back(cfg.seed + i);
    }
    for (const double a : alphas) {
      if (!(a > 0.0 && a <= 1.0)) r.fail("sweep.alpha", "alpha must lie in (0, 1]");
    }
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      for (std::size_t j = i + 1; j < seeds.size(); ++j) {
        if (seeds[i] == seeds[j]) r.fail("sweep.seeds", "seeds must be distinct");
      }
    }
  }

  for (const double alpha : alphas) {
    for (const auto protocol : protocols) {
      PlanCell cell;
      cell.protocol = protocol;
      cell.config = cfg;
      cell.config.alpha = alpha;
      cell.seeds = seeds;
      cell.name = std::string(protocol_name(protocol)) + "_a" + format_alpha(alpha);
      plan.cells.push_back(std::move(cell));
    }
  }
  return plan;
}

ExperimentPlan load_config(const std::string& path, PlanMode mode) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  return parse_config(in, path, mode);
}

void apply_overrides(ExperimentPlan& plan, const PlanOverrides& o) {
  if (o.output_dir) plan.output_dir = *o.output_dir;
  for (auto& cell : plan.cells) {
    if (o.seed) {
      // Shift the seed list so that its first entry becomes the override.
      const std::uint64_t base = cell.seeds.empty() ? 0 : cell.seeds.front();
      for (auto& s : cell.seeds) s = s - base + *o.seed;
      cell.config.seed = *o.seed;
    }
    if (o.concurrent_phase3) cell.config.concurrent_phase3 = true;
    if (o.no_label_bytes) cell.config.label_bytes = false;
  }
}

}  // namespace splitsim
