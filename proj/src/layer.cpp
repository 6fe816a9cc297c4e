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

#include "splitsim/layer.hpp"

#include <charconv>
#include <sstream>

#include "splitsim/error.hpp"

namespace splitsim {

std::vector<Shape> LayerSpec::param_shapes() const {
  switch (kind) {
    case LayerKind::dense:
      return {{out, in}, {out}};
    case LayerKind::conv2d:
      return {{out, in, kernel, kernel}, {out}};
    default:
      return {};
  }
}

std::size_t LayerSpec::param_count() const {
  std::size_t total = 0;
  for (const auto& s : param_shapes()) total += numel(s);
  return total;
}

Shape infer_output_shape(const LayerSpec& layer, const Shape& input) {
  const auto fail = [&](const std::string& why) {
    return ConfigError(describe(layer) + " cannot accept input " + to_string(input) + ": " + why);
  };
  switch (layer.kind) {
    case LayerKind::dense:
      if (layer.in == 0 || layer.out == 0) throw fail("zero-sized dense layer");
      if (input.size() != 1) throw fail("dense expects a flat input (insert flatten)");
      if (input[0] != layer.in) throw fail("feature count mismatch");
      return {layer.out};
    case LayerKind::conv2d: {
      if (layer.in == 0 || layer.out == 0 || layer.kernel == 0 || layer.stride == 0) {
        throw fail("zero-sized conv2d layer");
      }
      if (input.size() != 3) throw fail("conv2d expects [channels, height, width]");
      if (input[0] != layer.in) throw fail("channel count mismatch");
      const std::size_t h = input[1] + 2 * layer.pad;
      const std::size_t w = input[2] + 2 * layer.pad;
      if (h < layer.kernel || w < layer.kernel) throw fail("kernel larger than padded input");
      return {layer.out, (h - layer.kernel) / layer.stride + 1, (w - layer.kernel) / layer.stride + 1};
    }
    case LayerKind::relu:
      if (input.empty()) throw fail("empty shape");
      return input;
    case LayerKind::flatten:
      if (input.empty()) throw fail("empty shape");
      return {numel(input)};
    case LayerKind::softmax_xent_head:
      if (input.size() != 1 || input[0] != layer.out) throw fail("head expects [classes] logits");
      return input;
  }
  throw fail("unknown layer kind");
}

std::uint64_t forward_flops_per_sample(const LayerSpec& layer, const Shape& input) {
  const Shape output = infer_output_shape(layer, input);
  switch (layer.kind) {
    case LayerKind::dense:
      return 2ULL * layer.in * layer.out + layer.out;
    case LayerKind::conv2d: {
      const std::uint64_t positions = output[1] * output[2];
      const std::uint64_t macs_per_output = layer.in * layer.kernel * layer.kernel;
      return positions * layer.out * (2 * macs_per_output + 1);
    }
    case LayerKind::relu:
      return numel(input);
    case LayerKind::flatten:
    case LayerKind::softmax_xent_head:
      return 0;
  }
  return 0;
}

std::string_view kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense:
      return "dense";
    case LayerKind::conv2d:
      return "conv2d";
    case LayerKind::relu:
      return "relu";
    case LayerKind::flatten:
      return "flatten";
    case LayerKind::softmax_xent_head:
      return "head";
  }
  return "?";
}

std::string describe(const LayerSpec& layer) {
  std::ostringstream os;
  os << kind_name(layer.kind);
  switch (layer.kind) {
    case LayerKind::dense:
      os << '(' << layer.in << ',' << layer.out << ')';
      break;
    case LayerKind::conv2d:
      os << '(' << layer.in << ',' << layer.out << ',' << layer.kernel << ',' << layer.stride << ',' << layer.pad
         << ')';
      break;
    case LayerKind::softmax_xent_head:
      os << '(' << layer.out << ')';
      break;
    default:
      break;
  }
  return os.str();
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::vector<std::size_t> parse_args(std::string_view text, std::string_view args) {
  std::vector<std::size_t> values;
  while (!args.empty()) {
    const auto comma = args.find(',');
    const auto token = trim(args.substr(0, comma));
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc{} || ptr != token.data() + token.size() || token.empty()) {
      throw ConfigError("malformed layer argument in '" + std::string(text) + "'");
    }
    values.push_back(v);
    if (comma == std::string_view::npos) break;
    args.remove_prefix(comma + 1);
  }
  return values;
}

}  // namespace

LayerSpec parse_layer(std::string_view text) {
  const std::string_view t = trim(text);
  const auto open = t.find('(');
  const std::string_view name = trim(t.substr(0, open));
  std::vector<std::size_t> args;
  if (open != std::string_view::npos) {
    if (t.back() != ')') throw ConfigError("unterminated layer arguments in '" + std::string(text) + "'");
    args = parse_args(text, t.substr(open + 1, t.size() - open - 2));
  }
  const auto need = [&](std::size_t lo, std::size_t hi) {
    if (args.size() < lo || args.size() > hi) {
      throw ConfigError("wrong argument count for layer '" + std::string(text) + "'");
    }
  };
  if (name == "dense") {
    need(2, 2);
    return LayerSpec::dense(args[0], args[1]);
  }
  if (name == "conv2d" || name == "conv") {
    need(3, 5);
    return LayerSpec::conv2d(args[0], args[1], args[2], args.size() > 3 ? args[3] : 1, args.size() > 4 ? args[4] : 0);
  }
  if (name == "relu") {
    need(0, 0);
    return LayerSpec::relu();
  }
  if (name == "flatten") {
    need(0, 0);
    return LayerSpec::flatten();
  }
  if (name == "head" || name == "softmax-xent-head") {
    need(1, 1);
    return LayerSpec::head(args[0]);
  }
  throw ConfigError("unknown layer kind '" + std::string(name) + "'");
}

}  // namespace splitsim
