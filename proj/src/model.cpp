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

#include "splitsim/model.hpp"

#include <cmath>

#include "splitsim/error.hpp"
#include "splitsim/rng.hpp"

namespace splitsim {

void ModelSpec::validate() const {
  if (layers.empty()) throw ConfigError("model '" + name + "' has no layers");
  if (input_shape.empty() || numel(input_shape) == 0) throw ConfigError("model '" + name + "' has an empty input shape");
  if (layers.back().kind != LayerKind::softmax_xent_head) {
    throw ConfigError("model '" + name + "' must end in a softmax-xent head");
  }
  if (layers.back().out != classes) throw ConfigError("model '" + name + "' head does not match class count");
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    if (layers[i].kind == LayerKind::softmax_xent_head) {
      throw ConfigError("model '" + name + "' has a head before the last layer");
    }
  }
  (void)output_shapes();
}

std::vector<Shape> ModelSpec::output_shapes() const {
  std::vector<Shape> out;
  Shape s = input_shape;
  for (const auto& l : layers) {
    s = infer_output_shape(l, s);
    out.push_back(s);
  }
  return out;
}

Block ModelSpec::instantiate(std::uint64_t seed) const {
  validate();
  return Block(input_shape, layers, seed, 0);
}

ModelSpec toy_mlp(std::size_t input_dim, std::size_t classes) {
  return {"toy-mlp",
          {input_dim},
          {LayerSpec::dense(input_dim, 32), LayerSpec::relu(), LayerSpec::dense(32, 64), LayerSpec::relu(),
           LayerSpec::dense(64, classes), LayerSpec::head(classes)},
          classes};
}

ModelSpec toy_cnn(const Shape& input_shape, std::size_t classes) {
  if (input_shape.size() != 3) throw ConfigError("toy-cnn expects a [channels, height, width] input");
  ModelSpec spec{"toy-cnn",
                 input_shape,
                 {LayerSpec::conv2d(input_shape[0], 4, 3, 1, 1), LayerSpec::relu(), LayerSpec::conv2d(4, 16, 3, 2, 1),
                  LayerSpec::relu(), LayerSpec::flatten()},
                 classes};
  const Shape flat = spec.output_shapes().back();
  spec.layers.push_back(LayerSpec::dense(flat[0], classes));
  spec.layers.push_back(LayerSpec::head(classes));
  return spec;
}

std::pair<Block, Block> split_model(const Block& full, std::size_t p) {
  const std::size_t layers = full.layers().size();
  if (full.first_layer() != 0) throw ConfigError("split_model expects a full model starting at layer 0");
  if (p < 1 || p >= layers) {
    throw ConfigError("split point " + std::to_string(p) + " outside [1, " + std::to_string(layers) + ")");
  }
  return {full.slice(0, p), full.slice(p, layers)};
}

std::pair<Block, Block> split_model(const ModelSpec& spec, std::size_t p, std::uint64_t seed) {
  return split_model(spec.instantiate(seed), p);
}

Block join_blocks(const Block& device, const Block& server) {
  if (device.end_layer() != server.first_layer() || device.output_shape() != server.input_shape()) {
    throw ConfigError("blocks are not adjacent");
  }
  std::vector<LayerSpec> layers = device.layers();
  layers.insert(layers.end(), server.layers().begin(), server.layers().end());
  std::vector<Tensor> params = device.params();
  params.insert(params.end(), server.params().begin(), server.params().end());
  return Block::from_parts(device.input_shape(), std::move(layers), std::move(params), device.first_layer());
}

std::size_t scaled_dimension(std::size_t dim, double ratio) {
  const auto scaled = static_cast<std::size_t>(std::floor(static_cast<double>(dim) * ratio + 0.5));
  return scaled < 1 ? 1 : scaled;
}

LayerSpec AuxNet::replicated() const {
  for (const auto& l : block.layers()) {
    if (l.has_params()) return l;
  }
  throw UsageError("auxiliary network has no parametric layer");
}

AuxNet generate_auxiliary(const Block& server, double ratio, std::size_t classes, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("auxiliary ratio must lie in (0, 1]");
  if (classes == 0) throw ConfigError("auxiliary network needs at least one class");

  // Parameter-free layers ahead of the first parametric server layer (e.g. the
  // relu following a device-side dense) are carried over so the replicated
  // layer sees the same kind of input as its original.
  std::vector<LayerSpec> layers;
  std::size_t i = 0;
  for (; i < server.layers().size() && !server.layers()[i].has_params(); ++i) {
    const LayerSpec& l = server.layers()[i];
    if (l.kind == LayerKind::softmax_xent_head) break;
    layers.push_back(l);
  }
  if (i == server.layers().size() || !server.layers()[i].has_params()) {
    throw ConfigError("server block has no dense or conv layer to replicate");
  }
  LayerSpec first = server.layers()[i];
  first.out = scaled_dimension(first.out, ratio);
  layers.push_back(first);
  layers.push_back(LayerSpec::relu());

  Shape shape = server.input_shape();
  for (const auto& l : layers) shape = infer_output_shape(l, shape);
  if (shape.size() != 1) layers.push_back(LayerSpec::flatten());
  layers.push_back(LayerSpec::dense(numel(shape), classes));
  layers.push_back(LayerSpec::head(classes));

  return {ratio, classes, Block(server.input_shape(), std::move(layers), derive_seed(seed, {kStreamAuxInit}), 0)};
}

std::uint64_t param_bytes(const Block& block) { return kBytesPerElement * block.param_count(); }

std::uint64_t param_bytes(const AuxNet& aux) { return param_bytes(aux.block); }

std::uint64_t param_bytes(const LayerSpec& layer) { return kBytesPerElement * layer.param_count(); }

std::uint64_t activation_bytes_per_sample(const ModelSpec& spec, std::size_t p) {
  if (p < 1 || p > spec.layers.size()) throw ConfigError("split point out of range");
  return kBytesPerElement * numel(spec.output_shapes()[p - 1]);
}

std::uint64_t activation_bytes(const ModelSpec& spec, std::size_t p, std::uint64_t n_samples, bool with_labels) {
  return n_samples * (activation_bytes_per_sample(spec, p) + (with_labels ? kBytesPerLabel : 0));
}

}  // namespace splitsim
