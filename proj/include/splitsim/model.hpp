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
#include <string>
#include <utility>
#include <vector>

#include "splitsim/block.hpp"
#include "splitsim/layer.hpp"

namespace splitsim {

inline constexpr std::uint64_t kBytesPerElement = 4;  // f32 payloads
inline constexpr std::uint64_t kBytesPerLabel = 8;    // labels travel as int64

/// An ordered chain of layers ending in a softmax-xent head.
struct ModelSpec {
  std::string name;
  Shape input_shape;
  std::vector<LayerSpec> layers;
  std::size_t classes = 0;

  std::size_t layer_count() const { return layers.size(); }
  /// Throws ConfigError unless the chain is shape-compatible and ends in a
  /// head matching `classes`.
  void validate() const;
  /// Per-sample output shape of every layer (index i = output of layer i).
  std::vector<Shape> output_shapes() const;
  /// Freshly initialized full model, block [0, I).
  Block instantiate(std::uint64_t seed) const;
};

/// Dense net for flat inputs: dense(d,32) relu dense(32,64) relu dense(64,C) head.
ModelSpec toy_mlp(std::size_t input_dim, std::size_t classes);

/// Small CNN for [1,8,8]-style images:
/// conv(c,4,3,1,1) relu conv(4,16,3,2,1) relu flatten dense(.,C) head.
ModelSpec toy_cnn(const Shape& input_shape, std::size_t classes);

/// Split a parameterized full model (block [0, I)) at p into device [0, p)
/// and server [p, I). Throws ConfigError unless 1 <= p < I.
std::pair<Block, Block> split_model(const Block& full, std::size_t p);

/// Initialize `spec` from `seed` and split it.
std::pair<Block, Block> split_model(const ModelSpec& spec, std::size_t p, std::uint64_t seed);

/// Rejoin a device and server block into the full model.
Block join_blocks(const Block& device, const Block& server);

/// Two-layer local head attached to the device block. The first layer
/// replicates the server block's first parametric layer with its output
/// dimension (units for dense, channels for conv) scaled by `ratio`; the
/// second maps to class logits.
struct AuxNet {
  double ratio = 0.5;
  std::size_t classes = 0;
  Block block;  // input = device block output

  LayerSpec replicated() const;
};

/// Scaled dimension: round-half-up of ratio * dim, at least 1.
std::size_t scaled_dimension(std::size_t dim, double ratio);

AuxNet generate_auxiliary(const Block& server, double ratio, std::size_t classes, std::uint64_t seed);

std::uint64_t param_bytes(const Block& block);
std::uint64_t param_bytes(const AuxNet& aux);
std::uint64_t param_bytes(const LayerSpec& layer);

/// Bytes of one sample's activation leaving the device block at split p.
std::uint64_t activation_bytes_per_sample(const ModelSpec& spec, std::size_t p);

/// Bytes to ship `n_samples` activations at split p, plus their labels when
/// `with_labels` is set.
std::uint64_t activation_bytes(const ModelSpec& spec, std::size_t p, std::uint64_t n_samples, bool with_labels = true);

}  // namespace splitsim
