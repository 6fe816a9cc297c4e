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
#include <string_view>
#include <vector>

#include "splitsim/tensor.hpp"

namespace splitsim {

enum class LayerKind { dense, conv2d, relu, flatten, softmax_xent_head };

/// Description of one layer. Shapes below are per sample (no batch dim).
///
///   dense(in, out)               [in]        -> [out]
///   conv2d(in, out, k, s, pad)   [in, H, W]  -> [out, H', W']
///   relu                         any         -> same
///   flatten                      any         -> [numel]
///   softmax_xent_head(classes)   [classes]   -> [classes]  (logits pass through;
///                                                           the loss is applied on top)
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t in = 0;   // input features / channels
  std::size_t out = 0;  // output features / channels, or class count for the head
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;

  static LayerSpec dense(std::size_t in, std::size_t out) { return {LayerKind::dense, in, out}; }
  static LayerSpec conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride = 1,
                          std::size_t pad = 0) {
    return {LayerKind::conv2d, in_ch, out_ch, kernel, stride, pad};
  }
  static LayerSpec relu() { return {LayerKind::relu}; }
  static LayerSpec flatten() { return {LayerKind::flatten}; }
  static LayerSpec head(std::size_t classes) { return {LayerKind::softmax_xent_head, classes, classes}; }

  bool has_params() const { return kind == LayerKind::dense || kind == LayerKind::conv2d; }

  /// Weight shape first, then bias. Empty for parameter-free layers.
  std::vector<Shape> param_shapes() const;
  std::size_t param_count() const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Output shape for a per-sample input shape; throws ConfigError when the
/// layer cannot accept `input`.
Shape infer_output_shape(const LayerSpec& layer, const Shape& input);

/// Forward FLOPs for a single sample. One multiply-accumulate counts as two
/// FLOPs, a bias add or a relu comparison as one.
std::uint64_t forward_flops_per_sample(const LayerSpec& layer, const Shape& input);

/// Compact textual form, e.g. "dense(8,32)", "conv2d(1,4,3,1,1)", "relu".
std::string describe(const LayerSpec& layer);

/// Inverse of describe(). Throws ConfigError on malformed text.
LayerSpec parse_layer(std::string_view text);

std::string_view kind_name(LayerKind kind);

}  // namespace splitsim
