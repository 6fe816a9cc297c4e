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
#include <vector>

#include "splitsim/layer.hpp"
#include "splitsim/tensor.hpp"

namespace splitsim {

using Label = std::int32_t;

template <typename T>
using Gradients = std::vector<BasicTensor<T>>;

/// Intermediates recorded by BasicBlock::forward. Tied to the block instance
/// and parameter version that produced it.
template <typename T>
struct ForwardCache {
  std::uint64_t owner = 0;
  std::uint64_t version = 0;
  std::vector<BasicTensor<T>> inputs;  // input of each layer
};

template <typename T>
struct ForwardResult {
  BasicTensor<T> output;
  ForwardCache<T> cache;
};

template <typename T>
struct BackwardResult {
  Gradients<T> param_grads;
  BasicTensor<T> input_grad;
};

template <typename T>
struct LossResult {
  T loss = 0;
  BasicTensor<T> grad;  // d(mean loss)/d(logits)
};

enum class Pass { forward, forward_backward };

/// A contiguous run of layers [first_layer, end_layer) of some model, together
/// with its parameters. A whole model is simply the block [0, I).
///
/// Parameters are stored flat: for each parametric layer, weight then bias.
/// Each layer is He-uniform initialized from a seed derived from the global
/// seed and the layer's absolute index, so a block built over [lo, hi) holds
/// exactly the parameters the full model holds for those layers.
template <typename T>
class BasicBlock {
 public:
  BasicBlock();
  BasicBlock(Shape input_shape, std::vector<LayerSpec> layers, std::uint64_t seed, std::size_t first_layer = 0);

  BasicBlock(const BasicBlock& other);
  BasicBlock& operator=(const BasicBlock& other);
  BasicBlock(BasicBlock&&) noexcept = default;
  BasicBlock& operator=(BasicBlock&&) noexcept = default;

  const Shape& input_shape() const { return shapes_.front(); }
  const Shape& output_shape() const { return shapes_.back(); }
  /// shapes()[i] is the per-sample input of layer i; shapes().back() the block output.
  const std::vector<Shape>& shapes() const { return shapes_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t first_layer() const { return first_layer_; }
  std::size_t end_layer() const { return first_layer_ + layers_.size(); }
  bool empty() const { return layers_.empty(); }

  const std::vector<BasicTensor<T>>& params() const { return params_; }
  /// Mutable access invalidates outstanding forward caches.
  std::vector<BasicTensor<T>>& mutable_params();
  std::size_t param_count() const;
  /// Index into params() of the first tensor of layer `i` (relative index).
  std::size_t param_offset(std::size_t i) const { return param_offsets_.at(i); }

  ForwardResult<T> forward(const BasicTensor<T>& batch) const;
  /// Forward without retaining intermediates.
  BasicTensor<T> predict(const BasicTensor<T>& batch) const;
  BackwardResult<T> backward(const ForwardCache<T>& cache, const BasicTensor<T>& upstream) const;

  /// Layers [lo, hi) relative to this block, with copies of their parameters.
  BasicBlock slice(std::size_t lo, std::size_t hi) const;

  template <typename U>
  BasicBlock<U> cast() const {
    std::vector<BasicTensor<U>> params;
    params.reserve(params_.size());
    for (const auto& p : params_) params.push_back(p.template cast<U>());
    return BasicBlock<U>::from_parts(input_shape(), layers_, std::move(params), first_layer_);
  }

  /// Assemble a block from existing parameters (shape-checked).
  static BasicBlock from_parts(Shape input_shape, std::vector<LayerSpec> layers, std::vector<BasicTensor<T>> params,
                               std::size_t first_layer = 0);

 private:
  void build_shapes(Shape input_shape);
  void check_batch(const BasicTensor<T>& batch) const;

  std::uint64_t id_ = 0;
  std::uint64_t version_ = 0;
  std::size_t first_layer_ = 0;
  std::vector<LayerSpec> layers_;
  std::vector<Shape> shapes_;
  std::vector<std::size_t> param_offsets_;
  std::vector<BasicTensor<T>> params_;
};

using Block = BasicBlock<float>;
using BlockD = BasicBlock<double>;

/// Mean softmax cross-entropy over the batch. Throws DataError for labels
/// outside [0, classes).
template <typename T>
LossResult<T> softmax_xent(const BasicTensor<T>& logits, std::span<const Label> labels);

/// params -= lr * grads, elementwise.
template <typename T>
void sgd_step(std::vector<BasicTensor<T>>& params, const Gradients<T>& grads, T lr);

/// FLOPs for running `block` on `batch` samples. Backward is counted as twice
/// the forward cost.
template <typename T>
std::uint64_t flops(const BasicBlock<T>& block, std::size_t batch, Pass pass);

/// Index of the largest logit per row.
template <typename T>
std::vector<Label> argmax_rows(const BasicTensor<T>& logits);

extern template class BasicBlock<float>;
extern template class BasicBlock<double>;

}  // namespace splitsim
