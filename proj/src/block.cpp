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

#include "splitsim/block.hpp"

#include <atomic>
#include <cmath>
#include <limits>

#include "splitsim/error.hpp"
#include "splitsim/rng.hpp"

namespace splitsim {
namespace {

std::uint64_t next_block_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

Shape with_batch(std::size_t batch, const Shape& sample) {
  Shape s;
  s.reserve(sample.size() + 1);
  s.push_back(batch);
  s.insert(s.end(), sample.begin(), sample.end());
  return s;
}

template <typename T>
void init_layer(const LayerSpec& layer, std::uint64_t seed, std::size_t absolute_index,
                std::vector<BasicTensor<T>>& out) {
  if (!layer.has_params()) return;
  const auto shapes = layer.param_shapes();
  const double fan_in = static_cast<double>(numel(shapes[0]) / shapes[0][0]);
  const double limit = std::sqrt(6.0 / fan_in);
  Rng rng(derive_seed(seed, {kStreamInit, absolute_index}));
  BasicTensor<T> weight(shapes[0]);
  for (auto& w : weight.data()) w = static_cast<T>((2.0 * uniform01(rng) - 1.0) * limit);
  out.push_back(std::move(weight));
  out.emplace_back(shapes[1]);
}

// --- dense -----------------------------------------------------------------

template <typename T>
BasicTensor<T> dense_forward(const LayerSpec& l, const BasicTensor<T>& x, const BasicTensor<T>& w,
                             const BasicTensor<T>& b) {
  const std::size_t batch = x.dim(0);
  BasicTensor<T> y({batch, l.out});
  for (std::size_t n = 0; n < batch; ++n) {
    const T* xn = &x[n * l.in];
    for (std::size_t o = 0; o < l.out; ++o) {
      const T* wo = &w[o * l.in];
      T acc = b[o];
      for (std::size_t i = 0; i < l.in; ++i) acc += wo[i] * xn[i];
      y[n * l.out + o] = acc;
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> dense_backward(const LayerSpec& l, const BasicTensor<T>& x, const BasicTensor<T>& w,
                              const BasicTensor<T>& gy, BasicTensor<T>& gw, BasicTensor<T>& gb) {
  const std::size_t batch = x.dim(0);
  BasicTensor<T> gx(x.shape());
  for (std::size_t n = 0; n < batch; ++n) {
    const T* xn = &x[n * l.in];
    T* gxn = &gx[n * l.in];
    for (std::size_t o = 0; o < l.out; ++o) {
      const T g = gy[n * l.out + o];
      if (g == T{0}) continue;
      gb[o] += g;
      T* gwo = &gw[o * l.in];
      const T* wo = &w[o * l.in];
      for (std::size_t i = 0; i < l.in; ++i) {
        gwo[i] += g * xn[i];
        gxn[i] += g * wo[i];
      }
    }
  }
  return gx;
}

// --- conv2d ----------------------------------------------------------------

struct ConvGeometry {
  std::size_t batch, in_ch, h, w, out_ch, oh, ow, k, stride, pad;
};

ConvGeometry conv_geometry(const LayerSpec& l, const Shape& in_batch_shape) {
  const Shape out = infer_output_shape(l, {in_batch_shape[1], in_batch_shape[2], in_batch_shape[3]});
  return {in_batch_shape[0], l.in, in_batch_shape[2], in_batch_shape[3], l.out, out[1], out[2], l.kernel, l.stride,
          l.pad};
}

template <typename T>
BasicTensor<T> conv_forward(const LayerSpec& l, const BasicTensor<T>& x, const BasicTensor<T>& w,
                            const BasicTensor<T>& b) {
  const auto g = conv_geometry(l, x.shape());
  BasicTensor<T> y({g.batch, g.out_ch, g.oh, g.ow});
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t oc = 0; oc < g.out_ch; ++oc) {
      for (std::size_t oy = 0; oy < g.oh; ++oy) {
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          T acc = b[oc];
          for (std::size_t ic = 0; ic < g.in_ch; ++ic) {
            for (std::size_t ky = 0; ky < g.k; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
              for (std::size_t kx = 0; kx < g.k; ++kx) {
                const std::ptrdiff_t ix =
                    static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
                acc += w[((oc * g.in_ch + ic) * g.k + ky) * g.k + kx] *
                       x[((n * g.in_ch + ic) * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)];
              }
            }
          }
          y[((n * g.out_ch + oc) * g.oh + oy) * g.ow + ox] = acc;
        }
      }
    }
  }
  return y;
}

template <typename T>
BasicTensor<T> conv_backward(const LayerSpec& l, const BasicTensor<T>& x, const BasicTensor<T>& w,
                             const BasicTensor<T>& gy, BasicTensor<T>& gw, BasicTensor<T>& gb) {
  const auto g = conv_geometry(l, x.shape());
  BasicTensor<T> gx(x.shape());
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t oc = 0; oc < g.out_ch; ++oc) {
      for (std::size_t oy = 0; oy < g.oh; ++oy) {
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          const T go = gy[((n * g.out_ch + oc) * g.oh + oy) * g.ow + ox];
          if (go == T{0}) continue;
          gb[oc] += go;
          for (std::size_t ic = 0; ic < g.in_ch; ++ic) {
            for (std::size_t ky = 0; ky < g.k; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
              for (std::size_t kx = 0; kx < g.k; ++kx) {
                const std::ptrdiff_t ix =
                    static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
                const std::size_t wi = ((oc * g.in_ch + ic) * g.k + ky) * g.k + kx;
                const std::size_t xi =
                    ((n * g.in_ch + ic) * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix);
                gw[wi] += go * x[xi];
                gx[xi] += go * w[wi];
              }
            }
          }
        }
      }
    }
  }
  return gx;
}

}  // namespace

// --- BasicBlock ------------------------------------------------------------

template <typename T>
BasicBlock<T>::BasicBlock() : id_(next_block_id()), shapes_{Shape{}} {}

template <typename T>
BasicBlock<T>::BasicBlock(Shape input_shape, std::vector<LayerSpec> layers, std::uint64_t seed,
                          std::size_t first_layer)
    : id_(next_block_id()), first_layer_(first_layer), layers_(std::move(layers)) {
  build_shapes(std::move(input_shape));
  for (std::size_t i = 0; i < layers_.size(); ++i) init_layer(layers_[i], seed, first_layer_ + i, params_);
}

template <typename T>
BasicBlock<T>::BasicBlock(const BasicBlock& other)
    : id_(next_block_id()),
      version_(0),
      first_layer_(other.first_layer_),
      layers_(other.layers_),
      shapes_(other.shapes_),
      param_offsets_(other.param_offsets_),
      params_(other.params_) {}

template <typename T>
BasicBlock<T>& BasicBlock<T>::operator=(const BasicBlock& other) {
  if (this != &other) {
    id_ = next_block_id();
    version_ = 0;
    first_layer_ = other.first_layer_;
    layers_ = other.layers_;
    shapes_ = other.shapes_;
    param_offsets_ = other.param_offsets_;
    params_ = other.params_;
  }
  return *this;
}

template <typename T>
void BasicBlock<T>::build_shapes(Shape input_shape) {
  shapes_.clear();
  param_offsets_.clear();
  shapes_.push_back(std::move(input_shape));
  std::size_t offset = 0;
  for (const auto& layer : layers_) {
    shapes_.push_back(infer_output_shape(layer, shapes_.back()));
    param_offsets_.push_back(offset);
    offset += layer.param_shapes().size();
  }
}

template <typename T>
BasicBlock<T> BasicBlock<T>::from_parts(Shape input_shape, std::vector<LayerSpec> layers,
                                        std::vector<BasicTensor<T>> params, std::size_t first_layer) {
  BasicBlock block;
  block.first_layer_ = first_layer;
  block.layers_ = std::move(layers);
  block.build_shapes(std::move(input_shape));
  std::vector<Shape> expected;
  for (const auto& layer : block.layers_) {
    for (auto& s : layer.param_shapes()) expected.push_back(std::move(s));
  }
  if (expected.size() != params.size()) throw ConfigError("parameter tensor count does not match layers");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != expected[i]) {
      throw ConfigError("parameter " + std::to_string(i) + " has shape " + to_string(params[i].shape()) +
                        ", expected " + to_string(expected[i]));
    }
  }
  block.params_ = std::move(params);
  return block;
}

template <typename T>
std::vector<BasicTensor<T>>& BasicBlock<T>::mutable_params() {
  ++version_;
  return params_;
}

template <typename T>
std::size_t BasicBlock<T>::param_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += p.size();
  return total;
}

template <typename T>
void BasicBlock<T>::check_batch(const BasicTensor<T>& batch) const {
  const Shape& s = batch.shape();
  if (s.size() != input_shape().size() + 1 || !std::equal(s.begin() + 1, s.end(), input_shape().begin())) {
    throw ConfigError("batch shape " + to_string(s) + " does not match block input " + to_string(input_shape()));
  }
}

template <typename T>
ForwardResult<T> BasicBlock<T>::forward(const BasicTensor<T>& batch) const {
  check_batch(batch);
  ForwardResult<T> result;
  result.cache.owner = id_;
  result.cache.version = version_;
  result.cache.inputs.reserve(layers_.size());
  BasicTensor<T> x = batch;
  const std::size_t n = batch.dim(0);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    BasicTensor<T> y;
    switch (l.kind) {
      case LayerKind::dense:
        y = dense_forward(l, x, params_[param_offsets_[i]], params_[param_offsets_[i] + 1]);
        break;
      case LayerKind::conv2d:
        y = conv_forward(l, x, params_[param_offsets_[i]], params_[param_offsets_[i] + 1]);
        break;
      case LayerKind::relu: {
        y = x;
        for (auto& v : y.data()) v = v > T{0} ? v : T{0};
        break;
      }
      case LayerKind::flatten:
      case LayerKind::softmax_xent_head:
        y = x.reshaped(with_batch(n, shapes_[i + 1]));
        break;
    }
    result.cache.inputs.push_back(std::move(x));
    x = std::move(y);
  }
  result.output = std::move(x);
  return result;
}

template <typename T>
BasicTensor<T> BasicBlock<T>::predict(const BasicTensor<T>& batch) const {
  return forward(batch).output;
}

template <typename T>
BackwardResult<T> BasicBlock<T>::backward(const ForwardCache<T>& cache, const BasicTensor<T>& upstream) const {
  if (cache.owner != id_ || cache.version != version_ || cache.inputs.size() != layers_.size()) {
    throw UsageError("forward cache does not belong to this block or its parameters changed since forward");
  }
  const std::size_t n = layers_.empty() ? upstream.dim(0) : cache.inputs.front().dim(0);
  if (upstream.shape() != with_batch(n, output_shape())) {
    throw UsageError("upstream gradient shape " + to_string(upstream.shape()) + " does not match block output");
  }
  BackwardResult<T> result;
  result.param_grads.reserve(params_.size());
  for (const auto& p : params_) result.param_grads.emplace_back(p.shape());

  BasicTensor<T> g = upstream;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const LayerSpec& l = layers_[i];
    const BasicTensor<T>& x = cache.inputs[i];
    switch (l.kind) {
      case LayerKind::dense: {
        const std::size_t o = param_offsets_[i];
        g = dense_backward(l, x, params_[o], g, result.param_grads[o], result.param_grads[o + 1]);
        break;
      }
      case LayerKind::conv2d: {
        const std::size_t o = param_offsets_[i];
        g = conv_backward(l, x, params_[o], g, result.param_grads[o], result.param_grads[o + 1]);
        break;
      }
      case LayerKind::relu:
        for (std::size_t j = 0; j < g.size(); ++j) {
          if (!(x[j] > T{0})) g[j] = T{0};
        }
        break;
      case LayerKind::flatten:
      case LayerKind::softmax_xent_head:
        g = std::move(g).reshaped(x.shape());
        break;
    }
  }
  result.input_grad = std::move(g);
  return result;
}

template <typename T>
BasicBlock<T> BasicBlock<T>::slice(std::size_t lo, std::size_t hi) const {
  if (lo > hi || hi > layers_.size()) throw ConfigError("slice range out of bounds");
  std::vector<LayerSpec> layers(layers_.begin() + static_cast<std::ptrdiff_t>(lo),
                                layers_.begin() + static_cast<std::ptrdiff_t>(hi));
  const std::size_t p_lo = lo < layers_.size() ? param_offsets_[lo] : params_.size();
  const std::size_t p_hi = hi < layers_.size() ? param_offsets_[hi] : params_.size();
  std::vector<BasicTensor<T>> params(params_.begin() + static_cast<std::ptrdiff_t>(p_lo),
                                     params_.begin() + static_cast<std::ptrdiff_t>(p_hi));
  return from_parts(shapes_[lo], std::move(layers), std::move(params), first_layer_ + lo);
}

template class BasicBlock<float>;
template class BasicBlock<double>;

// --- free functions --------------------------------------------------------

template <typename T>
LossResult<T> softmax_xent(const BasicTensor<T>& logits, std::span<const Label> labels) {
  if (logits.rank() != 2) throw UsageError("softmax_xent expects [batch, classes] logits");
  const std::size_t batch = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  if (labels.size() != batch) throw UsageError("label count does not match logits rows");
  LossResult<T> r;
  r.grad = BasicTensor<T>(logits.shape());
  if (batch == 0) return r;
  double total = 0.0;
  const T inv_batch = T{1} / static_cast<T>(batch);
  for (std::size_t n = 0; n < batch; ++n) {
    const Label y = labels[n];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw DataError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
    const T* z = &logits[n * classes];
    T* g = &r.grad[n * classes];
    T m = z[0];
    for (std::size_t c = 1; c < classes; ++c) m = std::max(m, z[c]);
    T sum = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      g[c] = std::exp(z[c] - m);
      sum += g[c];
    }
    const T log_sum = std::log(sum);
    total += static_cast<double>(log_sum + m - z[y]);
    for (std::size_t c = 0; c < classes; ++c) g[c] = (g[c] / sum) * inv_batch;
    g[y] -= inv_batch;
  }
  r.loss = static_cast<T>(total / static_cast<double>(batch));
  return r;
}

template <typename T>
void sgd_step(std::vector<BasicTensor<T>>& params, const Gradients<T>& grads, T lr) {
  if (params.size() != grads.size()) throw UsageError("gradient count does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape()) throw UsageError("gradient shape does not match parameter");
    auto p = params[i].data();
    auto g = grads[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * g[j];
  }
}

template <typename T>
std::uint64_t flops(const BasicBlock<T>& block, std::size_t batch, Pass pass) {
  std::uint64_t per_sample = 0;
  for (std::size_t i = 0; i < block.layers().size(); ++i) {
    per_sample += forward_flops_per_sample(block.layers()[i], block.shapes()[i]);
  }
  const std::uint64_t fwd = per_sample * batch;
  return pass == Pass::forward ? fwd : 3 * fwd;
}

template <typename T>
std::vector<Label> argmax_rows(const BasicTensor<T>& logits) {
  const std::size_t batch = logits.dim(0);
  const std::size_t classes = logits.row_size();
  std::vector<Label> out(batch);
  for (std::size_t n = 0; n < batch; ++n) {
    const T* z = &logits[n * classes];
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (z[c] > z[best]) best = c;
    }
    out[n] = static_cast<Label>(best);
  }
  return out;
}

template LossResult<float> softmax_xent(const Tensor&, std::span<const Label>);
template LossResult<double> softmax_xent(const TensorD&, std::span<const Label>);
template void sgd_step(std::vector<Tensor>&, const Gradients<float>&, float);
template void sgd_step(std::vector<TensorD>&, const Gradients<double>&, double);
template std::uint64_t flops(const Block&, std::size_t, Pass);
template std::uint64_t flops(const BlockD&, std::size_t, Pass);
template std::vector<Label> argmax_rows(const Tensor&);
template std::vector<Label> argmax_rows(const TensorD&);

}  // namespace splitsim
