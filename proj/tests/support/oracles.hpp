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

// Reference computations that deliberately avoid the library's own
// diagnostic code paths. Only forward(), backward() and softmax_xent() of the
// code under test are called.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "splitsim/block.hpp"
#include "splitsim/layer.hpp"

namespace oracle {

using splitsim::BlockD;
using splitsim::LayerKind;
using splitsim::LayerSpec;
using splitsim::Shape;
using splitsim::TensorD;

struct FdResult {
  double max_rel = 0.0;
  std::size_t entries = 0;
};

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

/// Random values in [lo, hi] with random sign, so no entry sits near a relu kink.
inline TensorD signed_away_from_zero(Shape shape, std::mt19937_64& rng, double lo = 0.1, double hi = 1.0) {
  std::uniform_real_distribution<double> mag(lo, hi);
  std::bernoulli_distribution sign(0.5);
  TensorD t(std::move(shape));
  for (auto& v : t.storage()) v = sign(rng) ? mag(rng) : -mag(rng);
  return t;
}

/// Projection objective L = sum(r * block(x)).
inline double projected(const BlockD& block, const TensorD& x, const TensorD& r) {
  const TensorD y = block.predict(x);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
  return s;
}

/// Central differences of the projection objective against every parameter
/// and input entry, compared with backward(r).
inline FdResult check_block(BlockD block, TensorD x, std::mt19937_64& rng, double h = 1e-6) {
  Shape out_shape = block.output_shape();
  out_shape.insert(out_shape.begin(), x.dim(0));
  std::normal_distribution<double> n01;
  TensorD r(out_shape);
  for (auto& v : r.storage()) v = n01(rng);

  const auto fwd = block.forward(x);
  const auto bwd = block.backward(fwd.cache, r);
  FdResult res;

  for (std::size_t t = 0; t < block.params().size(); ++t) {
    for (std::size_t j = 0; j < block.params()[t].size(); ++j) {
      const double saved = block.params()[t][j];
      block.mutable_params()[t][j] = saved + h;
      const double up = projected(block, x, r);
      block.mutable_params()[t][j] = saved - h;
      const double dn = projected(block, x, r);
      block.mutable_params()[t][j] = saved;
      res.max_rel = std::max(res.max_rel, rel_err(bwd.param_grads[t][j], (up - dn) / (2 * h)));
      ++res.entries;
    }
  }
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double saved = x[j];
    x[j] = saved + h;
    const double up = projected(block, x, r);
    x[j] = saved - h;
    const double dn = projected(block, x, r);
    x[j] = saved;
    res.max_rel = std::max(res.max_rel, rel_err(bwd.input_grad[j], (up - dn) / (2 * h)));
    ++res.entries;
  }
  return res;
}

/// Mean cross-entropy written out directly (log-sum-exp with max shift).
inline double xent(const TensorD& logits, const std::vector<splitsim::Label>& labels) {
  const std::size_t c = logits.row_size();
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    double m = -1e300;
    for (std::size_t k = 0; k < c; ++k) m = std::max(m, logits[i * c + k]);
    double z = 0.0;
    for (std::size_t k = 0; k < c; ++k) z += std::exp(logits[i * c + k] - m);
    total += std::log(z) + m - logits[i * c + static_cast<std::size_t>(labels[i])];
  }
  return total / static_cast<double>(labels.size());
}

// Small random configurations per layer kind, independent of the library's
// gradcheck case generator.
struct FdCase {
  Shape input;
  LayerSpec layer;
};

inline FdCase random_case(LayerKind kind, std::mt19937_64& rng) {
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  switch (kind) {
    case LayerKind::dense: {
      const auto in = pick(1, 6), out = pick(1, 5);
      return {{in}, LayerSpec::dense(in, out)};
    }
    case LayerKind::conv2d: {
      const auto c = pick(1, 3), o = pick(1, 3), k = pick(1, 3), s = pick(1, 2), pad = pick(0, 1);
      const auto hw = k + pick(0, 3);
      return {{c, hw, hw + pick(0, 1)}, LayerSpec::conv2d(c, o, k, s, pad)};
    }
    case LayerKind::relu:
      return {{pick(1, 4), pick(1, 3)}, LayerSpec::relu()};
    case LayerKind::flatten:
      return {{pick(1, 3), pick(1, 3), pick(1, 3)}, LayerSpec::flatten()};
    case LayerKind::softmax_xent_head: {
      const auto c = pick(2, 6);
      return {{c}, LayerSpec::head(c)};
    }
  }
  return {};
}

/// Brute-force weighted mean of flat parameter vectors, long double accumulation.
inline std::vector<double> weighted_mean(const std::vector<std::vector<double>>& models,
                                         const std::vector<double>& weights) {
  long double total = 0;
  for (const double w : weights) total += w;
  std::vector<double> out(models.front().size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    long double s = 0;
    for (std::size_t k = 0; k < models.size(); ++k) s += static_cast<long double>(weights[k]) * models[k][j];
    out[j] = static_cast<double>(s / total);
  }
  return out;
}

}  // namespace oracle
