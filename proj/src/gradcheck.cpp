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

#include "splitsim/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "splitsim/block.hpp"
#include "splitsim/rng.hpp"

namespace splitsim {
namespace {

constexpr double kStep = 1e-6;

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + std::min(static_cast<std::size_t>(uniform01(rng) * static_cast<double>(hi - lo + 1)), hi - lo);
}

/// Values bounded away from zero so relu kinks sit far outside the
/// finite-difference step.
double away_from_zero(Rng& rng) {
  const double mag = 0.1 + 0.9 * uniform01(rng);
  return uniform01(rng) < 0.5 ? -mag : mag;
}

struct Case {
  LayerSpec layer;
  Shape sample;
  std::size_t batch;
};

Case random_case(LayerKind kind, Rng& rng) {
  const std::size_t batch = pick(rng, 1, 3);
  switch (kind) {
    case LayerKind::dense: {
      const std::size_t in = pick(rng, 1, 6), out = pick(rng, 1, 6);
      return {LayerSpec::dense(in, out), {in}, batch};
    }
    case LayerKind::conv2d: {
      const std::size_t k = pick(rng, 1, 3);
      const std::size_t in = pick(rng, 1, 3), out = pick(rng, 1, 3);
      const std::size_t h = pick(rng, k, 5), w = pick(rng, k, 5);
      return {LayerSpec::conv2d(in, out, k, pick(rng, 1, 2), pick(rng, 0, 1)), {in, h, w}, batch};
    }
    case LayerKind::relu:
      return {LayerSpec::relu(), {pick(rng, 1, 3), pick(rng, 1, 4)}, batch};
    case LayerKind::flatten:
      return {LayerSpec::flatten(), {pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 3)}, batch};
    case LayerKind::softmax_xent_head: {
      const std::size_t c = pick(rng, 2, 5);
      return {LayerSpec::head(c), {c}, batch};
    }
  }
  return {};
}

// Scalar objective sum(r * block(x)) with fixed random r.
double objective(const BlockD& block, const TensorD& x, const TensorD& r) {
  const TensorD y = block.predict(x);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += r[i] * y[i];
  return s;
}

}  // namespace

double gradient_relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / denom;
}

GradcheckReport gradcheck_layer(LayerKind kind, std::size_t cases, std::uint64_t seed) {
  GradcheckReport report{std::string(kind_name(kind)), cases, 0, 0.0};
  Rng rng(seed);
  for (std::size_t c = 0; c < cases; ++c) {
    const Case tc = random_case(kind, rng);
    BlockD block(tc.sample, {tc.layer}, rng(), 0);
    // Nudge parameters off their He-uniform defaults (bias starts at zero).
    for (auto& p : block.mutable_params()) {
      for (auto& v : p.data()) v = away_from_zero(rng);
    }
    Shape in_shape{tc.batch};
    in_shape.insert(in_shape.end(), tc.sample.begin(), tc.sample.end());
    TensorD x(in_shape);
    for (auto& v : x.data()) v = away_from_zero(rng);
    const Shape out_shape = [&] {
      Shape s{tc.batch};
      const Shape o = block.output_shape();
      s.insert(s.end(), o.begin(), o.end());
      return s;
    }();
    TensorD r(out_shape);
    for (auto& v : r.data()) v = 2.0 * uniform01(rng) - 1.0;

    const auto fwd = block.forward(x);
    const auto bwd = block.backward(fwd.cache, r);

    for (std::size_t t = 0; t < block.params().size(); ++t) {
      for (std::size_t j = 0; j < block.params()[t].size(); ++j) {
        BlockD probe = block;
        auto& params = probe.mutable_params();
        const double orig = params[t][j];
        params[t][j] = orig + kStep;
        const double plus = objective(probe, x, r);
        params[t][j] = orig - kStep;
        const double minus = objective(probe, x, r);
        const double numeric = (plus - minus) / (2 * kStep);
        report.max_rel_error =
            std::max(report.max_rel_error, gradient_relative_error(bwd.param_grads[t][j], numeric));
        ++report.entries;
      }
    }
    for (std::size_t j = 0; j < x.size(); ++j) {
      TensorD xp = x, xm = x;
      xp[j] += kStep;
      xm[j] -= kStep;
      const double numeric = (objective(block, xp, r) - objective(block, xm, r)) / (2 * kStep);
      report.max_rel_error = std::max(report.max_rel_error, gradient_relative_error(bwd.input_grad[j], numeric));
      ++report.entries;
    }
  }
  return report;
}

GradcheckReport gradcheck_softmax_xent(std::size_t cases, std::uint64_t seed) {
  GradcheckReport report{"softmax_xent", cases, 0, 0.0};
  Rng rng(seed);
  for (std::size_t c = 0; c < cases; ++c) {
    const std::size_t batch = pick(rng, 1, 4), classes = pick(rng, 2, 6);
    TensorD logits({batch, classes});
    for (auto& v : logits.data()) v = 4.0 * uniform01(rng) - 2.0;
    std::vector<Label> labels(batch);
    for (auto& y : labels) y = static_cast<Label>(pick(rng, 0, classes - 1));
    const auto analytic = softmax_xent(logits, labels);
    for (std::size_t j = 0; j < logits.size(); ++j) {
      TensorD lp = logits, lm = logits;
      lp[j] += kStep;
      lm[j] -= kStep;
      const double numeric = (softmax_xent(lp, labels).loss - softmax_xent(lm, labels).loss) / (2 * kStep);
      report.max_rel_error = std::max(report.max_rel_error, gradient_relative_error(analytic.grad[j], numeric));
      ++report.entries;
    }
  }
  return report;
}

std::vector<GradcheckReport> gradcheck_all(std::size_t cases, std::uint64_t seed) {
  std::vector<GradcheckReport> out;
  for (const auto kind : {LayerKind::dense, LayerKind::conv2d, LayerKind::relu, LayerKind::flatten,
                          LayerKind::softmax_xent_head}) {
    out.push_back(gradcheck_layer(kind, cases, derive_seed(seed, {static_cast<std::uint64_t>(kind)})));
  }
  out.push_back(gradcheck_softmax_xent(cases, derive_seed(seed, {99})));
  return out;
}

}  // namespace splitsim
