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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "splitsim/block.hpp"
#include "splitsim/error.hpp"
#include "splitsim/gradcheck.hpp"
#include "splitsim/model.hpp"

using namespace splitsim;

namespace {

class LayerGradient : public ::testing::TestWithParam<LayerKind> {};

}  // namespace

TEST_P(LayerGradient, MatchesCentralDifferences) {
  std::mt19937_64 rng(2024 + static_cast<int>(GetParam()));
  double worst = 0.0;
  std::size_t entries = 0;
  for (int c = 0; c < 25; ++c) {
    const oracle::FdCase fc = oracle::random_case(GetParam(), rng);
    const std::size_t batch = 1 + c % 3;
    BlockD block(fc.input, {fc.layer}, 100 + c);
    // He-uniform weights are fine but push them off zero too.
    for (auto& t : block.mutable_params()) t = oracle::signed_away_from_zero(t.shape(), rng, 0.05, 0.8);
    Shape xs = fc.input;
    xs.insert(xs.begin(), batch);
    const auto r = oracle::check_block(block, oracle::signed_away_from_zero(xs, rng), rng);
    worst = std::max(worst, r.max_rel);
    entries += r.entries;
  }
  EXPECT_GT(entries, 25u);
  EXPECT_LT(worst, 1e-5) << kind_name(GetParam());
}

INSTANTIATE_TEST_SUITE_P(AllKinds, LayerGradient,
                         ::testing::Values(LayerKind::dense, LayerKind::conv2d, LayerKind::relu, LayerKind::flatten,
                                           LayerKind::softmax_xent_head),
                         [](const auto& info) { return std::string(kind_name(info.param)); });

TEST(LossGradient, SoftmaxXentMatchesCentralDifferences) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> n01;
  double worst = 0.0;
  for (int c = 0; c < 20; ++c) {
    const std::size_t b = 1 + c % 4, classes = 3;
    TensorD logits({b, classes});
    for (auto& v : logits.storage()) v = 2.0 * n01(rng);
    std::vector<Label> y(b);
    for (auto& l : y) l = static_cast<Label>(rng() % classes);
    const auto res = softmax_xent(logits, y);
    EXPECT_NEAR(res.loss, oracle::xent(logits, y), 1e-12);
    for (std::size_t j = 0; j < logits.size(); ++j) {
      const double saved = logits[j];
      logits[j] = saved + 1e-6;
      const double up = oracle::xent(logits, y);
      logits[j] = saved - 1e-6;
      const double dn = oracle::xent(logits, y);
      logits[j] = saved;
      worst = std::max(worst, oracle::rel_err(res.grad[j], (up - dn) / 2e-6));
    }
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(LossGradient, WholeToyModelsMatchCentralDifferences) {
  std::mt19937_64 rng(5);
  for (const ModelSpec& spec : {toy_mlp(3, 3), toy_cnn({1, 5, 5}, 3)}) {
    BlockD model = spec.instantiate(17).cast<double>();
    Shape xs = spec.input_shape;
    xs.insert(xs.begin(), 2);
    const TensorD x = oracle::signed_away_from_zero(xs, rng);
    const std::vector<Label> y{0, 2};
    const auto fwd = model.forward(x);
    const auto grads = model.backward(fwd.cache, softmax_xent(fwd.output, y).grad).param_grads;
    double worst = 0.0;
    for (std::size_t t = 0; t < model.params().size(); ++t) {
      for (std::size_t j = 0; j < model.params()[t].size(); j += 7) {
        const double saved = model.params()[t][j];
        model.mutable_params()[t][j] = saved + 1e-6;
        const double up = oracle::xent(model.predict(x), y);
        model.mutable_params()[t][j] = saved - 1e-6;
        const double dn = oracle::xent(model.predict(x), y);
        model.mutable_params()[t][j] = saved;
        worst = std::max(worst, oracle::rel_err(grads[t][j], (up - dn) / 2e-6));
      }
    }
    EXPECT_LT(worst, 1e-5) << spec.name;
  }
}

TEST(LossGradient, SinglePrecisionWithinLooseTolerance) {
  std::mt19937_64 rng(8);
  const ModelSpec spec = toy_mlp(4, 3);
  Block model = spec.instantiate(3);
  Tensor x({3, 4});
  for (auto& v : x.storage()) v = static_cast<float>(std::normal_distribution<double>()(rng));
  const std::vector<Label> y{0, 1, 2};
  const auto fwd = model.forward(x);
  const auto grads = model.backward(fwd.cache, softmax_xent(fwd.output, y).grad).param_grads;
  const BlockD ref = model.cast<double>();
  const auto fwd_d = ref.forward(x.cast<double>());
  const auto grads_d = ref.backward(fwd_d.cache, softmax_xent(fwd_d.output, y).grad).param_grads;
  for (std::size_t t = 0; t < grads.size(); ++t) {
    for (std::size_t j = 0; j < grads[t].size(); ++j) EXPECT_LT(oracle::rel_err(grads[t][j], grads_d[t][j]), 1e-3);
  }
}

TEST(Forward, DenseIdentity) {
  Block b({2}, {LayerSpec::dense(2, 2)}, 1);
  b.mutable_params()[0] = Tensor({2, 2}, {1, 0, 0, 1});
  b.mutable_params()[1] = Tensor({2}, {0, 0});
  EXPECT_EQ(b.predict(Tensor({1, 2}, {3, -1})).storage(), (std::vector<float>{3, -1}));
}

TEST(Forward, Relu) {
  Block b({3}, {LayerSpec::relu()}, 1);
  EXPECT_EQ(b.predict(Tensor({1, 3}, {-1, 0, 2})).storage(), (std::vector<float>{0, 0, 2}));
}

TEST(Forward, UnitConvKernelIsIdentity) {
  Block b({1, 3, 4}, {LayerSpec::conv2d(1, 1, 1)}, 1);
  b.mutable_params()[0].fill(1.0f);
  b.mutable_params()[1].fill(0.0f);
  Tensor x({2, 1, 3, 4});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(i) - 7.5f;
  EXPECT_EQ(b.predict(x), x);
}

TEST(Forward, ConvOutputShape) {
  EXPECT_EQ(infer_output_shape(LayerSpec::conv2d(4, 16, 3, 2, 1), {4, 8, 8}), (Shape{16, 4, 4}));
  EXPECT_THROW(infer_output_shape(LayerSpec::dense(5, 2), {4}), ConfigError);
  EXPECT_THROW(infer_output_shape(LayerSpec::conv2d(1, 2, 5), {1, 3, 3}), ConfigError);
}

TEST(Forward, WrongBatchShapeRejected) {
  Block b({3}, {LayerSpec::dense(3, 2)}, 1);
  EXPECT_THROW(b.predict(Tensor({2, 4})), ConfigError);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  const Block b = toy_cnn({1, 6, 6}, 3).instantiate(4);
  Tensor x({2, 1, 6, 6}, 0.5f);
  const auto fwd = b.forward(x);
  const auto bwd = b.backward(fwd.cache, Tensor(fwd.output.shape(), 0.0f));
  for (const auto& g : bwd.param_grads) {
    for (const float v : g.storage()) EXPECT_EQ(v, 0.0f);
  }
  for (const float v : bwd.input_grad.storage()) EXPECT_EQ(v, 0.0f);
}

TEST(Backward, DenseWeightGradIsOuterProduct) {
  BlockD b({3}, {LayerSpec::dense(3, 2)}, 9);
  const TensorD x({1, 3}, {0.5, -2.0, 1.5});
  const TensorD g({1, 2}, {3.0, -1.0});
  const auto bwd = b.backward(b.forward(x).cache, g);
  for (std::size_t o = 0; o < 2; ++o) {
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(bwd.param_grads[0][o * 3 + i], g[o] * x[i]);
  }
  EXPECT_DOUBLE_EQ(bwd.param_grads[1][0], 3.0);
  EXPECT_DOUBLE_EQ(bwd.param_grads[1][1], -1.0);
}

TEST(Backward, StaleCacheRejected) {
  Block b({3}, {LayerSpec::dense(3, 2)}, 9);
  const auto fwd = b.forward(Tensor({1, 3}, 1.0f));
  b.mutable_params()[0][0] += 1.0f;
  EXPECT_THROW(b.backward(fwd.cache, Tensor({1, 2}, 1.0f)), UsageError);

  const Block other = b;
  const auto fwd2 = b.forward(Tensor({1, 3}, 1.0f));
  EXPECT_THROW(other.backward(fwd2.cache, Tensor({1, 2}, 1.0f)), UsageError);
}

TEST(Loss, UniformLogitsGiveLogC) {
  for (std::size_t c : {2u, 5u, 10u}) {
    const Tensor logits({4, c}, 0.3f);
    const std::vector<Label> y{0, 1, 0, 1};
    EXPECT_NEAR(softmax_xent(logits, y).loss, std::log(static_cast<double>(c)), 1e-6);
  }
}

TEST(Loss, LargeMarginDrivesLossToZero) {
  double prev = 1e9;
  for (const double margin : {1.0, 5.0, 20.0, 80.0}) {
    const TensorD logits({1, 3}, {margin, 0.0, 0.0});
    const double loss = softmax_xent(logits, std::vector<Label>{0}).loss;
    EXPECT_LT(loss, prev);
    prev = loss;
  }
  EXPECT_LT(prev, 1e-30);
}

TEST(Loss, BadLabelRejected) {
  const Tensor logits({1, 3}, 0.0f);
  EXPECT_THROW(softmax_xent(logits, std::vector<Label>{3}), DataError);
  EXPECT_THROW(softmax_xent(logits, std::vector<Label>{-1}), DataError);
  EXPECT_THROW(softmax_xent(logits, std::vector<Label>{0, 1}), UsageError);
}

TEST(Sgd, SingleStep) {
  std::vector<TensorD> p{TensorD({1}, {1.0})};
  sgd_step(p, Gradients<double>{TensorD({1}, {0.5})}, 0.1);
  EXPECT_DOUBLE_EQ(p[0][0], 0.95);
}

TEST(Sgd, ZeroGradsAreNoOp) {
  std::vector<Tensor> p{Tensor({3}, {1, 2, 3})};
  const auto before = p;
  sgd_step(p, Gradients<float>{Tensor({3}, 0.0f)}, 0.7f);
  EXPECT_EQ(p, before);
}

TEST(Sgd, TwoStepsEqualOneSummedStep) {
  std::vector<TensorD> a{TensorD({2}, {1.0, -1.0})}, b = a;
  const Gradients<double> g1{TensorD({2}, {0.25, 0.5})}, g2{TensorD({2}, {-0.125, 1.0})};
  sgd_step(a, g1, 0.5);
  sgd_step(a, g2, 0.5);
  sgd_step(b, Gradients<double>{TensorD({2}, {0.125, 1.5})}, 0.5);
  EXPECT_EQ(a, b);
}

TEST(Sgd, ShapeMismatchRejected) {
  std::vector<Tensor> p{Tensor({3})};
  EXPECT_THROW(sgd_step(p, Gradients<float>{Tensor({2})}, 0.1f), UsageError);
}

TEST(Flops, DenseTenByFive) {
  const Block b({10}, {LayerSpec::dense(10, 5)}, 1);
  EXPECT_EQ(flops(b, 1, Pass::forward), 105u);
  EXPECT_EQ(flops(b, 1, Pass::forward_backward), 315u);
}

TEST(Flops, EmptyBlockIsZero) {
  EXPECT_EQ(flops(Block(), 8, Pass::forward_backward), 0u);
}

TEST(Flops, LinearInBatch) {
  const Block b = toy_cnn({1, 8, 8}, 4).instantiate(1);
  const auto one = flops(b, 1, Pass::forward);
  EXPECT_GT(one, 0u);
  for (std::size_t batch : {2u, 7u, 64u}) EXPECT_EQ(flops(b, batch, Pass::forward), batch * one);
}

TEST(Flops, ConvByHand) {
  // 4 output channels on a 3x3 map, kernel 3 over 2 channels, pad 1.
  const Block b({2, 3, 3}, {LayerSpec::conv2d(2, 4, 3, 1, 1)}, 1);
  EXPECT_EQ(flops(b, 1, Pass::forward), 4u * 9u * (2u * 2u * 9u + 1u));
}

TEST(Layers, DescribeParseRoundTrip) {
  for (const auto& l : {LayerSpec::dense(8, 32), LayerSpec::conv2d(1, 4, 3, 1, 1), LayerSpec::relu(),
                        LayerSpec::flatten(), LayerSpec::head(10)}) {
    EXPECT_EQ(parse_layer(describe(l)), l) << describe(l);
  }
  EXPECT_THROW(parse_layer("dense(3)"), ConfigError);
  EXPECT_THROW(parse_layer("pool(2)"), ConfigError);
}

TEST(LibraryGradcheck, AgreesWithOracleVerdict) {
  for (const auto& r : gradcheck_all(20, 11)) {
    EXPECT_GE(r.cases, 20u);
    EXPECT_LT(r.max_rel_error, 1e-5) << r.name;
  }
}
