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

#include <numeric>
#include <set>
#include <sstream>

#include "splitsim/block.hpp"
#include "splitsim/data.hpp"
#include "splitsim/error.hpp"
#include "splitsim/rng.hpp"

using namespace splitsim;

TEST(Synthetic, FixedSeedIsBitwiseReproducible) {
  for (const auto kind : {SyntheticKind::gaussian_blobs, SyntheticKind::spirals, SyntheticKind::image_patches}) {
    const Shape shape = kind == SyntheticKind::image_patches ? Shape{1, 8, 8} : Shape{4};
    EXPECT_EQ(make_synthetic(300, 3, kind, shape, 5), make_synthetic(300, 3, kind, shape, 5));
    EXPECT_NE(make_synthetic(300, 3, kind, shape, 5), make_synthetic(300, 3, kind, shape, 6));
  }
}

TEST(Synthetic, SingleClassIsAllZero) {
  const Dataset ds = make_synthetic(50, 1, SyntheticKind::gaussian_blobs, {3}, 1);
  for (const Label l : ds.labels) EXPECT_EQ(l, 0);
}

TEST(Synthetic, BalancedAndShaped) {
  const Dataset ds = make_synthetic(1003, 4, SyntheticKind::image_patches, {2, 6, 6}, 2);
  EXPECT_EQ(ds.samples.shape(), (Shape{1003, 2, 6, 6}));
  const auto h = ds.histogram();
  EXPECT_EQ(*std::max_element(h.begin(), h.end()) - *std::min_element(h.begin(), h.end()), 1u);
  EXPECT_TRUE(ds.samples.all_finite());
  EXPECT_THROW(make_synthetic(10, 2, SyntheticKind::spirals, {1}, 1), ConfigError);
}

TEST(Synthetic, TwoBlobsAreLinearlySeparable) {
  const Dataset ds = make_synthetic(2000, 2, SyntheticKind::gaussian_blobs, {4}, 3);
  Block model({4}, {LayerSpec::dense(4, 2), LayerSpec::head(2)}, 1);
  Rng rng(1);
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < 5; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < order.size(); i += 16) {
      const std::span<const std::size_t> idx(order.data() + i, std::min<std::size_t>(16, order.size() - i));
      std::vector<Label> y;
      for (const auto j : idx) y.push_back(ds.labels[j]);
      const auto fwd = model.forward(gather_rows(ds.samples, idx));
      const auto grads = model.backward(fwd.cache, softmax_xent(fwd.output, y).grad).param_grads;
      sgd_step(model.mutable_params(), grads, 0.05f);
    }
  }
  const auto pred = argmax_rows(model.predict(ds.samples));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == ds.labels[i];
  EXPECT_GT(static_cast<double>(correct) / static_cast<double>(ds.size()), 0.99);
}

TEST(Partition, SingleDeviceTakesEverything) {
  const Dataset ds = make_synthetic(500, 5, SyntheticKind::gaussian_blobs, {2}, 1);
  for (const double alpha : {0.01, 0.5, 1.0}) {
    const Partition p = dirichlet_partition(ds, 1, alpha, 1e-9, 4);
    EXPECT_EQ(p.counts, std::vector<std::size_t>{500});
    for (const auto a : p.assignment) EXPECT_EQ(a, 0u);
  }
}

TEST(Partition, ConservationEveryIndexOnce) {
  const Dataset ds = make_synthetic(1237, 7, SyntheticKind::gaussian_blobs, {2}, 1);
  for (const double alpha : {0.05, 0.1, 0.33, 1.0}) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      const Partition p = dirichlet_partition(ds, 9, alpha, 1e-9, seed);
      EXPECT_EQ(std::accumulate(p.counts.begin(), p.counts.end(), std::size_t{0}), ds.size());
      std::set<std::size_t> seen;
      for (std::size_t k = 0; k < 9; ++k) {
        const auto idx = p.indices_of(k);
        EXPECT_EQ(idx.size(), p.counts[k]);
        EXPECT_GT(idx.size(), 0u);
        seen.insert(idx.begin(), idx.end());
      }
      EXPECT_EQ(seen.size(), ds.size());
    }
  }
}

TEST(Partition, Deterministic) {
  const Dataset ds = make_synthetic(800, 4, SyntheticKind::gaussian_blobs, {2}, 1);
  EXPECT_EQ(dirichlet_partition(ds, 8, 0.2, 1e-9, 3).assignment, dirichlet_partition(ds, 8, 0.2, 1e-9, 3).assignment);
  EXPECT_NE(dirichlet_partition(ds, 8, 0.2, 1e-9, 3).assignment, dirichlet_partition(ds, 8, 0.2, 1e-9, 4).assignment);
}

TEST(Partition, AlphaOneIsNearIid) {
  const Dataset ds = make_synthetic(10000, 10, SyntheticKind::gaussian_blobs, {2}, 1);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Partition p = dirichlet_partition(ds, 8, 1.0, 1e-9, seed);
    EXPECT_LT(mean_partition_tv(ds, p), 0.05) << "seed " << seed;
  }
}

TEST(Partition, SmallerAlphaIsMoreSkewed) {
  const Dataset ds = make_synthetic(10000, 10, SyntheticKind::gaussian_blobs, {2}, 1);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const double tv01 = mean_partition_tv(ds, dirichlet_partition(ds, 8, 0.1, 1e-9, seed));
    const double tv1 = mean_partition_tv(ds, dirichlet_partition(ds, 8, 1.0, 1e-9, seed));
    EXPECT_GT(tv01, tv1);
  }
}

TEST(Partition, InvalidArgumentsRejected) {
  const Dataset ds = make_synthetic(20, 2, SyntheticKind::gaussian_blobs, {2}, 1);
  EXPECT_THROW(dirichlet_partition(ds, 0, 0.5, 1e-9, 1), ConfigError);
  EXPECT_THROW(dirichlet_partition(ds, 21, 0.5, 1e-9, 1), ConfigError);
  EXPECT_THROW(dirichlet_partition(ds, 2, 0.0, 1e-9, 1), ConfigError);
  EXPECT_THROW(dirichlet_partition(ds, 2, 1.5, 1e-9, 1), ConfigError);
}

TEST(Dirichlet, SumsToOneEvenForTinyConcentration) {
  Rng rng(3);
  for (const double c : {1e-6, 0.01, 1.0, 1e8}) {
    const auto v = sample_dirichlet(10, c, rng);
    EXPECT_NEAR(std::accumulate(v.begin(), v.end(), 0.0), 1.0, 1e-12);
    for (const double x : v) EXPECT_GE(x, 0.0);
  }
}

TEST(Dirichlet, MeanIsUniform) {
  Rng rng(4);
  std::vector<double> mean(4, 0.0);
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) {
    const auto v = sample_dirichlet(4, 0.5, rng);
    for (std::size_t k = 0; k < 4; ++k) mean[k] += v[k] / draws;
  }
  // Var of one component is (1/4)(3/4)/(2+1) = 1/16; 5 sigma of the mean.
  for (const double m : mean) EXPECT_NEAR(m, 0.25, 5.0 * 0.25 / std::sqrt(draws));
}

TEST(Distances, TotalVariation) {
  const std::vector<double> p{0.5, 0.5, 0.0}, q{0.0, 0.5, 0.5};
  EXPECT_DOUBLE_EQ(total_variation(p, q), 0.5);
  EXPECT_DOUBLE_EQ(total_variation(p, p), 0.0);
}

TEST(Validation, SplitIsDisjointAndSized) {
  const Dataset ds = make_synthetic(1000, 4, SyntheticKind::gaussian_blobs, {3}, 1);
  const auto [train, val] = split_validation(ds, 0.1, 7);
  EXPECT_EQ(val.size(), 100u);
  EXPECT_EQ(train.size(), 900u);
  EXPECT_THROW(split_validation(ds, 1.0, 7), ConfigError);
}

TEST(Io, RoundTrip) {
  const Dataset ds = make_synthetic(37, 3, SyntheticKind::image_patches, {1, 4, 5}, 2);
  std::stringstream buf;
  write_dataset(buf, ds);
  EXPECT_EQ(buf.str().size(), 8u + 4u + 12u + 4u + 37u * 20u * 4u + 37u * 2u);
  EXPECT_EQ(read_dataset(buf), ds);
}

TEST(Io, TruncatedInputRejected) {
  const Dataset ds = make_synthetic(10, 2, SyntheticKind::gaussian_blobs, {3}, 2);
  std::stringstream buf;
  write_dataset(buf, ds);
  std::string bytes = buf.str();
  bytes.resize(bytes.size() - 3);
  std::stringstream cut(bytes);
  EXPECT_THROW(read_dataset(cut), DataError);
}
