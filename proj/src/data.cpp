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

#include "splitsim/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "splitsim/error.hpp"
#include "splitsim/rng.hpp"

namespace splitsim {

void Dataset::validate() const {
  if (labels.empty()) throw DataError("dataset is empty");
  if (samples.rank() < 2 || samples.dim(0) != labels.size()) throw DataError("sample count does not match labels");
  for (const Label y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) throw DataError("label outside class range");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.samples = gather_rows(samples, indices);
  out.labels.reserve(indices.size());
  for (const auto i : indices) out.labels.push_back(labels.at(i));
  out.classes = classes;
  return out;
}

std::vector<std::size_t> Dataset::histogram() const {
  std::vector<std::size_t> h(classes, 0);
  for (const Label y : labels) ++h[static_cast<std::size_t>(y)];
  return h;
}

SyntheticKind parse_synthetic_kind(std::string_view name) {
  if (name == "gaussian-blobs" || name == "blobs") return SyntheticKind::gaussian_blobs;
  if (name == "spirals") return SyntheticKind::spirals;
  if (name == "image-patches" || name == "patches") return SyntheticKind::image_patches;
  throw ConfigError("unknown dataset kind '" + std::string(name) + "'");
}

std::string_view synthetic_kind_name(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::gaussian_blobs:
      return "gaussian-blobs";
    case SyntheticKind::spirals:
      return "spirals";
    case SyntheticKind::image_patches:
      return "image-patches";
  }
  return "?";
}

namespace {

constexpr double kBlobRadius = 6.0;

std::vector<Label> balanced_labels(std::size_t n, std::size_t classes, Rng& rng) {
  std::vector<Label> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<Label>(i % classes);
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

void fill_blobs(Dataset& ds, std::size_t dim, double noise, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> means(ds.classes * dim);
  for (std::size_t c = 0; c < ds.classes; ++c) {
    double norm = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      means[c * dim + j] = normal(rng);
      norm += means[c * dim + j] * means[c * dim + j];
    }
    norm = std::sqrt(std::max(norm, 1e-12));
    for (std::size_t j = 0; j < dim; ++j) means[c * dim + j] *= kBlobRadius / norm;
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto c = static_cast<std::size_t>(ds.labels[i]);
    for (std::size_t j = 0; j < dim; ++j) {
      ds.samples[i * dim + j] = static_cast<float>(means[c * dim + j] + noise * normal(rng));
    }
  }
}

void fill_spirals(Dataset& ds, std::size_t dim, double noise, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto c = static_cast<double>(ds.labels[i]);
    const double t = uniform01(rng);
    const double r = 0.2 + 2.8 * t;
    const double angle = c * two_pi / static_cast<double>(ds.classes) + 1.5 * std::numbers::pi * t +
                         0.15 * noise * normal(rng);
    float* x = &ds.samples[i * dim];
    x[0] = static_cast<float>(r * std::cos(angle));
    x[1] = static_cast<float>(r * std::sin(angle));
    for (std::size_t j = 2; j < dim; ++j) x[j] = static_cast<float>(0.1 * noise * normal(rng));
  }
}

void fill_patches(Dataset& ds, const Shape& shape, double noise, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t channels = shape[0], h = shape[1], w = shape[2];
  const std::size_t pixels = channels * h * w;
  // Each class template is a sum of three signed Gaussian bumps.
  std::vector<double> templates(ds.classes * pixels, 0.0);
  for (std::size_t c = 0; c < ds.classes; ++c) {
    for (int bump = 0; bump < 3; ++bump) {
      const double cy = uniform01(rng) * static_cast<double>(h);
      const double cx = uniform01(rng) * static_cast<double>(w);
      const double sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;
      const double width = 1.0 + uniform01(rng) * static_cast<double>(std::min(h, w)) / 4.0;
      for (std::size_t ch = 0; ch < channels; ++ch) {
        for (std::size_t y = 0; y < h; ++y) {
          for (std::size_t x = 0; x < w; ++x) {
            const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
            templates[c * pixels + (ch * h + y) * w + x] +=
                2.0 * sign * std::exp(-(dy * dy + dx * dx) / (2.0 * width * width));
          }
        }
      }
    }
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto c = static_cast<std::size_t>(ds.labels[i]);
    for (std::size_t j = 0; j < pixels; ++j) {
      ds.samples[i * pixels + j] = static_cast<float>(templates[c * pixels + j] + 0.5 * noise * normal(rng));
    }
  }
}

}  // namespace

Dataset make_synthetic(std::size_t n, std::size_t classes, SyntheticKind kind, const Shape& shape, std::uint64_t seed,
                       double noise) {
  if (classes == 0) throw ConfigError("dataset needs at least one class");
  if (n < classes) throw ConfigError("dataset needs at least one sample per class");
  if (classes > std::numeric_limits<std::uint16_t>::max()) throw ConfigError("too many classes");
  switch (kind) {
    case SyntheticKind::gaussian_blobs:
      if (shape.size() != 1 || shape[0] == 0) throw ConfigError("gaussian-blobs expects shape [d]");
      break;
    case SyntheticKind::spirals:
      if (shape.size() != 1 || shape[0] < 2) throw ConfigError("spirals expects shape [d] with d >= 2");
      break;
    case SyntheticKind::image_patches:
      if (shape.size() != 3 || numel(shape) == 0) throw ConfigError("image-patches expects shape [c, h, w]");
      break;
  }
  Rng rng(derive_seed(seed, {kStreamData}));
  Dataset ds;
  ds.classes = classes;
  ds.labels = balanced_labels(n, classes, rng);
  Shape full{n};
  full.insert(full.end(), shape.begin(), shape.end());
  ds.samples = Tensor(full);
  switch (kind) {
    case SyntheticKind::gaussian_blobs:
      fill_blobs(ds, shape[0], noise, rng);
      break;
    case SyntheticKind::spirals:
      fill_spirals(ds, shape[0], noise, rng);
      break;
    case SyntheticKind::image_patches:
      fill_patches(ds, shape, noise, rng);
      break;
  }
  return ds;
}

// --- partitioning ------------------------------------------------------------

std::vector<std::size_t> Partition::indices_of(std::size_t device) const {
  std::vector<std::size_t> out;
  out.reserve(device < counts.size() ? counts[device] : 0);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == device) out.push_back(i);
  }
  return out;
}

std::vector<double> sample_dirichlet(std::size_t dim, double concentration, Rng& rng) {
  if (!(concentration > 0.0)) throw ConfigError("Dirichlet concentration must be positive");
  // Gamma(a) for a < 1 is sampled as Gamma(a + 1) * U^(1/a), kept in log space
  // so tiny concentrations do not underflow every component to zero.
  std::vector<double> log_g(dim);
  const double shape = concentration < 1.0 ? concentration + 1.0 : concentration;
  std::gamma_distribution<double> gamma(shape, 1.0);
  for (auto& lg : log_g) {
    double g = gamma(rng);
    while (!(g > 0.0)) g = gamma(rng);
    lg = std::log(g);
    if (concentration < 1.0) {
      double u = uniform01(rng);
      while (!(u > 0.0)) u = uniform01(rng);
      lg += std::log(u) / concentration;
    }
  }
  const double m = *std::max_element(log_g.begin(), log_g.end());
  std::vector<double> p(dim);
  double sum = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    p[i] = std::exp(log_g[i] - m);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

namespace {

Partition draw_partition(const Dataset& ds, std::size_t devices, double concentration, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {kStreamPartition}));
  const std::size_t n = ds.size();
  const std::size_t classes = ds.classes;

  std::vector<std::vector<double>> priors(devices);
  for (auto& p : priors) p = sample_dirichlet(classes, concentration, rng);

  std::vector<std::vector<std::size_t>> pools(classes);
  for (std::size_t i = 0; i < n; ++i) pools[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  for (auto& pool : pools) std::shuffle(pool.begin(), pool.end(), rng);

  std::vector<std::size_t> quota(devices, n / devices);
  for (std::size_t k = 0; k < n % devices; ++k) ++quota[k];
  std::vector<std::size_t> active(devices);
  std::iota(active.begin(), active.end(), std::size_t{0});

  Partition part;
  part.devices = devices;
  part.assignment.assign(n, 0);
  part.counts.assign(devices, 0);

  std::vector<double> weights(classes);
  for (std::size_t step = 0; step < n; ++step) {
    const auto slot = std::min(static_cast<std::size_t>(uniform01(rng) * static_cast<double>(active.size())),
                               active.size() - 1);
    const std::size_t k = active[slot];

    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      weights[c] = pools[c].empty() ? 0.0 : priors[k][c];
      total += weights[c];
    }
    if (!(total > 0.0)) {
      total = 0.0;
      for (std::size_t c = 0; c < classes; ++c) {
        weights[c] = static_cast<double>(pools[c].size());
        total += weights[c];
      }
    }
    double u = uniform01(rng) * total;
    std::size_t chosen = classes;
    for (std::size_t c = 0; c < classes; ++c) {
      if (weights[c] <= 0.0) continue;
      chosen = c;
      if (u < weights[c]) break;
      u -= weights[c];
    }

    part.assignment[pools[chosen].back()] = k;
    pools[chosen].pop_back();
    ++part.counts[k];
    if (--quota[k] == 0) {
      active[slot] = active.back();
      active.pop_back();
    }
  }
  return part;
}

}  // namespace

Partition dirichlet_partition(const Dataset& ds, std::size_t devices, double alpha, double epsilon,
                              std::uint64_t seed) {
  if (devices == 0) throw ConfigError("partition needs at least one device");
  if (devices > ds.size()) throw ConfigError("more devices than samples");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  const double concentration = alpha / (1.0 - alpha + epsilon);
  for (std::uint64_t s = seed;; ++s) {
    Partition p = draw_partition(ds, devices, concentration, s);
    if (std::find(p.counts.begin(), p.counts.end(), std::size_t{0}) == p.counts.end()) return p;
  }
}

std::vector<double> label_distribution(const Dataset& ds, std::span<const std::size_t> indices) {
  std::vector<double> d(ds.classes, 0.0);
  for (const auto i : indices) d[static_cast<std::size_t>(ds.labels[i])] += 1.0;
  const double total = static_cast<double>(indices.size());
  if (total > 0.0) {
    for (auto& v : d) v /= total;
  }
  return d;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw UsageError("distributions differ in length");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += std::abs(p[i] - q[i]);
  return 0.5 * sum;
}

double mean_partition_tv(const Dataset& ds, const Partition& partition) {
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto global = label_distribution(ds, all);
  double sum = 0.0;
  for (std::size_t k = 0; k < partition.devices; ++k) {
    const auto idx = partition.indices_of(k);
    sum += total_variation(label_distribution(ds, idx), global);
  }
  return sum / static_cast<double>(partition.devices);
}

std::pair<Dataset, Dataset> split_validation(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("validation fraction must lie in [0, 1)");
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {kStreamValidation}));
  std::shuffle(order.begin(), order.end(), rng);
  auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ds.size())));
  n_val = std::min(n_val, ds.size() - 1);
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {ds.subset(train), ds.subset(val)};
}

// --- binary dump -------------------------------------------------------------

namespace {

template <typename U>
void put_le(std::ostream& out, U value) {
  unsigned char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw DataError("truncated dataset file");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(static_cast<U>(bytes[i]) << (8 * i));
  return value;
}

}  // namespace

void write_dataset(std::ostream& out, const Dataset& ds) {
  ds.validate();
  const Shape shape = ds.sample_shape();
  put_le<std::uint64_t>(out, ds.size());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
  for (const auto d : shape) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.classes));
  for (const float v : ds.samples.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  for (const Label y : ds.labels) put_le<std::uint16_t>(out, static_cast<std::uint16_t>(y));
  if (!out) throw DataError("failed writing dataset");
}

Dataset read_dataset(std::istream& in) {
  const auto n = get_le<std::uint64_t>(in);
  const auto rank = get_le<std::uint32_t>(in);
  if (n == 0 || rank == 0 || rank > 8) throw DataError("corrupt dataset header");
  Shape shape{static_cast<std::size_t>(n)};
  for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(get_le<std::uint32_t>(in));
  Dataset ds;
  ds.classes = get_le<std::uint32_t>(in);
  std::vector<float> values(numel(shape));
  for (auto& v : values) v = std::bit_cast<float>(get_le<std::uint32_t>(in));
  ds.samples = Tensor(std::move(shape), std::move(values));
  ds.labels.resize(n);
  for (auto& y : ds.labels) y = static_cast<Label>(get_le<std::uint16_t>(in));
  ds.validate();
  return ds;
}

void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  write_dataset(out, ds);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return read_dataset(in);
}

}  // namespace splitsim
