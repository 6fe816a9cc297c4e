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
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "splitsim/block.hpp"
#include "splitsim/rng.hpp"
#include "splitsim/tensor.hpp"

namespace splitsim {

struct Dataset {
  Tensor samples;             // [n, sample shape...]
  std::vector<Label> labels;  // n entries in [0, classes)
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
  Shape sample_shape() const { return Shape(samples.shape().begin() + 1, samples.shape().end()); }
  /// Throws DataError when the invariants do not hold.
  void validate() const;
  Dataset subset(std::span<const std::size_t> indices) const;
  /// Per-class sample counts.
  std::vector<std::size_t> histogram() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

enum class SyntheticKind { gaussian_blobs, spirals, image_patches };

SyntheticKind parse_synthetic_kind(std::string_view name);
std::string_view synthetic_kind_name(SyntheticKind kind);

/// Deterministic toy classification data. `shape` is the per-sample shape:
/// [d] for blobs and spirals (spirals embed their 2-D arms into d >= 2
/// dimensions), [c, h, w] for image patches. Classes are balanced to within
/// one sample. `noise` scales the within-class spread; the default gives
/// well-separated blobs.
Dataset make_synthetic(std::size_t n, std::size_t classes, SyntheticKind kind, const Shape& shape, std::uint64_t seed,
                       double noise = 1.0);

/// Assignment of every dataset index to exactly one of K devices.
struct Partition {
  std::size_t devices = 0;
  std::vector<std::size_t> assignment;  // device id per sample
  std::vector<std::size_t> counts;      // n_k

  std::vector<std::size_t> indices_of(std::size_t device) const;
  std::size_t total() const { return assignment.size(); }
};

/// Non-IID split. Every device draws a class-probability vector from a
/// symmetric Dirichlet with concentration alpha / (1 - alpha + epsilon);
/// samples are then handed out one at a time: a device with remaining quota
/// (quotas are n/K, remainders spread over the first devices) draws a class
/// from its vector and receives a random unassigned sample of that class.
/// When the drawn class is exhausted, the draw is renormalized over the
/// classes that still have samples; if the device's vector has no mass left
/// on any of them, the class is drawn proportionally to remaining counts.
///
/// Throws ConfigError for K == 0, K > n, or alpha outside (0, 1].
Partition dirichlet_partition(const Dataset& ds, std::size_t devices, double alpha, double epsilon,
                              std::uint64_t seed);

/// Sample a symmetric Dirichlet(concentration) vector of length `dim`.
/// Robust for very small concentrations (draws are made in log space).
std::vector<double> sample_dirichlet(std::size_t dim, double concentration, Rng& rng);

/// Label distribution of `indices` normalized to sum 1.
std::vector<double> label_distribution(const Dataset& ds, std::span<const std::size_t> indices);

/// Total-variation distance 0.5 * sum |p - q|.
double total_variation(std::span<const double> p, std::span<const double> q);

/// Mean over devices of the TV distance between the device's label
/// distribution and the global one.
double mean_partition_tv(const Dataset& ds, const Partition& partition);

/// Split off a validation slice (IID, uniformly at random). Returns
/// {train, validation}.
std::pair<Dataset, Dataset> split_validation(const Dataset& ds, double fraction, std::uint64_t seed);

/// Flat little-endian dump: u64 n, u32 rank, u32 dims[rank], u32 classes,
/// f32 samples[n * prod(dims)], u16 labels[n].
void write_dataset(std::ostream& out, const Dataset& ds);
Dataset read_dataset(std::istream& in);
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

}  // namespace splitsim
