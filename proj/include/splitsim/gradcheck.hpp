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
#include <vector>

#include "splitsim/layer.hpp"

namespace splitsim {

/// Worst disagreement between analytic and central-difference gradients over
/// a batch of randomly shaped cases of one layer kind (64-bit arithmetic).
struct GradcheckReport {
  std::string name;
  std::size_t cases = 0;
  std::size_t entries = 0;  // gradient entries compared
  double max_rel_error = 0.0;
};

/// Relative error |a - b| / max(|a|, |b|, 1e-3). The floor keeps entries
/// that are zero up to rounding from dominating.
double gradient_relative_error(double analytic, double numeric);

GradcheckReport gradcheck_layer(LayerKind kind, std::size_t cases, std::uint64_t seed);
/// Softmax cross-entropy gradient with respect to its logits.
GradcheckReport gradcheck_softmax_xent(std::size_t cases, std::uint64_t seed);
/// Every layer kind plus the loss.
std::vector<GradcheckReport> gradcheck_all(std::size_t cases, std::uint64_t seed);

}  // namespace splitsim
