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

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <mutex>
#include <optional>
#include <vector>

#include "splitsim/block.hpp"

namespace splitsim::detail {

/// One batch of activations in flight from a device to the server. A chunk
/// with `last` set closes the device's stream.
struct ActivationChunk {
  std::size_t device = 0;
  Tensor activations;
  std::vector<Label> labels;
  bool last = false;
};

/// Single-producer/single-consumer FIFO between the activation generator and
/// the server trainer. Arrival order is the order records reach the ledger.
class ActivationQueue {
 public:
  void push(ActivationChunk chunk) {
    {
      std::lock_guard lock(mutex_);
      chunks_.push_back(std::move(chunk));
    }
    ready_.notify_one();
  }

  void close() {
    {
      std::lock_guard lock(mutex_);
      closed_ = true;
    }
    ready_.notify_all();
  }

  /// Blocks until a chunk is available; nullopt once closed and drained.
  std::optional<ActivationChunk> pop() {
    std::unique_lock lock(mutex_);
    ready_.wait(lock, [&] { return !chunks_.empty() || closed_; });
    if (chunks_.empty()) return std::nullopt;
    ActivationChunk chunk = std::move(chunks_.front());
    chunks_.pop_front();
    return chunk;
  }

 private:
  std::mutex mutex_;
  std::condition_variable ready_;
  std::deque<ActivationChunk> chunks_;
  bool closed_ = false;
};

}  // namespace splitsim::detail
