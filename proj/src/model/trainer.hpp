#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "model/params.hpp"
#include "tensor/adam.hpp"

namespace fare::model {

struct TrainOptions {
  std::size_t epochs = 20;
  std::size_t batch = 32;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  /// Items per gradient chunk. Chunks are reduced in a fixed order, so results
  /// do not depend on the worker count.
  std::size_t chunk = 8;
};

/// Adds the gradient of the summed loss over `items` into `grads` (one tensor
/// per parameter, zero-initialized by the caller) and returns the summed loss.
/// `item_seeds[i]` seeds any noise needed for items[i].
using ChunkGradFn = std::function<double(std::size_t worker, std::span<const std::size_t> items,
                                         std::span<const std::uint64_t> item_seeds, std::vector<Tensor>& grads)>;

/// Minibatch Adam on the mean loss. Parameters listed in `frozen` are never
/// updated. Returns the mean per-item loss of each epoch. The trained
/// parameters are rounded to float32 at the end.
std::vector<double> train_minibatch(ParamSet& params, std::size_t n_items, const TrainOptions& opts,
                                    std::size_t n_workers, const ChunkGradFn& fn,
                                    const std::vector<std::size_t>& frozen = {});

}  // namespace fare::model
