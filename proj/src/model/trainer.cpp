#include "model/trainer.hpp"

#include <algorithm>
#include <numeric>

#include "common/error.hpp"
#include "common/parallel.hpp"
#include "common/rng.hpp"

namespace fare::model {

std::vector<double> train_minibatch(ParamSet& params, std::size_t n_items, const TrainOptions& opts,
                                    std::size_t n_workers, const ChunkGradFn& fn,
                                    const std::vector<std::size_t>& frozen) {
  if (opts.batch == 0 || opts.chunk == 0) throw Error(Errc::invalid_argument, "batch and chunk sizes must be positive");
  if (!(opts.lr > 0.0)) throw Error(Errc::invalid_argument, "learning rate must be positive");
  if (n_items == 0 && opts.epochs > 0) throw Error(Errc::insufficient_data, "training set is empty");

  std::vector<std::size_t> trainable;
  for (std::size_t i = 0; i < params.size(); ++i)
    if (std::find(frozen.begin(), frozen.end(), i) == frozen.end()) trainable.push_back(i);

  tensor::AdamState adam;
  tensor::AdamConfig adam_cfg;
  adam_cfg.lr = opts.lr;

  std::vector<double> curve;
  std::vector<std::size_t> order(n_items);
  std::vector<std::uint64_t> seeds(n_items);
  std::uint64_t step = 0;
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(opts.seed, 0xE90C0000ULL + epoch));
    for (std::size_t i = n_items; i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n_items; start += opts.batch, ++step) {
      const std::size_t n = std::min(opts.batch, n_items - start);
      for (std::size_t i = 0; i < n; ++i) seeds[start + i] = derive_seed(opts.seed, (step << 16) + i);
      const std::size_t n_chunks = (n + opts.chunk - 1) / opts.chunk;
      std::vector<std::vector<Tensor>> chunk_grads(n_chunks);
      std::vector<double> chunk_loss(n_chunks, 0.0);
      parallel_for(n_chunks, n_workers, [&](std::size_t c, std::size_t worker) {
        auto& g = chunk_grads[c];
        g.reserve(params.size());
        for (const auto& p : params.values()) g.emplace_back(p.shape());
        std::size_t b = start + c * opts.chunk;
        std::size_t e = std::min(start + n, b + opts.chunk);
        chunk_loss[c] = fn(worker, std::span<const std::size_t>(order).subspan(b, e - b),
                           std::span<const std::uint64_t>(seeds).subspan(b, e - b), g);
      });

      std::vector<Tensor> grads;
      std::vector<Tensor> sel;
      for (std::size_t idx : trainable) {
        Tensor total = std::move(chunk_grads[0][idx]);
        for (std::size_t c = 1; c < n_chunks; ++c) {
          const auto& src = chunk_grads[c][idx];
          for (std::size_t k = 0; k < total.size(); ++k) total[k] += src[k];
        }
        for (auto& v : total.values()) v /= static_cast<double>(n);
        grads.push_back(std::move(total));
        sel.push_back(std::move(params.values()[idx]));
      }
      tensor::adam_step(sel, grads, adam, adam_cfg);
      for (std::size_t k = 0; k < trainable.size(); ++k) params.values()[trainable[k]] = std::move(sel[k]);
      for (double l : chunk_loss) epoch_loss += l;
    }
    curve.push_back(epoch_loss / static_cast<double>(n_items));
  }
  params.round_to_f32();
  return curve;
}

}  // namespace fare::model
