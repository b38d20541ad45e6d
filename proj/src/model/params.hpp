#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "common/rng.hpp"
#include "tensor/graph.hpp"

namespace fare::model {

using tensor::Graph;
using tensor::NodeId;
using tensor::Shape;
using tensor::Tensor;

/// Named parameter tensors in a fixed declaration order (the file order).
class ParamSet {
 public:
  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const;
  std::size_t index_of(const std::string& name) const;
  const Tensor& at(const std::string& name) const { return values_[index_of(name)]; }
  Tensor& at(const std::string& name) { return values_[index_of(name)]; }

  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::vector<Tensor>& values() noexcept { return values_; }
  const std::vector<Tensor>& values() const noexcept { return values_; }
  std::size_t element_count() const;

  /// Rounds every value to the nearest float32 so that in-memory weights
  /// equal what a saved file reproduces.
  void round_to_f32();

  bool operator==(const ParamSet&) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

/// Zero-mean normal initialization with the given standard deviation.
Tensor normal_init(const Shape& shape, double stddev, Rng& rng);

/// One graph leaf per parameter, in ParamSet order.
struct ParamLeaves {
  std::vector<NodeId> leaves;
  std::vector<std::string> names;

  NodeId operator()(const std::string& name) const;
  bool has(const std::string& name) const;
};

ParamLeaves add_param_leaves(Graph& g, const ParamSet& params, bool requires_grad);
void bind_params(Graph& g, const ParamLeaves& leaves, const ParamSet& params);

}  // namespace fare::model
