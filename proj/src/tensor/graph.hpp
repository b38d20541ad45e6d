#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tensor/tensor.hpp"

namespace fare::tensor {

enum class OpKind {
  leaf,
  conv2d,
  conv_transpose2d,
  linear,
  relu,
  reshape,
  add,
  sub,
  mul,
  mul_scalar,
  add_scalar,
  reduce_sum,
  softplus,
  exp,
  sigmoid,
  tanh,
  clamp,
  concat,
  slice,
};

const char* op_name(OpKind kind);

enum class Padding { valid, same };

struct ConvConfig {
  std::size_t stride = 1;
  Padding padding = Padding::valid;
};

/// Spatial output size of a convolution along one axis.
std::size_t conv_output_size(std::size_t in, std::size_t kernel, const ConvConfig& cfg);

struct NodeId {
  std::size_t index = 0;
  bool operator==(const NodeId&) const = default;
};

/// Static computation graph with reverse-mode differentiation.
///
/// Nodes are appended in topological order. Leaves are bound to tensors
/// (inputs or parameters); `forward` evaluates the ancestors of a root and
/// `backward` propagates d(root)/d(node) to every ancestor that leads back to
/// a node requiring gradients. Leaves require gradients by default; interior
/// nodes (e.g. feature maps) can opt in with `set_requires_grad`.
///
/// Batched ops take the batch as dimension 0: conv inputs are [N,C,H,W] and
/// linear inputs are [N,F].
class Graph {
 public:
  NodeId leaf(std::string name = {});
  void bind(NodeId leaf, Tensor value);

  NodeId conv2d(NodeId x, NodeId weight, std::optional<NodeId> bias, ConvConfig cfg);
  /// Adjoint of conv2d with the same config; (out_h, out_w) is the spatial
  /// size whose convolution yields the input size.
  NodeId conv_transpose2d(NodeId x, NodeId weight, std::optional<NodeId> bias, ConvConfig cfg,
                          std::size_t out_h, std::size_t out_w);
  NodeId linear(NodeId x, NodeId weight, std::optional<NodeId> bias);
  NodeId relu(NodeId x);
  /// A leading 0 in `shape` copies the input's batch dimension.
  NodeId reshape(NodeId x, Shape shape);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId mul_scalar(NodeId x, double factor);
  NodeId add_scalar(NodeId x, double offset);
  NodeId reduce_sum(NodeId x);
  NodeId softplus(NodeId x);
  NodeId exp(NodeId x);
  NodeId sigmoid(NodeId x);
  NodeId tanh(NodeId x);
  NodeId clamp(NodeId x, double lo, double hi);
  /// Concatenates two rank-2 tensors along dimension 1.
  NodeId concat(NodeId a, NodeId b);
  /// Columns [begin, end) of a rank-2 tensor.
  NodeId slice(NodeId x, std::size_t begin, std::size_t end);

  void set_requires_grad(NodeId node, bool on);

  const Tensor& forward(NodeId root);
  void backward(NodeId root);

  const Tensor& value(NodeId node) const;
  const Tensor& grad(NodeId node) const;
  bool has_grad(NodeId node) const;

  OpKind kind(NodeId node) const { return nodes_.at(node.index).kind; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    OpKind kind = OpKind::leaf;
    std::vector<std::size_t> inputs;
    std::string name;
    ConvConfig conv;
    std::size_t out_h = 0, out_w = 0;
    bool has_bias = false;
    double a = 0.0, b = 0.0;
    Shape target;
    std::size_t begin = 0, end = 0;

    bool bound = false;
    bool requires_grad = false;
    bool evaluated = false;
    bool grad_ready = false;
    Tensor value;
    Tensor grad;
    std::vector<double> scratch;
  };

  NodeId push(Node node);
  std::size_t checked(NodeId id) const;
  const std::vector<std::size_t>& ancestors(std::size_t root);
  void eval(std::size_t i);
  void propagate(std::size_t i, const std::vector<char>& needs);
  Tensor& input_grad(std::size_t j);

  std::vector<Node> nodes_;
  std::unordered_map<std::size_t, std::vector<std::size_t>> ancestor_cache_;
};

}  // namespace fare::tensor
