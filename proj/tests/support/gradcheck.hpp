#pragma once

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "support/fd.hpp"

namespace fare::testing {

struct GradCheckResult {
  std::string op;
  double max_rel_error = 0.0;
};

/// Builds one random instance of `kind` (tensors no larger than 4x4x8x8),
/// contracts its output with a fixed random cotangent and compares the
/// analytic gradient of every leaf against central differences.
inline GradCheckResult check_op(tensor::OpKind kind, std::mt19937_64& rng) {
  using namespace tensor;
  std::uniform_int_distribution<std::size_t> small(1, 4);
  std::uniform_int_distribution<std::size_t> spatial(3, 8);
  Graph g;
  std::vector<std::pair<NodeId, Tensor>> leaves;
  auto add_leaf = [&](Tensor t) {
    NodeId id = g.leaf();
    g.bind(id, t);
    leaves.emplace_back(id, std::move(t));
    return id;
  };
  // Values kept away from the ReLU/clamp kinks so a step of h cannot cross them.
  auto away_from = [](Tensor t, double kink) {
    for (auto& v : t.values())
      if (std::abs(v - kink) < 1e-3) v = kink + (v < kink ? -1e-3 : 1e-3);
    return t;
  };

  NodeId out{};
  switch (kind) {
    case OpKind::conv2d: {
      std::size_t n = small(rng), c = small(rng), o = small(rng), k = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
      std::size_t h = spatial(rng), w = spatial(rng);
      ConvConfig cfg{std::uniform_int_distribution<std::size_t>(1, 2)(rng),
                     rng() % 2 ? Padding::same : Padding::valid};
      NodeId x = add_leaf(random_tensor({n, c, h, w}, rng));
      NodeId wt = add_leaf(random_tensor({o, c, k, k}, rng, 0.5));
      NodeId b = add_leaf(random_tensor({o}, rng));
      out = g.conv2d(x, wt, b, cfg);
      break;
    }
    case OpKind::conv_transpose2d: {
      std::size_t n = small(rng), cin = small(rng), cout = small(rng), k = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
      std::size_t oh = spatial(rng), ow = spatial(rng);
      ConvConfig cfg{std::uniform_int_distribution<std::size_t>(1, 2)(rng),
                     rng() % 2 ? Padding::same : Padding::valid};
      std::size_t ih = conv_output_size(oh, k, cfg), iw = conv_output_size(ow, k, cfg);
      NodeId x = add_leaf(random_tensor({n, cin, ih, iw}, rng));
      NodeId wt = add_leaf(random_tensor({cin, cout, k, k}, rng, 0.5));
      NodeId b = add_leaf(random_tensor({cout}, rng));
      out = g.conv_transpose2d(x, wt, b, cfg, oh, ow);
      break;
    }
    case OpKind::linear: {
      std::size_t n = small(rng), f = spatial(rng), o = small(rng);
      NodeId x = add_leaf(random_tensor({n, f}, rng));
      NodeId wt = add_leaf(random_tensor({o, f}, rng));
      NodeId b = add_leaf(random_tensor({o}, rng));
      out = g.linear(x, wt, b);
      break;
    }
    case OpKind::add:
    case OpKind::sub:
    case OpKind::mul: {
      Shape s{small(rng), small(rng), spatial(rng)};
      NodeId a = add_leaf(random_tensor(s, rng));
      NodeId b = add_leaf(random_tensor(s, rng));
      out = kind == OpKind::add ? g.add(a, b) : kind == OpKind::sub ? g.sub(a, b) : g.mul(a, b);
      break;
    }
    case OpKind::concat: {
      std::size_t n = small(rng);
      NodeId a = add_leaf(random_tensor({n, small(rng)}, rng));
      NodeId b = add_leaf(random_tensor({n, small(rng)}, rng));
      out = g.concat(a, b);
      break;
    }
    case OpKind::slice: {
      std::size_t n = small(rng), f = spatial(rng);
      std::size_t b = std::uniform_int_distribution<std::size_t>(0, f - 1)(rng);
      std::size_t e = std::uniform_int_distribution<std::size_t>(b + 1, f)(rng);
      out = g.slice(add_leaf(random_tensor({n, f}, rng)), b, e);
      break;
    }
    case OpKind::reshape: {
      std::size_t n = small(rng), c = small(rng), h = small(rng), w = small(rng);
      out = g.reshape(add_leaf(random_tensor({n, c, h, w}, rng)), {0, c * h * w});
      break;
    }
    case OpKind::reduce_sum: out = g.reduce_sum(add_leaf(random_tensor({small(rng), spatial(rng)}, rng))); break;
    case OpKind::relu: out = g.relu(add_leaf(away_from(random_tensor({small(rng), spatial(rng)}, rng), 0.0))); break;
    case OpKind::mul_scalar: out = g.mul_scalar(add_leaf(random_tensor({small(rng), spatial(rng)}, rng)), -1.7); break;
    case OpKind::add_scalar: out = g.add_scalar(add_leaf(random_tensor({small(rng), spatial(rng)}, rng)), 0.3); break;
    case OpKind::softplus: out = g.softplus(add_leaf(random_tensor({small(rng), spatial(rng)}, rng, 2.0))); break;
    case OpKind::exp: out = g.exp(add_leaf(random_tensor({small(rng), spatial(rng)}, rng))); break;
    case OpKind::sigmoid: out = g.sigmoid(add_leaf(random_tensor({small(rng), spatial(rng)}, rng, 2.0))); break;
    case OpKind::tanh: out = g.tanh(add_leaf(random_tensor({small(rng), spatial(rng)}, rng))); break;
    case OpKind::clamp: {
      Tensor t = away_from(away_from(random_tensor({small(rng), spatial(rng)}, rng), -0.5), 0.5);
      out = g.clamp(add_leaf(t), -0.5, 0.5);
      break;
    }
    case OpKind::leaf: out = add_leaf(random_tensor({small(rng)}, rng)); break;
  }

  g.forward(out);
  NodeId cot = g.leaf("cotangent");
  g.bind(cot, random_tensor(g.forward(out).shape(), rng));
  g.set_requires_grad(cot, false);
  NodeId root = g.reduce_sum(g.mul(out, cot));
  g.forward(root);
  g.backward(root);

  GradCheckResult res{op_name(kind), 0.0};
  std::vector<Tensor> analytic;
  for (auto& leaf : leaves) analytic.push_back(g.grad(leaf.first));
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    Tensor numeric = numeric_grad(g, root, leaves[i].first, leaves[i].second);
    res.max_rel_error = std::max(res.max_rel_error, rel_error(analytic[i], numeric));
  }
  return res;
}

inline const std::vector<tensor::OpKind>& differentiable_ops() {
  using tensor::OpKind;
  static const std::vector<OpKind> ops{OpKind::conv2d,     OpKind::conv_transpose2d, OpKind::linear,  OpKind::relu,
                                       OpKind::reshape,    OpKind::add,              OpKind::sub,     OpKind::mul,
                                       OpKind::mul_scalar, OpKind::add_scalar,       OpKind::reduce_sum,
                                       OpKind::softplus,   OpKind::exp,              OpKind::sigmoid, OpKind::tanh,
                                       OpKind::clamp,      OpKind::concat,           OpKind::slice};
  return ops;
}

}  // namespace fare::testing
