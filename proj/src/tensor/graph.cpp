#include "tensor/graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "common/error.hpp"

namespace fare::tensor {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

struct ConvGeom {
  std::size_t in_h, in_w, out_h, out_w, k_h, k_w, stride, pad_top, pad_left;
};

std::size_t same_pad_before(std::size_t in, std::size_t k, std::size_t stride) {
  std::size_t out = (in + stride - 1) / stride;
  std::size_t needed = (out - 1) * stride + k;
  std::size_t total = needed > in ? needed - in : 0;
  return total / 2;
}

ConvGeom make_geom(std::size_t in_h, std::size_t in_w, std::size_t k_h, std::size_t k_w, const ConvConfig& cfg) {
  ConvGeom g{};
  g.in_h = in_h;
  g.in_w = in_w;
  g.k_h = k_h;
  g.k_w = k_w;
  g.stride = cfg.stride;
  g.out_h = conv_output_size(in_h, k_h, cfg);
  g.out_w = conv_output_size(in_w, k_w, cfg);
  if (cfg.padding == Padding::same) {
    g.pad_top = same_pad_before(in_h, k_h, cfg.stride);
    g.pad_left = same_pad_before(in_w, k_w, cfg.stride);
  }
  return g;
}

// Writes the patches of one C×H×W image into rows of `cols`, which has row
// stride `ld`; this image's columns start at `col0`.
void im2col(const double* x, std::size_t channels, const ConvGeom& g, double* cols, std::size_t ld,
            std::size_t col0) {
  for (std::size_t c = 0; c < channels; ++c) {
    const double* xc = x + c * g.in_h * g.in_w;
    for (std::size_t ki = 0; ki < g.k_h; ++ki) {
      for (std::size_t kj = 0; kj < g.k_w; ++kj) {
        double* row = cols + ((c * g.k_h + ki) * g.k_w + kj) * ld + col0;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad_top);
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = xc + static_cast<std::size_t>(iy) * g.in_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad_left);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.in_w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters-adds patch rows back into the image.
void col2im(const double* cols, std::size_t channels, const ConvGeom& g, std::size_t ld, std::size_t col0,
            double* x) {
  for (std::size_t c = 0; c < channels; ++c) {
    double* xc = x + c * g.in_h * g.in_w;
    for (std::size_t ki = 0; ki < g.k_h; ++ki) {
      for (std::size_t kj = 0; kj < g.k_w; ++kj) {
        const double* row = cols + ((c * g.k_h + ki) * g.k_w + kj) * ld + col0;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad_top);
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
          const double* src = row + oy * g.out_w;
          double* dst = xc + static_cast<std::size_t>(iy) * g.in_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad_left);
            if (ix >= 0 && ix < static_cast<long>(g.in_w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// [N, C, P] <-> [C, N*P]
void batch_to_channel_major(const double* src, std::size_t n, std::size_t c, std::size_t p, double* dst) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      std::copy_n(src + (i * c + ch) * p, p, dst + ch * n * p + i * p);
}

void channel_major_to_batch(const double* src, std::size_t n, std::size_t c, std::size_t p, double* dst) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      std::copy_n(src + ch * n * p + i * p, p, dst + (i * c + ch) * p);
}

double sigmoid_fn(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_fn(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::conv2d: return "conv2d";
    case OpKind::conv_transpose2d: return "conv_transpose2d";
    case OpKind::linear: return "linear";
    case OpKind::relu: return "relu";
    case OpKind::reshape: return "reshape";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::mul_scalar: return "mul_scalar";
    case OpKind::add_scalar: return "add_scalar";
    case OpKind::reduce_sum: return "reduce_sum";
    case OpKind::softplus: return "softplus";
    case OpKind::exp: return "exp";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::tanh: return "tanh";
    case OpKind::clamp: return "clamp";
    case OpKind::concat: return "concat";
    case OpKind::slice: return "slice";
  }
  return "?";
}

std::size_t conv_output_size(std::size_t in, std::size_t kernel, const ConvConfig& cfg) {
  if (cfg.stride == 0) throw Error(Errc::invalid_argument, "conv stride must be >= 1");
  if (cfg.padding == Padding::same) return (in + cfg.stride - 1) / cfg.stride;
  if (in < kernel) {
    throw Error(Errc::shape_mismatch, "valid conv: input " + std::to_string(in) + " smaller than kernel " +
                                          std::to_string(kernel));
  }
  return (in - kernel) / cfg.stride + 1;
}

// ---------------------------------------------------------------- building

NodeId Graph::push(Node node) {
  for (auto in : node.inputs) {
    if (in >= nodes_.size()) throw GraphError(nodes_.size(), "input node " + std::to_string(in) + " does not exist");
  }
  nodes_.push_back(std::move(node));
  return NodeId{nodes_.size() - 1};
}

std::size_t Graph::checked(NodeId id) const {
  if (id.index >= nodes_.size()) throw GraphError(id.index, "no such node");
  return id.index;
}

NodeId Graph::leaf(std::string name) {
  Node n;
  n.kind = OpKind::leaf;
  n.name = std::move(name);
  n.requires_grad = true;
  return push(std::move(n));
}

void Graph::bind(NodeId id, Tensor value) {
  auto& n = nodes_.at(checked(id));
  if (n.kind != OpKind::leaf) throw GraphError(id.index, "bind on non-leaf node");
  n.value = std::move(value);
  n.bound = true;
  for (auto& other : nodes_) {
    other.evaluated = false;
    other.grad_ready = false;
  }
}

NodeId Graph::conv2d(NodeId x, NodeId weight, std::optional<NodeId> bias, ConvConfig cfg) {
  Node n;
  n.kind = OpKind::conv2d;
  n.inputs = {x.index, weight.index};
  if (bias) n.inputs.push_back(bias->index);
  n.has_bias = bias.has_value();
  n.conv = cfg;
  return push(std::move(n));
}

NodeId Graph::conv_transpose2d(NodeId x, NodeId weight, std::optional<NodeId> bias, ConvConfig cfg,
                               std::size_t out_h, std::size_t out_w) {
  Node n;
  n.kind = OpKind::conv_transpose2d;
  n.inputs = {x.index, weight.index};
  if (bias) n.inputs.push_back(bias->index);
  n.has_bias = bias.has_value();
  n.conv = cfg;
  n.out_h = out_h;
  n.out_w = out_w;
  return push(std::move(n));
}

NodeId Graph::linear(NodeId x, NodeId weight, std::optional<NodeId> bias) {
  Node n;
  n.kind = OpKind::linear;
  n.inputs = {x.index, weight.index};
  if (bias) n.inputs.push_back(bias->index);
  n.has_bias = bias.has_value();
  return push(std::move(n));
}

#define FARE_UNARY(fn, op)         \
  NodeId Graph::fn(NodeId x) {     \
    Node n;                        \
    n.kind = OpKind::op;           \
    n.inputs = {x.index};          \
    return push(std::move(n));     \
  }
FARE_UNARY(relu, relu)
FARE_UNARY(reduce_sum, reduce_sum)
FARE_UNARY(softplus, softplus)
FARE_UNARY(exp, exp)
FARE_UNARY(sigmoid, sigmoid)
FARE_UNARY(tanh, tanh)
#undef FARE_UNARY

#define FARE_BINARY(fn, op)                 \
  NodeId Graph::fn(NodeId a, NodeId b) {    \
    Node n;                                 \
    n.kind = OpKind::op;                    \
    n.inputs = {a.index, b.index};          \
    return push(std::move(n));              \
  }
FARE_BINARY(add, add)
FARE_BINARY(sub, sub)
FARE_BINARY(mul, mul)
FARE_BINARY(concat, concat)
#undef FARE_BINARY

NodeId Graph::reshape(NodeId x, Shape shape) {
  Node n;
  n.kind = OpKind::reshape;
  n.inputs = {x.index};
  n.target = std::move(shape);
  return push(std::move(n));
}

NodeId Graph::mul_scalar(NodeId x, double factor) {
  Node n;
  n.kind = OpKind::mul_scalar;
  n.inputs = {x.index};
  n.a = factor;
  return push(std::move(n));
}

NodeId Graph::add_scalar(NodeId x, double offset) {
  Node n;
  n.kind = OpKind::add_scalar;
  n.inputs = {x.index};
  n.a = offset;
  return push(std::move(n));
}

NodeId Graph::clamp(NodeId x, double lo, double hi) {
  if (!(lo < hi)) throw GraphError(nodes_.size(), "clamp requires lo < hi");
  Node n;
  n.kind = OpKind::clamp;
  n.inputs = {x.index};
  n.a = lo;
  n.b = hi;
  return push(std::move(n));
}

NodeId Graph::slice(NodeId x, std::size_t begin, std::size_t end) {
  if (begin >= end) throw GraphError(nodes_.size(), "slice requires begin < end");
  Node n;
  n.kind = OpKind::slice;
  n.inputs = {x.index};
  n.begin = begin;
  n.end = end;
  return push(std::move(n));
}

void Graph::set_requires_grad(NodeId node, bool on) { nodes_.at(checked(node)).requires_grad = on; }

// ---------------------------------------------------------------- forward

const std::vector<std::size_t>& Graph::ancestors(std::size_t root) {
  auto it = ancestor_cache_.find(root);
  if (it != ancestor_cache_.end()) return it->second;
  std::vector<char> mark(root + 1, 0);
  mark[root] = 1;
  for (std::size_t i = root + 1; i-- > 0;) {
    if (!mark[i]) continue;
    for (auto in : nodes_[i].inputs) mark[in] = 1;
  }
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i <= root; ++i)
    if (mark[i]) order.push_back(i);
  return ancestor_cache_.emplace(root, std::move(order)).first->second;
}

const Tensor& Graph::forward(NodeId root) {
  std::size_t r = checked(root);
  for (auto i : ancestors(r)) {
    if (!nodes_[i].evaluated) eval(i);
  }
  return nodes_[r].value;
}

void Graph::eval(std::size_t i) {
  Node& n = nodes_[i];
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[n.inputs[k]].value; };
  auto fail = [&](const std::string& msg) -> GraphError { return GraphError(i, std::string(op_name(n.kind)) + ": " + msg); };

  switch (n.kind) {
    case OpKind::leaf:
      if (!n.bound) throw fail("leaf '" + n.name + "' is not bound");
      break;

    case OpKind::conv2d: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      if (x.rank() != 4 || w.rank() != 4) throw fail("expects [N,C,H,W] input and [O,C,KH,KW] weight");
      if (x.dim(1) != w.dim(1)) {
        throw fail("input channels " + std::to_string(x.dim(1)) + " != weight channels " + std::to_string(w.dim(1)));
      }
      std::size_t N = x.dim(0), C = x.dim(1), O = w.dim(0);
      if (n.has_bias && in(2).size() != O) throw fail("bias size mismatch");
      ConvGeom g;
      try {
        g = make_geom(x.dim(2), x.dim(3), w.dim(2), w.dim(3), n.conv);
      } catch (const Error& e) {
        throw fail(e.what());
      }
      std::size_t P = g.out_h * g.out_w, CKK = C * g.k_h * g.k_w, NP = N * P;
      n.scratch.resize(CKK * NP);
      for (std::size_t b = 0; b < N; ++b) im2col(x.data() + b * C * g.in_h * g.in_w, C, g, n.scratch.data(), NP, b * P);
      RowMat y = ConstMatMap(w.data(), O, CKK) * ConstMatMap(n.scratch.data(), CKK, NP);
      if (n.has_bias) y.colwise() += ConstVecMap(in(2).data(), O);
      n.value.resize({N, O, g.out_h, g.out_w});
      channel_major_to_batch(y.data(), N, O, P, n.value.data());
      break;
    }

    case OpKind::conv_transpose2d: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      if (x.rank() != 4 || w.rank() != 4) throw fail("expects [N,Cin,H,W] input and [Cin,Cout,KH,KW] weight");
      if (x.dim(1) != w.dim(0)) throw fail("input channels do not match weight dim 0");
      std::size_t N = x.dim(0), Cin = x.dim(1), Cout = w.dim(1);
      if (n.has_bias && in(2).size() != Cout) throw fail("bias size mismatch");
      ConvGeom g;
      try {
        g = make_geom(n.out_h, n.out_w, w.dim(2), w.dim(3), n.conv);
      } catch (const Error& e) {
        throw fail(e.what());
      }
      if (g.out_h != x.dim(2) || g.out_w != x.dim(3)) {
        throw fail("target size " + std::to_string(n.out_h) + "x" + std::to_string(n.out_w) +
                   " is not the preimage of input " + to_string(x.shape()));
      }
      std::size_t Pi = g.out_h * g.out_w, CKK = Cout * g.k_h * g.k_w, NP = N * Pi;
      n.scratch.resize(Cin * NP);
      batch_to_channel_major(x.data(), N, Cin, Pi, n.scratch.data());
      RowMat cols = ConstMatMap(w.data(), Cin, CKK).transpose() * ConstMatMap(n.scratch.data(), Cin, NP);
      n.value.resize({N, Cout, n.out_h, n.out_w});
      n.value.fill(0.0);
      std::size_t Po = n.out_h * n.out_w;
      for (std::size_t b = 0; b < N; ++b) col2im(cols.data(), Cout, g, NP, b * Pi, n.value.data() + b * Cout * Po);
      if (n.has_bias) {
        for (std::size_t b = 0; b < N; ++b)
          for (std::size_t c = 0; c < Cout; ++c) {
            double* dst = n.value.data() + (b * Cout + c) * Po;
            double bias = in(2)[c];
            for (std::size_t p = 0; p < Po; ++p) dst[p] += bias;
          }
      }
      break;
    }

    case OpKind::linear: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      if (x.rank() != 2 || w.rank() != 2) throw fail("expects [N,F] input and [O,F] weight");
      if (x.dim(1) != w.dim(1)) {
        throw fail("input features " + std::to_string(x.dim(1)) + " != weight features " + std::to_string(w.dim(1)));
      }
      std::size_t N = x.dim(0), F = x.dim(1), O = w.dim(0);
      if (n.has_bias && in(2).size() != O) throw fail("bias size mismatch");
      n.value.resize({N, O});
      MatMap y(n.value.data(), N, O);
      y.noalias() = ConstMatMap(x.data(), N, F) * ConstMatMap(w.data(), O, F).transpose();
      if (n.has_bias) y.rowwise() += ConstVecMap(in(2).data(), O).transpose();
      break;
    }

    case OpKind::reshape: {
      const Tensor& x = in(0);
      Shape s = n.target;
      if (!s.empty() && s[0] == 0) s[0] = x.dim(0);
      if (element_count(s) != x.size()) throw fail("cannot reshape " + to_string(x.shape()) + " to " + to_string(s));
      n.value = x;
      n.value.reshape(s);
      break;
    }

    case OpKind::add:
    case OpKind::sub:
    case OpKind::mul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.shape() != b.shape()) throw fail("operand shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
      n.value.resize(a.shape());
      for (std::size_t k = 0; k < a.size(); ++k) {
        n.value[k] = n.kind == OpKind::add ? a[k] + b[k] : n.kind == OpKind::sub ? a[k] - b[k] : a[k] * b[k];
      }
      break;
    }

    case OpKind::concat: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) throw fail("expects rank-2 operands with equal rows");
      std::size_t N = a.dim(0), A = a.dim(1), B = b.dim(1);
      n.value.resize({N, A + B});
      for (std::size_t r = 0; r < N; ++r) {
        std::copy_n(a.data() + r * A, A, n.value.data() + r * (A + B));
        std::copy_n(b.data() + r * B, B, n.value.data() + r * (A + B) + A);
      }
      break;
    }

    case OpKind::slice: {
      const Tensor& x = in(0);
      if (x.rank() != 2 || n.end > x.dim(1)) throw fail("slice out of range for " + to_string(x.shape()));
      std::size_t N = x.dim(0), F = x.dim(1), S = n.end - n.begin;
      n.value.resize({N, S});
      for (std::size_t r = 0; r < N; ++r) std::copy_n(x.data() + r * F + n.begin, S, n.value.data() + r * S);
      break;
    }

    case OpKind::reduce_sum: {
      double s = 0.0;
      for (double v : in(0).values()) s += v;
      n.value.resize({1});
      n.value[0] = s;
      break;
    }

    case OpKind::relu:
    case OpKind::mul_scalar:
    case OpKind::add_scalar:
    case OpKind::softplus:
    case OpKind::exp:
    case OpKind::sigmoid:
    case OpKind::tanh:
    case OpKind::clamp: {
      const Tensor& x = in(0);
      n.value.resize(x.shape());
      for (std::size_t k = 0; k < x.size(); ++k) {
        double v = x[k];
        double out = 0.0;
        switch (n.kind) {
          case OpKind::relu: out = v > 0.0 ? v : 0.0; break;
          case OpKind::mul_scalar: out = v * n.a; break;
          case OpKind::add_scalar: out = v + n.a; break;
          case OpKind::softplus: out = softplus_fn(v); break;
          case OpKind::exp: out = std::exp(v); break;
          case OpKind::sigmoid: out = sigmoid_fn(v); break;
          case OpKind::tanh: out = std::tanh(v); break;
          case OpKind::clamp: out = std::clamp(v, n.a, n.b); break;
          default: break;
        }
        n.value[k] = out;
      }
      break;
    }
  }
  n.evaluated = true;
  n.grad_ready = false;
}

// ---------------------------------------------------------------- backward

void Graph::backward(NodeId root) {
  std::size_t r = checked(root);
  const auto& order = ancestors(r);
  for (auto i : order) {
    if (!nodes_[i].evaluated) throw GraphError(i, "backward before forward");
  }
  if (nodes_[r].value.size() != 1) {
    throw GraphError(r, "backward root must be scalar, got " + to_string(nodes_[r].value.shape()));
  }

  std::vector<char> needs(r + 1, 0);
  for (auto i : order) {
    const Node& n = nodes_[i];
    bool need = n.requires_grad;
    for (auto in : n.inputs) need = need || needs[in];
    needs[i] = need;
  }
  for (auto& n : nodes_) n.grad_ready = false;
  for (auto i : order) {
    if (!needs[i]) continue;
    nodes_[i].grad.resize(nodes_[i].value.shape());
    nodes_[i].grad.fill(0.0);
    nodes_[i].grad_ready = true;
  }
  if (!needs[r]) return;
  nodes_[r].grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (needs[*it] && nodes_[*it].kind != OpKind::leaf) propagate(*it, needs);
  }
}

Tensor& Graph::input_grad(std::size_t j) { return nodes_[j].grad; }

void Graph::propagate(std::size_t i, const std::vector<char>& needs) {
  Node& n = nodes_[i];
  const Tensor& gy = n.grad;
  auto need = [&](std::size_t k) { return k < n.inputs.size() && needs[n.inputs[k]]; };
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[n.inputs[k]].value; };
  auto gin = [&](std::size_t k) -> Tensor& { return input_grad(n.inputs[k]); };

  switch (n.kind) {
    case OpKind::leaf: break;

    case OpKind::conv2d: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      std::size_t N = x.dim(0), C = x.dim(1), O = w.dim(0);
      ConvGeom g = make_geom(x.dim(2), x.dim(3), w.dim(2), w.dim(3), n.conv);
      std::size_t P = g.out_h * g.out_w, CKK = C * g.k_h * g.k_w, NP = N * P;
      RowMat gy_cm(O, NP);
      batch_to_channel_major(gy.data(), N, O, P, gy_cm.data());
      if (need(1)) MatMap(gin(1).data(), O, CKK).noalias() += gy_cm * ConstMatMap(n.scratch.data(), CKK, NP).transpose();
      if (n.has_bias && need(2)) VecMap(gin(2).data(), O) += gy_cm.rowwise().sum();
      if (need(0)) {
        RowMat dcols = ConstMatMap(w.data(), O, CKK).transpose() * gy_cm;
        for (std::size_t b = 0; b < N; ++b) col2im(dcols.data(), C, g, NP, b * P, gin(0).data() + b * C * g.in_h * g.in_w);
      }
      break;
    }

    case OpKind::conv_transpose2d: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      std::size_t N = x.dim(0), Cin = x.dim(1), Cout = w.dim(1);
      ConvGeom g = make_geom(n.out_h, n.out_w, w.dim(2), w.dim(3), n.conv);
      std::size_t Pi = g.out_h * g.out_w, CKK = Cout * g.k_h * g.k_w, NP = N * Pi, Po = n.out_h * n.out_w;
      RowMat dcols(CKK, NP);
      for (std::size_t b = 0; b < N; ++b) im2col(gy.data() + b * Cout * Po, Cout, g, dcols.data(), NP, b * Pi);
      if (need(1)) MatMap(gin(1).data(), Cin, CKK).noalias() += ConstMatMap(n.scratch.data(), Cin, NP) * dcols.transpose();
      if (n.has_bias && need(2)) {
        Tensor& gb = gin(2);
        for (std::size_t b = 0; b < N; ++b)
          for (std::size_t c = 0; c < Cout; ++c) {
            const double* src = gy.data() + (b * Cout + c) * Po;
            double s = 0.0;
            for (std::size_t p = 0; p < Po; ++p) s += src[p];
            gb[c] += s;
          }
      }
      if (need(0)) {
        RowMat dx = ConstMatMap(w.data(), Cin, CKK) * dcols;
        Tensor& gx = gin(0);
        for (std::size_t b = 0; b < N; ++b)
          for (std::size_t c = 0; c < Cin; ++c) {
            const double* src = dx.data() + c * NP + b * Pi;
            double* dst = gx.data() + (b * Cin + c) * Pi;
            for (std::size_t p = 0; p < Pi; ++p) dst[p] += src[p];
          }
      }
      break;
    }

    case OpKind::linear: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      std::size_t N = x.dim(0), F = x.dim(1), O = w.dim(0);
      ConstMatMap gyM(gy.data(), N, O);
      if (need(0)) MatMap(gin(0).data(), N, F).noalias() += gyM * ConstMatMap(w.data(), O, F);
      if (need(1)) MatMap(gin(1).data(), O, F).noalias() += gyM.transpose() * ConstMatMap(x.data(), N, F);
      if (n.has_bias && need(2)) VecMap(gin(2).data(), O) += gyM.colwise().sum().transpose();
      break;
    }

    case OpKind::reshape: {
      if (need(0)) {
        Tensor& gx = gin(0);
        for (std::size_t k = 0; k < gy.size(); ++k) gx[k] += gy[k];
      }
      break;
    }

    case OpKind::add:
    case OpKind::sub:
    case OpKind::mul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (need(0)) {
        Tensor& ga = gin(0);
        for (std::size_t k = 0; k < gy.size(); ++k) ga[k] += n.kind == OpKind::mul ? gy[k] * b[k] : gy[k];
      }
      if (need(1)) {
        Tensor& gb = gin(1);
        for (std::size_t k = 0; k < gy.size(); ++k) {
          gb[k] += n.kind == OpKind::mul ? gy[k] * a[k] : n.kind == OpKind::sub ? -gy[k] : gy[k];
        }
      }
      break;
    }

    case OpKind::concat: {
      std::size_t N = in(0).dim(0), A = in(0).dim(1), B = in(1).dim(1);
      for (std::size_t r = 0; r < N; ++r) {
        const double* src = gy.data() + r * (A + B);
        if (need(0)) {
          double* dst = gin(0).data() + r * A;
          for (std::size_t c = 0; c < A; ++c) dst[c] += src[c];
        }
        if (need(1)) {
          double* dst = gin(1).data() + r * B;
          for (std::size_t c = 0; c < B; ++c) dst[c] += src[A + c];
        }
      }
      break;
    }

    case OpKind::slice: {
      if (!need(0)) break;
      std::size_t N = in(0).dim(0), F = in(0).dim(1), S = n.end - n.begin;
      for (std::size_t r = 0; r < N; ++r) {
        double* dst = gin(0).data() + r * F + n.begin;
        for (std::size_t c = 0; c < S; ++c) dst[c] += gy[r * S + c];
      }
      break;
    }

    case OpKind::reduce_sum: {
      if (!need(0)) break;
      Tensor& gx = gin(0);
      for (std::size_t k = 0; k < gx.size(); ++k) gx[k] += gy[0];
      break;
    }

    case OpKind::relu:
    case OpKind::mul_scalar:
    case OpKind::add_scalar:
    case OpKind::softplus:
    case OpKind::exp:
    case OpKind::sigmoid:
    case OpKind::tanh:
    case OpKind::clamp: {
      if (!need(0)) break;
      const Tensor& x = in(0);
      const Tensor& y = n.value;
      Tensor& gx = gin(0);
      for (std::size_t k = 0; k < x.size(); ++k) {
        double d = 0.0;
        switch (n.kind) {
          case OpKind::relu: d = x[k] > 0.0 ? 1.0 : 0.0; break;
          case OpKind::mul_scalar: d = n.a; break;
          case OpKind::add_scalar: d = 1.0; break;
          case OpKind::softplus: d = sigmoid_fn(x[k]); break;
          case OpKind::exp: d = y[k]; break;
          case OpKind::sigmoid: d = y[k] * (1.0 - y[k]); break;
          case OpKind::tanh: d = 1.0 - y[k] * y[k]; break;
          case OpKind::clamp: d = (x[k] > n.a && x[k] < n.b) ? 1.0 : 0.0; break;
          default: break;
        }
        gx[k] += gy[k] * d;
      }
      break;
    }
  }
}

const Tensor& Graph::value(NodeId node) const {
  const Node& n = nodes_.at(checked(node));
  if (!n.evaluated && !(n.kind == OpKind::leaf && n.bound)) throw GraphError(node.index, "value not computed");
  return n.value;
}

bool Graph::has_grad(NodeId node) const { return nodes_.at(checked(node)).grad_ready; }

const Tensor& Graph::grad(NodeId node) const {
  const Node& n = nodes_.at(checked(node));
  if (!n.grad_ready) throw GraphError(node.index, "no gradient available");
  return n.grad;
}

}  // namespace fare::tensor
