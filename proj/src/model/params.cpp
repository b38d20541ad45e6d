#include "model/params.hpp"

#include <algorithm>

#include "common/error.hpp"

namespace fare::model {

void ParamSet::add(const std::string& name, Tensor value) {
  if (name.empty() || name.find_first_of(" \t\n") != std::string::npos)
    throw Error(Errc::invalid_argument, "invalid parameter name '" + name + "'");
  if (contains(name)) throw Error(Errc::invalid_argument, "duplicate parameter '" + name + "'");
  names_.push_back(name);
  values_.push_back(std::move(value));
}

bool ParamSet::contains(const std::string& name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::size_t ParamSet::index_of(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw Error(Errc::format, "missing parameter '" + name + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

std::size_t ParamSet::element_count() const {
  std::size_t n = 0;
  for (const auto& t : values_) n += t.size();
  return n;
}

void ParamSet::round_to_f32() {
  for (auto& t : values_) {
    std::vector<float> tmp(t.values().begin(), t.values().end());
    std::copy(tmp.begin(), tmp.end(), t.values().begin());
  }
}

Tensor normal_init(const Shape& shape, double stddev, Rng& rng) {
  Tensor t(shape);
  for (auto& v : t.values()) v = stddev * normal(rng);
  return t;
}

NodeId ParamLeaves::operator()(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw Error(Errc::format, "missing parameter '" + name + "'");
  return leaves[static_cast<std::size_t>(it - names.begin())];
}

bool ParamLeaves::has(const std::string& name) const {
  return std::find(names.begin(), names.end(), name) != names.end();
}

ParamLeaves add_param_leaves(Graph& g, const ParamSet& params, bool requires_grad) {
  ParamLeaves out;
  out.names = params.names();
  for (const auto& n : params.names()) {
    NodeId id = g.leaf(n);
    g.set_requires_grad(id, requires_grad);
    out.leaves.push_back(id);
  }
  return out;
}

void bind_params(Graph& g, const ParamLeaves& leaves, const ParamSet& params) {
  for (std::size_t i = 0; i < leaves.leaves.size(); ++i) g.bind(leaves.leaves[i], params.values()[i]);
}

}  // namespace fare::model
