#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fare {

enum class Errc {
  invalid_argument,
  shape_mismatch,
  io,
  format,
  insufficient_data,
  state,
  runtime,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Raised by the autodiff graph; carries the id of the node that failed.
class GraphError : public Error {
 public:
  GraphError(std::size_t node, const std::string& what)
      : Error(Errc::shape_mismatch, "node " + std::to_string(node) + ": " + what), node_(node) {}
  std::size_t node() const noexcept { return node_; }

 private:
  std::size_t node_;
};

}  // namespace fare
