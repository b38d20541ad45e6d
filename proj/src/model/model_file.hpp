#pragma once

#include <string>
#include <utility>
#include <vector>

#include "model/params.hpp"

namespace fare::model {

/// Contents of a `.fwt` weights file: a model kind, ordered key=value
/// metadata and the parameter tensors.
struct ModelFile {
  std::string kind;
  std::vector<std::pair<std::string, std::string>> meta;
  ParamSet params;

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  bool has(const std::string& key) const;
};

void save_model_file(const ModelFile& file, const std::string& path);
ModelFile load_model_file(const std::string& path);

}  // namespace fare::model
