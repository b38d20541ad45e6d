#include "model/model_file.hpp"

#include <sstream>

#include "common/error.hpp"
#include "common/io.hpp"

namespace fare::model {

namespace {

std::string shape_text(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

Shape parse_shape(const std::string& text, const std::string& what) {
  Shape s;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, 'x');) {
    auto v = io::parse_uint(part, what);
    if (v == 0 || v > (1u << 24)) throw Error(Errc::format, what + ": bad dimension in '" + text + "'");
    s.push_back(v);
  }
  if (s.empty()) throw Error(Errc::format, what + ": empty shape");
  unsigned long long total = 1;
  for (auto d : s) {
    total *= d;
    if (total > (1ull << 28)) throw Error(Errc::format, what + ": parameter too large");
  }
  return s;
}

}  // namespace

void ModelFile::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : meta) {
    if (k == key) {
      v = value;
      return;
    }
  }
  meta.emplace_back(key, value);
}

const std::string& ModelFile::get(const std::string& key) const {
  for (const auto& [k, v] : meta)
    if (k == key) return v;
  throw Error(Errc::format, "weights file lacks key '" + key + "'");
}

bool ModelFile::has(const std::string& key) const {
  for (const auto& kv : meta)
    if (kv.first == key) return true;
  return false;
}

void save_model_file(const ModelFile& file, const std::string& path) {
  auto out = io::open_out(path);
  out << "FARE\nversion=1\nkind=" << file.kind << "\n";
  for (const auto& [k, v] : file.meta) {
    if (k.find('=') != std::string::npos || v.find('\n') != std::string::npos)
      throw Error(Errc::invalid_argument, "invalid metadata entry '" + k + "'");
    out << k << "=" << v << "\n";
  }
  const auto& names = file.params.names();
  for (std::size_t i = 0; i < names.size(); ++i)
    out << "param=" << names[i] << ":" << shape_text(file.params.values()[i].shape()) << "\n";
  out << "blobs=" << names.size() << "\nend\n";
  for (const auto& t : file.params.values()) {
    std::vector<float> f(t.values().begin(), t.values().end());
    io::write_f32(out, f.data(), f.size());
  }
  if (!out) throw Error(Errc::io, "write failed for '" + path + "'");
}

ModelFile load_model_file(const std::string& path) {
  auto in = io::open_in(path);
  const std::string what = "weights '" + path + "'";
  std::string line;
  if (!std::getline(in, line) || line != "FARE") throw Error(Errc::format, what + ": bad magic, expected FARE");
  ModelFile file;
  std::vector<std::pair<std::string, Shape>> decl;
  long blobs = -1;
  bool ended = false, have_version = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(Errc::format, what + ": malformed line '" + line + "'");
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "version") {
      if (value != "1") throw Error(Errc::format, what + ": unsupported version " + value);
      have_version = true;
    } else if (key == "kind") {
      file.kind = value;
    } else if (key == "param") {
      auto colon = value.rfind(':');
      if (colon == std::string::npos) throw Error(Errc::format, what + ": malformed param '" + value + "'");
      decl.emplace_back(value.substr(0, colon), parse_shape(value.substr(colon + 1), what));
    } else if (key == "blobs") {
      blobs = static_cast<long>(io::parse_uint(value, what));
    } else {
      file.meta.emplace_back(key, value);
    }
  }
  if (!ended || !have_version || file.kind.empty()) throw Error(Errc::format, what + ": incomplete manifest");
  if (blobs != static_cast<long>(decl.size())) throw Error(Errc::format, what + ": blob count mismatch");
  for (auto& [name, shape] : decl) {
    Tensor t(shape);
    std::vector<float> f(t.size());
    io::read_f32(in, f.data(), f.size(), what);
    std::copy(f.begin(), f.end(), t.values().begin());
    file.params.add(name, std::move(t));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw Error(Errc::format, what + ": trailing bytes");
  return file;
}

}  // namespace fare::model
