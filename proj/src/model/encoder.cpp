#include "model/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "common/error.hpp"
#include "common/io.hpp"

namespace fare::model {

using tensor::ConvConfig;
using tensor::Padding;

namespace {

std::string conv_name(const std::string& prefix, std::size_t i, const char* what) {
  return prefix + ".conv" + std::to_string(i) + "." + what;
}

}  // namespace

std::vector<double> upsample_bilinear(const std::vector<double>& src, std::size_t in_h, std::size_t in_w,
                                      std::size_t out_h, std::size_t out_w) {
  if (src.size() != in_h * in_w || in_h == 0 || in_w == 0)
    throw Error(Errc::shape_mismatch, "upsample: source size does not match its shape");
  std::vector<double> out(out_h * out_w);
  auto coord = [](std::size_t dst, std::size_t in, std::size_t out_n, std::size_t& i0, std::size_t& i1, double& f) {
    double x = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) / static_cast<double>(out_n) - 0.5;
    x = std::clamp(x, 0.0, static_cast<double>(in - 1));
    i0 = static_cast<std::size_t>(std::floor(x));
    i1 = std::min(i0 + 1, in - 1);
    f = x - static_cast<double>(i0);
  };
  for (std::size_t r = 0; r < out_h; ++r) {
    std::size_t r0, r1;
    double fr;
    coord(r, in_h, out_h, r0, r1, fr);
    for (std::size_t c = 0; c < out_w; ++c) {
      std::size_t c0, c1;
      double fc;
      coord(c, in_w, out_w, c0, c1, fc);
      double top = (1 - fc) * src[r0 * in_w + c0] + fc * src[r0 * in_w + c1];
      double bot = (1 - fc) * src[r1 * in_w + c0] + fc * src[r1 * in_w + c1];
      out[r * out_w + c] = (1 - fr) * top + fr * bot;
    }
  }
  return out;
}

std::array<std::size_t, 3> EncoderSpec::feature_shape() const {
  std::size_t h = height, w = width, k = channels;
  for (const auto& c : convs) {
    ConvConfig cfg{c.stride, Padding::same};
    h = tensor::conv_output_size(h, c.kernel, cfg);
    w = tensor::conv_output_size(w, c.kernel, cfg);
    k = c.channels;
  }
  return {k, h, w};
}

std::size_t EncoderSpec::flat_size() const {
  auto s = feature_shape();
  return s[0] * s[1] * s[2];
}

void EncoderSpec::validate() const {
  if (channels == 0 || height == 0 || width == 0) throw Error(Errc::invalid_argument, "encoder input shape is empty");
  if (convs.empty()) throw Error(Errc::invalid_argument, "encoder needs at least one conv layer");
  for (const auto& c : convs)
    if (c.channels == 0 || c.kernel == 0 || c.stride == 0)
      throw Error(Errc::invalid_argument, "conv layer dimensions must be positive");
  if (latent == 0) throw Error(Errc::invalid_argument, "latent dimension must be positive");
}

void add_conv_params(ParamSet& params, const EncoderSpec& spec, Rng& rng, const std::string& prefix) {
  spec.validate();
  std::size_t in = spec.channels;
  for (std::size_t i = 0; i < spec.convs.size(); ++i) {
    const auto& c = spec.convs[i];
    double fan_in = static_cast<double>(in * c.kernel * c.kernel);
    params.add(conv_name(prefix, i, "w"), normal_init({c.channels, in, c.kernel, c.kernel}, std::sqrt(2.0 / fan_in), rng));
    if (spec.bias) params.add(conv_name(prefix, i, "b"), Tensor({c.channels}));
    in = c.channels;
  }
}

void add_encoder_params(ParamSet& params, const EncoderSpec& spec, Rng& rng, const std::string& prefix,
                        bool logvar_head) {
  add_conv_params(params, spec, rng, prefix);
  double flat = static_cast<double>(spec.flat_size());
  params.add(prefix + ".mean.w", normal_init({spec.latent, spec.flat_size()}, std::sqrt(1.0 / flat), rng));
  if (spec.bias) params.add(prefix + ".mean.b", Tensor({spec.latent}));
  if (!logvar_head) return;
  params.add(prefix + ".logvar.w", normal_init({spec.latent, spec.flat_size()}, 0.1 * std::sqrt(1.0 / flat), rng));
  if (spec.bias) params.add(prefix + ".logvar.b", Tensor({spec.latent}));
}

NodeId build_conv_stack(Graph& g, const ParamLeaves& p, const EncoderSpec& spec, const std::string& prefix, NodeId x) {
  NodeId h = x;
  for (std::size_t i = 0; i < spec.convs.size(); ++i) {
    const auto& c = spec.convs[i];
    std::optional<NodeId> b;
    if (spec.bias) b = p(conv_name(prefix, i, "b"));
    h = g.relu(g.conv2d(h, p(conv_name(prefix, i, "w")), b, {c.stride, Padding::same}));
  }
  return h;
}

EncoderGraph build_encoder(Graph& g, const ParamLeaves& p, const EncoderSpec& spec, const std::string& prefix) {
  EncoderGraph e;
  e.input = g.leaf("obs");
  g.set_requires_grad(e.input, false);
  NodeId h = build_conv_stack(g, p, spec, prefix, e.input);
  e.features = h;
  NodeId flat = g.reshape(h, {0, spec.flat_size()});
  std::optional<NodeId> bm, bl;
  if (spec.bias) bm = p(prefix + ".mean.b");
  e.mean = g.linear(flat, p(prefix + ".mean.w"), bm);
  e.has_logvar = p.has(prefix + ".logvar.w");
  if (!e.has_logvar) return e;
  if (spec.bias) bl = p(prefix + ".logvar.b");
  e.logvar = g.clamp(g.linear(flat, p(prefix + ".logvar.w"), bl), kLogVarMin, kLogVarMax);
  return e;
}

NodeId build_kl(Graph& g, NodeId mean, NodeId logvar) {
  NodeId t = g.add(g.mul(mean, mean), g.exp(logvar));
  t = g.add_scalar(g.sub(t, logvar), -1.0);
  return g.mul_scalar(g.reduce_sum(t), 0.5);
}

void write_encoder_spec(ModelFile& file, const EncoderSpec& spec) {
  file.set("C", std::to_string(spec.channels));
  file.set("H", std::to_string(spec.height));
  file.set("W", std::to_string(spec.width));
  file.set("d", std::to_string(spec.latent));
  file.set("bias", spec.bias ? "1" : "0");
  file.set("conv_layers", std::to_string(spec.convs.size()));
  for (std::size_t i = 0; i < spec.convs.size(); ++i) {
    const auto& c = spec.convs[i];
    file.set("conv" + std::to_string(i),
             std::to_string(c.channels) + ":" + std::to_string(c.kernel) + ":" + std::to_string(c.stride));
  }
}

EncoderSpec read_encoder_spec(const ModelFile& file) {
  const std::string what = "weights manifest";
  EncoderSpec s;
  s.channels = io::parse_uint(file.get("C"), what);
  s.height = io::parse_uint(file.get("H"), what);
  s.width = io::parse_uint(file.get("W"), what);
  s.latent = io::parse_uint(file.get("d"), what);
  s.bias = file.get("bias") == "1";
  auto n = io::parse_uint(file.get("conv_layers"), what);
  if (n == 0 || n > 16) throw Error(Errc::format, what + ": bad conv layer count");
  s.convs.clear();
  for (std::size_t i = 0; i < n; ++i) {
    std::string v = file.get("conv" + std::to_string(i));
    auto a = v.find(':'), b = v.rfind(':');
    if (a == std::string::npos || a == b) throw Error(Errc::format, what + ": bad conv spec '" + v + "'");
    s.convs.push_back({io::parse_uint(v.substr(0, a), what), io::parse_uint(v.substr(a + 1, b - a - 1), what),
                       io::parse_uint(v.substr(b + 1), what)});
  }
  try {
    s.validate();
  } catch (const Error& e) {
    throw Error(Errc::format, what + ": " + e.what());
  }
  if (s.frame_size() > (1u << 24)) throw Error(Errc::format, what + ": input too large");
  return s;
}

double kl_unit_gaussian(const Posterior& g) {
  if (g.mean.size() != g.logvar.size()) throw Error(Errc::shape_mismatch, "posterior mean/logvar size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < g.mean.size(); ++i)
    s += g.mean[i] * g.mean[i] + std::exp(g.logvar[i]) - g.logvar[i] - 1.0;
  return 0.5 * s;
}

std::vector<double> sample_latent(const Posterior& g, Rng& rng, SampleMode mode) {
  if (g.mean.size() != g.logvar.size()) throw Error(Errc::shape_mismatch, "posterior mean/logvar size mismatch");
  std::vector<double> z = g.mean;
  if (mode == SampleMode::train) {
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += std::exp(0.5 * g.logvar[i]) * normal(rng);
  }
  return z;
}

Tensor frames_to_tensor(std::span<const float> frames, std::size_t n, const EncoderSpec& spec,
                        const InputNorm* norm) {
  if (frames.size() != n * spec.frame_size())
    throw Error(Errc::shape_mismatch, "observation has " + std::to_string(frames.size()) + " values, expected " +
                                          std::to_string(n * spec.frame_size()));
  Tensor t({n, spec.channels, spec.height, spec.width});
  if (norm)
    norm->apply(frames, n, t.data());
  else
    std::copy(frames.begin(), frames.end(), t.values().begin());
  return t;
}

Heatmap grad_cam_on(Graph& g, NodeId features, NodeId score, std::size_t out_h, std::size_t out_w) {
  g.set_requires_grad(features, true);
  g.forward(score);
  g.backward(score);
  const Tensor& a = g.value(features);
  const Tensor& da = g.grad(features);
  if (a.rank() != 4 || a.dim(0) != 1) throw Error(Errc::shape_mismatch, "grad_cam expects a single frame");
  const std::size_t k = a.dim(1), h = a.dim(2), w = a.dim(3), hw = h * w;
  Heatmap m;
  m.raw_height = h;
  m.raw_width = w;
  m.raw.assign(hw, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    double alpha = 0.0;
    for (std::size_t i = 0; i < hw; ++i) alpha += da[c * hw + i];
    alpha /= static_cast<double>(hw);
    for (std::size_t i = 0; i < hw; ++i) m.raw[i] += alpha * a[c * hw + i];
  }
  for (auto& v : m.raw) v = std::max(0.0, v);
  m.height = out_h;
  m.width = out_w;
  m.values = upsample_bilinear(m.raw, h, w, out_h, out_w);
  return m;
}

KlEncoder::KlEncoder(const EncoderSpec& spec, const ParamSet& params, const std::string& prefix, InputNorm norm)
    : spec_(spec), norm_(std::move(norm)) {
  spec_.validate();
  if (!norm_.identity() && norm_.mean.size() != spec_.frame_size())
    throw Error(Errc::shape_mismatch, "input normalization does not match the encoder input");
  auto leaves = add_param_leaves(g_, params, false);
  enc_ = build_encoder(g_, leaves, spec_, prefix);
  if (!enc_.has_logvar) throw Error(Errc::invalid_argument, "KL scoring needs a variational encoder");
  kl_ = build_kl(g_, enc_.mean, enc_.logvar);
  bind_params(g_, leaves, params);
}

Posterior KlEncoder::encode(std::span<const float> frame) {
  g_.bind(enc_.input, frames_to_tensor(frame, 1, spec_, &norm_));
  Posterior p;
  const auto& m = g_.forward(enc_.mean);
  p.mean.assign(m.values().begin(), m.values().end());
  const auto& lv = g_.forward(enc_.logvar);
  p.logvar.assign(lv.values().begin(), lv.values().end());
  return p;
}

double KlEncoder::score(std::span<const float> frame) { return kl_unit_gaussian(encode(frame)); }

std::vector<double> KlEncoder::scores(std::span<const float> frames, std::size_t n) {
  g_.bind(enc_.input, frames_to_tensor(frames, n, spec_, &norm_));
  const Tensor m = g_.forward(enc_.mean);
  const Tensor& lv = g_.forward(enc_.logvar);
  const std::size_t d = spec_.latent;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    Posterior p;
    p.mean.assign(m.values().begin() + static_cast<long>(i * d), m.values().begin() + static_cast<long>((i + 1) * d));
    p.logvar.assign(lv.values().begin() + static_cast<long>(i * d),
                    lv.values().begin() + static_cast<long>((i + 1) * d));
    out[i] = kl_unit_gaussian(p);
  }
  return out;
}

Heatmap KlEncoder::grad_cam(std::span<const float> frame) {
  g_.bind(enc_.input, frames_to_tensor(frame, 1, spec_, &norm_));
  return grad_cam_on(g_, enc_.features, kl_, spec_.height, spec_.width);
}

}  // namespace fare::model
