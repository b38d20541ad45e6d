#include "baselines/autoencoder.hpp"

#include <cmath>
#include <memory>

#include "common/error.hpp"
#include "common/io.hpp"

namespace fare::baselines {

using model::ParamLeaves;
using tensor::ConvConfig;
using tensor::Graph;
using tensor::NodeId;
using tensor::Padding;
using tensor::Tensor;

namespace {

constexpr const char* kPrefix = "enc";

std::string deconv_name(std::size_t i, const char* what) { return "dec.deconv" + std::to_string(i) + "." + what; }

// Spatial size entering each conv layer, plus the final feature size.
std::vector<std::pair<std::size_t, std::size_t>> layer_sizes(const model::EncoderSpec& s) {
  std::vector<std::pair<std::size_t, std::size_t>> out{{s.height, s.width}};
  for (const auto& c : s.convs) {
    ConvConfig cfg{c.stride, Padding::same};
    auto [h, w] = out.back();
    out.emplace_back(tensor::conv_output_size(h, c.kernel, cfg), tensor::conv_output_size(w, c.kernel, cfg));
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

AeModel init_ae(const AeSpec& spec, std::uint64_t seed) {
  if (!(spec.beta >= 0.0)) throw Error(Errc::invalid_argument, "beta must be non-negative");
  const auto& e = spec.encoder;
  AeModel m;
  m.spec = spec;
  m.seed = seed;
  Rng rng(derive_seed(seed, 0xAE));
  model::add_encoder_params(m.params, e, rng, kPrefix, spec.variational);
  m.params.add("dec.fc.w", model::normal_init({e.flat_size(), e.latent}, std::sqrt(2.0 / double(e.latent)), rng));
  m.params.add("dec.fc.b", Tensor({e.flat_size()}));
  for (std::size_t i = e.convs.size(); i-- > 0;) {
    const auto& c = e.convs[i];
    std::size_t out = i > 0 ? e.convs[i - 1].channels : e.channels;
    double fan_in = static_cast<double>(c.channels * c.kernel * c.kernel);
    m.params.add(deconv_name(i, "w"), model::normal_init({c.channels, out, c.kernel, c.kernel}, std::sqrt(2.0 / fan_in), rng));
    m.params.add(deconv_name(i, "b"), Tensor({out}));
  }
  m.params.round_to_f32();
  return m;
}

void save_ae(const AeModel& m, const std::string& path) {
  model::ModelFile f;
  f.kind = m.spec.variational ? "vae" : "ae";
  model::write_encoder_spec(f, m.spec.encoder);
  f.set("beta", format_double(m.spec.beta));
  f.set("seed", std::to_string(m.seed));
  f.params = m.params;
  model::write_input_norm(f, m.norm);
  model::save_model_file(f, path);
}

AeModel load_ae(const std::string& path) {
  auto f = model::load_model_file(path);
  if (f.kind != "ae" && f.kind != "vae")
    throw Error(Errc::format, "weights '" + path + "' hold a '" + f.kind + "' model, not an autoencoder");
  AeModel m;
  m.spec.encoder = model::read_encoder_spec(f);
  m.spec.variational = f.kind == "vae";
  m.spec.beta = io::parse_double(f.get("beta"), path);
  m.seed = io::parse_uint(f.get("seed"), path);
  m.norm = model::take_input_norm(f, m.spec.encoder.frame_size());
  auto ref = init_ae(m.spec, 0);
  if (ref.params.names() != f.params.names()) throw Error(Errc::format, "weights '" + path + "': unexpected parameters");
  for (std::size_t i = 0; i < ref.params.size(); ++i)
    if (ref.params.values()[i].shape() != f.params.values()[i].shape())
      throw Error(Errc::format, "weights '" + path + "': parameter '" + ref.params.names()[i] + "' has wrong shape");
  m.params = std::move(f.params);
  return m;
}

AeGraph build_ae_graph(Graph& g, const ParamLeaves& p, const AeSpec& spec, bool sampled) {
  const auto& e = spec.encoder;
  AeGraph a;
  a.enc = model::build_encoder(g, p, e, kPrefix);
  if (spec.variational != a.enc.has_logvar) throw Error(Errc::format, "autoencoder parameters do not match its kind");
  a.z = a.enc.mean;
  if (spec.variational && sampled) {
    a.eps = g.leaf("eps");
    g.set_requires_grad(a.eps, false);
    a.z = g.add(a.enc.mean, g.mul(g.exp(g.mul_scalar(a.enc.logvar, 0.5)), a.eps));
  }
  auto fs = e.feature_shape();
  NodeId h = g.relu(g.linear(a.z, p("dec.fc.w"), p("dec.fc.b")));
  h = g.reshape(h, {0, fs[0], fs[1], fs[2]});
  auto sizes = layer_sizes(e);
  for (std::size_t i = e.convs.size(); i-- > 0;) {
    const auto& c = e.convs[i];
    h = g.conv_transpose2d(h, p(deconv_name(i, "w")), p(deconv_name(i, "b")), {c.stride, Padding::same}, sizes[i].first,
                           sizes[i].second);
    if (i > 0) h = g.relu(h);
  }
  a.recon = h;
  a.target = g.leaf("target");
  g.set_requires_grad(a.target, false);
  NodeId d = g.sub(a.recon, a.target);
  a.loss = g.reduce_sum(g.mul(d, d));
  if (spec.variational && spec.beta > 0.0)
    a.loss = g.add(a.loss, g.mul_scalar(model::build_kl(g, a.enc.mean, a.enc.logvar), spec.beta));
  return a;
}

AeTrainResult train_ae(const sim::Dataset& data, const AeSpec& spec, const model::TrainOptions& opts,
                       std::size_t threads) {
  const auto& e = spec.encoder;
  if (data.channels != e.channels || data.height != e.height || data.width != e.width)
    throw Error(Errc::shape_mismatch, "dataset frame shape does not match the autoencoder input");
  std::vector<std::pair<std::size_t, std::size_t>> items;
  for (std::size_t i = 0; i < data.trajectories.size(); ++i)
    for (std::size_t t = 0; t < data.trajectories[i].length(); ++t) items.emplace_back(i, t);
  if (items.empty()) throw Error(Errc::insufficient_data, "training set is empty");

  AeTrainResult r;
  r.model = init_ae(spec, opts.seed);
  std::vector<std::span<const float>> blocks;
  for (const auto& tr : data.trajectories) blocks.emplace_back(tr.frames);
  r.model.norm = model::fit_input_norm(blocks, data.frame_size());
  const model::InputNorm& norm = r.model.norm;
  threads = std::max<std::size_t>(1, threads);

  struct Ctx {
    Graph g;
    ParamLeaves leaves;
    AeGraph net;
  };
  std::vector<std::unique_ptr<Ctx>> ctx(threads);
  const std::size_t fsize = data.frame_size(), d = e.latent;
  auto& params = r.model.params;

  auto fn = [&](std::size_t worker, std::span<const std::size_t> idx, std::span<const std::uint64_t> seeds,
                std::vector<Tensor>& grads) {
    if (!ctx[worker]) {
      ctx[worker] = std::make_unique<Ctx>();
      ctx[worker]->leaves = model::add_param_leaves(ctx[worker]->g, params, true);
      ctx[worker]->net = build_ae_graph(ctx[worker]->g, ctx[worker]->leaves, spec, true);
    }
    Ctx& c = *ctx[worker];
    const std::size_t n = idx.size();
    model::bind_params(c.g, c.leaves, params);
    Tensor x({n, e.channels, e.height, e.width});
    for (std::size_t k = 0; k < n; ++k) {
      auto [ti, t] = items[idx[k]];
      norm.apply(data.frame(ti, t), 1, x.data() + k * fsize);
    }
    c.g.bind(c.net.target, x);
    c.g.bind(c.net.enc.input, std::move(x));
    if (spec.variational) {
      Tensor eps({n, d});
      for (std::size_t k = 0; k < n; ++k) {
        Rng rng(seeds[k]);
        for (std::size_t j = 0; j < d; ++j) eps[k * d + j] = normal(rng);
      }
      c.g.bind(c.net.eps, std::move(eps));
    }
    double loss = c.g.forward(c.net.loss).item();
    c.g.backward(c.net.loss);
    for (std::size_t i = 0; i < grads.size(); ++i) {
      const Tensor& gi = c.g.grad(c.leaves.leaves[i]);
      for (std::size_t k = 0; k < gi.size(); ++k) grads[i][k] += gi[k];
    }
    return loss;
  };
  r.loss_curve = model::train_minibatch(params, items.size(), opts, threads, fn);
  return r;
}

AeScorer::AeScorer(const AeModel& m) : spec_(m.spec), norm_(m.norm) {
  auto p = model::add_param_leaves(g_, m.params, false);
  net_ = build_ae_graph(g_, p, spec_, false);
  model::bind_params(g_, p, m.params);
}

std::vector<double> AeScorer::reconstruct(std::span<const float> frame) {
  g_.bind(net_.enc.input, model::frames_to_tensor(frame, 1, spec_.encoder, &norm_));
  const Tensor& r = g_.forward(net_.recon);
  std::vector<double> out(r.values().begin(), r.values().end());
  if (!norm_.identity())
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = norm_.mean[k] + norm_.scale * out[k];
  return out;
}

ReconScore AeScorer::score(std::span<const float> frame) { return std::move(scores(frame, 1).front()); }

std::vector<ReconScore> AeScorer::scores(std::span<const float> frames, std::size_t n) {
  const auto& e = spec_.encoder;
  Tensor x = model::frames_to_tensor(frames, n, e, &norm_);
  g_.bind(net_.enc.input, x);
  const Tensor& r = g_.forward(net_.recon);
  const std::size_t hw = e.height * e.width, fs = e.frame_size();
  // Errors are measured on the standardized frame and reported in pixel units.
  const double s2 = norm_.scale * norm_.scale;
  std::vector<ReconScore> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = out[i];
    s.heatmap.height = s.heatmap.raw_height = e.height;
    s.heatmap.width = s.heatmap.raw_width = e.width;
    s.heatmap.values.assign(hw, 0.0);
    double total = 0.0;
    for (std::size_t c = 0; c < e.channels; ++c)
      for (std::size_t k = 0; k < hw; ++k) {
        std::size_t idx = i * fs + c * hw + k;
        double se = (r[idx] - x[idx]) * (r[idx] - x[idx]) * s2;
        s.heatmap.values[k] += se / static_cast<double>(e.channels);
        total += se;
      }
    s.score = total / static_cast<double>(fs);
    s.heatmap.raw = s.heatmap.values;
  }
  return out;
}

model::KlEncoder vae_kl_encoder(const AeModel& m) {
  if (!m.spec.variational) throw Error(Errc::invalid_argument, "KL scoring needs variational weights");
  return model::KlEncoder(m.spec.encoder, m.params, kPrefix, m.norm);
}

}  // namespace fare::baselines
