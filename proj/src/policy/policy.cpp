#include "policy/policy.hpp"

#include <cmath>
#include <memory>

#include "common/error.hpp"
#include "common/io.hpp"

namespace fare::policy {

using model::ParamLeaves;
using tensor::Graph;
using tensor::NodeId;
using tensor::Tensor;

namespace {

constexpr const char* kPrefix = "enc";

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

NodeId build_decoder(Graph& g, const ParamLeaves& p, NodeId z) {
  NodeId h = g.relu(g.linear(z, p("dec.fc1.w"), p("dec.fc1.b")));
  NodeId out = g.linear(h, p("dec.fc2.w"), p("dec.fc2.b"));
  return g.concat(g.sigmoid(g.slice(out, 0, 1)), g.tanh(g.slice(out, 1, 2)));
}

Tensor actions_to_tensor(std::span<const ActionCmd> actions) {
  Tensor t({actions.size(), 2});
  for (std::size_t i = 0; i < actions.size(); ++i) {
    t[2 * i] = actions[i].v;
    t[2 * i + 1] = actions[i].omega;
  }
  return t;
}

}  // namespace

PolicyModel init_policy(const PolicySpec& spec, std::uint64_t seed) {
  if (spec.hidden == 0) throw Error(Errc::invalid_argument, "decoder hidden size must be positive");
  if (!(spec.beta >= 0.0)) throw Error(Errc::invalid_argument, "beta must be non-negative");
  PolicyModel m;
  m.spec = spec;
  m.seed = seed;
  Rng rng(derive_seed(seed, 0x1A17));
  model::add_encoder_params(m.params, spec.encoder, rng, kPrefix);
  const double d = static_cast<double>(spec.encoder.latent), h = static_cast<double>(spec.hidden);
  m.params.add("dec.fc1.w", model::normal_init({spec.hidden, spec.encoder.latent}, std::sqrt(2.0 / d), rng));
  m.params.add("dec.fc1.b", Tensor({spec.hidden}));
  m.params.add("dec.fc2.w", model::normal_init({2, spec.hidden}, std::sqrt(1.0 / h), rng));
  m.params.add("dec.fc2.b", Tensor({2}));
  m.params.round_to_f32();
  return m;
}

void save_policy(const PolicyModel& m, const std::string& path) {
  model::ModelFile f;
  f.kind = "policy";
  model::write_encoder_spec(f, m.spec.encoder);
  f.set("hidden", std::to_string(m.spec.hidden));
  f.set("beta", format_double(m.spec.beta));
  f.set("seed", std::to_string(m.seed));
  f.params = m.params;
  model::write_input_norm(f, m.norm);
  model::save_model_file(f, path);
}

PolicyModel load_policy(const std::string& path) {
  auto f = model::load_model_file(path);
  if (f.kind != "policy") throw Error(Errc::format, "weights '" + path + "' hold a '" + f.kind + "' model, not a policy");
  PolicyModel m;
  m.spec.encoder = model::read_encoder_spec(f);
  m.spec.hidden = io::parse_uint(f.get("hidden"), path);
  m.spec.beta = io::parse_double(f.get("beta"), path);
  m.seed = io::parse_uint(f.get("seed"), path);
  m.norm = model::take_input_norm(f, m.spec.encoder.frame_size());
  // Shapes must match a freshly initialized model of the same spec.
  auto ref = init_policy(m.spec, 0);
  if (ref.params.names() != f.params.names()) throw Error(Errc::format, "weights '" + path + "': unexpected parameters");
  for (std::size_t i = 0; i < ref.params.size(); ++i) {
    if (ref.params.values()[i].shape() != f.params.values()[i].shape())
      throw Error(Errc::format, "weights '" + path + "': parameter '" + ref.params.names()[i] + "' has wrong shape");
  }
  m.params = std::move(f.params);
  return m;
}

PolicyGraph build_policy_graph(Graph& g, const ParamLeaves& p, const PolicySpec& spec, bool sampled) {
  PolicyGraph pg;
  pg.enc = model::build_encoder(g, p, spec.encoder, kPrefix);
  pg.kl = model::build_kl(g, pg.enc.mean, pg.enc.logvar);
  if (sampled) {
    pg.eps = g.leaf("eps");
    g.set_requires_grad(pg.eps, false);
    NodeId sigma = g.exp(g.mul_scalar(pg.enc.logvar, 0.5));
    pg.z = g.add(pg.enc.mean, g.mul(sigma, pg.eps));
  } else {
    pg.z = pg.enc.mean;
  }
  pg.action = build_decoder(g, p, pg.z);
  return pg;
}

VibGraph build_vib_graph(Graph& g, const ParamLeaves& p, const PolicySpec& spec, double beta) {
  VibGraph v;
  v.net = build_policy_graph(g, p, spec, true);
  v.target = g.leaf("target");
  g.set_requires_grad(v.target, false);
  NodeId diff = g.sub(v.net.action, v.target);
  NodeId sq = g.reduce_sum(g.mul(diff, diff));
  v.loss = beta == 0.0 ? sq : g.add(sq, g.mul_scalar(v.net.kl, beta));
  return v;
}

ActionCmd decode_action(const PolicyModel& m, std::span<const double> z) {
  if (z.size() != m.spec.encoder.latent) throw Error(Errc::shape_mismatch, "latent vector has wrong length");
  Graph g;
  auto p = model::add_param_leaves(g, m.params, false);
  NodeId zl = g.leaf("z");
  NodeId a = build_decoder(g, p, zl);
  model::bind_params(g, p, m.params);
  g.bind(zl, Tensor({1, z.size()}, std::vector<double>(z.begin(), z.end())));
  const Tensor& out = g.forward(a);
  return {out[0], out[1]};
}

double vib_loss(const PolicyModel& m, std::span<const float> frames, std::span<const ActionCmd> actions, double beta,
                Rng& rng) {
  const std::size_t n = actions.size();
  if (n == 0) throw Error(Errc::invalid_argument, "vib_loss needs a non-empty batch");
  Graph g;
  auto p = model::add_param_leaves(g, m.params, false);
  auto v = build_vib_graph(g, p, m.spec, beta);
  model::bind_params(g, p, m.params);
  g.bind(v.net.enc.input, model::frames_to_tensor(frames, n, m.spec.encoder, &m.norm));
  g.bind(v.target, actions_to_tensor(actions));
  Tensor eps({n, m.spec.encoder.latent});
  for (auto& e : eps.values()) e = normal(rng);
  g.bind(v.net.eps, std::move(eps));
  return g.forward(v.loss).item() / static_cast<double>(n);
}

TrainResult train_policy(const sim::Dataset& data, const PolicySpec& spec, const model::TrainOptions& opts,
                         std::size_t threads) {
  if (data.channels != spec.encoder.channels || data.height != spec.encoder.height ||
      data.width != spec.encoder.width)
    throw Error(Errc::shape_mismatch, "dataset frame shape does not match the policy input");
  std::vector<std::pair<std::size_t, std::size_t>> items;
  for (std::size_t i = 0; i < data.trajectories.size(); ++i)
    for (std::size_t t = 0; t < data.trajectories[i].length(); ++t) items.emplace_back(i, t);
  if (items.empty()) throw Error(Errc::insufficient_data, "training set is empty");

  TrainResult r;
  r.model = init_policy(spec, opts.seed);
  std::vector<std::span<const float>> blocks;
  for (const auto& tr : data.trajectories) blocks.emplace_back(tr.frames);
  r.model.norm = model::fit_input_norm(blocks, data.frame_size());
  const model::InputNorm& norm = r.model.norm;
  threads = std::max<std::size_t>(1, threads);

  struct Ctx {
    Graph g;
    ParamLeaves leaves;
    VibGraph vib;
  };
  std::vector<std::unique_ptr<Ctx>> ctx(threads);
  const std::size_t fsize = data.frame_size(), d = spec.encoder.latent;
  auto& params = r.model.params;

  auto fn = [&](std::size_t worker, std::span<const std::size_t> idx, std::span<const std::uint64_t> seeds,
                std::vector<Tensor>& grads) {
    if (!ctx[worker]) {
      ctx[worker] = std::make_unique<Ctx>();
      ctx[worker]->leaves = model::add_param_leaves(ctx[worker]->g, params, true);
      ctx[worker]->vib = build_vib_graph(ctx[worker]->g, ctx[worker]->leaves, spec, spec.beta);
    }
    Ctx& c = *ctx[worker];
    const std::size_t n = idx.size();
    model::bind_params(c.g, c.leaves, params);
    Tensor x({n, spec.encoder.channels, spec.encoder.height, spec.encoder.width});
    Tensor a({n, 2});
    Tensor eps({n, d});
    for (std::size_t k = 0; k < n; ++k) {
      auto [ti, t] = items[idx[k]];
      norm.apply(data.frame(ti, t), 1, x.data() + k * fsize);
      const auto& act = data.trajectories[ti].actions[t];
      a[2 * k] = act.v;
      a[2 * k + 1] = act.omega;
      Rng rng(seeds[k]);
      for (std::size_t j = 0; j < d; ++j) eps[k * d + j] = normal(rng);
    }
    c.g.bind(c.vib.net.enc.input, std::move(x));
    c.g.bind(c.vib.target, std::move(a));
    c.g.bind(c.vib.net.eps, std::move(eps));
    double loss = c.g.forward(c.vib.loss).item();
    c.g.backward(c.vib.loss);
    for (std::size_t i = 0; i < grads.size(); ++i) {
      const Tensor& gi = c.g.grad(c.leaves.leaves[i]);
      for (std::size_t k = 0; k < gi.size(); ++k) grads[i][k] += gi[k];
    }
    return loss;
  };
  r.loss_curve = model::train_minibatch(params, items.size(), opts, threads, fn);
  return r;
}

PolicyRunner::PolicyRunner(const PolicyModel& m) : spec_(m.spec), norm_(m.norm) {
  auto p = model::add_param_leaves(g_, m.params, false);
  net_ = build_policy_graph(g_, p, spec_, false);
  model::bind_params(g_, p, m.params);
}

PolicyRunner::Output PolicyRunner::run(std::span<const float> frame) { return std::move(run_batch(frame, 1).front()); }

std::vector<PolicyRunner::Output> PolicyRunner::run_batch(std::span<const float> frames, std::size_t n) {
  g_.bind(net_.enc.input, model::frames_to_tensor(frames, n, spec_.encoder, &norm_));
  const Tensor act = g_.forward(net_.action);
  const Tensor mean = g_.forward(net_.enc.mean);
  const Tensor& lv = g_.forward(net_.enc.logvar);
  const std::size_t d = spec_.encoder.latent;
  std::vector<Output> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& o = out[i];
    o.action = {act[2 * i], act[2 * i + 1]};
    o.posterior.mean.assign(mean.data() + i * d, mean.data() + (i + 1) * d);
    o.posterior.logvar.assign(lv.data() + i * d, lv.data() + (i + 1) * d);
    o.score = model::kl_unit_gaussian(o.posterior);
  }
  return out;
}

Heatmap PolicyRunner::grad_cam(std::span<const float> frame) {
  g_.bind(net_.enc.input, model::frames_to_tensor(frame, 1, spec_.encoder, &norm_));
  return model::grad_cam_on(g_, net_.enc.features, net_.kl, spec_.encoder.height, spec_.encoder.width);
}

StepResult policy_step(PolicyRunner& runner, std::span<const float> frame, const conformal::PredictionBand* band,
                       std::size_t t) {
  auto out = runner.run(frame);
  StepResult r;
  r.action = out.action;
  r.score = out.score;
  if (band == nullptr || band->mu.empty()) return r;
  r.band_available = true;
  r.ood = conformal::is_ood(out.score, t, *band);
  if (r.ood) r.heatmap = runner.grad_cam(frame);
  return r;
}

}  // namespace fare::policy
