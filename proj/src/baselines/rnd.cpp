#include "baselines/rnd.hpp"

#include <cmath>
#include <memory>

#include "common/error.hpp"
#include "common/io.hpp"

namespace fare::baselines {

using model::ParamLeaves;
using tensor::Graph;
using tensor::NodeId;
using tensor::Tensor;

namespace {

constexpr const char* kTarget = "target";
constexpr const char* kPred = "pred";

void add_net(model::ParamSet& params, const RndSpec& s, Rng& rng, const std::string& prefix) {
  model::add_conv_params(params, s.encoder, rng, prefix);
  const std::size_t in = s.encoder.flat_size() + 2;
  params.add(prefix + ".fc1.w", model::normal_init({s.hidden, in}, std::sqrt(2.0 / double(in)), rng));
  params.add(prefix + ".fc1.b", Tensor({s.hidden}));
  params.add(prefix + ".fc2.w", model::normal_init({s.outputs, s.hidden}, std::sqrt(1.0 / double(s.hidden)), rng));
  params.add(prefix + ".fc2.b", Tensor({s.outputs}));
}

NodeId build_net(Graph& g, const ParamLeaves& p, const RndSpec& s, const std::string& prefix, NodeId obs, NodeId act) {
  NodeId h = model::build_conv_stack(g, p, s.encoder, prefix, obs);
  h = g.concat(g.reshape(h, {0, s.encoder.flat_size()}), act);
  h = g.relu(g.linear(h, p(prefix + ".fc1.w"), p(prefix + ".fc1.b")));
  return g.linear(h, p(prefix + ".fc2.w"), p(prefix + ".fc2.b"));
}

Tensor actions_tensor(std::span<const ActionCmd> actions) {
  Tensor t({actions.size(), 2});
  for (std::size_t i = 0; i < actions.size(); ++i) {
    t[2 * i] = actions[i].v;
    t[2 * i + 1] = actions[i].omega;
  }
  return t;
}

}  // namespace

RndGraph build_rnd_graph(Graph& g, const ParamLeaves& p, const RndSpec& s) {
  RndGraph r;
  r.obs = g.leaf("obs");
  r.act = g.leaf("action");
  g.set_requires_grad(r.obs, false);
  g.set_requires_grad(r.act, false);
  r.target = build_net(g, p, s, kTarget, r.obs, r.act);
  r.pred = build_net(g, p, s, kPred, r.obs, r.act);
  NodeId d = g.sub(r.pred, r.target);
  r.loss = g.reduce_sum(g.mul(d, d));
  return r;
}

RndModel init_rnd(const RndSpec& spec, std::uint64_t seed) {
  spec.encoder.validate();
  if (spec.hidden == 0 || spec.outputs == 0) throw Error(Errc::invalid_argument, "RND layer sizes must be positive");
  RndModel m;
  m.spec = spec;
  m.seed = seed;
  Rng target_rng(derive_seed(seed, 0x7A6E7));
  Rng pred_rng(derive_seed(seed, 0x93ED));
  add_net(m.params, spec, target_rng, kTarget);
  add_net(m.params, spec, pred_rng, kPred);
  m.params.round_to_f32();
  return m;
}

void save_rnd(const RndModel& m, const std::string& path) {
  model::ModelFile f;
  f.kind = "rnd";
  model::write_encoder_spec(f, m.spec.encoder);
  f.set("hidden", std::to_string(m.spec.hidden));
  f.set("outputs", std::to_string(m.spec.outputs));
  f.set("seed", std::to_string(m.seed));
  f.params = m.params;
  model::write_input_norm(f, m.norm);
  model::save_model_file(f, path);
}

RndModel load_rnd(const std::string& path) {
  auto f = model::load_model_file(path);
  if (f.kind != "rnd") throw Error(Errc::format, "weights '" + path + "' hold a '" + f.kind + "' model, not RND");
  RndModel m;
  m.spec.encoder = model::read_encoder_spec(f);
  m.spec.hidden = io::parse_uint(f.get("hidden"), path);
  m.spec.outputs = io::parse_uint(f.get("outputs"), path);
  m.seed = io::parse_uint(f.get("seed"), path);
  m.norm = model::take_input_norm(f, m.spec.encoder.frame_size());
  auto ref = init_rnd(m.spec, 0);
  if (ref.params.names() != f.params.names()) throw Error(Errc::format, "weights '" + path + "': unexpected parameters");
  for (std::size_t i = 0; i < ref.params.size(); ++i)
    if (ref.params.values()[i].shape() != f.params.values()[i].shape())
      throw Error(Errc::format, "weights '" + path + "': parameter '" + ref.params.names()[i] + "' has wrong shape");
  m.params = std::move(f.params);
  return m;
}

RndTrainResult train_rnd(const sim::Dataset& data, const RndSpec& spec, const model::TrainOptions& opts,
                         std::size_t threads) {
  const auto& e = spec.encoder;
  if (data.channels != e.channels || data.height != e.height || data.width != e.width)
    throw Error(Errc::shape_mismatch, "dataset frame shape does not match the RND input");
  std::vector<std::pair<std::size_t, std::size_t>> items;
  for (std::size_t i = 0; i < data.trajectories.size(); ++i)
    for (std::size_t t = 0; t < data.trajectories[i].length(); ++t) items.emplace_back(i, t);
  if (items.empty()) throw Error(Errc::insufficient_data, "training set is empty");

  RndTrainResult r;
  r.model = init_rnd(spec, opts.seed);
  std::vector<std::span<const float>> blocks;
  for (const auto& tr : data.trajectories) blocks.emplace_back(tr.frames);
  r.model.norm = model::fit_input_norm(blocks, data.frame_size());
  const model::InputNorm& norm = r.model.norm;
  threads = std::max<std::size_t>(1, threads);

  auto& params = r.model.params;
  std::vector<std::size_t> frozen;
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params.names()[i].rfind(std::string(kTarget) + ".", 0) == 0) frozen.push_back(i);

  struct Ctx {
    Graph g;
    ParamLeaves leaves;
    RndGraph net;
  };
  std::vector<std::unique_ptr<Ctx>> ctx(threads);
  const std::size_t fsize = data.frame_size();

  auto fn = [&](std::size_t worker, std::span<const std::size_t> idx, std::span<const std::uint64_t>,
                std::vector<Tensor>& grads) {
    if (!ctx[worker]) {
      ctx[worker] = std::make_unique<Ctx>();
      auto& c = *ctx[worker];
      c.leaves = model::add_param_leaves(c.g, params, true);
      for (std::size_t i : frozen) c.g.set_requires_grad(c.leaves.leaves[i], false);
      c.net = build_rnd_graph(c.g, c.leaves, spec);
    }
    Ctx& c = *ctx[worker];
    const std::size_t n = idx.size();
    model::bind_params(c.g, c.leaves, params);
    Tensor x({n, e.channels, e.height, e.width});
    std::vector<ActionCmd> acts(n);
    for (std::size_t k = 0; k < n; ++k) {
      auto [ti, t] = items[idx[k]];
      norm.apply(data.frame(ti, t), 1, x.data() + k * fsize);
      acts[k] = data.trajectories[ti].actions[t];
    }
    c.g.bind(c.net.obs, std::move(x));
    c.g.bind(c.net.act, actions_tensor(acts));
    double loss = c.g.forward(c.net.loss).item();
    c.g.backward(c.net.loss);
    for (std::size_t i = 0; i < grads.size(); ++i) {
      if (!c.g.has_grad(c.leaves.leaves[i])) continue;
      const Tensor& gi = c.g.grad(c.leaves.leaves[i]);
      for (std::size_t k = 0; k < gi.size(); ++k) grads[i][k] += gi[k];
    }
    return loss;
  };
  r.loss_curve = model::train_minibatch(params, items.size(), opts, threads, fn, frozen);
  return r;
}

RndScorer::RndScorer(const RndModel& m) : spec_(m.spec), norm_(m.norm) {
  auto p = model::add_param_leaves(g_, m.params, false);
  auto r = build_rnd_graph(g_, p, spec_);
  obs_ = r.obs;
  act_ = r.act;
  target_ = r.target;
  pred_ = r.pred;
  model::bind_params(g_, p, m.params);
}

void RndScorer::bind(std::span<const float> frames, std::span<const ActionCmd> actions) {
  g_.bind(obs_, model::frames_to_tensor(frames, actions.size(), spec_.encoder, &norm_));
  g_.bind(act_, actions_tensor(actions));
}

double RndScorer::score(std::span<const float> frame, const ActionCmd& action) {
  return scores(frame, std::span<const ActionCmd>(&action, 1)).front();
}

std::vector<double> RndScorer::scores(std::span<const float> frames, std::span<const ActionCmd> actions) {
  bind(frames, actions);
  const Tensor t = g_.forward(target_);
  const Tensor& p = g_.forward(pred_);
  const std::size_t k = spec_.outputs;
  std::vector<double> out(actions.size(), 0.0);
  for (std::size_t i = 0; i < actions.size(); ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double d = p[i * k + j] - t[i * k + j];
      out[i] += d * d;
    }
  return out;
}

std::vector<double> RndScorer::target_output(std::span<const float> frame, const ActionCmd& action) {
  bind(frame, std::span<const ActionCmd>(&action, 1));
  const Tensor& t = g_.forward(target_);
  return {t.values().begin(), t.values().end()};
}

}  // namespace fare::baselines
