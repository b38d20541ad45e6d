#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "baselines/autoencoder.hpp"
#include "baselines/rnd.hpp"
#include "common/error.hpp"
#include "support/fd.hpp"
#include "support/vibcheck.hpp"

using namespace fare;
using namespace fare::baselines;
using tensor::Graph;
using tensor::Tensor;

namespace {

AeSpec tiny_ae(bool variational) {
  AeSpec s;
  s.encoder = testing::tiny_policy_spec().encoder;
  s.variational = variational;
  s.beta = 0.7;
  return s;
}

RndSpec tiny_rnd() {
  RndSpec s;
  s.encoder = testing::tiny_policy_spec().encoder;
  s.hidden = 5;
  s.outputs = 4;
  return s;
}

void jitter(model::ParamSet& p, Rng& rng, double scale) {
  for (auto& t : p.values())
    for (auto& v : t.values()) v += scale * normal(rng);
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("fare_test_baselines_" + name)).string();
}

sim::CollectedData small_data() {
  sim::CollectConfig cc;
  cc.n_traj = 12;
  cc.episode_steps = 100;
  cc.seed = 41;
  return sim::collect_dataset(cc);
}

}  // namespace

TEST_CASE("autoencoder loss gradients match finite differences") {
  Rng rng(1);
  for (bool variational : {false, true}) {
    auto spec = tiny_ae(variational);
    auto m = init_ae(spec, 3);
    jitter(m.params, rng, 0.1);
    Graph g;
    auto leaves = model::add_param_leaves(g, m.params, true);
    auto net = build_ae_graph(g, leaves, spec, true);
    model::bind_params(g, leaves, m.params);
    Tensor x = testing::random_tensor({2, 1, 8, 8}, rng);
    Tensor target({2, 1, 8, 8});
    for (auto& v : target.values()) v = uniform(rng, 0, 1);
    g.bind(net.enc.input, x);
    g.bind(net.target, target);
    if (variational) g.bind(net.eps, testing::random_tensor({2, spec.encoder.latent}, rng));
    g.forward(net.loss);
    g.backward(net.loss);
    std::vector<Tensor> analytic;
    for (auto id : leaves.leaves) analytic.push_back(g.grad(id));
    for (std::size_t i = 0; i < leaves.leaves.size(); ++i) {
      auto numeric = testing::numeric_grad(g, net.loss, leaves.leaves[i], m.params.values()[i]);
      INFO(m.params.names()[i]);
      CHECK(testing::rel_error(analytic[i], numeric) < 1e-4);
    }
  }
}

TEST_CASE("plain autoencoder loss is the summed squared error only") {
  Rng rng(2);
  auto spec = tiny_ae(false);
  auto m = init_ae(spec, 4);
  CHECK_FALSE(m.params.contains("enc.logvar.w"));
  Graph g;
  auto leaves = model::add_param_leaves(g, m.params, false);
  auto net = build_ae_graph(g, leaves, spec, false);
  model::bind_params(g, leaves, m.params);
  Tensor x({1, 1, 8, 8}), target({1, 1, 8, 8});
  for (std::size_t k = 0; k < 64; ++k) target[k] = x[k] = uniform(rng, 0, 1);
  g.bind(net.enc.input, x);
  g.bind(net.target, target);
  double loss = g.forward(net.loss).item();
  const Tensor& r = g.forward(net.recon);
  double se = 0.0;
  for (std::size_t k = 0; k < 64; ++k) se += (r[k] - target[k]) * (r[k] - target[k]);
  CHECK(loss == doctest::Approx(se).epsilon(1e-12));
  CHECK(r.shape() == target.shape());
}

TEST_CASE("perfect reconstruction scores zero") {
  auto m = init_ae(tiny_ae(false), 5);
  for (std::size_t i = 0; i < m.params.size(); ++i)
    if (m.params.names()[i].rfind("dec.", 0) == 0) m.params.values()[i].fill(0.0);
  // Without a fitted normalization the decoder now outputs 0 everywhere.
  AeScorer s(m);
  std::vector<float> frame(64, 0.0f);
  auto r = s.score(frame);
  CHECK(r.score == 0.0);
  for (double v : r.heatmap.values) CHECK(v == 0.0);
  frame[9] = 0.5f;
  r = s.score(frame);
  CHECK(r.score == doctest::Approx(0.25 / 64));
  CHECK(r.heatmap.at(1, 1) == doctest::Approx(0.25));
  CHECK(r.heatmap.height == 8u);
}

TEST_CASE("vae KL head: prior posterior scores zero, plain autoencoder rejected") {
  auto m = init_ae(tiny_ae(true), 6);
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    const auto& n = m.params.names()[i];
    if (n.rfind("enc.mean", 0) == 0 || n.rfind("enc.logvar", 0) == 0) m.params.values()[i].fill(0.0);
  }
  auto enc = vae_kl_encoder(m);
  Rng rng(3);
  std::vector<float> frame(64);
  for (auto& v : frame) v = static_cast<float>(uniform(rng, 0, 1));
  CHECK(enc.score(frame) == 0.0);
  auto jittered = init_ae(tiny_ae(true), 7);
  jitter(jittered.params, rng, 0.2);
  auto hm = vae_kl_encoder(jittered).grad_cam(frame);
  CHECK(hm.values.size() == 64u);
  for (double v : hm.values) CHECK(v >= 0.0);
  CHECK_THROWS_AS(vae_kl_encoder(init_ae(tiny_ae(false), 1)), Error);
}

TEST_CASE("baseline weights round-trip and reject other kinds") {
  for (bool variational : {false, true}) {
    auto m = init_ae(tiny_ae(variational), 8);
    m.norm.mean.assign(64, 0.25);
    m.norm.scale = 0.5;
    auto path = temp_path("ae.fwt");
    save_ae(m, path);
    auto back = load_ae(path);
    CHECK(back.params == m.params);
    CHECK(back.spec == m.spec);
    CHECK(back.norm == m.norm);
    CHECK_THROWS_AS(load_rnd(path), Error);
    std::filesystem::remove(path);
  }
  auto r = init_rnd(tiny_rnd(), 9);
  auto path = temp_path("rnd.fwt");
  save_rnd(r, path);
  auto back = load_rnd(path);
  CHECK(back.params == r.params);
  CHECK(back.spec == r.spec);
  CHECK_THROWS_AS(load_ae(path), Error);
  std::filesystem::remove(path);
}

TEST_CASE("RND target and predictor start different and scores are non-negative") {
  auto m = init_rnd(tiny_rnd(), 10);
  CHECK(m.params.at("target.fc2.w") != m.params.at("pred.fc2.w"));
  RndScorer s(m);
  Rng rng(4);
  std::vector<float> frame(64);
  for (auto& v : frame) v = static_cast<float>(uniform(rng, 0, 1));
  ActionCmd a{0.4, -0.2};
  auto t1 = s.target_output(frame, a);
  double sc = s.score(frame, a);
  CHECK(s.target_output(frame, a) == t1);
  CHECK(sc > 0.0);
  CHECK(s.score(frame, a) == sc);
  CHECK(s.target_output(frame, {0.4, 0.9}) != t1);
}

TEST_CASE("RND predictor gradients match finite differences; the target gets none") {
  Rng rng(5);
  auto spec = tiny_rnd();
  auto m = init_rnd(spec, 11);
  jitter(m.params, rng, 0.1);
  Graph g;
  auto leaves = model::add_param_leaves(g, m.params, true);
  auto net = build_rnd_graph(g, leaves, spec);
  model::bind_params(g, leaves, m.params);
  g.bind(net.obs, testing::random_tensor({2, 1, 8, 8}, rng));
  Tensor act({2, 2});
  for (auto& v : act.values()) v = uniform(rng, -1, 1);
  g.bind(net.act, act);
  g.forward(net.loss);
  g.backward(net.loss);
  std::vector<Tensor> analytic;
  for (auto id : leaves.leaves) analytic.push_back(g.grad(id));
  for (std::size_t i = 0; i < leaves.leaves.size(); ++i) {
    if (m.params.names()[i].rfind("pred.", 0) != 0) continue;
    auto numeric = testing::numeric_grad(g, net.loss, leaves.leaves[i], m.params.values()[i]);
    INFO(m.params.names()[i]);
    CHECK(testing::rel_error(analytic[i], numeric) < 1e-4);
  }
}

TEST_CASE("trained autoencoders reconstruct training frames better than a blackout") {
  auto data = small_data();
  model::TrainOptions opts;
  opts.epochs = 3;
  opts.seed = 2;
  for (bool variational : {false, true}) {
    AeSpec spec;
    spec.variational = variational;
    auto r = train_ae(data.train, spec, opts, 1);
    REQUIRE(r.loss_curve.size() == 3u);
    CHECK(r.loss_curve[2] < r.loss_curve[0]);
    AeScorer s(r.model);
    std::vector<float> black(data.train.frame_size(), 0.0f);
    double id = 0.0;
    const std::size_t n = data.calib.trajectories[0].length();
    for (std::size_t t = 0; t < n; ++t) id += s.score(data.calib.frame(0, t)).score / static_cast<double>(n);
    CHECK(id < s.score(black).score);
    if (variational) {
      auto again = train_ae(data.train, spec, opts, 2);
      CHECK(again.model.params == r.model.params);
    }
  }
}

TEST_CASE("trained RND leaves the target untouched and flags a blackout pair") {
  auto data = small_data();
  model::TrainOptions opts;
  opts.epochs = 4;
  opts.seed = 3;
  auto r = train_rnd(data.train, {}, opts, 1);
  CHECK(r.loss_curve.back() < r.loss_curve.front());
  auto init = init_rnd({}, opts.seed);
  for (std::size_t i = 0; i < init.params.size(); ++i) {
    const auto& n = init.params.names()[i];
    if (n.rfind("target.", 0) == 0) REQUIRE(r.model.params.values()[i] == init.params.values()[i]);
    if (n == "pred.fc2.w") CHECK(r.model.params.values()[i] != init.params.values()[i]);
  }
  RndScorer s(r.model);
  double id = 0.0;
  const auto& tr = data.train.trajectories[0];
  for (std::size_t t = 0; t < tr.length(); ++t) id += s.score(data.train.frame(0, t), tr.actions[t]);
  id /= static_cast<double>(tr.length());
  std::vector<float> black(data.train.frame_size(), 0.0f);
  CHECK(id < s.score(black, tr.actions[0]));
}
