#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "common/error.hpp"
#include "policy/policy.hpp"
#include "support/vibcheck.hpp"

using namespace fare;
using namespace fare::policy;
using model::Posterior;

namespace {

void zero_params(model::ParamSet& p) {
  for (auto& t : p.values()) t.fill(0.0);
}

std::vector<float> random_frame(std::size_t n, Rng& rng) {
  std::vector<float> f(n);
  for (auto& v : f) v = static_cast<float>(uniform(rng, 0.0, 1.0));
  return f;
}

// Monte-Carlo estimate of KL(q || N(0,I)) = E_q[log q(z) - log p(z)].
double mc_kl(const Posterior& q, std::size_t samples, Rng& rng) {
  double acc = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    double lr = 0.0;
    for (std::size_t i = 0; i < q.mean.size(); ++i) {
      double sd = std::exp(0.5 * q.logvar[i]);
      double eps = normal(rng);
      double z = q.mean[i] + sd * eps;
      lr += -0.5 * eps * eps - 0.5 * q.logvar[i] + 0.5 * z * z;
    }
    acc += lr;
  }
  return acc / static_cast<double>(samples);
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("fare_test_policy_" + name)).string();
}

}  // namespace

TEST_CASE("closed-form KL examples") {
  CHECK(model::kl_unit_gaussian({{0, 0, 0}, {0, 0, 0}}) == 0.0);
  CHECK(model::kl_unit_gaussian({{1}, {0}}) == doctest::Approx(0.5));
  CHECK(model::kl_unit_gaussian({{0}, {std::log(2.0)}}) == doctest::Approx(0.5 * (2 - std::log(2.0) - 1)));
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    Posterior q{{uniform(rng, -2, 2), uniform(rng, -2, 2)}, {uniform(rng, -3, 3), uniform(rng, -3, 3)}};
    CHECK(model::kl_unit_gaussian(q) >= 0.0);
  }
}

TEST_CASE("closed-form KL matches a Monte-Carlo estimate") {
  Rng rng(2);
  for (int i = 0; i < 5; ++i) {
    Posterior q;
    for (int k = 0; k < 4; ++k) {
      q.mean.push_back(uniform(rng, -1.5, 1.5));
      q.logvar.push_back(uniform(rng, -1.5, 1.5));
    }
    double exact = model::kl_unit_gaussian(q);
    double mc = mc_kl(q, 1000000, rng);
    CHECK(std::abs(mc - exact) <= 0.01 * exact);
  }
}

TEST_CASE("latent sampling") {
  Rng rng(3);
  Posterior q{{0.3, -1.2, 2.0}, {0.1, -0.4, 1.0}};
  CHECK(model::sample_latent(q, rng, model::SampleMode::infer) == q.mean);

  Rng a(9), b(9);
  CHECK(model::sample_latent(q, a, model::SampleMode::train) == model::sample_latent(q, b, model::SampleMode::train));

  // At the log-variance floor the standard deviation is exp(-5).
  Posterior tight{std::vector<double>(2000, 0.7), std::vector<double>(2000, model::kLogVarMin)};
  auto z = model::sample_latent(tight, rng, model::SampleMode::train);
  double ss = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) ss += (z[i] - 0.7) * (z[i] - 0.7);
  double rms = std::sqrt(ss / static_cast<double>(z.size()));
  CHECK(rms < 1e-2);
  CHECK(rms == doctest::Approx(std::exp(-5.0)).epsilon(0.1));
}

TEST_CASE("encoder shapes and degenerate weights") {
  PolicySpec spec;
  CHECK(spec.encoder.feature_shape() == std::array<std::size_t, 3>{32, 6, 8});

  spec.encoder.bias = false;
  auto m = init_policy(spec, 1);
  zero_params(m.params);
  PolicyRunner runner(m);
  Rng rng(4);
  auto frame = random_frame(48 * 64, rng);
  auto out = runner.run(frame);
  for (double v : out.posterior.mean) CHECK(v == 0.0);
  for (double v : out.posterior.logvar) CHECK(v == 0.0);
  CHECK(out.score == 0.0);
  // Zero decoder squashes to the middle of each range.
  CHECK(out.action.v == doctest::Approx(0.5));
  CHECK(out.action.omega == doctest::Approx(0.0));
  CHECK(decode_action(m, std::vector<double>(32, 1.0)) == ActionCmd{0.5, 0.0});
}

TEST_CASE("encoding is deterministic and reports the feature maps") {
  auto m = init_policy({}, 5);
  PolicyRunner r1(m), r2(m);
  Rng rng(5);
  auto frame = random_frame(48 * 64, rng);
  auto a = r1.run(frame);
  auto b = r1.run(frame);
  auto c = r2.run(frame);
  CHECK(a.posterior.mean == b.posterior.mean);
  CHECK(a.posterior.mean == c.posterior.mean);
  CHECK(a.action == c.action);
  CHECK(a.score == doctest::Approx(model::kl_unit_gaussian(a.posterior)));

  auto batch = random_frame(3 * 48 * 64, rng);
  std::copy(frame.begin(), frame.end(), batch.begin() + 48 * 64);
  auto outs = r1.run_batch(batch, 3);
  CHECK(outs[1].score == doctest::Approx(a.score).epsilon(1e-12));

  CHECK_THROWS_AS(r1.run(std::vector<float>(10)), Error);
}

TEST_CASE("vib loss special cases") {
  auto spec = testing::tiny_policy_spec();
  spec.encoder.bias = false;
  auto m = init_policy(spec, 6);
  Rng rng(6);
  auto frames = random_frame(2 * 64, rng);

  SUBCASE("perfect decoder with posterior equal to the prior gives zero") {
    zero_params(m.params);
    std::vector<ActionCmd> acts{{0.5, 0.0}, {0.5, 0.0}};
    CHECK(vib_loss(m, frames, acts, 1.0, rng) == doctest::Approx(0.0));
  }
  SUBCASE("beta zero is the behaviour-cloning error of the sampled latent") {
    std::vector<ActionCmd> acts{{0.9, -0.3}, {0.2, 0.6}};
    Rng r1(11), r2(11);
    double loss = vib_loss(m, frames, acts, 0.0, r1);
    PolicyRunner runner(m);
    double expect = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
      auto post = runner.run(std::span<const float>(frames).subspan(i * 64, 64)).posterior;
      auto z = model::sample_latent(post, r2, model::SampleMode::train);
      auto a = decode_action(m, z);
      expect += (a.v - acts[i].v) * (a.v - acts[i].v) + (a.omega - acts[i].omega) * (a.omega - acts[i].omega);
    }
    CHECK(loss == doctest::Approx(expect / 2).epsilon(1e-9));
    Rng r3(11);
    double with_kl = vib_loss(m, frames, acts, 0.5, r3);
    double kl = 0.0;
    for (std::size_t i = 0; i < 2; ++i) kl += runner.run(std::span<const float>(frames).subspan(i * 64, 64)).score;
    CHECK(with_kl == doctest::Approx(expect / 2 + 0.5 * kl / 2).epsilon(1e-9));
  }
}

TEST_CASE("vib loss gradient matches finite differences") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 10; ++i) CHECK(testing::vib_grad_error(rng) < 1e-4);
}

TEST_CASE("grad-cam on a hand-built single-map network") {
  PolicySpec spec;
  spec.encoder.height = 2;
  spec.encoder.width = 2;
  spec.encoder.convs = {{1, 1, 1}};
  spec.encoder.latent = 1;
  spec.encoder.bias = false;
  spec.hidden = 2;
  auto m = init_policy(spec, 1);
  zero_params(m.params);
  m.params.at("enc.conv0.w")[0] = 1.0;  // A = relu(x)
  const double c = 0.5;
  for (std::size_t k = 0; k < 4; ++k) m.params.at("enc.mean.w")[k] = c;

  std::vector<float> x{0.2f, 0.4f, 0.6f, 0.8f};
  // mean = c * sum(A); KL = mean^2 / 2; dKL/dA_ij = mean * c; alpha = mean * c.
  double mean = c * (0.2 + 0.4 + 0.6 + 0.8);
  double alpha = mean * c;
  PolicyRunner runner(m);
  auto h = runner.grad_cam(x);
  REQUIRE(h.raw.size() == 4u);
  REQUIRE(h.values.size() == 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    double expect = std::max(0.0, alpha * static_cast<double>(x[k]));
    CHECK(h.raw[k] == doctest::Approx(expect).epsilon(1e-6));
    CHECK(h.values[k] == doctest::Approx(expect).epsilon(1e-6));
  }

  // A negative alpha is cut by the ReLU.
  for (std::size_t k = 0; k < 4; ++k) m.params.at("enc.mean.w")[k] = -c;
  m.params.at("enc.mean.w")[0] = 3.0;  // mean = 3*0.2 - 0.5*1.8 = -0.3 < 0, every alpha_k has sign of mean*w
  PolicyRunner r2(m);
  auto h2 = r2.grad_cam(x);
  double mean2 = 3.0 * 0.2 - c * (0.4 + 0.6 + 0.8);
  // Single map: alpha is the average of mean2 * w_ij.
  double alpha2 = mean2 * (3.0 - 3 * c) / 4.0;
  for (std::size_t k = 0; k < 4; ++k)
    CHECK(h2.raw[k] == doctest::Approx(std::max(0.0, alpha2 * static_cast<double>(x[k]))).epsilon(1e-6));
}

TEST_CASE("grad-cam is zero when the heads are zero and never negative") {
  auto m = init_policy({}, 8);
  for (auto name : {"enc.mean.w", "enc.mean.b", "enc.logvar.w", "enc.logvar.b"}) m.params.at(name).fill(0.0);
  PolicyRunner zr(m);
  Rng rng(8);
  auto frame = random_frame(48 * 64, rng);
  auto h = zr.grad_cam(frame);
  for (double v : h.values) CHECK(v == 0.0);

  auto live = init_policy({}, 9);
  PolicyRunner lr(live);
  for (int i = 0; i < 5; ++i) {
    auto f = random_frame(48 * 64, rng);
    auto hm = lr.grad_cam(f);
    CHECK(hm.height == 48u);
    CHECK(hm.width == 64u);
    CHECK(hm.raw_height == 6u);
    CHECK(hm.raw_width == 8u);
    CHECK(*std::min_element(hm.values.begin(), hm.values.end()) >= 0.0);
  }
}

TEST_CASE("grad-cam depends only on the encoder") {
  auto m = init_policy({}, 10);
  Rng rng(10);
  auto frame = random_frame(48 * 64, rng);
  PolicyRunner a(m);
  auto ha = a.grad_cam(frame);
  for (auto name : {"dec.fc1.w", "dec.fc2.w", "dec.fc2.b"})
    for (auto& v : m.params.at(name).values()) v += 0.37;
  PolicyRunner b(m);
  auto hb = b.grad_cam(frame);
  CHECK(ha.values == hb.values);
}

TEST_CASE("bilinear upsampling keeps values inside the source range") {
  Rng rng(11);
  for (int i = 0; i < 50; ++i) {
    std::size_t h = 1 + rng() % 6, w = 1 + rng() % 8;
    std::vector<double> src(h * w);
    for (auto& v : src) v = uniform(rng, -2, 5);
    auto up = model::upsample_bilinear(src, h, w, 48, 64);
    double lo = *std::min_element(src.begin(), src.end()), hi = *std::max_element(src.begin(), src.end());
    for (double v : up) {
      CHECK(v >= lo - 1e-12);
      CHECK(v <= hi + 1e-12);
    }
  }
  auto same = model::upsample_bilinear({1, 2, 3, 4}, 2, 2, 2, 2);
  CHECK(same == std::vector<double>{1, 2, 3, 4});
  auto flat = model::upsample_bilinear({3.5}, 1, 1, 4, 4);
  for (double v : flat) CHECK(v == 3.5);
  // Half-pixel centers: 1x2 -> 1x4 gives 1, 1.25, 1.75, 2.
  auto row = model::upsample_bilinear({1, 2}, 1, 2, 1, 4);
  CHECK(row[0] == doctest::Approx(1.0));
  CHECK(row[1] == doctest::Approx(1.25));
  CHECK(row[2] == doctest::Approx(1.75));
  CHECK(row[3] == doctest::Approx(2.0));
}

TEST_CASE("policy_step computes the heatmap only for out-of-distribution frames") {
  auto m = init_policy({}, 12);
  PolicyRunner runner(m);
  Rng rng(12);
  auto frame = random_frame(48 * 64, rng);
  double score = runner.run(frame).score;

  auto none = policy_step(runner, frame, nullptr, 0);
  CHECK_FALSE(none.band_available);
  CHECK_FALSE(none.heatmap);
  CHECK(none.score == score);

  conformal::PredictionBand band;
  band.T = 1;
  band.mu = {score, score + 10};
  band.w = 0.0;
  auto in = policy_step(runner, frame, &band, 0);  // score == bound is in distribution
  CHECK(in.band_available);
  CHECK_FALSE(in.ood);
  CHECK_FALSE(in.heatmap);

  band.mu = {score - 1, score - 1};
  auto out = policy_step(runner, frame, &band, 3);
  CHECK(out.ood);
  REQUIRE(out.heatmap);
  for (double v : out.heatmap->values) CHECK(v >= 0.0);
}

TEST_CASE("weights round-trip through a file") {
  auto m = init_policy({}, 13);
  auto path = temp_path("w.fwt");
  save_policy(m, path);
  auto back = load_policy(path);
  CHECK(back.params == m.params);
  CHECK(back.spec == m.spec);
  CHECK(back.seed == 13u);

  model::ModelFile f = model::load_model_file(path);
  f.kind = "ae";
  model::save_model_file(f, path);
  CHECK_THROWS_AS(load_policy(path), Error);
  std::filesystem::remove(path);
}

TEST_CASE("input normalization matches a direct computation") {
  Rng rng(31);
  const std::size_t fs = 6;
  std::vector<float> a(4 * fs), b(3 * fs);
  for (auto& v : a) v = static_cast<float>(uniform(rng, 0, 1));
  for (auto& v : b) v = static_cast<float>(uniform(rng, 0, 1));
  auto norm = model::fit_input_norm({a, b}, fs);
  std::vector<float> all(a);
  all.insert(all.end(), b.begin(), b.end());
  double ss = 0.0;
  for (std::size_t k = 0; k < fs; ++k) {
    double m = 0.0;
    for (std::size_t i = 0; i < 7; ++i) m += all[i * fs + k];
    m /= 7.0;
    CHECK(norm.mean[k] == doctest::Approx(m).epsilon(1e-6));
    for (std::size_t i = 0; i < 7; ++i) ss += (all[i * fs + k] - m) * (all[i * fs + k] - m);
  }
  CHECK(norm.scale == doctest::Approx(std::sqrt(ss / 42.0)).epsilon(1e-6));

  std::vector<double> out(all.size());
  norm.apply(all, 7, out.data());
  double mean0 = 0.0;
  for (std::size_t i = 0; i < 7; ++i) mean0 += out[i * fs];
  CHECK(std::abs(mean0) < 1e-5);

  // Constant inputs have zero spread; the scale stays bounded away from zero.
  std::vector<float> flat(5 * fs, 0.5f);
  CHECK(model::fit_input_norm({flat}, fs).scale > 0.0);
  CHECK_THROWS_AS(model::fit_input_norm({std::span<const float>(a).first(5)}, fs), Error);
  CHECK_THROWS_AS(model::fit_input_norm({}, fs), Error);
  CHECK(model::InputNorm{}.identity());
}

TEST_CASE("a fitted normalization survives the weights file and changes the scores") {
  auto m = init_policy({}, 14);
  Rng rng(2);
  const std::size_t fs = m.spec.encoder.frame_size();
  std::vector<float> frames(3 * fs);
  for (auto& v : frames) v = static_cast<float>(uniform(rng, 0.2, 0.6));
  auto fitted = m;
  fitted.norm = model::fit_input_norm({frames}, fs);
  auto path = temp_path("norm.fwt");
  save_policy(fitted, path);
  auto back = load_policy(path);
  CHECK(back.norm == fitted.norm);
  CHECK(back.params == fitted.params);
  auto f0 = std::span<const float>(frames).first(fs);
  CHECK(PolicyRunner(back).run(f0).score == PolicyRunner(fitted).run(f0).score);
  CHECK(PolicyRunner(m).run(f0).score != PolicyRunner(fitted).run(f0).score);
  std::filesystem::remove(path);
}

TEST_CASE("training lowers the loss and is reproducible") {
  sim::CollectConfig cc;
  cc.n_traj = 20;
  cc.episode_steps = 120;
  cc.seed = 21;
  auto data = sim::collect_dataset(cc);
  REQUIRE(data.train.pair_count() >= 900u);

  model::TrainOptions opts;
  opts.epochs = 2;
  opts.seed = 4;
  auto r = train_policy(data.train, {}, opts, 1);
  REQUIRE(r.loss_curve.size() == 2u);
  CHECK(r.loss_curve[1] < r.loss_curve[0] * 1.1);

  // Same noise for before/after comparison.
  std::vector<float> frames;
  std::vector<ActionCmd> acts;
  for (std::size_t t = 0; t < data.train.trajectories[0].length(); ++t) {
    auto f = data.train.frame(0, t);
    frames.insert(frames.end(), f.begin(), f.end());
    acts.push_back(data.train.trajectories[0].actions[t]);
  }
  auto init = init_policy({}, opts.seed);
  init.norm = r.model.norm;
  Rng a(1), b(1);
  CHECK(vib_loss(r.model, frames, acts, 1e-3, a) < vib_loss(init, frames, acts, 1e-3, b));

  auto again = train_policy(data.train, {}, opts, 1);
  CHECK(again.model.params == r.model.params);
  CHECK(again.model.norm == r.model.norm);
  auto threaded = train_policy(data.train, {}, opts, 3);
  CHECK(threaded.model.params == r.model.params);

  opts.epochs = 0;
  auto untrained = train_policy(data.train, {}, opts, 1);
  CHECK(untrained.loss_curve.empty());
  CHECK(untrained.model.params == init.params);
}

TEST_CASE("a very large beta pulls the posterior toward the prior") {
  sim::CollectConfig cc;
  cc.n_traj = 12;
  cc.episode_steps = 100;
  cc.seed = 22;
  auto data = sim::collect_dataset(cc);
  PolicySpec spec;
  spec.beta = 1e3;
  model::TrainOptions opts;
  opts.epochs = 2;
  auto r = train_policy(data.train, spec, opts, 1);
  auto init = init_policy(spec, opts.seed);
  PolicyRunner before(init), after(r.model);
  double kb = 0, ka = 0;
  for (std::size_t t = 0; t < data.calib.trajectories[0].length(); ++t) {
    auto f = data.calib.frame(0, t);
    kb += before.run(f).score;
    ka += after.run(f).score;
  }
  CHECK(ka < kb);
}
