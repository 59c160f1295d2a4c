#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "stob/datasets.hpp"
#include "stob/learning.hpp"
#include "stob/observer.hpp"
#include "stob/ops.hpp"
#include "stob/random.hpp"

using stob::Adam;
using stob::AdamConfig;
using stob::LatentTriplet;
using stob::LossWeights;
using stob::Parameter;
using stob::Rng;
using stob::Tensor;
using i64 = std::int64_t;

namespace {

Tensor<double> random_tensor(Rng& rng, stob::Shape shape, double lo = -1.0,
                             double hi = 1.0) {
  Tensor<double> t = Tensor<double>::zeros(std::move(shape));
  stob::fill_uniform(t, rng, lo, hi);
  return t;
}

std::vector<LatentTriplet<double>> random_latents(Rng& rng, i64 q) {
  std::vector<LatentTriplet<double>> out;
  for (i64 i = 0; i < q; ++i) {
    LatentTriplet<double> triple;
    triple.x = random_tensor(rng, {2, 3, 4, 4});
    triple.z = random_tensor(rng, {2, 5, 4, 4});
    triple.xi = random_tensor(rng, {2, 5, 4, 4});
    out.push_back(std::move(triple));
  }
  return out;
}

double squared_distance(const Tensor<double>& a, const Tensor<double>& b) {
  auto av = a.data();
  auto bv = b.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    sum += d * d;
  }
  return sum;
}

}  // namespace

// ---- loss composition ------------------------------------------------------------

TEST_CASE("loss terms match plain-loop oracles under arbitrary weights") {
  Rng rng(3);
  const i64 n = 2, l = 3;
  Tensor<double> pred = random_tensor(rng, {n, l, 2, 4, 5});
  Tensor<double> truth = random_tensor(rng, {n, l, 2, 4, 5});
  auto pred_lat = random_latents(rng, 3);
  auto target_lat = random_latents(rng, 3);

  LossWeights weights;
  weights.lambda0 = 0.37;
  weights.lambda1 = 0.21;
  weights.lambda2 = 0.55;
  weights.lambda3 = 0.83;

  stob::LossResult<double> result = stob::compute_losses<double>(
      nullptr, pred, truth, pred_lat, target_lat, weights);

  // Frame term: (sum of squares + lambda0 * sum of magnitudes) / (N * L).
  double se = 0.0, ae = 0.0;
  auto pv = pred.data();
  auto tv = truth.data();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double d = pv[i] - tv[i];
    se += d * d;
    ae += std::abs(d);
  }
  const double l_y = (se + weights.lambda0 * ae) / static_cast<double>(n * l);
  CHECK(result.values.l_y == doctest::Approx(l_y).epsilon(1e-12));

  // Latent terms: summed squared distances over the horizon / (N * q).
  double l_x = 0.0, l_z = 0.0, l_xi = 0.0;
  for (std::size_t i = 0; i < pred_lat.size(); ++i) {
    l_x += squared_distance(pred_lat[i].x, target_lat[i].x);
    l_z += squared_distance(pred_lat[i].z, target_lat[i].z);
    l_xi += squared_distance(pred_lat[i].xi, target_lat[i].xi);
  }
  const double norm = static_cast<double>(n) * 3.0;
  CHECK(result.values.l_x == doctest::Approx(l_x / norm).epsilon(1e-12));
  CHECK(result.values.l_z == doctest::Approx(l_z / norm).epsilon(1e-12));
  CHECK(result.values.l_xi == doctest::Approx(l_xi / norm).epsilon(1e-12));

  const double total = l_y + weights.lambda1 * (l_x / norm) +
                       weights.lambda2 * (l_z / norm) +
                       weights.lambda3 * (l_xi / norm);
  CHECK(result.values.total == doctest::Approx(total).epsilon(1e-12));
  CHECK(result.total.item() == result.values.total);

  SUBCASE("the recorded parts recompose into the recorded total") {
    const double recomposed = result.values.l_y +
                              weights.lambda1 * result.values.l_x +
                              weights.lambda2 * result.values.l_z +
                              weights.lambda3 * result.values.l_xi;
    CHECK(std::abs(result.values.total - recomposed) <=
          1e-12 * std::abs(result.values.total));
  }
}

TEST_CASE("zero latent weights reduce the loss to the frame term exactly") {
  Rng rng(5);
  Tensor<double> pred = random_tensor(rng, {2, 4, 1, 6, 6});
  Tensor<double> truth = random_tensor(rng, {2, 4, 1, 6, 6});

  LossWeights weights;  // lambda0 = 1, latent weights all zero
  stob::LossResult<double> result =
      stob::compute_losses<double>(nullptr, pred, truth, {}, {}, weights);
  CHECK(result.values.l_x == 0.0);
  CHECK(result.values.l_z == 0.0);
  CHECK(result.values.l_xi == 0.0);
  CHECK(result.values.total == result.values.l_y);  // exact, not approximate

  SUBCASE("and skip the magnitude term when its weight is zero too") {
    LossWeights pure;
    pure.lambda0 = 0.0;
    stob::LossResult<double> sq =
        stob::compute_losses<double>(nullptr, pred, truth, {}, {}, pure);
    double se = 0.0;
    auto pv = pred.data();
    auto tv = truth.data();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const double d = pv[i] - tv[i];
      se += d * d;
    }
    CHECK(sq.values.l_y == doctest::Approx(se / 8.0).epsilon(1e-12));
  }
}

TEST_CASE("loss contract violations are rejected") {
  Rng rng(6);
  Tensor<double> pred = random_tensor(rng, {1, 2, 1, 4, 4});
  Tensor<double> truth = random_tensor(rng, {1, 2, 1, 4, 4});

  LossWeights negative;
  negative.lambda1 = -0.5;
  CHECK_THROWS_AS(stob::compute_losses<double>(nullptr, pred, truth, {}, {},
                                               negative),
                  stob::ConfigError);

  LossWeights latent;
  latent.lambda1 = 1.0;
  CHECK_THROWS_AS(
      stob::compute_losses<double>(nullptr, pred, truth, {}, {}, latent),
      stob::ContractError);

  auto pred_lat = random_latents(rng, 2);
  auto target_lat = random_latents(rng, 3);
  CHECK_THROWS_AS(stob::compute_losses<double>(nullptr, pred, truth, pred_lat,
                                               target_lat, latent),
                  stob::ContractError);

  Tensor<double> flat = random_tensor(rng, {4, 4});
  CHECK_THROWS_AS(
      stob::compute_losses<double>(nullptr, flat, flat, {}, {}, LossWeights{}),
      stob::ShapeError);
}

// ---- optimizer -------------------------------------------------------------------

TEST_CASE("first optimizer step applies the bias-corrected update exactly") {
  Parameter<double> p;
  p.name = "w";
  p.value = Tensor<double>::from_data({3}, {1.0, 2.0, 3.0});
  const std::vector<double> grads{0.1, -0.2, 0.3};
  Tensor<double> g = Tensor<double>::from_data({3}, grads);
  p.value.accumulate_grad(g.data());

  AdamConfig cfg;
  cfg.lr = 0.01;
  Adam<double> opt({&p}, cfg);
  REQUIRE(opt.step());
  CHECK(opt.step_count() == 1);

  // At t = 1 the bias corrections cancel: the update is
  // lr * g / (|g| + eps) elementwise.
  const std::vector<double> initial{1.0, 2.0, 3.0};
  auto values = p.value.data();
  for (std::size_t i = 0; i < 3; ++i) {
    const double expect =
        initial[i] - cfg.lr * grads[i] / (std::abs(grads[i]) + cfg.eps);
    CHECK(values[i] == doctest::Approx(expect).epsilon(1e-14));
  }

  SUBCASE("a constant gradient moves the value linearly") {
    // With identical gradients every step, both moment estimates stay at
    // their bias-corrected fixed point, so each step subtracts the same
    // lr * g / (|g| + eps).
    for (int k = 0; k < 4; ++k) {
      p.value.zero_grad();
      p.value.accumulate_grad(g.data());
      REQUIRE(opt.step());
    }
    CHECK(opt.step_count() == 5);
    auto after = p.value.data();
    for (std::size_t i = 0; i < 3; ++i) {
      const double expect =
          initial[i] - 5.0 * cfg.lr * grads[i] / (std::abs(grads[i]) + cfg.eps);
      CHECK(after[i] == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  SUBCASE("parameters without an allocated gradient are left untouched") {
    Parameter<double> q;
    q.name = "frozen";
    q.value = Tensor<double>::from_data({2}, {5.0, 6.0});
    Adam<double> opt2({&q}, cfg);
    REQUIRE(opt2.step());
    CHECK(q.value.at({0}) == 5.0);
    CHECK(q.value.at({1}) == 6.0);
  }
}

TEST_CASE("two-step momentum follows the closed-form recursion") {
  // Hand-evaluated two-step trajectory with distinct gradients, checking
  // the beta recursions rather than just the fixed point.
  Parameter<double> p;
  p.name = "w";
  p.value = Tensor<double>::from_data({1}, {0.5});

  AdamConfig cfg;
  cfg.lr = 0.1;
  Adam<double> opt({&p}, cfg);

  const double g1 = 0.4, g2 = -0.3;
  Tensor<double> grad1 = Tensor<double>::from_data({1}, {g1});
  p.value.accumulate_grad(grad1.data());
  REQUIRE(opt.step());

  double m = (1.0 - cfg.beta1) * g1;
  double v = (1.0 - cfg.beta2) * g1 * g1;
  double theta = 0.5 - cfg.lr * (m / (1.0 - cfg.beta1)) /
                           (std::sqrt(v / (1.0 - cfg.beta2)) + cfg.eps);
  CHECK(p.value.at({0}) == doctest::Approx(theta).epsilon(1e-14));

  p.value.zero_grad();
  Tensor<double> grad2 = Tensor<double>::from_data({1}, {g2});
  p.value.accumulate_grad(grad2.data());
  REQUIRE(opt.step());

  m = cfg.beta1 * m + (1.0 - cfg.beta1) * g2;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * g2 * g2;
  const double bc1 = 1.0 - cfg.beta1 * cfg.beta1;
  const double bc2 = 1.0 - cfg.beta2 * cfg.beta2;
  theta -= cfg.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps);
  CHECK(p.value.at({0}) == doctest::Approx(theta).epsilon(1e-14));
  CHECK(opt.first_moments()[0][0] == doctest::Approx(m).epsilon(1e-14));
  CHECK(opt.second_moments()[0][0] == doctest::Approx(v).epsilon(1e-14));
}

TEST_CASE("non-finite gradients skip the step and ten in a row abort") {
  Parameter<double> p;
  p.name = "w";
  p.value = Tensor<double>::from_data({2}, {1.0, -1.0});
  Adam<double> opt({&p}, AdamConfig{});

  Tensor<double> bad = Tensor<double>::from_data(
      {2}, {std::numeric_limits<double>::quiet_NaN(), 0.5});
  p.value.accumulate_grad(bad.data());

  for (int k = 1; k <= 9; ++k) {
    CHECK_FALSE(opt.step());
    CHECK(opt.consecutive_skips() == k);
  }
  CHECK(opt.step_count() == 0);
  CHECK(p.value.at({0}) == 1.0);  // untouched throughout
  CHECK_THROWS_AS(opt.step(), stob::NumericError);

  SUBCASE("a finite step in between resets the skip budget") {
    Parameter<double> q;
    q.name = "w";
    q.value = Tensor<double>::from_data({1}, {1.0});
    Adam<double> opt2({&q}, AdamConfig{});

    Tensor<double> inf_grad = Tensor<double>::from_data(
        {1}, {std::numeric_limits<double>::infinity()});
    q.value.accumulate_grad(inf_grad.data());
    CHECK_FALSE(opt2.step());
    CHECK(opt2.consecutive_skips() == 1);

    q.value.zero_grad();
    Tensor<double> fine = Tensor<double>::from_data({1}, {0.25});
    q.value.accumulate_grad(fine.data());
    CHECK(opt2.step());
    CHECK(opt2.consecutive_skips() == 0);
  }

  SUBCASE("register_skip shares the same budget") {
    Parameter<double> q;
    q.name = "w";
    q.value = Tensor<double>::from_data({1}, {1.0});
    Adam<double> opt2({&q}, AdamConfig{});
    for (int k = 1; k <= 9; ++k) opt2.register_skip();
    CHECK_THROWS_AS(opt2.register_skip(), stob::NumericError);
  }
}

TEST_CASE("optimizer construction and restore validate their inputs") {
  CHECK_THROWS_AS(Adam<double>({}, AdamConfig{}), stob::ContractError);

  Parameter<double> undefined;
  undefined.name = "ghost";
  CHECK_THROWS_AS(Adam<double>({&undefined}, AdamConfig{}), stob::ContractError);

  AdamConfig bad;
  bad.lr = 0.0;
  Parameter<double> p;
  p.name = "w";
  p.value = Tensor<double>::from_data({1}, {1.0});
  CHECK_THROWS_AS(Adam<double>({&p}, bad), stob::ConfigError);
  bad = AdamConfig{};
  bad.beta2 = 1.0;
  CHECK_THROWS_AS(Adam<double>({&p}, bad), stob::ConfigError);

  Adam<double> opt({&p}, AdamConfig{});
  CHECK_THROWS_AS(opt.restore(-1, {{0.0}}, {{0.0}}), stob::ContractError);
  CHECK_THROWS_AS(opt.restore(1, {}, {}), stob::ContractError);
  CHECK_THROWS_AS(opt.restore(1, {{0.0, 0.0}}, {{0.0, 0.0}}),
                  stob::ContractError);
  CHECK_NOTHROW(opt.restore(3, {{0.5}}, {{0.25}}));
  CHECK(opt.step_count() == 3);
  CHECK(opt.first_moments()[0][0] == 0.5);
  CHECK(opt.second_moments()[0][0] == 0.25);
}

// ---- epoch driver -----------------------------------------------------------------

namespace {

stob::ObserverConfig tiny_config() {
  stob::ObserverConfig cfg;
  cfg.channels = 1;
  cfg.height = 16;
  cfg.width = 16;
  cfg.t_in = 4;
  cfg.t_out = 4;
  cfg.delta = 2;
  cfg.n_s = 2;
  cfg.c_s = 4;
  cfg.n_h = 1;
  cfg.c_h = 8;
  cfg.n_t = 1;
  cfg.c_t = 8;
  cfg.b_variant = stob::BVariant::kConv1x1;
  return cfg;
}

std::pair<Tensor<double>, Tensor<double>> tiny_data(i64 n) {
  stob::MotionSpec spec;
  spec.objects = 1;
  spec.sprite = 8;
  spec.seed = 12;
  stob::SequenceData<double> data =
      stob::gen_bouncing_blobs<double>(spec, n, 8, 16, 16);
  return stob::split_time(data.frames, 4, 4);
}

}  // namespace

TEST_CASE("train_epoch batches, averages and repeats deterministically") {
  auto [inputs, targets] = tiny_data(5);

  auto run_two_epochs = [&](std::vector<double>* final_params) {
    stob::ObserverModel<double> model(tiny_config(), 19);
    AdamConfig cfg;
    cfg.lr = 0.005;
    Adam<double> opt(model.parameters(), cfg);
    Rng rng(77);
    LossWeights weights;
    weights.lambda1 = 0.5;  // exercise the latent-target path too

    stob::EpochStats first =
        stob::train_epoch(model, inputs, targets, weights, opt, 2, rng);
    stob::EpochStats second =
        stob::train_epoch(model, inputs, targets, weights, opt, 2, rng);
    if (final_params != nullptr) {
      for (const Parameter<double>* p : model.parameters()) {
        auto v = p->value.data();
        final_params->insert(final_params->end(), v.begin(), v.end());
      }
    }
    return std::pair{first, second};
  };

  auto [first, second] = run_two_epochs(nullptr);
  CHECK(first.batches == 3);  // 5 samples in batches of 2
  CHECK(first.skipped_steps == 0);
  CHECK(first.mean.total > 0.0);
  CHECK(std::isfinite(first.mean.total));
  CHECK(first.mean.l_x > 0.0);
  CHECK(first.mean.l_z == 0.0);  // weight zero: never computed
  CHECK(first.mean.total ==
        doctest::Approx(first.mean.l_y + 0.5 * first.mean.l_x).epsilon(1e-12));
  CHECK(first.seconds >= 0.0);
  CHECK(second.mean.total < first.mean.total);  // it is actually learning

  SUBCASE("identical seeds give identical trajectories") {
    std::vector<double> params_a, params_b;
    auto [fa, sa] = run_two_epochs(&params_a);
    auto [fb, sb] = run_two_epochs(&params_b);
    CHECK(fa.mean.total == fb.mean.total);
    CHECK(sa.mean.total == sb.mean.total);
    CHECK(params_a == params_b);
  }

  SUBCASE("input validation") {
    stob::ObserverModel<double> model(tiny_config(), 19);
    Adam<double> opt(model.parameters(), AdamConfig{});
    Rng rng(1);
    Tensor<double> flat = Tensor<double>::zeros({4, 4});
    CHECK_THROWS_AS(stob::train_epoch(model, flat, targets, LossWeights{}, opt,
                                      2, rng),
                    stob::ShapeError);
    Tensor<double> mismatched = Tensor<double>::zeros({3, 4, 1, 16, 16});
    CHECK_THROWS_AS(stob::train_epoch(model, inputs, mismatched, LossWeights{},
                                      opt, 2, rng),
                    stob::ShapeError);
    CHECK_THROWS_AS(stob::train_epoch(model, inputs, targets, LossWeights{},
                                      opt, 0, rng),
                    stob::ConfigError);
  }
}

// ---- metrics log ------------------------------------------------------------------

TEST_CASE("metrics log writes the header and appends full-precision rows") {
  const std::string path = "stob_learning_test_metrics.csv";
  {
    stob::MetricsCsv log(path);
    stob::LossBreakdown row;
    row.l_y = 0.5;
    row.l_x = 0.125;
    row.l_z = 0.0;
    row.l_xi = 2.0;
    row.total = 2.625;
    log.append(1, row, 3.5);
    row.total = 0.1;
    log.append(2, row, 4.0);
  }

  std::ifstream in(path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  in.close();
  std::remove(path.c_str());

  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "epoch,L_y,L_x,L_z,L_xi,total,seconds");
  CHECK(lines[1] == "1,0.5,0.125,0,2,2.625,3.5");
  CHECK(lines[2] == "2,0.5,0.125,0,2,0.10000000000000001,4");

  CHECK_THROWS_AS(stob::MetricsCsv("no_such_dir/metrics.csv"), stob::IoError);
}
