#include <doctest.h>

#include <carma_renewal/path_simulator.hpp>

#include <cstdio>

#include "test_oracles.hpp"

using namespace carma_renewal;

namespace {

CarmaModel make(int p, int q, std::vector<double> theta, double s2 = 1.0) {
  return CarmaModel::validate(CarmaParams::from_theta(p, q, theta, s2));
}

}  // namespace

TEST_CASE("stationary OU path variance") {
  auto model = make(1, 0, {1.0});
  auto noise = NoiseSpec::brownian(1.0);
  auto rng = make_rng(101, 0);
  auto path = simulate_path(model, noise, 1e-2, 2000.0,
                            InitPolicy::stationary_gaussian(), rng);
  std::vector<double> ys(path.values.size());
  for (std::size_t j = 0; j < ys.size(); ++j) ys[j] = path.values[j][0];
  CHECK(test_oracles::mean(ys) == doctest::Approx(0.0).epsilon(1.0).scale(0.1));
  CHECK(test_oracles::variance(ys) == doctest::Approx(0.5).epsilon(0.06));
}

TEST_CASE("burn-in path is near stationary from the first kept value") {
  auto model = make(1, 0, {1.0});
  auto noise = NoiseSpec::gamma(0.2, 0.3);
  double gamma0 = model.bSb() * noise.sigma_L2();
  std::vector<double> first(4000);
  for (std::size_t r = 0; r < first.size(); ++r) {
    auto rng = make_rng(202, r);
    auto path = simulate_path(model, noise, 1e-2, 1.0,
                              InitPolicy::default_for(model, noise), rng);
    first[r] = path.values[0][0];
  }
  CHECK(test_oracles::variance(first) == doctest::Approx(gamma0).epsilon(0.08));
  CHECK(std::abs(test_oracles::mean(first)) <
        5.0 * test_oracles::se_mean(first));
}

TEST_CASE("near-noiseless path follows the matrix exponential") {
  auto model = make(2, 0, {3.0, 2.0});
  auto noise = NoiseSpec::brownian(1e-20);
  auto rng = make_rng(303, 0);
  double h = 1e-4;
  auto path = simulate_path(model, noise, h, 2.0,
                            InitPolicy::stationary_gaussian(), rng);
  Eigen::VectorXd x0 = path.values[0];
  for (double t : {0.5, 1.0, 2.0}) {
    auto j = static_cast<std::size_t>(std::llround(t / h));
    Eigen::VectorXd want = model.matrix_exp(t) * x0;
    // Euler error is O(h) in the step count
    CHECK((path.values[j] - want).cwiseAbs().maxCoeff() < 10.0 * h);
  }
}

TEST_CASE("Euler OU step matches the AR(1) discretization to first order") {
  // One explicit Euler step: x' = (1 - theta h) x + dL versus the exact
  // conditional mean e^{-theta h} x; difference is O(h^2).
  auto model = make(1, 0, {2.0});
  auto noise = NoiseSpec::brownian(1e-20);
  double h = 1e-3;
  auto rng = make_rng(404, 0);
  auto path = simulate_path(model, noise, h, 10 * h,
                            InitPolicy::stationary_gaussian(), rng);
  double x = path.values[0][0];
  double euler = path.values[1][0];
  CHECK(std::abs(euler - (1.0 - 2.0 * h) * x) < 1e-12 + 1e-8 * std::abs(x));
  CHECK(std::abs(euler - std::exp(-2.0 * h) * x) < 3.0 * h * h * std::abs(x) + 1e-12);
}

TEST_CASE("interpolation at sample times") {
  auto model = make(1, 0, {1.0});
  GridPath path;
  path.h = 1.0;
  path.t_end = 3.0;
  for (double v : {0.0, 2.0, 4.0, 6.0}) {
    Eigen::VectorXd x(1);
    x[0] = v;
    path.values.push_back(x);
  }
  ArrivalTimes arr;
  arr.mode = SamplingMode::count(3);
  arr.tau = {0.5, 1.25, 3.0};
  auto series = sample_at_times(path, arr, model);
  CHECK(series.values[0] == doctest::Approx(1.0));
  CHECK(series.values[1] == doctest::Approx(2.5));
  CHECK(series.values[2] == doctest::Approx(6.0));

  ArrivalTimes beyond;
  beyond.mode = SamplingMode::count(2);
  beyond.tau = {1.0, 5.0};
  CHECK_THROWS_WITH_AS(sample_at_times(path, beyond, model),
                       doctest::Contains("arrival 2"), std::invalid_argument);
}

TEST_CASE("simulate_series is deterministic in the seed") {
  auto model = make(1, 0, {1.0});
  auto noise = NoiseSpec::brownian(1.0);
  auto sampling = SamplingSpec::exponential(1.0);
  auto s1 = simulate_series(model, noise, sampling, SamplingMode::count(50),
                            1e-2, 999);
  auto s2 = simulate_series(model, noise, sampling, SamplingMode::count(50),
                            1e-2, 999);
  auto s3 = simulate_series(model, noise, sampling, SamplingMode::count(50),
                            1e-2, 1000);
  CHECK(s1.times == s2.times);
  CHECK(s1.values == s2.values);
  CHECK(s1.values != s3.values);
  CHECK(s1.n() == 50);
  CHECK(s1.provenance.seed == 999);
  CHECK(s1.provenance.theta == std::vector<double>{1.0});
}

TEST_CASE("horizon mode stays within T") {
  auto model = make(1, 0, {1.0});
  auto noise = NoiseSpec::brownian(1.0);
  auto sampling = SamplingSpec::exponential(2.0);
  auto s = simulate_series(model, noise, sampling, SamplingMode::horizon(100.0),
                           1e-2, 5);
  CHECK(!s.times.empty());
  CHECK(s.times.back() <= 100.0);
  CHECK(s.mode.kind == SamplingMode::Kind::horizon);
}

TEST_CASE("save and load round trip") {
  auto model = make(2, 1, {3.0, 2.0, 0.5});
  auto noise = NoiseSpec::brownian(1.0);
  auto sampling = SamplingSpec::exponential(1.0);
  auto s = simulate_series(model, noise, sampling, SamplingMode::count(40),
                           1e-2, 77);
  std::string path = "series_roundtrip.csv";
  save_series(s, path);
  auto back = load_series(path);
  REQUIRE(back.n() == s.n());
  for (std::size_t k = 0; k < s.n(); ++k) {
    CHECK(back.times[k] == doctest::Approx(s.times[k]).epsilon(1e-15));
    CHECK(back.values[k] == doctest::Approx(s.values[k]).epsilon(1e-15));
  }
  CHECK(back.provenance.seed == 77);
  CHECK(back.provenance.theta == s.provenance.theta);
  std::remove(path.c_str());
  std::remove((path + ".meta.json").c_str());
  CHECK_THROWS_AS(load_series("missing_series.csv"), std::runtime_error);
}

TEST_CASE("argument validation") {
  auto model = make(1, 0, {1.0});
  auto noise = NoiseSpec::brownian(1.0);
  auto rng = make_rng(1, 0);
  CHECK_THROWS_AS(simulate_path(model, noise, 0.0, 1.0,
                                InitPolicy::stationary_gaussian(), rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(simulate_path(model, noise, 0.1, 0.01,
                                InitPolicy::stationary_gaussian(), rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(InitPolicy::burn_in(-1.0), std::invalid_argument);
}
