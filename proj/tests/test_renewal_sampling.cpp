#include <doctest.h>

#include <carma_renewal/renewal_sampling.hpp>

#include "test_oracles.hpp"

using carma_renewal::ArrivalTimes;
using carma_renewal::make_rng;
using carma_renewal::sample_arrivals;
using carma_renewal::SamplingMode;
using carma_renewal::SamplingSpec;

TEST_CASE("Erlang convolution closed form") {
  auto spec = SamplingSpec::exponential(2.0);
  // 3-fold convolution of Exp(2) at t = 1: 2^3 * 1^2 / 2! * e^{-2} = 4 e^{-2}
  CHECK(spec.convolution_density(3, 1.0) ==
        doctest::Approx(4.0 * std::exp(-2.0)).epsilon(1e-12));
  CHECK(spec.convolution_density(1, 0.0) == doctest::Approx(2.0));
  CHECK(spec.convolution_density(2, 0.0) == doctest::Approx(0.0));
}

TEST_CASE("exponential renewal density is flat") {
  auto spec = SamplingSpec::exponential(1.7);
  for (double t : {0.0, 0.3, 2.0, 50.0})
    CHECK(spec.renewal_density(t) == doctest::Approx(1.7));
  CHECK(spec.beta() == doctest::Approx(1.7));
}

TEST_CASE("gamma(2, lambda) renewal density closed form") {
  // For Gamma(2, lambda) spacings: r(t) = lambda (1 - exp(-2 lambda t)) / 2
  double lambda = 2.0;
  auto spec = SamplingSpec::gamma(2.0, lambda);
  for (double t : {0.1, 0.5, 1.0, 3.0, 10.0}) {
    double want = lambda * (1.0 - std::exp(-2.0 * lambda * t)) / 2.0;
    CHECK(spec.renewal_density(t) == doctest::Approx(want).epsilon(1e-8));
  }
  CHECK(spec.beta() == doctest::Approx(1.0));
}

TEST_CASE("tabulated density reproduces Erlang convolutions") {
  // Tabulate Exp(1) and compare grid convolutions with the closed form.
  double dt = 0.005;
  std::size_t n = 6000;  // reaches t = 30
  std::vector<double> f(n);
  for (std::size_t i = 0; i < n; ++i) f[i] = std::exp(-static_cast<double>(i) * dt);
  auto tab = SamplingSpec::tabulated(f, dt);
  auto exact = SamplingSpec::exponential(1.0);
  for (int k : {1, 2, 4}) {
    for (double t : {0.5, 1.0, 3.0}) {
      CHECK(tab.convolution_density(k, t) ==
            doctest::Approx(exact.convolution_density(k, t)).epsilon(5e-3));
    }
  }
  CHECK(tab.renewal_density(2.0) == doctest::Approx(1.0).epsilon(2e-2));
}

TEST_CASE("spacing moments") {
  auto e = SamplingSpec::exponential(2.0).moments();
  CHECK(e.mean == doctest::Approx(0.5));
  CHECK(e.variance == doctest::Approx(0.25));
  CHECK(e.fourth_central == doctest::Approx(9.0 / 16.0));

  auto g = SamplingSpec::gamma(3.0, 2.0).moments();
  CHECK(g.mean == doctest::Approx(1.5));
  CHECK(g.variance == doctest::Approx(0.75));
  CHECK(g.fourth_central == doctest::Approx(3.0 * 3.0 * 5.0 / 16.0));

  // Tabulated exponential approximates the closed-form moments.
  double dt = 0.005;
  std::vector<double> f(8000);
  for (std::size_t i = 0; i < f.size(); ++i)
    f[i] = 2.0 * std::exp(-2.0 * i * dt);
  auto t = SamplingSpec::tabulated(f, dt).moments();
  CHECK(t.mean == doctest::Approx(0.5).epsilon(1e-2));
  CHECK(t.variance == doctest::Approx(0.25).epsilon(3e-2));
}

TEST_CASE("sampled spacings match the law") {
  auto rng = make_rng(7, 0);
  auto spec = SamplingSpec::gamma(2.0, 4.0);
  std::vector<double> xs(100000);
  for (auto& x : xs) x = spec.sample_spacing(rng);
  CHECK(test_oracles::mean(xs) == doctest::Approx(0.5).epsilon(0.02));
  CHECK(test_oracles::variance(xs) == doctest::Approx(0.125).epsilon(0.05));

  // tabulated inverse-CDF sampler
  double dt = 0.01;
  std::vector<double> f(3000);
  for (std::size_t i = 0; i < f.size(); ++i)
    f[i] = std::exp(-static_cast<double>(i) * dt);
  auto tab = SamplingSpec::tabulated(f, dt);
  std::vector<double> ys(100000);
  for (auto& y : ys) y = tab.sample_spacing(rng);
  CHECK(test_oracles::mean(ys) == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("arrival sequences") {
  auto spec = SamplingSpec::exponential(1.0);
  auto rng = make_rng(11, 0);
  auto arr = sample_arrivals(spec, SamplingMode::count(500), rng);
  REQUIRE(arr.tau.size() == 500);
  CHECK(arr.tau.front() > 0.0);
  for (std::size_t k = 1; k < arr.tau.size(); ++k)
    CHECK(arr.tau[k] > arr.tau[k - 1]);

  auto rng2 = make_rng(11, 1);
  auto hor = sample_arrivals(spec, SamplingMode::horizon(200.0), rng2);
  CHECK(!hor.tau.empty());
  CHECK(hor.tau.back() <= 200.0);
  // mean count ~ beta * T
  CHECK(hor.tau.size() > 140);
  CHECK(hor.tau.size() < 270);

  // determinism under a fixed seed
  auto rng3 = make_rng(11, 0);
  auto arr2 = sample_arrivals(spec, SamplingMode::count(500), rng3);
  CHECK(arr.tau == arr2.tau);
}

TEST_CASE("tabulated CSV round trip") {
  std::string path = "density_roundtrip.csv";
  {
    std::ofstream out(path);
    out << "t,f\n";
    double dt = 0.01;
    for (int i = 0; i < 2000; ++i)
      out << i * dt << "," << std::exp(-i * dt) << "\n";
  }
  auto spec = SamplingSpec::tabulated_from_csv(path);
  CHECK(spec.kind() == SamplingSpec::Kind::tabulated);
  CHECK(spec.beta() == doctest::Approx(1.0).epsilon(0.03));
  std::remove(path.c_str());
  CHECK_THROWS_AS(SamplingSpec::tabulated_from_csv("no_such_file.csv"),
                  std::runtime_error);
}

TEST_CASE("validation") {
  CHECK_THROWS_AS(SamplingSpec::exponential(0.0), std::invalid_argument);
  CHECK_THROWS_AS(SamplingSpec::gamma(1.0, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(SamplingSpec::tabulated({1.0, 2.0}, 0.1),
                  std::invalid_argument);
  std::vector<double> neg(16, 1.0);
  neg[3] = -0.5;
  CHECK_THROWS_AS(SamplingSpec::tabulated(neg, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(SamplingMode::count(0), std::invalid_argument);
  CHECK_THROWS_AS(SamplingMode::horizon(-1.0), std::invalid_argument);
  auto spec = SamplingSpec::exponential(1.0);
  CHECK_THROWS_AS(spec.convolution_density(0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(spec.renewal_density(-1.0), std::invalid_argument);
}
