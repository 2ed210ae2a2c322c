// SPDX-License-Identifier: Apache-2.0
//
// Base distributions: reparameterized sampling, exact log-densities against
// closed forms and quadrature, and the Monte Carlo entropy estimator.

#include <cmath>
#include <vector>

#include "catch_amalgamated.hpp"
#include "softrl/distributions.hpp"
#include "softrl/rng.hpp"

using namespace softrl;

namespace {

GaussianParams leaf_gaussian(Tape& tape, const Tensor& mean,
                             const Tensor& log_std, Tensor* gm, Tensor* gs) {
  return make_gaussian_params(tape.leaf(mean, gm), tape.leaf(log_std, gs));
}

}  // namespace

TEST_CASE("gaussian rsample: identity scale passes noise through",
          "[distributions]") {
  Tape tape;
  GaussianParams p = make_gaussian_params(
      tape.constant(Tensor::row({0.0, 0.0})),
      tape.constant(Tensor::row({0.0, 0.0})));
  DiffNode s = gaussian_rsample(p, tape.constant(Tensor::row({1.5, -0.5})));
  CHECK(s.value()[0] == 1.5);
  CHECK(s.value()[1] == -0.5);
}

TEST_CASE("gaussian rsample: zero noise returns the mean", "[distributions]") {
  Tape tape;
  GaussianParams p = make_gaussian_params(
      tape.constant(Tensor::row({2.0, 2.0})),
      tape.constant(Tensor::row({std::log(0.5), std::log(0.5)})));
  DiffNode s = gaussian_rsample(p, tape.constant(Tensor::row({0.0, 0.0})));
  CHECK(s.value()[0] == Catch::Approx(2.0).margin(1e-15));
  CHECK(s.value()[1] == Catch::Approx(2.0).margin(1e-15));
}

TEST_CASE("gaussian rsample gradients: identity in mean, diag(sample-mean) in "
          "log-std",
          "[distributions]") {
  Tensor mean = Tensor::row({0.3, -0.6});
  Tensor log_std = Tensor::row({-0.2, 0.4});
  Tensor gm(1, 2), gs(1, 2);
  Tensor eps = Tensor::row({0.9, -1.3});

  for (int dim = 0; dim < 2; ++dim) {
    gm.fill(0.0);
    gs.fill(0.0);
    Tape tape;
    GaussianParams p = leaf_gaussian(tape, mean, log_std, &gm, &gs);
    DiffNode s = gaussian_rsample(p, tape.constant(eps));
    tape.backward(sum(slice_cols(s, dim, 1)));
    const double sample_d = s.value()[dim];
    for (int j = 0; j < 2; ++j) {
      CHECK(gm[j] == (j == dim ? 1.0 : 0.0));
      const double expect = (j == dim) ? sample_d - mean[j] : 0.0;
      CHECK(gs[j] == Catch::Approx(expect).margin(1e-12));
    }
  }
}

TEST_CASE("gaussian log-prob matches closed forms", "[distributions]") {
  Tape tape;
  GaussianParams std2 = make_gaussian_params(
      tape.constant(Tensor::row({0.0, 0.0})),
      tape.constant(Tensor::row({0.0, 0.0})));
  DiffNode lp = gaussian_log_prob(std2, tape.constant(Tensor::row({0.0, 0.0})));
  CHECK(lp.item() == Catch::Approx(-1.8378770664093453).epsilon(1e-14));

  GaussianParams wide = make_gaussian_params(
      tape.constant(Tensor::row({0.0})),
      tape.constant(Tensor::row({std::log(2.0)})));
  DiffNode lp1 = gaussian_log_prob(wide, tape.constant(Tensor::row({2.0})));
  CHECK(lp1.item() == Catch::Approx(-2.112085713764618).epsilon(1e-14));
}

TEST_CASE("gaussian density integrates to one on a wide grid",
          "[distributions]") {
  const double mu = 0.4, ls = -0.3;
  const int n = 20000;
  const double lo = mu - 12.0, hi = mu + 12.0;
  const double h = (hi - lo) / n;
  double mass = 0.0;
  Tape tape;
  GaussianParams p = make_gaussian_params(tape.constant(Tensor::row({mu})),
                                          tape.constant(Tensor::row({ls})));
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * h;
    DiffNode lp = gaussian_log_prob(p, tape.constant(Tensor::row({x})));
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    mass += w * std::exp(lp.item()) * h;
  }
  CHECK(mass == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("exponential rsample: inverse-CDF identities", "[distributions]") {
  Tape tape;
  const double u1 = 1.0 - std::exp(-1.0);
  ExponentialParams rate1 = make_exponential_params(
      tape.constant(Tensor::row({0.0})), tape.constant(Tensor::row({0.0})));
  DiffNode s1 = exponential_rsample(rate1, tape.constant(Tensor::row({u1})));
  CHECK(s1.value()[0] == Catch::Approx(1.0).epsilon(1e-14));

  ExponentialParams rate2 = make_exponential_params(
      tape.constant(Tensor::row({std::log(2.0)})),
      tape.constant(Tensor::row({0.0})));
  DiffNode s2 = exponential_rsample(rate2, tape.constant(Tensor::row({u1})));
  CHECK(s2.value()[0] == Catch::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("exponential rsample rejects boundary noise", "[distributions]") {
  Tape tape;
  ExponentialParams p = make_exponential_params(
      tape.constant(Tensor::row({0.0})), tape.constant(Tensor::row({0.0})));
  CHECK_THROWS_AS(exponential_rsample(p, tape.constant(Tensor::row({0.0}))),
                  std::invalid_argument);
  CHECK_THROWS_AS(exponential_rsample(p, tape.constant(Tensor::row({1.0}))),
                  std::invalid_argument);
}

TEST_CASE("exponential sample mean approaches location + 1/rate",
          "[distributions]") {
  RngStream rng(5);
  const double rate = 2.5, loc = -0.7;
  const int chunks = 100, rows = 10000;
  double acc = 0.0;
  for (int k = 0; k < chunks; ++k) {
    Tape tape;
    ExponentialParams p = make_exponential_params(
        tape.constant(Tensor::full(rows, 1, std::log(rate))),
        tape.constant(Tensor::full(rows, 1, loc)));
    DiffNode s = exponential_rsample(p, tape.constant(rng.uniform_open01(rows, 1)));
    for (double v : s.value().data) acc += v;
  }
  const double expect = loc + 1.0 / rate;
  CHECK(acc / (chunks * rows) == Catch::Approx(expect).epsilon(0.01));
}

TEST_CASE("exponential log-prob matches closed forms and support rule",
          "[distributions]") {
  Tape tape;
  ExponentialParams rate1 = make_exponential_params(
      tape.constant(Tensor::row({0.0})), tape.constant(Tensor::row({0.0})));
  CHECK(exponential_log_prob(rate1, tape.constant(Tensor::row({0.0}))).item() ==
        0.0);

  ExponentialParams rate2 = make_exponential_params(
      tape.constant(Tensor::row({std::log(2.0)})),
      tape.constant(Tensor::row({0.0})));
  CHECK(exponential_log_prob(rate2, tape.constant(Tensor::row({1.0}))).item() ==
        Catch::Approx(-1.3068528194400546).epsilon(1e-14));

  DiffNode below = exponential_log_prob(rate2, tape.constant(Tensor::row({-0.1})));
  CHECK(std::isinf(below.item()));
  CHECK(below.item() < 0.0);
}

TEST_CASE("exponential density integrates to one over its support grid",
          "[distributions]") {
  const double rate = 1.7, loc = 0.3;
  const int n = 40000;
  const double lo = loc, hi = loc + 40.0 / rate;
  const double h = (hi - lo) / n;
  Tape tape;
  ExponentialParams p = make_exponential_params(
      tape.constant(Tensor::row({std::log(rate)})),
      tape.constant(Tensor::row({loc})));
  double mass = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * h;
    DiffNode lp = exponential_log_prob(p, tape.constant(Tensor::row({x})));
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    mass += w * std::exp(lp.item()) * h;
    if (tape.size() > 100000) {
      tape.clear();
      p = make_exponential_params(tape.constant(Tensor::row({std::log(rate)})),
                                  tape.constant(Tensor::row({loc})));
    }
  }
  CHECK(mass == Catch::Approx(1.0).margin(1e-3));
}

TEST_CASE("reparameterization gradients match finite differences for both "
          "families",
          "[distributions]") {
  RngStream rng(31);
  Tensor mean = Tensor::row({0.2, -0.4});
  Tensor log_std = Tensor::row({-0.5, 0.3});
  Tensor eps = rng.normal(1, 2);

  auto g_loss = [&]() {
    Tape tape;
    GaussianParams p = make_gaussian_params(tape.constant(mean),
                                            tape.constant(log_std));
    DiffNode s = gaussian_rsample(p, tape.constant(eps));
    return sum(square(s) + s * 0.7).item();
  };
  Tensor gm(1, 2), gs(1, 2);
  {
    Tape tape;
    GaussianParams p = leaf_gaussian(tape, mean, log_std, &gm, &gs);
    DiffNode s = gaussian_rsample(p, tape.constant(eps));
    tape.backward(sum(square(s) + s * 0.7));
  }
  const double h = 1e-6;
  for (int j = 0; j < 2; ++j) {
    for (Tensor* t : {&mean, &log_std}) {
      const double keep = (*t)[j];
      (*t)[j] = keep + h;
      const double fp = g_loss();
      (*t)[j] = keep - h;
      const double fm = g_loss();
      (*t)[j] = keep;
      const double fd = (fp - fm) / (2.0 * h);
      const double ad = (t == &mean) ? gm[j] : gs[j];
      CHECK(ad == Catch::Approx(fd).epsilon(1e-5).margin(1e-8));
    }
  }

  Tensor log_rate = Tensor::row({0.4, -0.2});
  Tensor loc = Tensor::row({-0.3, 0.1});
  Tensor u = rng.uniform_open01(1, 2);
  auto e_loss = [&]() {
    Tape tape;
    ExponentialParams p = make_exponential_params(tape.constant(log_rate),
                                                  tape.constant(loc));
    DiffNode s = exponential_rsample(p, tape.constant(u));
    return sum(square(s) * 0.5 + s).item();
  };
  Tensor gr(1, 2), gl(1, 2);
  {
    Tape tape;
    ExponentialParams p = make_exponential_params(tape.leaf(log_rate, &gr),
                                                  tape.leaf(loc, &gl));
    DiffNode s = exponential_rsample(p, tape.constant(u));
    tape.backward(sum(square(s) * 0.5 + s));
  }
  for (int j = 0; j < 2; ++j) {
    for (Tensor* t : {&log_rate, &loc}) {
      const double keep = (*t)[j];
      (*t)[j] = keep + h;
      const double fp = e_loss();
      (*t)[j] = keep - h;
      const double fm = e_loss();
      (*t)[j] = keep;
      const double fd = (fp - fm) / (2.0 * h);
      const double ad = (t == &log_rate) ? gr[j] : gl[j];
      CHECK(ad == Catch::Approx(fd).epsilon(1e-5).margin(1e-8));
    }
  }
}

TEST_CASE("histogram of rsamples tracks the density for both families",
          "[distributions]") {
  RngStream rng(17);
  const int n = 100000, bins = 40;

  auto check_hist = [&](auto sample_one, auto density, double lo, double hi) {
    const double w = (hi - lo) / bins;
    std::vector<int> counts(bins, 0);
    for (int i = 0; i < n; ++i) {
      const double x = sample_one();
      const int b = static_cast<int>((x - lo) / w);
      if (b >= 0 && b < bins) ++counts[b];
    }
    for (int b = 0; b < bins; ++b) {
      // Exact bin probability by fine midpoint subdivision of the density.
      double prob = 0.0;
      const int sub = 64;
      for (int k = 0; k < sub; ++k)
        prob += density(lo + (b + (k + 0.5) / sub) * w) * (w / sub);
      const double se = std::sqrt(prob * (1.0 - prob) * n) + 1e-9;
      const double excess = std::abs(counts[b] - prob * n) / se;
      INFO("bin " << b << " excess " << excess);
      CHECK(excess < 3.0);
    }
  };

  const double mu = 0.3, sig = std::exp(-0.1);
  {
    Tape tape;
    GaussianParams p = make_gaussian_params(
        tape.constant(Tensor::full(n, 1, mu)),
        tape.constant(Tensor::full(n, 1, std::log(sig))));
    Tensor samples = gaussian_rsample(p, tape.constant(rng.normal(n, 1))).value();
    int idx = 0;
    check_hist([&]() { return samples[idx++]; },
               [&](double x) {
                 const double z = (x - mu) / sig;
                 return std::exp(-0.5 * z * z) /
                        (sig * std::sqrt(2.0 * 3.141592653589793238462643));
               },
               mu - 4.0 * sig, mu + 4.0 * sig);
  }
  const double rate = 1.6, loc = -0.2;
  {
    Tape tape;
    ExponentialParams p = make_exponential_params(
        tape.constant(Tensor::full(n, 1, std::log(rate))),
        tape.constant(Tensor::full(n, 1, loc)));
    Tensor samples =
        exponential_rsample(p, tape.constant(rng.uniform_open01(n, 1))).value();
    int idx = 0;
    check_hist([&]() { return samples[idx++]; },
               [&](double x) {
                 return x < loc ? 0.0 : rate * std::exp(-rate * (x - loc));
               },
               loc, loc + 4.0 / rate);
  }
}

TEST_CASE("entropy_mc basics", "[distributions]") {
  CHECK(entropy_mc({-1.5, -1.5, -1.5}) == Catch::Approx(1.5).epsilon(1e-15));
  CHECK(entropy_mc({-2.75}) == Catch::Approx(2.75).epsilon(1e-15));
  CHECK_THROWS_AS(entropy_mc({}), std::invalid_argument);
}

TEST_CASE("entropy_mc approaches the Gaussian closed form", "[distributions]") {
  RngStream rng(41);
  const int n = 100000;
  Tape tape;
  GaussianParams p = make_gaussian_params(tape.constant(Tensor(n, 1)),
                                          tape.constant(Tensor(n, 1)));
  DiffNode s = gaussian_rsample(p, tape.constant(rng.normal(n, 1)));
  Tensor lp = gaussian_log_prob(p, s).value();
  std::vector<double> lps(lp.data.begin(), lp.data.end());
  CHECK(entropy_mc(lps) == Catch::Approx(1.4189385332046727).margin(0.02));
}
