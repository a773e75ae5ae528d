#include <cmath>
#include <limits>

#include "doctest.h"
#include "lrisk/errors.hpp"
#include "lrisk/rng.hpp"
#include "lrisk/smoothing.hpp"
#include "oracles.hpp"

using namespace lrisk;

namespace {

// Majorization with partial sums of the descending sorts, restated here.
bool majorized(std::vector<double> lambda, std::vector<double> sigma, double tol) {
  std::sort(lambda.rbegin(), lambda.rend());
  std::sort(sigma.rbegin(), sigma.rend());
  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    if (lambda[i] < -tol) return false;
    a += lambda[i];
    b += sigma[i];
    if (a > b + tol) return false;
  }
  return std::abs(a - b) <= tol;
}

double omega_direct(Regularizer r, const std::vector<double>& lambda) {
  const double n = static_cast<double>(lambda.size());
  double total = 0.0;
  for (double x : lambda) {
    if (r == Regularizer::Quadratic) total += 0.5 * (x - 1.0 / n) * (x - 1.0 / n);
    else if (x > 0.0) total += x * std::log(n * x);
  }
  return total;
}

// max over the n = 3 permutahedron of lambda^T l - nu Omega(lambda), by a
// 1000 x 1000 grid over (lambda_1, lambda_2) followed by zooming.
double hexagon_max(const std::vector<double>& sigma, const std::vector<double>& l, double nu, Regularizer r) {
  auto value = [&](double a, double b) {
    const std::vector<double> lam{a, b, 1.0 - a - b};
    if (!majorized(lam, sigma, 1e-15)) return -std::numeric_limits<double>::infinity();
    return a * l[0] + b * l[1] + lam[2] * l[2] - nu * omega_direct(r, lam);
  };
  double lo_a = 0.0, lo_b = 0.0, width = 1.0, best = -INFINITY, ba = 0.0, bb = 0.0;
  for (int level = 0; level < 8; ++level) {
    const int steps = level == 0 ? 1000 : 100;
    for (int i = 0; i <= steps; ++i)
      for (int j = 0; j <= steps; ++j) {
        const double a = lo_a + width * i / steps, b = lo_b + width * j / steps;
        const double v = value(a, b);
        if (v > best) {
          best = v;
          ba = a;
          bb = b;
        }
      }
    width = 4.0 * width / steps;
    lo_a = ba - width / 2;
    lo_b = bb - width / 2;
  }
  // The optimum can sit on an edge the grid only approaches; also try vertices.
  std::vector<std::size_t> perm{0, 1, 2};
  do best = std::max(best, value(sigma[perm[0]], sigma[perm[1]]));
  while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

std::vector<double> random_losses(CounterRng& rng, std::size_t n, double scale) {
  std::vector<double> l(n);
  for (double& x : l) x = scale * rng.normal();
  return l;
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_THROWS_AS((SmoothingConfig{0.0, Regularizer::Quadratic}.validate()), InvalidParameter);
  CHECK_THROWS_AS((SmoothingConfig{-1.0, Regularizer::Entropic}.validate()), InvalidParameter);
  CHECK_NOTHROW((SmoothingConfig{1e-8, Regularizer::Entropic}.validate()));
}

TEST_CASE("pav_quadratic examples") {
  CHECK(pav_quadratic(std::vector<double>{4.0}, SigmaWeights({1.0}))[0] == doctest::Approx(4.0));
  const auto sep = pav_quadratic(std::vector<double>{0.0, 10.0}, SigmaWeights({0.3, 0.7}));
  CHECK(sep[0] == doctest::Approx(0.2));
  CHECK(sep[1] == doctest::Approx(9.8));
  const auto merged = pav_quadratic(std::vector<double>{0.0, 0.0}, SigmaWeights({0.3, 0.7}));
  CHECK(merged[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(merged[1] == merged[0]);
  CHECK_THROWS_AS(pav_quadratic(std::vector<double>{1.0, 0.0}, SigmaWeights({0.3, 0.7})), PreconditionError);
}

TEST_CASE("pav_quadratic solves the isotonic problem (2-D grid)") {
  // min over z1 <= z2 of sum z_i sigma_i + w*(l_i - z_i), w*(y) = y/n + y^2/2.
  CounterRng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> l = random_losses(rng, 2, 1.0);
    std::sort(l.begin(), l.end());
    const double s1 = 0.5 * rng.uniform();
    const SigmaWeights sigma({s1, 1.0 - s1});
    auto f = [&](double z1, double z2) {
      auto conj = [](double y) { return y / 2.0 + y * y / 2.0; };
      return z1 * s1 + z2 * (1 - s1) + conj(l[0] - z1) + conj(l[1] - z2);
    };
    const auto z = pav_quadratic(l, sigma);
    CHECK(z[0] <= z[1] + 1e-15);
    const double fz = f(z[0], z[1]);
    double best = INFINITY;
    for (int i = -300; i <= 300; ++i)
      for (int j = -300; j <= 300; ++j) {
        const double z1 = z[0] + i * 1e-3, z2 = z[1] + j * 1e-3;
        if (z1 <= z2) best = std::min(best, f(z1, z2));
      }
    CHECK(fz <= best + 1e-12);
  }
}

TEST_CASE("pav_entropic examples") {
  CHECK(pav_entropic(std::vector<double>{3.0}, std::vector<double>{0.0})[0] == doctest::Approx(3.0));
  const std::vector<double> logs{std::log(0.25), std::log(0.75)};
  const auto merged = pav_entropic(std::vector<double>{0.0, 0.0}, logs);
  CHECK(merged[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(merged[1] == doctest::Approx(0.0).epsilon(1e-15));
  const auto sep = pav_entropic(std::vector<double>{-10.0, 10.0}, logs);
  CHECK(sep[0] == doctest::Approx(-10.0 - std::log(0.25) - std::log(2.0)));
  CHECK(sep[1] == doctest::Approx(10.0 - std::log(0.75) - std::log(2.0)));
}

TEST_CASE("entropic smoothing rejects zero weights") {
  const SigmaWeights sq = discretize(Spectrum::superquantile(0.5), 6);
  CHECK_THROWS_AS(smoothed_oracle({0.1, Regularizer::Entropic}, sq, std::vector<double>(6, 1.0)), UnsupportedSpectrum);
}

TEST_CASE("smoothed oracle examples") {
  SUBCASE("uniform weights") {
    const std::vector<double> l{3.0, -1.0, 4.0, 1.5};
    for (auto reg : {Regularizer::Quadratic, Regularizer::Entropic})
      for (double nu : {1e-3, 1.0, 100.0}) {
        const SmoothedEval e = smoothed_oracle({nu, reg}, SigmaWeights::uniform(4), l);
        CHECK(e.value == doctest::Approx(7.5 / 4).epsilon(1e-12));
        for (double x : e.lambda) CHECK(x == doctest::Approx(0.25).epsilon(1e-12));
      }
  }
  SUBCASE("vertex at small nu") {
    const SmoothedEval e = smoothed_oracle({0.01, Regularizer::Quadratic}, SigmaWeights({0.3, 0.7}), std::vector<double>{0, 1});
    CHECK(e.lambda[0] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(e.lambda[1] == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(e.value == doctest::Approx(0.7 - 0.0004).epsilon(1e-12));
    CHECK(e.value == doctest::Approx(oracle::segment_smoothed_max(0.3, 0.7, 0, 1, 0.01, false)).epsilon(1e-9));
  }
  SUBCASE("constant losses") {
    const SmoothedEval e = smoothed_oracle({0.5, Regularizer::Quadratic}, SigmaWeights({0.3, 0.7}), std::vector<double>{2, 2});
    CHECK(e.lambda[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(e.value == doctest::Approx(2.0).epsilon(1e-12));
  }
}

TEST_CASE("n = 2 agrees with the segment oracle") {
  CounterRng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const double s1 = 0.5 * rng.uniform_open();
    const SigmaWeights sigma({s1, 1.0 - s1});
    const std::vector<double> l = random_losses(rng, 2, 2.0);
    const double nu = std::exp(std::log(1e-3) + rng.uniform() * std::log(1e6));
    for (auto reg : {Regularizer::Quadratic, Regularizer::Entropic}) {
      const SmoothedEval e = smoothed_oracle({nu, reg}, sigma, l);
      const double truth = oracle::segment_smoothed_max(s1, 1 - s1, l[0], l[1], nu, reg == Regularizer::Entropic);
      CHECK(std::abs(e.value - truth) <= 1e-7 * (1.0 + std::abs(truth)));
    }
  }
}

TEST_CASE("n = 3 agrees with the hexagon grid oracle") {
  CounterRng rng(22);
  for (int trial = 0; trial < 6; ++trial) {
    const SigmaWeights sigma = discretize(trial % 2 ? Spectrum::extremile(2.5) : Spectrum::esrm(3.0), 3);
    const std::vector<double> s(sigma.values().begin(), sigma.values().end());
    const std::vector<double> l = random_losses(rng, 3, 1.0);
    const double nu = trial < 3 ? 0.3 : 3.0;
    for (auto reg : {Regularizer::Quadratic, Regularizer::Entropic}) {
      const SmoothedEval e = smoothed_oracle({nu, reg}, sigma, l);
      CHECK(std::abs(e.value - hexagon_max(s, l, nu, reg)) <= 1e-5);
    }
  }
}

TEST_CASE("random instances: feasibility, certificate, sandwich, divergence bound") {
  CounterRng rng(23);
  const Spectrum kinds[] = {Spectrum::superquantile(0.5), Spectrum::extremile(2.0), Spectrum::esrm(1.0),
                            Spectrum::extremile(4.0), Spectrum::superquantile(0.9), Spectrum::uniform()};
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 2 + rng.below(49);
    const Spectrum& sp = kinds[trial % 6];
    const SigmaWeights sigma = discretize(sp, n);
    const std::vector<double> l = random_losses(rng, n, std::exp(3.0 * rng.normal()));
    const double nu = std::exp(std::log(1e-4) + rng.uniform() * std::log(1e7));
    for (auto reg : {Regularizer::Quadratic, Regularizer::Entropic}) {
      if (reg == Regularizer::Entropic && !sigma.strictly_positive()) continue;
      const SmoothedEval e = smoothed_oracle({nu, reg}, sigma, l);
      const std::vector<double> s(sigma.values().begin(), sigma.values().end());
      CHECK(majorized(e.lambda, s, 1e-10));
      CHECK(in_permutahedron(e.lambda, s));
      CHECK(e.dual_gap <= 1e-8 * (1.0 + std::abs(e.value)));
      CHECK(e.value == doctest::Approx([&] {
              double v = 0.0;
              for (std::size_t i = 0; i < n; ++i) v += e.lambda[i] * l[i];
              return v - nu * omega_direct(reg, e.lambda);
            }()).epsilon(1e-9));
      const double h = oracle::l_statistic(s, l);
      const double gap = h - e.value;
      const double scale = 1e-10 * (1.0 + std::abs(h));
      CHECK(gap >= -scale);
      CHECK(gap <= nu * omega_direct(reg, s) + scale);
      CHECK(smoothed_gap_bound_check({nu, reg}, sigma, l));
      const Divergences div = divergence_to_uniform(sp);
      const double bound = reg == Regularizer::Quadratic ? nu * div.chi2 / (2.0 * n) : nu * div.kl;
      CHECK(gap <= bound + 1e-9 + scale);
    }
  }
}

TEST_CASE("gap vanishes as nu shrinks and halves with nu") {
  const SigmaWeights sigma = discretize(Spectrum::extremile(2.0), 10);
  CounterRng rng(24);
  const std::vector<double> l = random_losses(rng, 10, 1.0);
  const double om = omega(Regularizer::Quadratic, sigma.values());
  const SmoothingGap tiny = smoothing_gap({1e-8, Regularizer::Quadratic}, sigma, l);
  CHECK(tiny.gap <= 1e-8 * om + 1e-15);
  CHECK(smoothed_gap_bound_check({0.1, Regularizer::Quadratic}, sigma, l));
  const SmoothingGap a = smoothing_gap({0.5, Regularizer::Quadratic}, sigma, l);
  const SmoothingGap b = smoothing_gap({0.25, Regularizer::Quadratic}, sigma, l);
  CHECK(b.bound == doctest::Approx(a.bound / 2).epsilon(1e-14));
  CHECK(smoothing_gap({1.0, Regularizer::Quadratic}, SigmaWeights::uniform(10), l).gap == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("lambda is the gradient of the smoothed value") {
  CounterRng rng(25);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(12);
    const SigmaWeights sigma = discretize(Spectrum::esrm(2.0), n);
    const std::vector<double> l = random_losses(rng, n, 1.0);
    const double nu = 0.05 + rng.uniform();
    for (auto reg : {Regularizer::Quadratic, Regularizer::Entropic}) {
      const SmoothingConfig cfg{nu, reg};
      const auto fd = oracle::fd_gradient(
          [&](std::span<const double> x) { return smoothed_oracle(cfg, sigma, x).value; }, l, 1e-6);
      const SmoothedEval e = smoothed_oracle(cfg, sigma, l);
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(e.lambda[i] - fd[i]) <= 1e-5);
    }
  }
}

TEST_CASE("PAV blocks strictly increasing and exhaustive") {
  CounterRng rng(26);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.below(40);
    std::vector<double> l = random_losses(rng, n, 1.0);
    for (std::size_t i = 1; i < n; i += 3) l[i] = l[i - 1];
    std::sort(l.begin(), l.end());
    const SigmaWeights sigma = discretize(Spectrum::extremile(3.0), n);
    for (auto reg : {Regularizer::Quadratic, Regularizer::Entropic}) {
      const PavBlocks b = pav_blocks(l, 0.2, sigma.values(), reg);
      REQUIRE(b.count() >= 1);
      CHECK(b.start.front() == 0);
      for (std::size_t k = 0; k < b.count(); ++k) {
        CHECK(b.end(k, n) > b.start[k]);
        CHECK(b.anchor[k] == b.end(k, n) - 1);
        if (k > 0) {
          CHECK(b.start[k] == b.end(k - 1, n));
          const double prev = l[b.anchor[k - 1]] / 0.2 + b.offset[k - 1];
          const double cur = l[b.anchor[k]] / 0.2 + b.offset[k];
          CHECK(cur > prev);
        }
      }
    }
  }
}
