#include <cmath>

#include "doctest.h"
#include "lrisk/analysis.hpp"
#include "lrisk/errors.hpp"
#include "lrisk/rng.hpp"
#include "oracles.hpp"

using namespace lrisk;

namespace {

std::function<double(double)> cdf_of(const Spectrum& s) {
  switch (s.kind()) {
    case SpectrumKind::Uniform: return [](double t) { return t; };
    case SpectrumKind::Superquantile: return [q = s.param()](double t) { return oracle::cdf_superquantile(t, q); };
    case SpectrumKind::Extremile: return [r = s.param()](double t) { return oracle::cdf_extremile(t, r); };
    case SpectrumKind::Esrm: return [r = s.param()](double t) { return oracle::cdf_esrm(t, r); };
    case SpectrumKind::TruncatedRiskSeeking: return [q = s.param()](double t) { return oracle::cdf_truncated(t, q); };
    case SpectrumKind::ExtremileRiskSeeking:
      return [r = s.param()](double t) { return oracle::cdf_extremile_seeking(t, r); };
  }
  return {};
}

}  // namespace

TEST_CASE("binomial coefficients") {
  CHECK(binomial(6, 2) == 15);
  CHECK(binomial(14, 7) == 3432);
  CHECK(binomial(5, 0) == 1);
  CHECK(binomial(5, 6) == 0);
}

TEST_CASE("exhaustive bias examples") {
  const std::vector<double> losses{1, 2, 3, 4, 5, 6};
  SUBCASE("m = n has no bias") {
    const BiasReport r = exhaustive_bias(Spectrum::extremile(2.0), losses, 6);
    CHECK(r.bias == 0.0);
    CHECK(r.bound == 0.0);
    CHECK(r.batches == 1);
  }
  SUBCASE("uniform spectrum is unbiased") {
    for (std::size_t m = 1; m <= 6; ++m) CHECK(std::abs(exhaustive_bias(Spectrum::uniform(), losses, m).bias) <= 1e-12);
  }
  SUBCASE("n = 6, m = 2, superquantile 0.5") {
    const Spectrum sp = Spectrum::superquantile(0.5);
    const BiasReport r = exhaustive_bias(sp, losses, 2);
    CHECK(r.batches == 15);
    CHECK(r.range == 5.0);
    CHECK(r.bound == doctest::Approx(2.0 * 1.0 * 5.0 * 4.0 / 6.0));
    const double full = oracle::l_statistic(oracle::sigma_closed_form(cdf_of(sp), 6), losses);
    const double mean = oracle::minibatch_mean(oracle::sigma_closed_form(cdf_of(sp), 2), losses, 2);
    CHECK(r.full_value == doctest::Approx(full).epsilon(1e-14));
    CHECK(r.minibatch_mean == doctest::Approx(mean).epsilon(1e-14));
    CHECK(r.bias == doctest::Approx(std::abs(mean - full)).epsilon(1e-12));
    CHECK(r.bias <= r.bound);
  }
  SUBCASE("m = 1 gives the gap between the mean and the L-risk") {
    const Spectrum sp = Spectrum::esrm(2.0);
    const BiasReport r = exhaustive_bias(sp, losses, 1);
    const double full = oracle::l_statistic(oracle::sigma_closed_form(cdf_of(sp), 6), losses);
    CHECK(r.bias == doctest::Approx(std::abs(3.5 - full)).epsilon(1e-12));
  }
  SUBCASE("enumeration cap") {
    const std::vector<double> many(30, 1.0);
    CHECK_THROWS_AS(exhaustive_bias(Spectrum::uniform(), many, 15), EnumerationLimit);
  }
}

TEST_CASE("bias never exceeds its bound") {
  CounterRng rng(17);
  const std::vector<Spectrum> spectra{Spectrum::superquantile(0.3), Spectrum::superquantile(0.8),
                                      Spectrum::extremile(2.0), Spectrum::extremile(4.5), Spectrum::esrm(1.0),
                                      Spectrum::esrm(5.0)};
  for (const Spectrum& sp : spectra) {
    CAPTURE(sp.label());
    for (std::size_t n = 2; n <= 10; ++n)
      for (int v = 0; v < 50; ++v) {
        std::vector<double> losses(n);
        for (double& l : losses) l = rng.exponential(1.0);
        for (std::size_t m = 1; m <= n; ++m) {
          const BiasReport r = exhaustive_bias(sp, losses, m);
          CHECK(r.bias <= r.bound + 1e-9);
        }
      }
  }
}

TEST_CASE("exhaustive bias agrees with the subset-enumeration oracle") {
  CounterRng rng(23);
  for (const Spectrum& sp : {Spectrum::extremile(3.0), Spectrum::superquantile(0.6), Spectrum::esrm(2.0)}) {
    for (std::size_t n : {5, 8}) {
      std::vector<double> losses(n);
      for (double& l : losses) l = rng.normal();
      for (std::size_t m = 1; m <= n; ++m) {
        const double mean = oracle::minibatch_mean(oracle::sigma_closed_form(cdf_of(sp), m), losses, m);
        CHECK(exhaustive_bias(sp, losses, m).minibatch_mean == doctest::Approx(mean).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("sampled bias approaches the exhaustive value") {
  const std::vector<double> losses{0.3, 2.0, 1.1, 4.5, 0.9, 3.3, 2.2, 0.1};
  const Spectrum sp = Spectrum::extremile(2.0);
  const BiasReport exact = exhaustive_bias(sp, losses, 3);
  const BiasReport sampled = sampled_bias(sp, losses, 3, 200000, 5);
  CHECK(sampled.minibatch_mean == doctest::Approx(exact.minibatch_mean).epsilon(5e-3));
  CHECK(sampled.bound == exact.bound);
}

TEST_CASE("population L-risk") {
  CHECK(population_l_risk(Spectrum::uniform(), Population::exponential(1.0)) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(population_l_risk(Spectrum::superquantile(0.5), Population::exponential(1.0)) ==
        doctest::Approx(1.0 + std::log(2.0)).epsilon(1e-9));
  CHECK(population_l_risk(Spectrum::superquantile(0.5), Population::exponential(2.0)) ==
        doctest::Approx((1.0 + std::log(2.0)) / 2.0).epsilon(1e-9));
  CHECK(population_l_risk(Spectrum::uniform(), Population::lognormal(0.2, 0.5)) ==
        doctest::Approx(std::exp(0.2 + 0.125)).epsilon(1e-8));
  // Extremile r = 2 is E[max(Z1, Z2)] = 1.5 for Exp(1).
  CHECK(population_l_risk(Spectrum::extremile(2.0), Population::exponential(1.0)) == doctest::Approx(1.5).epsilon(1e-9));
  CHECK_THROWS_AS(Population::exponential(-1.0).validate(), InvalidParameter);
}

TEST_CASE("consistency MSE decays like 1/n") {
  const std::vector<std::size_t> sizes{100, 200, 400, 800, 1600};
  const ConsistencyReport r =
      consistency_mse(Spectrum::superquantile(0.5), Population::exponential(1.0), sizes, 400, 3);
  CHECK(r.truth == doctest::Approx(1.0 + std::log(2.0)));
  for (std::size_t k = 1; k < r.mse.size(); ++k) CHECK(r.mse[k] < r.mse[k - 1]);
  CHECK(r.slope >= -1.25);
  CHECK(r.slope <= -0.75);
  const ConsistencyReport again =
      consistency_mse(Spectrum::superquantile(0.5), Population::exponential(1.0), sizes, 400, 3, 4);
  CHECK(again.mse == r.mse);
}

TEST_CASE("line fit") {
  const std::vector<double> x{1, 2, 3, 4}, y{3, 5, 7, 9};
  const auto [slope, intercept] = fit_line(x, y);
  CHECK(slope == doctest::Approx(2.0));
  CHECK(intercept == doctest::Approx(1.0));
}

TEST_CASE("permutation disagreement") {
  const SortPermutation id = argsort_losses(std::vector<double>{1, 2, 3, 4});
  const SortPermutation rev = argsort_losses(std::vector<double>{4, 3, 2, 1});
  CHECK(permutation_disagreement(id, id) == 0);
  CHECK(permutation_disagreement(id, rev) == 4);
  const SortPermutation swap = argsort_losses(std::vector<double>{2, 1, 3, 4});
  CHECK(permutation_disagreement(id, swap) == 2);
  CHECK_THROWS_AS(permutation_disagreement(id, argsort_losses(std::vector<double>{1, 2})), DimensionError);
}

TEST_CASE("sorting sensitivity against the final order") {
  const std::vector<std::vector<std::size_t>> orders{{0, 1, 2}, {1, 0, 2}, {0, 1, 2}};
  const auto cells = sorting_sensitivity(orders);
  REQUIRE(cells.size() == 9);
  int total = 0;
  for (const SensitivityCell& c : cells) total += c.disagreement;
  CHECK(total == 2);
  for (const SensitivityCell& c : cells)
    if (c.epoch != 1) CHECK(c.disagreement == 0);
}

TEST_CASE("quantile differences") {
  const std::vector<double> a{1, 5, 3, 2, 4}, b{0.5, 6, 2, 2, 1};
  const std::vector<double> grid{0.2, 0.5, 0.8, 1.0};
  const auto same = quantile_difference(a, a, grid, false);
  for (double x : same) CHECK(x == 0.0);

  const auto ab = quantile_difference(a, b, grid, false);
  const auto ba = quantile_difference(b, a, grid, false);
  for (std::size_t k = 0; k < grid.size(); ++k) CHECK(ab[k] == -ba[k]);
  CHECK(ab.back() == 5.0 - 6.0);
  CHECK(ab[1] == 3.0 - 2.0);  // ceil(2.5) = 3rd smallest

  const auto normalized = quantile_difference(a, b, grid, true);
  for (std::size_t k = 0; k < grid.size(); ++k) CHECK(normalized[k] == doctest::Approx(ab[k] / 3.0));
  CHECK_THROWS_AS(quantile_difference(a, b, std::vector<double>{}, false), InvalidParameter);
  CHECK(quantile_rank(10, 0.3) == 3);
  CHECK(quantile_rank(10, 0.7) == 7);
  CHECK(quantile_rank(10, 0.05) == 1);
}

TEST_CASE("smoothing audits") {
  const std::vector<double> nus{0.01, 0.1, 1.0};
  SUBCASE("uniform spectrum has no gap") {
    const SmoothingAudit a = smoothing_bound_audit(Spectrum::uniform(), 12, 50, nus, Regularizer::Quadratic, 1);
    CHECK(a.passed());
    CHECK(std::abs(a.worst_gap) <= 1e-12);
  }
  SUBCASE("extremile, both regularizers") {
    for (Regularizer reg : {Regularizer::Quadratic, Regularizer::Entropic}) {
      const SmoothingAudit a = smoothing_bound_audit(Spectrum::extremile(2.0), 20, 200, nus, reg, 2);
      CHECK(a.passed());
      CHECK(a.instances == 600);
    }
  }
  SUBCASE("randomized PAV check") {
    const PavCheckReport r = pav_check(2000, 4);
    CHECK(r.passed());
    CHECK(r.instances == 2000);
  }
}
