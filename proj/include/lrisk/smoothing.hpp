#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lrisk/spectra.hpp"

namespace lrisk {

enum class Regularizer {
  Quadratic,  // 1/2 ||lambda - u_n||^2
  Entropic,   // sum_i lambda_i ln(n lambda_i), KL to the uniform vector
};

struct SmoothingConfig {
  double nu = 1.0;
  Regularizer regularizer = Regularizer::Quadratic;

  void validate() const;
};

// Output of the pool-adjacent-violators pass over sorted losses l / nu.
//
// Each block keeps its last (largest) loss as an anchor, and the block value
// is anchor / nu + offset. Keeping the offset separate from the anchor means
// that l_i / nu - z_i can be formed from loss differences, with no
// cancellation between two numbers of size l / nu.
struct PavBlocks {
  std::vector<std::size_t> start;  // first sorted position of each block
  std::vector<std::size_t> anchor;  // sorted position of the block anchor
  std::vector<double> offset;

  std::size_t count() const noexcept { return start.size(); }
  std::size_t end(std::size_t b, std::size_t n) const noexcept { return b + 1 < start.size() ? start[b + 1] : n; }
};

// Runs PAV on l_sorted / nu with weights sigma_sorted (both ascending).
PavBlocks pav_blocks(std::span<const double> l_sorted, double nu, std::span<const double> sigma_sorted,
                     Regularizer regularizer);

// Solves min over z_1 <= ... <= z_n of sum_i z_i sigma_i + w*(l_i - z_i) with
// w*(y) = y/n + y^2/2. Returns z.
std::vector<double> pav_quadratic(std::span<const double> l_sorted, const SigmaWeights& sigma);

// Entropic counterpart with per-block value LSE(l_B) - LSE(log sigma_B) - ln n.
std::vector<double> pav_entropic(std::span<const double> l_sorted, std::span<const double> log_sigma);

struct SmoothedEval {
  double value = 0.0;
  std::vector<double> lambda;
  double primal_value = 0.0;
  double dual_gap = 0.0;
};

// max over lambda in P(sigma) of lambda^T l - nu Omega(lambda), its maximizer
// and a primal certificate. Throws CertificateError if the certificate fails.
SmoothedEval smoothed_oracle(const SmoothingConfig& config, const SigmaWeights& sigma,
                             std::span<const double> losses);

double omega(Regularizer regularizer, std::span<const double> lambda);

// Majorization test for membership in the permutahedron of sigma.
bool in_permutahedron(std::span<const double> lambda, std::span<const double> sigma, double tolerance = 1e-10);

struct SmoothingGap {
  double gap = 0.0;    // h(l) - h_{nu Omega}(l)
  double bound = 0.0;  // nu Omega(sigma)
  bool ok = false;
};

SmoothingGap smoothing_gap(const SmoothingConfig& config, const SigmaWeights& sigma, std::span<const double> losses);

// 0 - 1e-10 <= h(l) - h_{nu Omega}(l) <= nu Omega(sigma) + 1e-10.
bool smoothed_gap_bound_check(const SmoothingConfig& config, const SigmaWeights& sigma,
                              std::span<const double> losses);

}  // namespace lrisk
