#include "lrisk/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "lrisk/errors.hpp"
#include "lrisk/risk_core.hpp"

namespace lrisk {

void SmoothingConfig::validate() const {
  if (!(nu > 0.0) || !std::isfinite(nu)) throw InvalidParameter("smoothing coefficient nu must be positive");
}

namespace {

double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

void require_sorted(std::span<const double> l) {
  for (std::size_t k = 1; k < l.size(); ++k)
    if (!(l[k - 1] <= l[k])) throw PreconditionError("PAV input must be sorted in non-decreasing order");
}

struct Block {
  std::size_t start;
  std::size_t anchor;
  double count;
  double acc_a;  // quadratic: sum of singleton offsets; entropic: LSE of (l_i - l_anchor) / nu
  double acc_b;  // entropic: LSE of log sigma_i
};

// Shared PAV sweep. `log_sigma` is only read on the entropic path.
PavBlocks run_pav(std::span<const double> l, double nu, std::span<const double> sigma,
                  std::span<const double> log_sigma, Regularizer reg) {
  const std::size_t n = l.size();
  require_sorted(l);
  const double inv_n = 1.0 / static_cast<double>(n);
  const double log_n = std::log(static_cast<double>(n));

  auto offset = [&](const Block& b) {
    return reg == Regularizer::Quadratic ? b.acc_a / b.count : b.acc_a - b.acc_b - log_n;
  };

  std::vector<Block> stack;
  stack.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (reg == Regularizer::Quadratic) stack.push_back({k, k, 1.0, inv_n - sigma[k], 0.0});
    else stack.push_back({k, k, 1.0, 0.0, log_sigma[k]});

    while (stack.size() > 1) {
      Block& top = stack.back();
      Block& prev = stack[stack.size() - 2];
      const double gap = (l[top.anchor] - l[prev.anchor]) / nu;
      if (offset(prev) - offset(top) < gap) break;
      const double shift = (l[prev.anchor] - l[top.anchor]) / nu;
      Block merged{prev.start, top.anchor, prev.count + top.count, 0.0, 0.0};
      if (reg == Regularizer::Quadratic) {
        merged.acc_a = prev.acc_a + prev.count * shift + top.acc_a;
      } else {
        merged.acc_a = log_add(prev.acc_a + shift, top.acc_a);
        merged.acc_b = log_add(prev.acc_b, top.acc_b);
      }
      stack.pop_back();
      stack.back() = merged;
    }
  }

  PavBlocks out;
  for (const Block& b : stack) {
    out.start.push_back(b.start);
    out.anchor.push_back(b.anchor);
    out.offset.push_back(offset(b));
  }
  return out;
}

std::vector<double> block_values(const PavBlocks& blocks, std::span<const double> l) {
  std::vector<double> z(l.size());
  for (std::size_t b = 0; b < blocks.count(); ++b)
    for (std::size_t k = blocks.start[b]; k < blocks.end(b, l.size()); ++k)
      z[k] = l[blocks.anchor[b]] + blocks.offset[b];
  return z;
}

std::vector<double> checked_log(std::span<const double> sigma) {
  std::vector<double> out(sigma.size());
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    if (!(sigma[i] > 0.0))
      throw UnsupportedSpectrum("entropic smoothing needs strictly positive weights (sigma_" + std::to_string(i + 1) +
                                " = 0); use the quadratic regularizer");
    out[i] = std::log(sigma[i]);
  }
  return out;
}

}  // namespace

PavBlocks pav_blocks(std::span<const double> l_sorted, double nu, std::span<const double> sigma_sorted,
                     Regularizer regularizer) {
  if (l_sorted.size() != sigma_sorted.size()) throw DimensionError("losses and sigma lengths differ");
  if (l_sorted.empty()) return {};
  SmoothingConfig{nu, regularizer}.validate();
  std::vector<double> logs;
  if (regularizer == Regularizer::Entropic) logs = checked_log(sigma_sorted);
  return run_pav(l_sorted, nu, sigma_sorted, logs, regularizer);
}

std::vector<double> pav_quadratic(std::span<const double> l_sorted, const SigmaWeights& sigma) {
  if (l_sorted.size() != sigma.size()) throw DimensionError("losses and sigma lengths differ");
  if (l_sorted.empty()) return {};
  return block_values(run_pav(l_sorted, 1.0, sigma.values(), {}, Regularizer::Quadratic), l_sorted);
}

std::vector<double> pav_entropic(std::span<const double> l_sorted, std::span<const double> log_sigma) {
  if (l_sorted.size() != log_sigma.size()) throw DimensionError("losses and log sigma lengths differ");
  if (l_sorted.empty()) return {};
  for (std::size_t i = 0; i < log_sigma.size(); ++i)
    if (!(log_sigma[i] > -std::numeric_limits<double>::infinity()))
      throw UnsupportedSpectrum("entropic smoothing needs strictly positive weights (sigma_" + std::to_string(i + 1) +
                                " = 0); use the quadratic regularizer");
  return block_values(run_pav(l_sorted, 1.0, {}, log_sigma, Regularizer::Entropic), l_sorted);
}

double omega(Regularizer regularizer, std::span<const double> lambda) {
  const double n = static_cast<double>(lambda.size());
  double total = 0.0;
  for (double x : lambda) {
    if (regularizer == Regularizer::Quadratic) {
      const double c = x - 1.0 / n;
      total += 0.5 * c * c;
    } else if (x > 0.0) {
      total += x * std::log(n * x);
    }
  }
  return total;
}

SmoothedEval smoothed_oracle(const SmoothingConfig& config, const SigmaWeights& sigma,
                             std::span<const double> losses) {
  config.validate();
  const std::size_t n = losses.size();
  if (sigma.size() != n) throw DimensionError("sigma and loss vector lengths differ");
  if (n == 0) throw DimensionError("empty loss vector");
  require_finite(losses, "loss");

  std::vector<double> sig(sigma.values().begin(), sigma.values().end());
  std::sort(sig.begin(), sig.end());
  const SortPermutation tau = argsort_losses(losses);
  std::vector<double> l(n);
  for (std::size_t k = 0; k < n; ++k) l[k] = losses[tau.order[k]];

  const bool quadratic = config.regularizer == Regularizer::Quadratic;
  const double nu = config.nu;
  const PavBlocks blocks = pav_blocks(l, nu, sig, config.regularizer);
  const double inv_n = 1.0 / static_cast<double>(n);

  SmoothedEval out;
  out.lambda.assign(n, 0.0);
  double h_of_z = 0.0, conjugate = 0.0, linear = 0.0;
  for (std::size_t b = 0; b < blocks.count(); ++b) {
    const double anchor = l[blocks.anchor[b]];
    const double c = blocks.offset[b];
    // z*_k = anchor + nu c (quadratic) or anchor + nu (c - 1) (entropic).
    const double z = anchor + nu * (quadratic ? c : c - 1.0);
    for (std::size_t k = blocks.start[b]; k < blocks.end(b, n); ++k) {
      const double y = (l[k] - anchor) / nu - c;
      const double lam = quadratic ? inv_n + y : std::exp(y) * inv_n;
      out.lambda[tau.order[k]] = lam;
      linear += lam * l[k];
      h_of_z += sig[k] * z;
      conjugate += quadratic ? y * inv_n + 0.5 * y * y : lam;
    }
  }
  out.value = linear - nu * omega(config.regularizer, out.lambda);
  out.primal_value = h_of_z + nu * conjugate;
  out.dual_gap = std::abs(out.value - out.primal_value);
  if (!(out.dual_gap <= 1e-8 * (1.0 + std::abs(out.value))))
    throw CertificateError("smoothed oracle duality gap " + std::to_string(out.dual_gap) + " at value " +
                           std::to_string(out.value));
  return out;
}

bool in_permutahedron(std::span<const double> lambda, std::span<const double> sigma, double tolerance) {
  if (lambda.size() != sigma.size()) return false;
  std::vector<double> a(lambda.begin(), lambda.end()), b(sigma.begin(), sigma.end());
  std::sort(a.begin(), a.end(), std::greater<>());
  std::sort(b.begin(), b.end(), std::greater<>());
  double sa = 0.0, sb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    sa += a[k];
    sb += b[k];
    if (sa > sb + tolerance) return false;
  }
  return std::abs(sa - sb) <= tolerance;
}

SmoothingGap smoothing_gap(const SmoothingConfig& config, const SigmaWeights& sigma, std::span<const double> losses) {
  const SmoothedEval eval = smoothed_oracle(config, sigma, losses);
  std::vector<double> sig(sigma.values().begin(), sigma.values().end());
  std::sort(sig.begin(), sig.end());
  const SortPermutation perm = argsort_losses(losses);
  double h = 0.0;
  for (std::size_t k = 0; k < perm.size(); ++k) h += sig[k] * losses[perm.order[k]];
  SmoothingGap out;
  out.gap = h - eval.value;
  out.bound = config.nu * omega(config.regularizer, sigma.values());
  out.ok = out.gap >= -1e-10 && out.gap <= out.bound + 1e-10;
  return out;
}

bool smoothed_gap_bound_check(const SmoothingConfig& config, const SigmaWeights& sigma,
                              std::span<const double> losses) {
  return smoothing_gap(config, sigma, losses).ok;
}

}  // namespace lrisk
