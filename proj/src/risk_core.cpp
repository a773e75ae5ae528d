#include "lrisk/risk_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "lrisk/errors.hpp"

namespace lrisk {

std::vector<std::size_t> SortPermutation::ranks() const {
  std::vector<std::size_t> rank(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) rank[order[k]] = k;
  return rank;
}

bool SortPermutation::valid() const {
  std::vector<bool> seen(order.size(), false);
  for (std::size_t i : order) {
    if (i >= order.size() || seen[i]) return false;
    seen[i] = true;
  }
  return true;
}

void require_finite(std::span<const double> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!std::isfinite(values[i]))
      throw InvalidInput(std::string(what) + " entry " + std::to_string(i) + " is not finite");
}

SortPermutation argsort_losses(std::span<const double> losses) {
  require_finite(losses, "loss");
  SortPermutation perm;
  perm.order.resize(losses.size());
  std::iota(perm.order.begin(), perm.order.end(), 0);
  std::stable_sort(perm.order.begin(), perm.order.end(),
                   [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
  return perm;
}

double l_statistic(const SigmaWeights& sigma, std::span<const double> losses) {
  if (sigma.size() != losses.size())
    throw DimensionError("sigma has " + std::to_string(sigma.size()) + " entries but there are " +
                         std::to_string(losses.size()) + " losses");
  const SortPermutation perm = argsort_losses(losses);
  double total = 0.0;
  for (std::size_t k = 0; k < perm.size(); ++k) total += sigma[k] * losses[perm.order[k]];
  return total;
}

std::vector<double> rank_weights(const SigmaWeights& sigma, const SortPermutation& perm) {
  if (sigma.size() != perm.size()) throw DimensionError("sigma and permutation lengths differ");
  std::vector<double> lambda(perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) lambda[perm.order[k]] = sigma[k];
  return lambda;
}

double squared_norm(std::span<const double> w) noexcept {
  double s = 0.0;
  for (double x : w) s += x * x;
  return s;
}

RegularizedObjective::RegularizedObjective(SigmaWeights sigma, double mu, const LossModel& model)
    : sigma_(std::move(sigma)), mu_(mu), model_(&model) {
  if (!(mu_ >= 0.0) || !std::isfinite(mu_)) throw InvalidParameter("mu must be finite and >= 0");
  if (sigma_.size() != model.size())
    throw DimensionError("sigma has " + std::to_string(sigma_.size()) + " entries but the dataset has " +
                         std::to_string(model.size()) + " examples");
}

double RegularizedObjective::risk(std::span<const double> w) const {
  if (w.size() != dim()) throw DimensionError("parameter vector has the wrong length");
  return l_statistic(sigma_, model_->losses(w));
}

double RegularizedObjective::value(std::span<const double> w) const {
  return risk(w) + 0.5 * mu_ * squared_norm(w);
}

double RegularizedObjective::value_and_subgradient(std::span<const double> w, std::span<double> grad) const {
  if (w.size() != dim() || grad.size() != dim()) throw DimensionError("parameter vector has the wrong length");
  const std::vector<double> losses = model_->losses(w);
  const SortPermutation perm = argsort_losses(losses);
  std::fill(grad.begin(), grad.end(), 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < perm.size(); ++k) {
    const std::size_t i = perm.order[k];
    total += sigma_[k] * losses[i];
    if (sigma_[k] != 0.0) model_->add_gradient(w, i, sigma_[k], grad);
  }
  for (std::size_t j = 0; j < w.size(); ++j) grad[j] += mu_ * w[j];
  return total + 0.5 * mu_ * squared_norm(w);
}

std::vector<double> RegularizedObjective::subgradient(std::span<const double> w) const {
  std::vector<double> grad(dim());
  value_and_subgradient(w, grad);
  return grad;
}

double objective_value(const RegularizedObjective& obj, std::span<const double> w) { return obj.value(w); }

std::vector<double> subgradient(const RegularizedObjective& obj, std::span<const double> w) {
  return obj.subgradient(w);
}

}  // namespace lrisk
