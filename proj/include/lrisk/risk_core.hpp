#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lrisk/data.hpp"
#include "lrisk/spectra.hpp"

namespace lrisk {

// order[k] is the index of the (k+1)-th smallest loss. Ties keep the original
// index order, so the permutation is fully deterministic.
struct SortPermutation {
  std::vector<std::size_t> order;

  std::size_t size() const noexcept { return order.size(); }
  // rank[i] = position of example i in the sorted order.
  std::vector<std::size_t> ranks() const;
  bool valid() const;
};

// Throws InvalidInput on NaN or infinite entries.
void require_finite(std::span<const double> values, const char* what);

SortPermutation argsort_losses(std::span<const double> losses);

// sum_i sigma_i l_(i)
double l_statistic(const SigmaWeights& sigma, std::span<const double> losses);

// lambda_i = sigma_{rank(i)}: the weight example i receives in the sorted sum.
std::vector<double> rank_weights(const SigmaWeights& sigma, const SortPermutation& perm);

// R_sigma(w) + mu/2 ||w||^2 over the examples of a loss model.
class RegularizedObjective {
 public:
  RegularizedObjective(SigmaWeights sigma, double mu, const LossModel& model);

  const SigmaWeights& sigma() const noexcept { return sigma_; }
  double mu() const noexcept { return mu_; }
  const LossModel& model() const noexcept { return *model_; }
  std::size_t size() const noexcept { return model_->size(); }
  std::size_t dim() const noexcept { return model_->dim(); }

  double value(std::span<const double> w) const;
  std::vector<double> subgradient(std::span<const double> w) const;
  // Returns the value and writes a subgradient into `grad`.
  double value_and_subgradient(std::span<const double> w, std::span<double> grad) const;

  // The unregularized part only.
  double risk(std::span<const double> w) const;

 private:
  SigmaWeights sigma_;
  double mu_;
  const LossModel* model_;
};

double objective_value(const RegularizedObjective& obj, std::span<const double> w);
std::vector<double> subgradient(const RegularizedObjective& obj, std::span<const double> w);

double squared_norm(std::span<const double> w) noexcept;

}  // namespace lrisk
