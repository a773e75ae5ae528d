#include "lrisk/optimizers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "lrisk/errors.hpp"
#include "lrisk/log.hpp"
#include "lrisk/rng.hpp"

namespace lrisk {

std::string algorithm_name(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::Sgd: return "sgd";
    case Algorithm::Srda: return "srda";
    case Algorithm::LsvrgUniform: return "lsvrg";
    case Algorithm::LsvrgSmoothed: return "lsvrg_smoothed";
    case Algorithm::LsvrgEpochNonuniform: return "lsvrg_epoch";
    case Algorithm::QSvrg: return "qsvrg";
    case Algorithm::ReferenceFullBatch: return "reference";
  }
  return "unknown";
}

Algorithm algorithm_from_name(const std::string& name) {
  for (Algorithm a : {Algorithm::Sgd, Algorithm::Srda, Algorithm::LsvrgUniform, Algorithm::LsvrgSmoothed,
                      Algorithm::LsvrgEpochNonuniform, Algorithm::QSvrg, Algorithm::ReferenceFullBatch})
    if (algorithm_name(a) == name) return a;
  throw InvalidParameter("unknown algorithm '" + name + "'");
}

void OptimizerConfig::validate(std::size_t n) const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw InvalidParameter("learning rate must be positive and finite");
  if (!(checkpoint_prob >= 0.0 && checkpoint_prob <= 1.0))
    throw InvalidParameter("checkpoint probability must lie in [0, 1]");
  if (max_passes == 0 && max_steps == 0) throw InvalidParameter("max_passes must be at least 1");
  if (smoothing) smoothing->validate();

  const bool minibatch = algorithm == Algorithm::Sgd || algorithm == Algorithm::Srda;
  const bool lsvrg = algorithm == Algorithm::LsvrgUniform || algorithm == Algorithm::LsvrgSmoothed ||
                     algorithm == Algorithm::LsvrgEpochNonuniform;
  if (minibatch && (batch_size == 0 || batch_size > n))
    throw InvalidParameter("batch size must lie in [1, n]; got " + std::to_string(batch_size));
  if (algorithm == Algorithm::LsvrgSmoothed && !smoothing)
    throw InvalidParameter("smoothed LSVRG needs a smoothing configuration");

  const std::string name = algorithm_name(algorithm);
  if (decaying && algorithm != Algorithm::Sgd) log_warning(name + " ignores the decaying schedule flag");
  if (!minibatch && batch_size != 64) log_warning(name + " ignores batch_size");
  if (!lsvrg && algorithm != Algorithm::QSvrg && epoch_length != 0) log_warning(name + " ignores epoch_length");
  if ((minibatch || algorithm == Algorithm::LsvrgEpochNonuniform) && checkpoint_prob != 0.0)
    log_warning(name + " ignores checkpoint_prob");
  if (smoothing && algorithm != Algorithm::LsvrgSmoothed) log_warning(name + " ignores the smoothing settings");
}

// ---------------------------------------------------------------------------
// Estimators

std::vector<double> minibatch_direction(const LossModel& model, const SigmaWeights& sigma_hat,
                                        std::span<const double> w, std::span<const std::size_t> batch) {
  if (sigma_hat.size() != batch.size()) throw DimensionError("sigma_hat and batch sizes differ");
  std::vector<double> losses(batch.size());
  for (std::size_t j = 0; j < batch.size(); ++j) losses[j] = model.loss(w, batch[j]);
  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return losses[a] < losses[b] || (losses[a] == losses[b] && batch[a] < batch[b]);
  });
  std::vector<double> v(model.dim(), 0.0);
  for (std::size_t k = 0; k < order.size(); ++k)
    if (sigma_hat[k] != 0.0) model.add_gradient(w, batch[order[k]], sigma_hat[k], v);
  return v;
}

std::vector<double> weighted_gradient(const LossModel& model, std::span<const double> lambda,
                                      std::span<const double> w) {
  std::vector<double> g(model.dim(), 0.0);
  for (std::size_t i = 0; i < lambda.size(); ++i)
    if (lambda[i] != 0.0) model.add_gradient(w, i, lambda[i], g);
  return g;
}

std::vector<double> lsvrg_direction(const LossModel& model, std::span<const double> lambda,
                                    std::span<const double> w, std::span<const double> w_bar,
                                    std::span<const double> g_bar, std::size_t i) {
  std::vector<double> v(g_bar.begin(), g_bar.end());
  const double scale = static_cast<double>(lambda.size()) * lambda[i];
  if (scale != 0.0) {
    model.add_gradient(w, i, scale, v);
    model.add_gradient(w_bar, i, -scale, v);
  }
  return v;
}

std::vector<double> epoch_direction(const LossModel& model, const SortPermutation& pi, std::span<const double> w,
                                    std::span<const double> w_bar, std::span<const double> g_bar, std::size_t k) {
  std::vector<double> v(g_bar.begin(), g_bar.end());
  const std::size_t i = pi.order[k];
  model.add_gradient(w, i, 1.0, v);
  model.add_gradient(w_bar, i, -1.0, v);
  return v;
}

long permutation_distance(const SortPermutation& a, std::span<const std::size_t> b) {
  if (a.size() != b.size()) throw DimensionError("permutation lengths differ");
  long count = 0;
  for (std::size_t k = 0; k < b.size(); ++k)
    if (a.order[k] != b[k]) ++count;
  return count;
}

TheoreticalSettings theoretical_preset(std::size_t n, double sigma_max, double mu, double lipschitz,
                                       double smoothness) {
  if (!(mu > 0.0)) throw InvalidParameter("the theoretical preset needs mu > 0");
  TheoreticalSettings s;
  const double nd = static_cast<double>(n);
  s.kappa = nd * sigma_max * smoothness / mu + 1.0;
  s.nu = 4.0 * nd * lipschitz * lipschitz / mu;
  s.epoch_length = static_cast<std::size_t>(std::ceil(4.0 * (nd + 8.0 * s.kappa)));
  s.learning_rate = 2.0 / ((nd + 8.0 * s.kappa) * mu);
  return s;
}

// ---------------------------------------------------------------------------
// Run bookkeeping shared by every algorithm

namespace {

using Clock = std::chrono::steady_clock;

bool all_finite(std::span<const double> w) {
  return std::all_of(w.begin(), w.end(), [](double x) { return std::isfinite(x); });
}

class Tracker {
 public:
  Tracker(const RegularizedObjective& obj, const OptimizerConfig& cfg)
      : obj_(obj), cfg_(cfg), n_(obj.size()),
        pass_size_(cfg.pass_size ? cfg.pass_size : obj.size()) {
    cfg.validate(n_);
    if (!cfg.reference_order.empty() && cfg.reference_order.size() != n_)
      throw DimensionError("reference order length differs from n");
    record_.config = cfg;
    w_ = cfg.initial.empty() ? std::vector<double>(obj.dim(), 0.0) : cfg.initial;
    if (w_.size() != obj.dim()) throw DimensionError("initial point has the wrong length");
    record_.best_objective = std::numeric_limits<double>::infinity();
    measure();
    if (cfg.record_iterates) record_.iterates.push_back(w_);
    started_ = Clock::now();
  }

  std::vector<double>& w() { return w_; }
  std::size_t n() const { return n_; }
  RunRecord& record() { return record_; }
  void set_average(const std::vector<double>* avg) { average_ = avg; }

  void add_evaluations(std::uint64_t count) { record_.gradient_evaluations += count; }

  // Called after every step. Returns false once the run should stop.
  bool after_step() {
    ++record_.steps;
    if (cfg_.record_iterates) record_.iterates.push_back(w_);
    if (!all_finite(w_)) {
      diverge();
      return false;
    }
    while (next_pass_ <= cfg_.max_passes &&
           record_.gradient_evaluations >= static_cast<std::uint64_t>(next_pass_) * pass_size_) {
      if (!measure()) return false;
    }
    if (cfg_.max_steps) return record_.steps < cfg_.max_steps;
    return next_pass_ <= cfg_.max_passes;
  }

  RunRecord finish() {
    if (!record_.diverged && cfg_.max_steps && (record_.rows.empty() || record_.rows.back().pass_count != passes()))
      measure();
    record_.final_w = w_;
    if (average_) record_.averaged_w = *average_;
    return std::move(record_);
  }

 private:
  double passes() const {
    return static_cast<double>(record_.gradient_evaluations) / static_cast<double>(n_);
  }

  // Full-data evaluation; not counted as gradient work.
  bool evaluate(std::span<const double> w, double& value, long* disagreement) {
    const std::vector<double> losses = obj_.model().losses(w);
    if (!all_finite(losses)) return false;
    const SortPermutation perm = argsort_losses(losses);
    double risk = 0.0;
    for (std::size_t k = 0; k < n_; ++k) risk += obj_.sigma()[k] * losses[perm.order[k]];
    value = risk + 0.5 * obj_.mu() * squared_norm(w);
    if (disagreement && !cfg_.reference_order.empty()) *disagreement = permutation_distance(perm, cfg_.reference_order);
    return std::isfinite(value);
  }

  bool measure() {
    elapsed_ += started_ == Clock::time_point{} ? 0.0
                                                 : std::chrono::duration<double>(Clock::now() - started_).count();
    MeasurementRow row;
    row.pass = next_pass_;
    row.pass_count = passes();
    row.wall_seconds = elapsed_;
    if (!evaluate(w_, row.objective, &row.disagreement)) {
      diverge();
      return false;
    }
    row.averaged_objective = row.objective;
    if (average_ && record_.steps > 0 && !evaluate(*average_, row.averaged_objective, nullptr)) {
      diverge();
      return false;
    }
    if (row.objective < record_.best_objective) {
      record_.best_objective = row.objective;
      record_.best_w = w_;
    }
    record_.rows.push_back(row);
    ++next_pass_;
    if (started_ != Clock::time_point{}) started_ = Clock::now();
    return true;
  }

  void diverge() {
    record_.diverged = true;
    MeasurementRow row;
    row.pass = next_pass_;
    row.pass_count = passes();
    row.objective = std::numeric_limits<double>::infinity();
    row.averaged_objective = row.objective;
    row.wall_seconds = elapsed_;
    record_.rows.push_back(row);
  }

  const RegularizedObjective& obj_;
  const OptimizerConfig& cfg_;
  std::size_t n_;
  std::size_t pass_size_;
  std::vector<double> w_;
  const std::vector<double>* average_ = nullptr;
  RunRecord record_;
  std::size_t next_pass_ = 0;
  Clock::time_point started_{};
  double elapsed_ = 0.0;
};

// Partial Fisher-Yates: the first m entries of idx become a uniform sample
// without replacement.
void sample_batch(std::vector<std::size_t>& idx, std::size_t m, CounterRng& rng) {
  const std::size_t n = idx.size();
  for (std::size_t j = 0; j < m; ++j) std::swap(idx[j], idx[j + rng.below(n - j)]);
}

RunRecord minibatch_run(const RegularizedObjective& obj, const Spectrum& spectrum, const OptimizerConfig& cfg,
                        bool dual_averaging) {
  Tracker tracker(obj, cfg);
  if (cfg.decaying && !(obj.mu() > 0.0)) throw InvalidParameter("the decaying schedule needs mu > 0");
  const std::size_t n = tracker.n();
  const std::size_t m = cfg.batch_size;
  const SigmaWeights sigma_hat = discretize(spectrum, m);
  const double mu = obj.mu();
  const double eta = cfg.learning_rate;
  CounterRng rng(cfg.seed);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);

  std::vector<double>& w = tracker.w();
  std::vector<double> average;
  if (!dual_averaging) {
    average = w;
    tracker.set_average(&average);
  }

  for (std::size_t t = 0;; ++t) {
    sample_batch(idx, m, rng);
    const std::vector<double> v = minibatch_direction(obj.model(), sigma_hat, w, std::span(idx).first(m));
    tracker.add_evaluations(m);
    if (dual_averaging) {
      // w_k = -S_k / (mu k + 1/eta) written as a recursion in c_k = eta / (mu k eta + 1).
      const double k = static_cast<double>(t + 1);
      const double c = eta / (mu * k * eta + 1.0);
      const double ratio = (mu * (k - 1.0) * eta + 1.0) / (mu * k * eta + 1.0);
      for (std::size_t j = 0; j < w.size(); ++j) w[j] = ratio * w[j] - c * v[j];
    } else {
      // average holds the mean of w^(0), ..., w^(t) once w^(t) is folded in.
      const double weight = 1.0 / static_cast<double>(t + 1);
      if (t > 0)
        for (std::size_t j = 0; j < w.size(); ++j) average[j] += weight * (w[j] - average[j]);
      const double step = cfg.decaying ? 1.0 / (mu * static_cast<double>(t + 1)) : eta;
      const double shrink = 1.0 - step * mu;
      for (std::size_t j = 0; j < w.size(); ++j) w[j] = shrink * w[j] - step * v[j];
    }
    if (!tracker.after_step()) break;
  }
  return tracker.finish();
}

enum class WeightRule { Sorted, Smoothed };

RunRecord lsvrg_common(const RegularizedObjective& obj, const OptimizerConfig& cfg, WeightRule rule) {
  Tracker tracker(obj, cfg);
  const std::size_t n = tracker.n();
  const std::size_t period = cfg.epoch_length ? cfg.epoch_length : n;
  const double mu = obj.mu();
  const double eta = cfg.learning_rate;
  const double shrink = 1.0 - eta * mu;
  const LossModel& model = obj.model();
  CounterRng rng(cfg.seed);

  std::vector<double>& w = tracker.w();
  std::vector<double> lambda, w_bar, g_bar;

  for (std::size_t t = 0;; ++t) {
    bool checkpoint = false;
    if (t % period == 0) {
      const std::vector<double> losses = model.losses(w);
      if (rule == WeightRule::Sorted) {
        const SortPermutation perm = argsort_losses(losses);
        lambda = rank_weights(obj.sigma(), perm);
        if (cfg.track_permutations) tracker.record().checkpoint_orders.push_back(perm.order);
      } else {
        lambda = smoothed_oracle(*cfg.smoothing, obj.sigma(), losses).lambda;
        if (cfg.track_permutations) tracker.record().checkpoint_orders.push_back(argsort_losses(losses).order);
      }
      checkpoint = true;
    } else if (cfg.checkpoint_prob > 0.0 && rng.uniform_open() <= cfg.checkpoint_prob) {
      checkpoint = true;
    }
    if (checkpoint) {
      w_bar = w;
      g_bar = weighted_gradient(model, lambda, w_bar);
      tracker.add_evaluations(n);
    }
    const std::size_t i = rng.below(n);
    const std::vector<double> v = lsvrg_direction(model, lambda, w, w_bar, g_bar, i);
    tracker.add_evaluations(2);
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = shrink * w[j] - eta * v[j];
    if (!tracker.after_step()) break;
  }
  return tracker.finish();
}

}  // namespace

RunRecord sgd_run(const RegularizedObjective& obj, const Spectrum& spectrum, const OptimizerConfig& cfg) {
  if (cfg.algorithm != Algorithm::Sgd) throw InvalidParameter("sgd_run needs algorithm = sgd");
  return minibatch_run(obj, spectrum, cfg, false);
}

RunRecord srda_run(const RegularizedObjective& obj, const Spectrum& spectrum, const OptimizerConfig& cfg) {
  if (cfg.algorithm != Algorithm::Srda) throw InvalidParameter("srda_run needs algorithm = srda");
  return minibatch_run(obj, spectrum, cfg, true);
}

RunRecord lsvrg_run(const RegularizedObjective& obj, const OptimizerConfig& cfg) {
  if (cfg.algorithm != Algorithm::LsvrgUniform) throw InvalidParameter("lsvrg_run needs algorithm = lsvrg");
  return lsvrg_common(obj, cfg, WeightRule::Sorted);
}

RunRecord lsvrg_smoothed_run(const RegularizedObjective& obj, const OptimizerConfig& cfg) {
  if (cfg.algorithm != Algorithm::LsvrgSmoothed)
    throw InvalidParameter("lsvrg_smoothed_run needs algorithm = lsvrg_smoothed");
  return lsvrg_common(obj, cfg, WeightRule::Smoothed);
}

RunRecord lsvrg_epoch_run(const RegularizedObjective& obj, const OptimizerConfig& cfg) {
  if (cfg.algorithm != Algorithm::LsvrgEpochNonuniform)
    throw InvalidParameter("lsvrg_epoch_run needs algorithm = lsvrg_epoch");
  Tracker tracker(obj, cfg);
  const std::size_t n = tracker.n();
  const std::size_t period = cfg.epoch_length ? cfg.epoch_length : n;
  const double mu = obj.mu();
  const double eta = cfg.learning_rate;
  const double shrink = 1.0 - eta * mu;
  const LossModel& model = obj.model();
  const SigmaWeights& sigma = obj.sigma();
  CounterRng rng(cfg.seed);

  std::vector<double> cumulative(n);
  std::partial_sum(sigma.values().begin(), sigma.values().end(), cumulative.begin());

  std::vector<double>& w = tracker.w();
  for (bool running = true; running;) {
    const std::vector<double> w_bar = w;
    const SortPermutation pi = argsort_losses(model.losses(w_bar));
    if (cfg.track_permutations) tracker.record().checkpoint_orders.push_back(pi.order);
    const std::vector<double> g_bar = weighted_gradient(model, rank_weights(sigma, pi), w_bar);
    tracker.add_evaluations(n);
    for (std::size_t t = 0; t < period && running; ++t) {
      const std::size_t k = rng.categorical(cumulative);
      const std::vector<double> v = epoch_direction(model, pi, w, w_bar, g_bar, k);
      tracker.add_evaluations(2);
      for (std::size_t j = 0; j < w.size(); ++j) w[j] = shrink * w[j] - eta * v[j];
      running = tracker.after_step();
    }
  }
  return tracker.finish();
}

RunRecord run_optimizer(const RegularizedObjective& obj, const Spectrum& spectrum, const OptimizerConfig& cfg) {
  switch (cfg.algorithm) {
    case Algorithm::Sgd: return sgd_run(obj, spectrum, cfg);
    case Algorithm::Srda: return srda_run(obj, spectrum, cfg);
    case Algorithm::LsvrgUniform: return lsvrg_run(obj, cfg);
    case Algorithm::LsvrgSmoothed: return lsvrg_smoothed_run(obj, cfg);
    case Algorithm::LsvrgEpochNonuniform: return lsvrg_epoch_run(obj, cfg);
    default: break;
  }
  throw InvalidParameter("run_optimizer does not handle algorithm '" + algorithm_name(cfg.algorithm) + "'");
}

QsvrgResult qsvrg_run(const LossModel& model, double mu, const OptimizerConfig& cfg,
                      std::span<const std::size_t> snapshot_steps) {
  const std::size_t n = model.size();
  if (!(cfg.learning_rate > 0.0)) throw InvalidParameter("learning rate must be positive");
  if (!(cfg.checkpoint_prob >= 0.0 && cfg.checkpoint_prob <= 1.0))
    throw InvalidParameter("checkpoint probability must lie in [0, 1]");
  if (!(mu >= 0.0)) throw InvalidParameter("mu must be >= 0");
  const double eta = cfg.learning_rate;
  CounterRng rng(cfg.seed);

  QsvrgResult out;
  std::vector<double> w = cfg.initial.empty() ? std::vector<double>(model.dim(), 0.0) : cfg.initial;
  const std::vector<double> uniform(n, 1.0 / static_cast<double>(n));
  auto full_gradient = [&](const std::vector<double>& at) {
    std::vector<double> g = weighted_gradient(model, uniform, at);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += mu * at[j];
    return g;
  };
  std::vector<double> w_bar = w;
  std::vector<double> g_bar = full_gradient(w_bar);
  std::size_t next_snapshot = 0;
  std::vector<double> v(w.size());
  for (std::size_t t = 0; t < cfg.max_steps; ++t) {
    if (rng.uniform_open() <= cfg.checkpoint_prob) {
      w_bar = w;
      g_bar = full_gradient(w_bar);
    }
    const std::size_t i = rng.below(n);
    for (std::size_t j = 0; j < w.size(); ++j) v[j] = g_bar[j] + mu * (w[j] - w_bar[j]);
    model.add_gradient(w, i, 1.0, v);
    model.add_gradient(w_bar, i, -1.0, v);
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= eta * v[j];
    if (!all_finite(w)) {
      out.diverged = true;
      break;
    }
    while (next_snapshot < snapshot_steps.size() && snapshot_steps[next_snapshot] == t + 1) {
      out.snapshots.push_back(w);
      ++next_snapshot;
    }
  }
  out.w = std::move(w);
  return out;
}

}  // namespace lrisk
