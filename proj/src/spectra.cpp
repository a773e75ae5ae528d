#include "lrisk/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "json.hpp"

#include "lrisk/errors.hpp"
#include "lrisk/quadrature.hpp"

namespace lrisk {

namespace {

std::string format_param(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%g", value);
  return buffer;
}

bool is_small_integer(double r) { return r == std::floor(r) && r <= 64.0; }

// (i/n)^r - ((i-1)/n)^r. Integer exponents are evaluated with exact integer
// powers when those fit in the double mantissa, so e.g. r = 2, n = 5 returns
// (2i - 1) / 25 correctly rounded.
double power_bin(std::size_t i, std::size_t n, double r) {
  if (is_small_integer(r)) {
    const auto exponent = static_cast<int>(r);
    double n_pow = 1.0;
    bool exact = true;
    for (int k = 0; k < exponent; ++k) {
      n_pow *= static_cast<double>(n);
      if (n_pow > 9007199254740992.0) {
        exact = false;
        break;
      }
    }
    if (exact) {
      double hi = 1.0;
      double lo = 1.0;
      for (int k = 0; k < exponent; ++k) {
        hi *= static_cast<double>(i);
        lo *= static_cast<double>(i - 1);
      }
      return (hi - lo) / n_pow;
    }
  }
  const double nd = static_cast<double>(n);
  return std::pow(static_cast<double>(i) / nd, r) - std::pow(static_cast<double>(i - 1) / nd, r);
}

}  // namespace

Spectrum::Spectrum(SpectrumKind kind, double param) : kind_(kind), param_(param) {
  const bool finite = std::isfinite(param);
  switch (kind) {
    case SpectrumKind::Uniform:
      param_ = 0.0;
      return;
    case SpectrumKind::Superquantile:
      if (!finite || param <= 0.0 || param >= 1.0)
        throw InvalidParameter("superquantile level q must lie in (0, 1), got " + format_param(param));
      return;
    case SpectrumKind::Extremile:
    case SpectrumKind::ExtremileRiskSeeking:
      if (!finite || param < 1.0)
        throw InvalidParameter("extremile exponent r must be >= 1, got " + format_param(param));
      return;
    case SpectrumKind::Esrm:
      if (!finite || param <= 0.0)
        throw InvalidParameter("ESRM rate rho must be > 0, got " + format_param(param));
      return;
    case SpectrumKind::TruncatedRiskSeeking:
      if (!finite || param <= 0.0 || param > 1.0)
        throw InvalidParameter("truncation level q must lie in (0, 1], got " + format_param(param));
      return;
  }
  throw InvalidParameter("unknown spectrum kind");
}

bool Spectrum::risk_averse() const noexcept {
  return kind_ == SpectrumKind::Uniform || kind_ == SpectrumKind::Superquantile ||
         kind_ == SpectrumKind::Extremile || kind_ == SpectrumKind::Esrm;
}

std::string Spectrum::label() const {
  if (kind_ == SpectrumKind::Uniform) return "uniform";
  return kind_name(kind_) + "_" + format_param(param_);
}

double Spectrum::density_limit(double t, bool from_right) const noexcept {
  switch (kind_) {
    case SpectrumKind::Uniform:
      return 1.0;
    case SpectrumKind::Superquantile:
      if (t > param_ || (t == param_ && from_right)) return 1.0 / (1.0 - param_);
      return 0.0;
    case SpectrumKind::TruncatedRiskSeeking:
      if (t < param_ || (t == param_ && !from_right)) return 1.0 / param_;
      return 0.0;
    case SpectrumKind::Extremile:
      return param_ * std::pow(t, param_ - 1.0);
    case SpectrumKind::ExtremileRiskSeeking:
      return param_ * std::pow(1.0 - t, param_ - 1.0);
    case SpectrumKind::Esrm:
      // rho e^{-rho} e^{rho t} / (1 - e^{-rho}), written to avoid overflow.
      return param_ * std::exp(param_ * (t - 1.0)) / -std::expm1(-param_);
  }
  return 0.0;
}

double Spectrum::cumulative(double t) const noexcept {
  t = std::clamp(t, 0.0, 1.0);
  switch (kind_) {
    case SpectrumKind::Uniform:
      return t;
    case SpectrumKind::Superquantile:
      return std::max(0.0, t - param_) / (1.0 - param_);
    case SpectrumKind::TruncatedRiskSeeking:
      return std::min(t, param_) / param_;
    case SpectrumKind::Extremile:
      return std::pow(t, param_);
    case SpectrumKind::ExtremileRiskSeeking:
      return 1.0 - std::pow(1.0 - t, param_);
    case SpectrumKind::Esrm:
      // (e^{rho t} - 1) / (e^{rho} - 1)
      return std::exp(param_ * (t - 1.0)) * -std::expm1(-param_ * t) / -std::expm1(-param_);
  }
  return t;
}

std::vector<double> Spectrum::jump_points() const {
  if (kind_ == SpectrumKind::Superquantile) return {param_};
  if (kind_ == SpectrumKind::TruncatedRiskSeeking && param_ < 1.0) return {param_};
  return {};
}

SigmaWeights::SigmaWeights(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw DimensionError("sigma weights must be non-empty");
  double total = 0.0;
  for (double v : values_) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0)
      throw InvalidInput("sigma weights must lie in [0, 1]");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) throw InvalidInput("sigma weights must sum to 1");
}

SigmaWeights SigmaWeights::uniform(std::size_t n) {
  return SigmaWeights(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

double SigmaWeights::max() const noexcept {
  return *std::max_element(values_.begin(), values_.end());
}

bool SigmaWeights::non_decreasing() const noexcept {
  return std::is_sorted(values_.begin(), values_.end());
}

bool SigmaWeights::strictly_positive() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return v > 0.0; });
}

double density(const Spectrum& spectrum, double t) {
  if (!(t > 0.0 && t < 1.0)) throw InvalidParameter("density is defined for t in (0, 1)");
  // Closed indicators: [q, 1] for the superquantile and [0, q] for truncation.
  const bool from_right = spectrum.kind() != SpectrumKind::TruncatedRiskSeeking;
  return spectrum.density_limit(t, from_right);
}

SigmaWeights discretize(const Spectrum& spectrum, std::size_t n) {
  if (n == 0) throw InvalidParameter("discretization needs n >= 1");
  const double nd = static_cast<double>(n);
  const double width = 1.0 / nd;
  const double p = spectrum.param();
  std::vector<double> sigma(n);

  switch (spectrum.kind()) {
    case SpectrumKind::Uniform:
      std::fill(sigma.begin(), sigma.end(), width);
      break;
    case SpectrumKind::Superquantile:
      for (std::size_t i = 1; i <= n; ++i) {
        const double lo = static_cast<double>(i - 1) / nd;
        const double hi = static_cast<double>(i) / nd;
        sigma[i - 1] = hi <= p ? 0.0 : lo >= p ? std::min(1.0, width / (1.0 - p)) : (hi - p) / (1.0 - p);
      }
      break;
    case SpectrumKind::TruncatedRiskSeeking:
      for (std::size_t i = 1; i <= n; ++i) {
        const double lo = static_cast<double>(i - 1) / nd;
        const double hi = static_cast<double>(i) / nd;
        sigma[i - 1] = lo >= p ? 0.0 : hi <= p ? std::min(1.0, width / p) : (p - lo) / p;
      }
      break;
    case SpectrumKind::Extremile:
      if (p == 1.0) {
        std::fill(sigma.begin(), sigma.end(), width);
      } else {
        for (std::size_t i = 1; i <= n; ++i) sigma[i - 1] = power_bin(i, n, p);
      }
      break;
    case SpectrumKind::ExtremileRiskSeeking:
      if (p == 1.0) {
        std::fill(sigma.begin(), sigma.end(), width);
      } else {
        for (std::size_t i = 1; i <= n; ++i) sigma[i - 1] = power_bin(n + 1 - i, n, p);
      }
      break;
    case SpectrumKind::Esrm: {
      // e^{-rho} (e^{rho i/n} - e^{rho (i-1)/n}) / (1 - e^{-rho})
      const double scale = std::expm1(p / nd) / -std::expm1(-p);
      for (std::size_t i = 1; i <= n; ++i)
        sigma[i - 1] = std::exp(p * (static_cast<double>(i - 1) / nd - 1.0)) * scale;
      break;
    }
  }
  return SigmaWeights(std::move(sigma));
}

double uniform_deviation(const Spectrum& spectrum) {
  std::vector<double> candidates{spectrum.density_limit(0.0, true), spectrum.density_limit(1.0, false)};
  for (double jump : spectrum.jump_points()) {
    candidates.push_back(spectrum.density_limit(jump, false));
    candidates.push_back(spectrum.density_limit(jump, true));
  }
  double sup = 0.0;
  for (double c : candidates) sup = std::max(sup, std::abs(c - 1.0));
  return sup;
}

Divergences divergence_by_quadrature(const Spectrum& spectrum) {
  const auto jumps = spectrum.jump_points();
  auto s = [&](double t) { return spectrum.density_limit(t, true); };
  const auto kl = integrate(
      [&](double t) {
        const double v = s(t);
        return v > 0.0 ? v * std::log(v) : 0.0;
      },
      0.0, 1.0, jumps);
  const auto chi2 = integrate(
      [&](double t) {
        const double d = s(t) - 1.0;
        return d * d;
      },
      0.0, 1.0, jumps);
  return {kl.value, chi2.value};
}

Divergences divergence_to_uniform(const Spectrum& spectrum) {
  const double p = spectrum.param();
  switch (spectrum.kind()) {
    case SpectrumKind::Uniform:
      return {0.0, 0.0};
    case SpectrumKind::Superquantile:
      return {-std::log1p(-p), p / (1.0 - p)};
    case SpectrumKind::TruncatedRiskSeeking:
      // Mirror image of the (1 - q)-superquantile.
      return {-std::log(p), (1.0 - p) / p};
    case SpectrumKind::Extremile:
    case SpectrumKind::ExtremileRiskSeeking:
      return {std::log(p) + 1.0 / p - 1.0, (p - 1.0) * (p - 1.0) / (2.0 * p - 1.0)};
    case SpectrumKind::Esrm:
      return divergence_by_quadrature(spectrum);
  }
  return divergence_by_quadrature(spectrum);
}

std::string kind_name(SpectrumKind kind) {
  switch (kind) {
    case SpectrumKind::Uniform: return "uniform";
    case SpectrumKind::Superquantile: return "superquantile";
    case SpectrumKind::Extremile: return "extremile";
    case SpectrumKind::Esrm: return "esrm";
    case SpectrumKind::TruncatedRiskSeeking: return "truncated";
    case SpectrumKind::ExtremileRiskSeeking: return "extremile_risk_seeking";
  }
  return "unknown";
}

SpectrumKind kind_from_name(const std::string& name) {
  if (name == "uniform" || name == "mean" || name == "erm") return SpectrumKind::Uniform;
  if (name == "superquantile" || name == "cvar") return SpectrumKind::Superquantile;
  if (name == "extremile") return SpectrumKind::Extremile;
  if (name == "esrm") return SpectrumKind::Esrm;
  if (name == "truncated" || name == "truncated_risk_seeking") return SpectrumKind::TruncatedRiskSeeking;
  if (name == "extremile_risk_seeking") return SpectrumKind::ExtremileRiskSeeking;
  throw InvalidParameter("unknown spectrum kind '" + name + "'");
}

nlohmann::json to_json(const Spectrum& spectrum) {
  nlohmann::json j{{"kind", kind_name(spectrum.kind())}};
  if (spectrum.kind() != SpectrumKind::Uniform) j["param"] = spectrum.param();
  return j;
}

Spectrum spectrum_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
    throw InvalidParameter("spectrum must be an object with a string 'kind'");
  const SpectrumKind kind = kind_from_name(j["kind"].get<std::string>());
  if (kind == SpectrumKind::Uniform) return Spectrum::uniform();
  if (!j.contains("param") || !j["param"].is_number())
    throw InvalidParameter("spectrum '" + j["kind"].get<std::string>() + "' needs a numeric 'param'");
  return {kind, j["param"].get<double>()};
}

}  // namespace lrisk
