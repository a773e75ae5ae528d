#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace lrisk {

enum class SpectrumKind {
  Uniform,
  Superquantile,         // param q in (0, 1)
  Extremile,             // param r >= 1
  Esrm,                  // param rho > 0
  TruncatedRiskSeeking,  // param q in (0, 1]
  ExtremileRiskSeeking,  // param r >= 1
};

// A spectral density s on (0, 1). Parameters are validated on construction.
class Spectrum {
 public:
  Spectrum() = default;
  Spectrum(SpectrumKind kind, double param);

  static Spectrum uniform() { return {}; }
  static Spectrum superquantile(double q) { return {SpectrumKind::Superquantile, q}; }
  static Spectrum extremile(double r) { return {SpectrumKind::Extremile, r}; }
  static Spectrum esrm(double rho) { return {SpectrumKind::Esrm, rho}; }
  static Spectrum truncated_risk_seeking(double q) { return {SpectrumKind::TruncatedRiskSeeking, q}; }
  static Spectrum extremile_risk_seeking(double r) { return {SpectrumKind::ExtremileRiskSeeking, r}; }

  SpectrumKind kind() const noexcept { return kind_; }
  double param() const noexcept { return param_; }

  // Non-decreasing density (first four kinds).
  bool risk_averse() const noexcept;

  // Short identifier such as "extremile_2" used in file names.
  std::string label() const;

  // Density value, or its one-sided limit, on the closed interval [0, 1].
  // Used internally where t may round onto an endpoint.
  double density_limit(double t, bool from_right) const noexcept;

  // Cumulative mass S(t) = integral of s over [0, t], t in [0, 1].
  double cumulative(double t) const noexcept;

  // Points in (0, 1) where the density jumps.
  std::vector<double> jump_points() const;

  friend bool operator==(const Spectrum&, const Spectrum&) = default;

 private:
  SpectrumKind kind_ = SpectrumKind::Uniform;
  double param_ = 0.0;
};

// Discretized spectrum: sigma_i = integral of s over ((i-1)/n, i/n].
class SigmaWeights {
 public:
  SigmaWeights() = default;
  // Validates nonnegativity, entries in [0, 1] and unit total (to 1e-12).
  explicit SigmaWeights(std::vector<double> values);

  static SigmaWeights uniform(std::size_t n);

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }
  double max() const noexcept;
  bool non_decreasing() const noexcept;
  bool strictly_positive() const noexcept;

 private:
  std::vector<double> values_;
};

double density(const Spectrum& spectrum, double t);

SigmaWeights discretize(const Spectrum& spectrum, std::size_t n);

// C_s = sup_t |s(t) - 1|.
double uniform_deviation(const Spectrum& spectrum);

struct Divergences {
  double kl = 0.0;
  double chi2 = 0.0;
};

// KL(s||u) and chi^2(s||u); closed forms where known, quadrature otherwise.
Divergences divergence_to_uniform(const Spectrum& spectrum);

// Same divergences, always by adaptive quadrature.
Divergences divergence_by_quadrature(const Spectrum& spectrum);

// Config-file form: {"kind": "extremile", "param": 2.0}.
nlohmann::json to_json(const Spectrum& spectrum);
Spectrum spectrum_from_json(const nlohmann::json& j);

std::string kind_name(SpectrumKind kind);
SpectrumKind kind_from_name(const std::string& name);

}  // namespace lrisk
