#include "lrisk/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lrisk {

namespace {
constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kSplitSalt = 0xD1B54A32D192ED03ULL;
constexpr double kTwoPow53Inv = 1.0 / 9007199254740992.0;
}  // namespace

std::uint64_t CounterRng::mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t CounterRng::next() noexcept {
  ++counter_;
  return mix(key_ + counter_ * kGamma);
}

CounterRng CounterRng::split(std::uint64_t stream_id) const noexcept {
  return CounterRng(mix(key_ ^ mix(stream_id + kSplitSalt)), 0);
}

double CounterRng::uniform() noexcept {
  return static_cast<double>(next() >> 11) * kTwoPow53Inv;
}

double CounterRng::uniform_open() noexcept {
  return (static_cast<double>(next() >> 11) + 0.5) * kTwoPow53Inv;
}

double CounterRng::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  const double u1 = uniform_open();
  const double u2 = uniform_open();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

double CounterRng::exponential(double rate) noexcept {
  return -std::log(uniform_open()) / rate;
}

namespace {
__extension__ using uint128 = unsigned __int128;
}  // namespace

std::size_t CounterRng::below(std::size_t n) noexcept {
  // Lemire, "Fast Random Integer Generation in an Interval" (2019).
  const auto range = static_cast<std::uint64_t>(n);
  uint128 product = static_cast<uint128>(next()) * range;
  auto low = static_cast<std::uint64_t>(product);
  if (low < range) {
    const std::uint64_t threshold = (0 - range) % range;
    while (low < threshold) {
      product = static_cast<uint128>(next()) * range;
      low = static_cast<std::uint64_t>(product);
    }
  }
  return static_cast<std::size_t>(product >> 64);
}

std::size_t CounterRng::categorical(std::span<const double> cumulative) noexcept {
  const double total = cumulative.back();
  const double u = uniform_open() * total;
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  if (it == cumulative.end()) {
    // u landed in the rounding slack above the last boundary; step back to
    // the last category that carries mass.
    it = std::prev(cumulative.end());
    while (it != cumulative.begin() && *it == *std::prev(it)) --it;
  }
  return static_cast<std::size_t>(it - cumulative.begin());
}

}  // namespace lrisk
