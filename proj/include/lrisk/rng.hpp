#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>

namespace lrisk {

// Counter-based 64-bit generator.
//
// The k-th output (k = 1, 2, ...) of a stream with key K is
//
//   mix(K + k * 0x9E3779B97F4A7C15)
//
// where mix is the SplitMix64 finalizer
//
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   z =  z ^ (z >> 31)
//
// with all arithmetic modulo 2^64. Given the key and the counter the output
// is fully determined, so streams are reproducible on any platform and in any
// language with unsigned 64-bit arithmetic. Independent child streams come
// from split(id), whose key is mix(K ^ mix(id + 0xD1B54A32D192ED03)).
//
// Derived variates:
//   uniform()       (u >> 11) * 2^-53                       in [0, 1)
//   uniform_open()  ((u >> 11) + 0.5) * 2^-53               in (0, 1)
//   normal()        Box-Muller on two uniform_open() draws, both outputs used
//   below(n)        Lemire's multiply-shift with rejection, exact uniform
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t seed) noexcept : key_(mix(seed)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return next(); }
  std::uint64_t next() noexcept;

  CounterRng split(std::uint64_t stream_id) const noexcept;

  double uniform() noexcept;
  double uniform_open() noexcept;
  double normal() noexcept;
  double exponential(double rate) noexcept;
  std::size_t below(std::size_t n) noexcept;

  // Categorical draw from a cumulative weight table (last entry = total mass).
  // Zero-mass categories are never returned.
  std::size_t categorical(std::span<const double> cumulative) noexcept;

  std::uint64_t counter() const noexcept { return counter_; }

  static std::uint64_t mix(std::uint64_t z) noexcept;

 private:
  CounterRng(std::uint64_t key, int) noexcept : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace lrisk
