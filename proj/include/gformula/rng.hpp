#pragma once

#include <cstddef>
#include <cstdint>

namespace gformula {

// Counter-based stream: the state walks a Weyl sequence and every output is a
// bijective mix of the counter (splitmix64). split() derives a decorrelated
// child stream from (state, key) without advancing the parent, so a replicate,
// imputation or bootstrap draw can be regenerated in isolation from the master
// seed and its index path.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed);

  RngStream split(std::uint64_t key) const;

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~std::uint64_t{0}; }
  result_type operator()();

  // Open-interval uniform (0,1); never returns an endpoint.
  double uniform();
  // Standard normal via Box-Muller; consumes exactly two words per draw.
  double normal();
  double gamma(double shape, double scale);
  double chi_squared(double df);
  bool bernoulli(double p);
  // Uniform on {0,...,n-1}; n >= 1.
  std::size_t uniform_index(std::size_t n);

 private:
  std::uint64_t state_;
};

}  // namespace gformula
