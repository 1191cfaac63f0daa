#include "gformula/rng.hpp"

#include <cmath>

#include "gformula/error.hpp"

namespace gformula {

namespace {

constexpr std::uint64_t kWeyl = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed) : state_(mix(seed ^ 0x5851F42D4C957F2DULL)) {}

RngStream RngStream::split(std::uint64_t key) const {
  RngStream child(0);
  child.state_ = mix(state_ ^ mix(key ^ 0xD1B54A32D192ED03ULL));
  return child;
}

RngStream::result_type RngStream::operator()() {
  state_ += kWeyl;
  return mix(state_);
}

double RngStream::uniform() {
  return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
}

double RngStream::gamma(double shape, double scale) {
  if (shape <= 0.0 || scale <= 0.0) {
    throw Error::numeric("gamma draw requires positive shape and scale");
  }
  // Marsaglia-Tsang squeeze; shape < 1 boosted via G(a) = G(a+1) * U^{1/a}.
  double boost = 1.0;
  if (shape < 1.0) {
    boost = std::pow(uniform(), 1.0 / shape);
    shape += 1.0;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) {
      return boost * d * v * scale;
    }
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
      return boost * d * v * scale;
    }
  }
}

double RngStream::chi_squared(double df) {
  return gamma(0.5 * df, 2.0);
}

bool RngStream::bernoulli(double p) {
  return uniform() < p;
}

std::size_t RngStream::uniform_index(std::size_t n) {
  if (n == 0) {
    throw Error::numeric("uniform_index over empty range");
  }
  const std::uint64_t span = static_cast<std::uint64_t>(n);
  const std::uint64_t reject_below = (0 - span) % span;  // 2^64 mod n
  for (;;) {
    const std::uint64_t r = (*this)();
    if (r >= reject_below) {
      return static_cast<std::size_t>(r % span);
    }
  }
}

}  // namespace gformula
