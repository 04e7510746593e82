#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace polgrad {

// Error taxonomy. ConfigError maps to exit code 2 in the CLI, EnvFault to 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct ContractError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct EnvFault : Error {
  using Error::Error;
};
struct EnvLinkError : EnvFault {
  using EnvFault::EnvFault;
};

// Deterministic random stream. Gaussian sampling is pinned to an explicit
// Box-Muller transform because the stdlib distributions are
// implementation-defined and would break cross-build reproducibility of
// checkpointed runs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal; consumes exactly two engine draws per sample.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kTwoPi * u2);
  }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Independent stream derived from (seed, stream index).
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

  void save(std::ostream& os) const;
  void load(std::istream& is);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  static constexpr double kTwoPi = 6.283185307179586476925286766559;
  std::mt19937_64 engine_;
};

// In-place Fisher-Yates using the given stream.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.below(i)]);
  }
}

std::uint64_t splitmix64(std::uint64_t x);

// Shortest deterministic decimal that round-trips a double.
std::string fmt_g17(double v);
// Hexadecimal float, bit-exact round trip via strtod.
std::string fmt_hex(double v);
double parse_double(const std::string& s);

}  // namespace polgrad
