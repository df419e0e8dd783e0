// uws/common.hpp
//
// Small shared utilities: error type, deterministic RNG wrapper, log-domain
// helpers and the digamma function used by the variational updates.

#ifndef UWS_COMMON_HPP
#define UWS_COMMON_HPP

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace uws {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string &msg) : std::runtime_error(msg) {}
};

// All stochastic operations thread one of these explicitly; a fixed seed
// yields a fixed draw sequence on a given platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return uni_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double gaussian() { return gauss_(engine_); }
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::mt19937_64 &engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uni_{0.0, 1.0};
  std::normal_distribution<double> gauss_{0.0, 1.0};
};

constexpr double kLogZero = -1e30;

double log_sum_exp(double a, double b);
double log_sum_exp(std::span<const double> xs);

// log(1/(1+exp(-x))), stable for large |x|.
double log_sigmoid(double x);

// Digamma function, accurate to ~1e-12 for x > 0.
double digamma(double x);

// FNV-1a 64-bit hash; stable content fingerprint for provenance blocks.
std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t v);

// Fixed-point formatting helpers (deterministic file output).
std::string format_seconds(double s);  // 3-decimal fixed point

std::vector<std::string> split_ws(const std::string &line);
std::vector<std::string> split_on(const std::string &s, char sep);
std::string join(const std::vector<std::string> &parts, char sep);

}  // namespace uws

#endif  // UWS_COMMON_HPP
