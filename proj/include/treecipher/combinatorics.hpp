#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>

#include <boost/multiprecision/cpp_int.hpp>

namespace treecipher {

using BigInt = boost::multiprecision::cpp_int;

/// log10(n!) via lgamma. All call sites share this one definition so that
/// sums built from the same terms cancel exactly in double arithmetic.
inline double log10_factorial(std::uint64_t n) {
  return std::lgamma(static_cast<double>(n) + 1.0) / std::numbers::ln10;
}

inline double log10_binomial(std::uint64_t n, std::uint64_t k) {
  return log10_factorial(n) - log10_factorial(k) - log10_factorial(n - k);
}

inline BigInt factorial(std::uint64_t n) {
  BigInt r = 1;
  for (std::uint64_t i = 2; i <= n; ++i) r *= i;
  return r;
}

inline BigInt binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  if (k > n - k) k = n - k;
  BigInt r = 1;
  for (std::uint64_t i = 0; i < k; ++i) {
    r *= n - i;
    r /= i + 1;
  }
  return r;
}

/// A combinatorial count: log10 always, the exact integer only while its
/// decimal size stays under a digit cap.
struct BigCount {
  double log10 = 0.0;
  std::optional<BigInt> exact;
};

}  // namespace treecipher
