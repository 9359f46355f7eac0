#include "npmle/numeric.hpp"

#include <algorithm>
#include <array>

#include "npmle/error.hpp"

namespace npmle {

double compensated_sum(std::span<const double> xs) {
  CompensatedSum acc;
  for (double x : xs) acc.add(x);
  return acc.value();
}

double log_sum_exp(std::span<const double> xs) {
  double hi = kNegInf;
  for (double x : xs) hi = std::max(hi, x);
  if (hi == kNegInf) return kNegInf;
  if (hi == std::numeric_limits<double>::infinity()) return hi;
  CompensatedSum acc;
  for (double x : xs) acc.add(std::exp(x - hi));
  return hi + std::log(acc.value());
}

namespace {

constexpr std::array<double, 21> make_factorials() {
  std::array<double, 21> table{};
  table[0] = 1.0;
  for (int k = 1; k <= 20; ++k) table[k] = table[k - 1] * k;
  return table;
}

constexpr std::array<double, 21> kFactorials = make_factorials();

}  // namespace

double log_factorial(int k) {
  if (k < 0) throw InvalidArgument("log_factorial: negative argument");
  if (k <= 20) return std::log(kFactorials[k]);
  return std::lgamma(static_cast<double>(k) + 1.0);
}

double factorial(int k) {
  if (k < 0) throw InvalidArgument("factorial: negative argument");
  if (k <= 20) return kFactorials[k];
  return std::exp(log_factorial(k));
}

double quantile(std::vector<double> xs, double p) {
  if (xs.empty()) throw InvalidArgument("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("quantile level outside [0,1]");
  std::sort(xs.begin(), xs.end());
  const double h = p * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

double median(std::vector<double> xs) { return quantile(std::move(xs), 0.5); }

}  // namespace npmle
