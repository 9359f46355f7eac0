#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace npmle {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Neumaier-compensated accumulator. Summation order still matters for the
// last bit, so callers that need bitwise determinism must add in a fixed order.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  CompensatedSum& operator+=(double x) {
    add(x);
    return *this;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double compensated_sum(std::span<const double> xs);

// log(sum exp(xs)); returns -inf for an empty or all -inf input.
double log_sum_exp(std::span<const double> xs);

// log(k!) exact through a table up to 20!, lgamma beyond.
double log_factorial(int k);

// k! as a double; overflows to +inf above 170.
double factorial(int k);

// Quantile with linear interpolation between order statistics (type 7).
double quantile(std::vector<double> xs, double p);
double median(std::vector<double> xs);

}  // namespace npmle
