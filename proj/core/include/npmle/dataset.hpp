#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "npmle/kernel.hpp"

namespace npmle {

// n observations of dimension d, stored row-major.
class Dataset {
 public:
  explicit Dataset(int d = 1) : d_(d) {}
  Dataset(int d, std::vector<double> values);

  int dim() const { return d_; }
  std::size_t size() const { return d_ == 0 ? 0 : values_.size() / static_cast<std::size_t>(d_); }
  bool empty() const { return values_.empty(); }

  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * static_cast<std::size_t>(d_), static_cast<std::size_t>(d_)};
  }
  const double* row_ptr(std::size_t i) const { return values_.data() + i * static_cast<std::size_t>(d_); }
  const std::vector<double>& values() const { return values_; }

  void push_back(std::span<const double> x);

  // Throws InvalidArgument naming the first offending row.
  void validate(const KernelSpec& kernel) const;

  // Concatenation of this dataset with itself `times` times.
  Dataset repeated(int times) const;

 private:
  int d_;
  std::vector<double> values_;
};

// Headerless CSV, d comma-separated columns per row. Poisson columns must
// parse as nonnegative integers; errors carry the 1-based line number.
Dataset parse_dataset_csv(std::istream& in, const KernelSpec& kernel);
Dataset read_dataset_csv(const std::string& path, const KernelSpec& kernel);
void write_dataset_csv(const std::string& path, const Dataset& data);

}  // namespace npmle
