#include "npmle/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "npmle/error.hpp"

namespace npmle {

Dataset::Dataset(int d, std::vector<double> values) : d_(d), values_(std::move(values)) {
  if (d_ < 1) throw InvalidArgument("dataset: dimension must be positive");
  if (values_.size() % static_cast<std::size_t>(d_) != 0) {
    throw InvalidArgument("dataset: value count is not a multiple of the dimension");
  }
}

void Dataset::push_back(std::span<const double> x) {
  if (static_cast<int>(x.size()) != d_) throw InvalidArgument("dataset: row has wrong dimension");
  values_.insert(values_.end(), x.begin(), x.end());
}

void Dataset::validate(const KernelSpec& kernel) const {
  if (d_ != kernel.d) throw InvalidArgument("dataset dimension does not match the kernel");
  for (std::size_t i = 0; i < size(); ++i) {
    try {
      kernel.check_observation(row(i));
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("row " + std::to_string(i + 1) + ": " + e.what());
    }
  }
}

Dataset Dataset::repeated(int times) const {
  std::vector<double> v;
  v.reserve(values_.size() * static_cast<std::size_t>(times));
  for (int t = 0; t < times; ++t) v.insert(v.end(), values_.begin(), values_.end());
  return Dataset(d_, std::move(v));
}

namespace {

std::string trim(std::string_view s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

}  // namespace

Dataset parse_dataset_csv(std::istream& in, const KernelSpec& kernel) {
  kernel.validate();
  Dataset data(kernel.d);
  std::string line;
  std::size_t lineno = 0;
  std::vector<double> row(kernel.d);
  while (std::getline(in, line)) {
    ++lineno;
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto fail = [&](const std::string& why) {
      throw InvalidArgument("line " + std::to_string(lineno) + ": " + why);
    };
    std::size_t col = 0;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = body.find(',', start);
      const std::string field =
          trim(std::string_view(body).substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (col >= static_cast<std::size_t>(kernel.d)) fail("too many columns");
      double v = 0.0;
      const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
      if (field.empty() || res.ec != std::errc() || res.ptr != field.data() + field.size()) {
        fail("cannot parse '" + field + "' as a number");
      }
      if (!std::isfinite(v)) fail("non-finite value");
      if (!kernel.is_gaussian(static_cast<int>(col)) && (v < 0.0 || v != std::floor(v))) {
        fail("Poisson column " + std::to_string(col + 1) + " is not a nonnegative integer");
      }
      row[col++] = v;
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (col != static_cast<std::size_t>(kernel.d)) fail("expected " + std::to_string(kernel.d) + " columns");
    data.push_back(row);
  }
  if (data.empty()) throw InvalidArgument("dataset is empty");
  return data;
}

Dataset read_dataset_csv(const std::string& path, const KernelSpec& kernel) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open dataset '" + path + "'");
  return parse_dataset_csv(in, kernel);
}

void write_dataset_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write dataset '" + path + "'");
  out << std::setprecision(17);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = data.row(i);
    for (int l = 0; l < data.dim(); ++l) {
      if (l) out << ',';
      out << r[l];
    }
    out << '\n';
  }
}

}  // namespace npmle
