#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mboot/error.hpp"
#include "mboot/format.hpp"

namespace mboot {

// Fixed sample: n responses and the n x p matrix whose rows are the
// regressors Psi_i^T. Immutable after construction.
class Dataset {
 public:
  Dataset(Eigen::VectorXd y, Eigen::MatrixXd psi) : y_(std::move(y)), psi_(std::move(psi)) {
    if (y_.size() < 1) throw InvalidModel("dataset: need at least one observation");
    if (psi_.cols() < 1) throw InvalidModel("dataset: need at least one regressor column");
    if (psi_.rows() != y_.size()) {
      throw InvalidModel("dataset: psi has " + std::to_string(psi_.rows()) + " rows but y has " +
                         std::to_string(y_.size()) + " entries");
    }
    if (!y_.allFinite() || !psi_.allFinite()) throw InvalidModel("dataset: non-finite entry");
  }

  const Eigen::VectorXd& y() const noexcept { return y_; }
  const Eigen::MatrixXd& psi() const noexcept { return psi_; }
  std::size_t n() const noexcept { return static_cast<std::size_t>(y_.size()); }
  std::size_t p() const noexcept { return static_cast<std::size_t>(psi_.cols()); }

 private:
  Eigen::VectorXd y_;
  Eigen::MatrixXd psi_;
};

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

// CSV layout: header `y,psi_0,...,psi_{p-1}`, one observation per line.
inline Dataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidModel("dataset csv: empty input");
  auto header = detail::split_commas(line);
  if (header.size() < 2 || detail::trim(header[0]) != "y") {
    throw InvalidModel("dataset csv: header must be y,psi_0,...");
  }
  const std::size_t p = header.size() - 1;
  for (std::size_t j = 0; j < p; ++j) {
    if (detail::trim(header[j + 1]) != "psi_" + std::to_string(j)) {
      throw InvalidModel("dataset csv: expected column psi_" + std::to_string(j));
    }
  }
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_commas(line);
    if (fields.size() != p + 1) {
      throw InvalidModel("dataset csv: row " + std::to_string(rows + 1) + " has " +
                         std::to_string(fields.size()) + " fields, expected " +
                         std::to_string(p + 1));
    }
    for (auto f : fields) {
      try {
        values.push_back(parse_double(f));
      } catch (const std::invalid_argument& e) {
        throw InvalidModel(std::string("dataset csv: ") + e.what());
      }
    }
    ++rows;
  }
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows));
  Eigen::MatrixXd psi(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < rows; ++i) {
    y(static_cast<Eigen::Index>(i)) = values[i * (p + 1)];
    for (std::size_t j = 0; j < p; ++j) {
      psi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i * (p + 1) + 1 + j];
    }
  }
  return Dataset(std::move(y), std::move(psi));
}

inline Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidModel("dataset csv: cannot open " + path);
  return read_dataset_csv(in);
}

inline void write_dataset_csv(std::ostream& out, const Dataset& data) {
  out << "y";
  for (std::size_t j = 0; j < data.p(); ++j) out << ",psi_" << j;
  out << '\n';
  for (Eigen::Index i = 0; i < data.psi().rows(); ++i) {
    out << format_double(data.y()(i));
    for (Eigen::Index j = 0; j < data.psi().cols(); ++j) out << ',' << format_double(data.psi()(i, j));
    out << '\n';
  }
}

}  // namespace mboot
