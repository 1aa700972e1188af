#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sflda {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IndexList = std::vector<Index>;

// Bad input: malformed files, violated preconditions, inconsistent flags.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numerical failure: non-convergence, loss of definiteness.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Sorted indices of the non-zero entries of v.
inline IndexList support_of(const Vector& v) {
  IndexList out;
  for (Index j = 0; j < v.size(); ++j)
    if (v[j] != 0.0) out.push_back(j);
  return out;
}

}  // namespace sflda
