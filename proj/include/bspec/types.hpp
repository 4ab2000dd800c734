#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace bspec {

using Real = double;
using Complex = std::complex<double>;

using ArrayXr = Eigen::ArrayXd;
using ArrayXc = Eigen::ArrayXcd;
using VectorXr = Eigen::VectorXd;
using VectorXc = Eigen::VectorXcd;
using MatrixXr = Eigen::MatrixXd;
using MatrixXc = Eigen::MatrixXcd;
using Vector2r = Eigen::Vector2d;
using Vector3r = Eigen::Vector3d;

inline constexpr Real kPi = 3.14159265358979323846264338327950288;

/// Numerical self-check failed during construction or assembly.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace bspec
