#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace mslearn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Shortest exact decimal form used by every serializer, so that
// parse-then-rewrite is byte-identical.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

constexpr double kPi = 3.14159265358979323846;
constexpr double kSqrt2Pi = 2.50662827463100050242;

// Thrown when an implicit enumeration would exceed its configured cap.
// Carries the offending count and a granularity suggestion that would fit.
struct CapacityError : std::runtime_error {
  std::size_t needed = 0;
  double required_upsilon = 0.0;
  using std::runtime_error::runtime_error;
  CapacityError(std::size_t n, double req)
      : std::runtime_error(
            "enumeration needs " + std::to_string(n) +
            " points; coarsen granularity to about " + std::to_string(req)),
        needed(n),
        required_upsilon(req) {}
};

}  // namespace mslearn
