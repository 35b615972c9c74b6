#include "cpmp/sampling.hpp"

#include "cpmp/error.hpp"

namespace cpmp {

double radical_inverse(std::size_t index, unsigned base) {
  double result = 0.0;
  double f = 1.0 / base;
  while (index > 0) {
    result += f * static_cast<double>(index % base);
    index /= base;
    f /= base;
  }
  return result;
}

Eigen::VectorXd halton(std::size_t index, std::size_t dim) {
  static constexpr unsigned kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
  if (dim > std::size(kPrimes)) throw InputError("halton sequence supports at most 16 dimensions");
  Eigen::VectorXd x(static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < dim; ++i) x(static_cast<Eigen::Index>(i)) = radical_inverse(index, kPrimes[i]);
  return x;
}

Eigen::VectorXd halton_in_box(std::size_t index, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  if (lo.size() != hi.size()) throw InputError("box bounds differ in length");
  const Eigen::VectorXd u = halton(index, static_cast<std::size_t>(lo.size()));
  return lo.array() + u.array() * (hi - lo).array();
}

}  // namespace cpmp
