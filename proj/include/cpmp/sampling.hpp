#pragma once

// Deterministic quasi-random points for sampled verification.

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace cpmp {

/// Radical inverse of `index` in `base`.
double radical_inverse(std::size_t index, unsigned base);

/// Halton point number `index` (starting at 1) in [0,1)^dim. dim ≤ 16.
Eigen::VectorXd halton(std::size_t index, std::size_t dim);

/// Halton point mapped into the box [lo, hi].
Eigen::VectorXd halton_in_box(std::size_t index, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);

}  // namespace cpmp
