#pragma once

#include "emoq/tensor.hpp"

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace emoq {

class OracleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_param = 0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t checked = 0;
};

/// Compares the tape gradient of a scalar function against central
/// differences (f(θ+h) - f(θ-h)) / 2h for every element of every parameter.
///
/// `f` must rebuild its graph from `params` on each call and be
/// deterministic. Relative error uses max(|analytic|, |numeric|, 1e-8) as the
/// denominator. Throws OracleError if f is non-finite anywhere it is sampled.
GradCheckResult finite_difference_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                                        double h = 1e-5);

}  // namespace emoq
