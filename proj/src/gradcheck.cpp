#include "emoq/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace emoq {

namespace {

double eval_scalar(const std::function<Tensor()>& f) {
    Tensor y = f();
    if (y.numel() != 1) {
        throw OracleError("finite_difference_check: function returned shape " + shape_str(y.shape()));
    }
    const double v = y.item();
    if (!std::isfinite(v)) throw OracleError("finite_difference_check: function value is not finite");
    return v;
}

}  // namespace

GradCheckResult finite_difference_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                                        double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_difference_check: h must be positive");
    std::vector<Tensor> leaves = params;
    for (Tensor& p : leaves) {
        p.set_requires_grad(true);
        p.zero_grad();
    }

    std::vector<std::vector<double>> analytic(leaves.size());
    {
        Tensor y = f();
        if (y.numel() != 1 || !std::isfinite(y.item())) {
            throw OracleError("finite_difference_check: function value is not a finite scalar");
        }
        y.backward();
        for (std::size_t k = 0; k < leaves.size(); ++k) {
            analytic[k] = leaves[k].has_grad() ? std::vector<double>(leaves[k].grad().begin(), leaves[k].grad().end())
                                               : std::vector<double>(leaves[k].numel(), 0.0);
        }
    }

    GradCheckResult result;
    NoGradGuard no_grad;
    for (std::size_t k = 0; k < leaves.size(); ++k) {
        auto values = leaves[k].mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + h;
            const double up = eval_scalar(f);
            values[i] = saved - h;
            const double down = eval_scalar(f);
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[k][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            const double rel = std::abs(a - numeric) / denom;
            ++result.checked;
            if (rel > result.max_rel_error || result.checked == 1) {
                result.max_rel_error = rel;
                result.worst_param = k;
                result.worst_index = i;
                result.worst_analytic = a;
                result.worst_numeric = numeric;
            }
        }
    }
    return result;
}

}  // namespace emoq
