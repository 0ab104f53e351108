#include "prilora/grad_check.hpp"

#include <cmath>

#include "prilora/errors.hpp"

namespace prilora {

GradCheckReport grad_check(const ScalarFunction& f, std::span<const Tensor> params, double eps) {
    if (!(eps > 0.0 && eps <= 1e-3)) throw ParameterError("grad_check: eps must lie in (0, 1e-3]");

    std::vector<Tensor> work(params.begin(), params.end());
    std::vector<Tensor> analytic;
    const double f0 = f(work, &analytic);
    if (!std::isfinite(f0)) throw NumericError("grad_check: function value is not finite");
    if (analytic.size() != work.size()) throw DimensionError("grad_check: gradient count != parameter count");

    GradCheckReport report;
    for (std::size_t p = 0; p < work.size(); ++p) {
        if (analytic[p].shape() != work[p].shape()) {
            throw DimensionError("grad_check: gradient " + std::to_string(p) + " has shape " +
                                 shape_string(analytic[p].shape()) + ", parameter has " +
                                 shape_string(work[p].shape()));
        }
        if (!analytic[p].all_finite()) throw NumericError("grad_check: analytic gradient is not finite");
        for (std::size_t i = 0; i < work[p].numel(); ++i) {
            const double saved = work[p][i];
            work[p][i] = saved + eps;
            const double fp = f(work, nullptr);
            work[p][i] = saved - eps;
            const double fm = f(work, nullptr);
            if (!std::isfinite(fp) || !std::isfinite(fm)) {
                throw NumericError("grad_check: perturbed function value is not finite");
            }
            const double numeric = (fp - fm) / (2.0 * eps);
            work[p][i] = saved;
            const double err = std::abs(analytic[p][i] - numeric) / std::max(std::abs(numeric), 1e-8);
            ++report.checked;
            if (err > report.max_rel_error || report.checked == 1) {
                report.max_rel_error = err;
                report.worst_param = p;
                report.worst_index = i;
                report.analytic = analytic[p][i];
                report.numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace prilora
