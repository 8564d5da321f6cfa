// SPDX-License-Identifier: Apache-2.0
#include "geovid/numkit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "geovid/errors.hpp"

namespace geovid::nk {

namespace {

double eval_scalar(const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
    double v = 0.0;
    try {
        v = f(x).item();
    } catch (const NumericError& e) {
        throw NumericError(std::string("grad_check: ") + e.what());
    }
    if (!std::isfinite(v)) throw NumericError("grad_check: function is not finite");
    return v;
}

} // namespace

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double step) {
    std::vector<double> base(x.data().begin(), x.data().end());
    const Tensor leaf = Tensor::parameter(x.shape(), base);
    const Tensor y = f(leaf);
    if (!std::isfinite(y.item())) throw NumericError("grad_check: function is not finite");
    const std::vector<double> analytic = backward(y).of(leaf);

    double worst = 0.0;
    std::vector<double> probe = base;
    for (std::size_t i = 0; i < base.size(); ++i) {
        probe[i] = base[i] + step;
        const double up = eval_scalar(f, Tensor::constant(x.shape(), probe));
        probe[i] = base[i] - step;
        const double down = eval_scalar(f, Tensor::constant(x.shape(), probe));
        probe[i] = base[i];
        const double numeric = (up - down) / (2.0 * step);
        worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i])));
    }
    return worst;
}

} // namespace geovid::nk
