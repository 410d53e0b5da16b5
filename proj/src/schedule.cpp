#include "ditcache/schedule.hpp"

#include <cmath>

#include "ditcache/errors.hpp"

namespace ditcache {

using ad::Tensor;

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t > t_train)
        throw ShapeError("schedule: training step " + std::to_string(t) + " out of range [0," +
                         std::to_string(t_train) + "]");
    return t == 0 ? 1.0 : alphas_bar[t - 1];
}

NoiseSchedule make_schedule(int t_train, double beta_start, double beta_end) {
    if (t_train < 2)
        throw ConfigError("schedule: t_train must be at least 2");
    if (beta_start <= 0.0 || beta_end >= 1.0 || beta_end < beta_start)
        throw ConfigError("schedule: betas must satisfy 0 < start <= end < 1");
    NoiseSchedule ns;
    ns.t_train = t_train;
    ns.betas.resize(t_train);
    ns.alphas_bar.resize(t_train);
    double prod = 1.0;
    for (int s = 0; s < t_train; s++) {
        ns.betas[s] = beta_start + (beta_end - beta_start) * s / (t_train - 1);
        prod *= 1.0 - ns.betas[s];
        ns.alphas_bar[s] = prod;
    }
    return ns;
}

Tensor ddim_step(const NoiseSchedule& ns, const Tensor& x, int t_hi, int t_lo,
                 const Tensor& eps) {
    if (t_hi <= t_lo || t_lo < 0)
        throw ShapeError("ddim_step: need t_hi > t_lo >= 0, got " + std::to_string(t_hi) +
                         " -> " + std::to_string(t_lo));
    if (x.shape() != eps.shape())
        throw ShapeError("ddim_step: x shape " + ad::shape_str(x.shape()) +
                         " != eps shape " + ad::shape_str(eps.shape()));
    const double ab_hi = ns.alpha_bar(t_hi);
    const double ab_lo = ns.alpha_bar(t_lo);
    if (ab_hi <= 0.0 || ab_lo <= 0.0)
        throw NumericError("ddim_step: nonpositive alpha_bar");
    const double s_hi = std::sqrt(ab_hi), s_lo = std::sqrt(ab_lo);
    const double n_hi = std::sqrt(1.0 - ab_hi), n_lo = std::sqrt(1.0 - ab_lo);

    const auto& xv = x.values();
    const auto& ev = eps.values();
    std::vector<double> out(xv.size());
    for (size_t i = 0; i < xv.size(); i++) {
        double x0 = (xv[i] - n_hi * ev[i]) / s_hi;
        out[i] = s_lo * x0 + n_lo * ev[i];
    }
    return Tensor::from(x.shape(), std::move(out));
}

Tensor euler_step(const Tensor& x, int t_hi, int t_lo, int t_train, const Tensor& velocity) {
    if (t_hi <= t_lo || t_lo < 0)
        throw ShapeError("euler_step: need t_hi > t_lo >= 0, got " + std::to_string(t_hi) +
                         " -> " + std::to_string(t_lo));
    if (x.shape() != velocity.shape())
        throw ShapeError("euler_step: x shape " + ad::shape_str(x.shape()) +
                         " != velocity shape " + ad::shape_str(velocity.shape()));
    const double dsigma = (static_cast<double>(t_lo) - t_hi) / t_train;
    const auto& xv = x.values();
    const auto& vv = velocity.values();
    std::vector<double> out(xv.size());
    for (size_t i = 0; i < xv.size(); i++)
        out[i] = xv[i] + dsigma * vv[i];
    return Tensor::from(x.shape(), std::move(out));
}

}  // namespace ditcache
