#include "defisim/prices.hpp"

#include <cmath>
#include <random>

namespace defisim {

double inverse_normal_cdf(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw DomainError("inverse normal CDF argument must lie in (0,1)");

    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    if (p < p_low) {
        double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > 1.0 - p_low) {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    double q = p - 0.5;
    double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

PricePath PricePath::resolve(const PriceProcessConfig& config, int steps,
                             std::uint64_t seed) {
    if (steps <= 0)
        throw ValidationError("price path needs at least one step");
    PricePath path;
    path.tables_.resize(static_cast<std::size_t>(steps));

    switch (config.kind) {
    case PriceKind::Constant: {
        if (config.initial.empty())
            throw ValidationError("constant price process has no prices");
        for (auto& table : path.tables_)
            table = config.initial;
        break;
    }
    case PriceKind::Path: {
        if (config.series.empty())
            throw ValidationError("price path process has no series");
        for (const auto& [asset, series] : config.series) {
            if (series.empty())
                throw ValidationError("price series for " + asset + " is empty");
            for (int s = 0; s < steps; ++s) {
                std::size_t idx = std::min<std::size_t>(s, series.size() - 1);
                Fixed p = series[idx];
                if (p <= Fixed::zero())
                    throw ValidationError("non-positive price for " + asset);
                path.tables_[s][asset] = p;
            }
        }
        break;
    }
    case PriceKind::RandomWalk: {
        if (config.initial.empty())
            throw ValidationError("random-walk price process has no starting prices");
        std::mt19937_64 rng(seed);
        std::map<std::string, double> level;
        for (const auto& [asset, p0] : config.initial) {
            if (p0 <= Fixed::zero())
                throw ValidationError("non-positive starting price for " + asset);
            level[asset] = p0.to_double();
            path.tables_[0][asset] = p0;
        }
        for (int s = 1; s < steps; ++s) {
            for (auto& [asset, px] : level) {
                double mu = 0.0, sigma = 0.0;
                if (auto it = config.drift_per_step.find(asset);
                    it != config.drift_per_step.end())
                    mu = it->second;
                if (auto it = config.vol_per_step.find(asset);
                    it != config.vol_per_step.end())
                    sigma = it->second;
                double u = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
                double z = inverse_normal_cdf(u);
                double factor = 1.0 + mu + sigma * z;
                if (factor < 0.01)
                    factor = 0.01; // keeps generated prices positive
                px *= factor;
                path.tables_[s][asset] = Fixed::from_double(px);
            }
        }
        break;
    }
    }
    return path;
}

const std::map<std::string, Fixed>& PricePath::at(int step) const {
    if (step < 0 || step >= steps())
        throw PreconditionError("price path step " + std::to_string(step) +
                                " out of range");
    return tables_[static_cast<std::size_t>(step)];
}

} // namespace defisim
