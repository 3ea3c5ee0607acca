#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "defisim/fixed.hpp"

namespace defisim {

enum class PriceKind { Constant, Path, RandomWalk };

struct PriceProcessConfig {
    PriceKind kind = PriceKind::Constant;
    /// Constant values, or starting points for the random walk.
    std::map<std::string, Fixed> initial;
    /// Path kind: per-asset step series; steps past the end hold the last value.
    std::map<std::string, std::vector<Fixed>> series;
    /// RandomWalk kind: per-step drift and volatility per asset.
    std::map<std::string, double> drift_per_step;
    std::map<std::string, double> vol_per_step;
};

/// Step-indexed price tables, resolved eagerly so a run's prices are fixed
/// before any market activity. Same config and seed give the same path.
class PricePath {
public:
    static PricePath resolve(const PriceProcessConfig& config, int steps,
                             std::uint64_t seed);

    const std::map<std::string, Fixed>& at(int step) const;
    int steps() const { return static_cast<int>(tables_.size()); }

private:
    std::vector<std::map<std::string, Fixed>> tables_;
};

/// Inverse standard-normal CDF (Acklam's rational approximation),
/// |relative error| < 1.2e-9. Argument must lie strictly inside (0,1).
double inverse_normal_cdf(double p);

} // namespace defisim
