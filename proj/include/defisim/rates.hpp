#pragma once

#include <utility>
#include <variant>

#include "defisim/fixed.hpp"

namespace defisim {

/// Borrow rate alpha + beta*u. Rates are annualized fractions; conversion to
/// per-block factors happens in the market engine, nowhere else.
struct LinearRateModel {
    Fixed alpha;
    Fixed beta;
    Fixed reserve_factor;

    LinearRateModel(Fixed alpha, Fixed beta, Fixed reserve_factor);
};

/// Two-slope model: alpha + beta*u below the kink, slope gamma above it.
/// Continuous at u_kink by construction.
struct KinkedRateModel {
    Fixed alpha;
    Fixed beta;
    Fixed gamma;
    Fixed u_kink;
    Fixed reserve_factor;

    KinkedRateModel(Fixed alpha, Fixed beta, Fixed gamma, Fixed u_kink,
                    Fixed reserve_factor);
};

using RateModel = std::variant<LinearRateModel, KinkedRateModel>;

Fixed reserve_factor_of(const RateModel& model);

/// One point on the curve. Invariants: gross = borrow*u, net = gross*(1-psi),
/// margin = borrow - net, all in truncating fixed point.
struct RateQuote {
    Fixed borrow_rate;
    Fixed gross_supply_rate;
    Fixed net_supply_rate;
    Fixed quoted_margin;
    Fixed utilization;
};

/// Annualized borrow rate at utilization u in [0,1] (inclusive: a fully
/// utilized market is a defined point on the curve).
Fixed borrow_rate(const RateModel& model, Fixed u);

/// (gross, net) supply rates: b*u and b*u*(1-psi).
std::pair<Fixed, Fixed> supply_rates(const RateModel& model, Fixed u);

/// Quoted intermediation margin b - s_n, computed from the definitions.
Fixed quoted_margin(const RateModel& model, Fixed u);

RateQuote quote(const RateModel& model, Fixed u);

/// Margin-maximizing utilization (1/(1-psi) - alpha/beta)/2, clamped to [0,1].
Fixed optimal_utilization(const LinearRateModel& model);

} // namespace defisim
