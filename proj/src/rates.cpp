#include "defisim/rates.hpp"

namespace defisim {

namespace {

void check_reserve_factor(Fixed psi) {
    if (psi < Fixed::zero() || psi >= Fixed::one())
        throw DomainError("reserve factor must lie in [0,1), got " + psi.str());
}

void check_utilization(Fixed u) {
    if (u < Fixed::zero() || u > Fixed::one())
        throw DomainError("utilization must lie in [0,1], got " + u.str());
}

} // namespace

LinearRateModel::LinearRateModel(Fixed alpha_, Fixed beta_, Fixed reserve_factor_)
    : alpha(alpha_), beta(beta_), reserve_factor(reserve_factor_) {
    if (alpha.is_negative())
        throw DomainError("rate model base rate must be >= 0, got " + alpha.str());
    if (beta <= Fixed::zero())
        throw DomainError("rate model slope must be > 0, got " + beta.str());
    check_reserve_factor(reserve_factor);
}

KinkedRateModel::KinkedRateModel(Fixed alpha_, Fixed beta_, Fixed gamma_,
                                 Fixed u_kink_, Fixed reserve_factor_)
    : alpha(alpha_), beta(beta_), gamma(gamma_), u_kink(u_kink_),
      reserve_factor(reserve_factor_) {
    if (alpha.is_negative())
        throw DomainError("rate model base rate must be >= 0, got " + alpha.str());
    if (beta <= Fixed::zero())
        throw DomainError("rate model slope must be > 0, got " + beta.str());
    if (gamma <= beta)
        throw DomainError("post-kink slope must exceed the pre-kink slope");
    if (u_kink <= Fixed::zero() || u_kink >= Fixed::one())
        throw DomainError("kink must lie strictly inside (0,1), got " + u_kink.str());
    check_reserve_factor(reserve_factor);
}

Fixed reserve_factor_of(const RateModel& model) {
    return std::visit([](const auto& m) { return m.reserve_factor; }, model);
}

Fixed borrow_rate(const RateModel& model, Fixed u) {
    check_utilization(u);
    if (const auto* lin = std::get_if<LinearRateModel>(&model))
        return lin->alpha + fmul(lin->beta, u);
    const auto& k = std::get<KinkedRateModel>(model);
    if (u <= k.u_kink)
        return k.alpha + fmul(k.beta, u);
    return k.alpha + fmul(k.beta, k.u_kink) + fmul(k.gamma, u - k.u_kink);
}

std::pair<Fixed, Fixed> supply_rates(const RateModel& model, Fixed u) {
    Fixed gross = fmul(borrow_rate(model, u), u);
    Fixed net = fmul(gross, Fixed::one() - reserve_factor_of(model));
    return {gross, net};
}

Fixed quoted_margin(const RateModel& model, Fixed u) {
    Fixed b = borrow_rate(model, u);
    Fixed net = fmul(fmul(b, u), Fixed::one() - reserve_factor_of(model));
    return b - net;
}

RateQuote quote(const RateModel& model, Fixed u) {
    Fixed b = borrow_rate(model, u);
    Fixed gross = fmul(b, u);
    Fixed net = fmul(gross, Fixed::one() - reserve_factor_of(model));
    return RateQuote{b, gross, net, b - net, u};
}

Fixed optimal_utilization(const LinearRateModel& model) {
    Fixed inv = fdiv(Fixed::one(), Fixed::one() - model.reserve_factor);
    Fixed ratio = fdiv(model.alpha, model.beta);
    Fixed half = Fixed::from_mantissa(Fixed::scale / 2);
    return clamp01(fmul(half, inv - ratio));
}

} // namespace defisim
