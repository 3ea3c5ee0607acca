#include "defisim/risk.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace defisim {

RiskBucketTable::RiskBucketTable(std::vector<RiskBucket> buckets, Fixed weight_above_last)
    : buckets_(std::move(buckets)), weight_above_last_(weight_above_last) {
    if (buckets_.empty())
        throw ValidationError("risk bucket table must have at least one bucket");
    for (std::size_t i = 0; i < buckets_.size(); ++i) {
        if (buckets_[i].weight.is_negative())
            throw ValidationError("risk weights must be >= 0");
        if (i > 0) {
            if (buckets_[i].health_upper_bound <= buckets_[i - 1].health_upper_bound)
                throw ValidationError("risk bucket bounds must be strictly increasing");
            if (buckets_[i].weight > buckets_[i - 1].weight)
                throw ValidationError("risk weights must be non-increasing in health");
        }
    }
    if (weight_above_last_ > buckets_.back().weight || weight_above_last_.is_negative())
        throw ValidationError("top risk weight must be non-increasing and >= 0");
}

const RiskBucketTable& RiskBucketTable::standard() {
    static const RiskBucketTable table(
        {
            {Fixed::parse("1"), Fixed::parse("1.5")},
            {Fixed::parse("1.33"), Fixed::parse("1")},
            {Fixed::parse("2"), Fixed::parse("0.5")},
            {Fixed::parse("10"), Fixed::parse("0.2")},
        },
        Fixed::zero());
    return table;
}

Fixed RiskBucketTable::weight_for(Fixed health) const {
    for (const auto& bucket : buckets_) {
        if (health <= bucket.health_upper_bound)
            return bucket.weight;
    }
    return weight_above_last_;
}

namespace {

std::map<std::string, const MarketSnapshot*> market_index(const ProtocolSnapshot& snap) {
    std::map<std::string, const MarketSnapshot*> index;
    for (const auto& m : snap.markets)
        index[m.asset] = &m;
    return index;
}

Fixed account_borrow_usd(const AccountSnapshot& account, const PriceTable& prices) {
    Fixed total = Fixed::zero();
    for (const auto& [mkt, amount] : account.borrow_underlying)
        total += fmul(amount, prices.price(mkt));
    return total;
}

} // namespace

Fixed snapshot_health(const AccountSnapshot& account, const ProtocolSnapshot& snap,
                      const PriceTable& prices) {
    Fixed borrows = account_borrow_usd(account, prices);
    if (borrows.is_zero())
        return kInfiniteHealth;
    auto index = market_index(snap);
    Fixed weighted = Fixed::zero();
    for (const auto& [mkt, amount] : account.supply_underlying) {
        auto it = index.find(mkt);
        if (it == index.end())
            throw ValidationError("account " + account.address +
                                  " references unknown market " + mkt);
        Fixed value = fmul(amount, prices.price(mkt));
        weighted += fmul(value, it->second->collateral_factor);
    }
    return fdiv(weighted, borrows);
}

Fixed risk_weighted_assets(const ProtocolSnapshot& snap, const PriceTable& prices,
                           const RiskBucketTable& buckets) {
    Fixed total = Fixed::zero();
    for (const auto& account : snap.accounts) {
        Fixed borrows = account_borrow_usd(account, prices);
        if (borrows.is_zero())
            continue;
        Fixed h = snapshot_health(account, snap, prices);
        total += fmul(borrows, buckets.weight_for(h));
    }
    return total;
}

std::optional<double> solvency_ratio(double reserves_usd, double rwa_usd) {
    if (rwa_usd <= 0)
        return std::nullopt;
    return reserves_usd / rwa_usd;
}

UcbMetrics ucb_metrics(const ProtocolSnapshot& snap, const PriceTable& prices,
                       Fixed reserves_usd) {
    UcbMetrics out;
    Fixed ucb = Fixed::zero();
    Fixed borrows_total = Fixed::zero();
    std::size_t borrowers = 0;
    std::size_t undercollateralized = 0;
    for (const auto& account : snap.accounts) {
        Fixed borrows = account_borrow_usd(account, prices);
        if (borrows.is_zero())
            continue;
        ++borrowers;
        borrows_total += borrows;
        if (snapshot_health(account, snap, prices) < Fixed::one()) {
            ++undercollateralized;
            ucb += borrows;
        }
    }
    out.ucb_usd = ucb;
    if (borrows_total > Fixed::zero())
        out.over_borrows = ucb.to_double() / borrows_total.to_double();
    if (reserves_usd > Fixed::zero())
        out.over_reserves = ucb.to_double() / reserves_usd.to_double();
    if (borrowers > 0)
        out.account_share =
            static_cast<double>(undercollateralized) / static_cast<double>(borrowers);
    return out;
}

ExPostRates expost_rates(const PeriodAccounting& acct) {
    ExPostRates out;
    if (acct.avg_loans_usd > 0)
        out.active = acct.interest_revenue_usd / acct.avg_loans_usd;
    if (acct.avg_deposits_usd > 0)
        out.passive = acct.interest_expense_usd / acct.avg_deposits_usd;
    if (out.active && out.passive)
        out.margin = *out.active - *out.passive;
    return out;
}

EarningsReport earnings(const PeriodAccounting& acct, std::optional<double> equity_usd,
                        double avg_borrows_usd, double reserves_usd) {
    EarningsReport out;
    out.operating_margin_usd = acct.interest_revenue_usd - acct.interest_expense_usd;
    if (avg_borrows_usd > 0)
        out.roa = out.operating_margin_usd / avg_borrows_usd;
    if (equity_usd && *equity_usd > 0) {
        out.roe = out.operating_margin_usd / *equity_usd;
        out.reserves_over_equity = reserves_usd / *equity_usd;
    }
    return out;
}

ShortfallEstimate collateral_expected_shortfall(std::span<const double> daily_prices,
                                                int horizon_days, double tail,
                                                double collateral_usd) {
    if (horizon_days < 1)
        throw DomainError("expected-shortfall horizon must be >= 1 day");
    if (!(tail > 0.0 && tail < 0.5))
        throw DomainError("expected-shortfall tail must lie in (0, 0.5)");
    if (daily_prices.size() < 250)
        throw ValidationError("price series too short for expected shortfall: " +
                              std::to_string(daily_prices.size()) + " < 250 points");
    std::size_t h = static_cast<std::size_t>(horizon_days);
    if (daily_prices.size() <= h)
        throw ValidationError("price series shorter than the return horizon");

    std::size_t n = daily_prices.size() - h;
    std::vector<double> returns(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(daily_prices[i] > 0))
            throw ValidationError("non-positive price at index " + std::to_string(i));
        returns[i] = daily_prices[i + h] / daily_prices[i] - 1.0;
    }
    std::size_t k = static_cast<std::size_t>(
        std::ceil(tail * static_cast<double>(n)));
    k = std::max<std::size_t>(1, std::min(k, n));
    std::sort(returns.begin(), returns.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i)
        sum += returns[i];
    ShortfallEstimate out;
    out.es_fraction = sum == 0.0 ? 0.0 : -sum / static_cast<double>(k);
    out.es_usd = out.es_fraction * collateral_usd;
    return out;
}

RiskReport build_risk_report(const ReportInputs& inputs) {
    if (!inputs.snapshot || !inputs.prices)
        throw ValidationError("risk report needs a snapshot and a price table");
    const ProtocolSnapshot& snap = *inputs.snapshot;
    const PriceTable& prices = *inputs.prices;
    const RiskBucketTable& buckets =
        inputs.buckets ? *inputs.buckets : RiskBucketTable::standard();

    RiskReport report;
    report.block = snap.block;

    Fixed borrows = Fixed::zero(), reserves = Fixed::zero(), collateral = Fixed::zero();
    for (const auto& m : snap.markets) {
        Fixed px = prices.price(m.asset);
        borrows += fmul(m.total_borrows, px);
        reserves += fmul(m.reserves, px);
        collateral += fmul(m.total_supply, px);
    }
    report.borrows_usd = borrows.to_double();
    report.reserves_usd = reserves.to_double();
    report.collateral_usd = collateral.to_double();
    report.equity_usd = inputs.equity_usd;

    report.rwa_usd = risk_weighted_assets(snap, prices, buckets);
    report.solvency = solvency_ratio(report.reserves_usd, report.rwa_usd.to_double());

    UcbMetrics ucb = ucb_metrics(snap, prices, reserves);
    report.ucb_usd = ucb.ucb_usd;
    report.ucb_over_borrows = ucb.over_borrows;
    report.ucb_over_reserves = ucb.over_reserves;
    report.ucb_account_share = ucb.account_share;

    if (inputs.accounting) {
        ExPostRates rates = expost_rates(*inputs.accounting);
        report.active_rate = rates.active;
        report.passive_rate = rates.passive;
        report.expost_margin = rates.margin;
        EarningsReport earn = earnings(*inputs.accounting, inputs.equity_usd,
                                       inputs.accounting->avg_loans_usd,
                                       report.reserves_usd);
        report.operating_margin_usd = earn.operating_margin_usd;
        report.roa = earn.roa;
        report.roe = earn.roe;
        report.reserves_over_equity = earn.reserves_over_equity;
    } else if (inputs.equity_usd && *inputs.equity_usd > 0) {
        report.reserves_over_equity = report.reserves_usd / *inputs.equity_usd;
    }

    if (!inputs.es_price_series.empty()) {
        auto es1 = collateral_expected_shortfall(inputs.es_price_series, 1,
                                                 inputs.es_tail, report.collateral_usd);
        auto es5 = collateral_expected_shortfall(inputs.es_price_series, 5,
                                                 inputs.es_tail, report.collateral_usd);
        report.collateral_es_1d = es1.es_fraction;
        report.collateral_es_1d_usd = es1.es_usd;
        report.collateral_es_5d = es5.es_fraction;
        report.collateral_es_5d_usd = es5.es_usd;
    }
    return report;
}

} // namespace defisim
