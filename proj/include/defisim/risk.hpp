#pragma once

#include <optional>
#include <span>
#include <vector>

#include "defisim/market.hpp"

namespace defisim {

struct RiskBucket {
    Fixed health_upper_bound; // inclusive
    Fixed weight;
};

/// Step function mapping account health to a Basel-style risk weight.
/// Bounds are strictly increasing and inclusive; weights non-increasing.
class RiskBucketTable {
public:
    RiskBucketTable(std::vector<RiskBucket> buckets, Fixed weight_above_last);

    /// The five-bucket table: (<=1 -> 1.50), (<=1.33 -> 1.00), (<=2 -> 0.50),
    /// (<=10 -> 0.20), above -> 0.
    static const RiskBucketTable& standard();

    Fixed weight_for(Fixed health) const;
    const std::vector<RiskBucket>& buckets() const { return buckets_; }
    Fixed weight_above_last() const { return weight_above_last_; }

private:
    std::vector<RiskBucket> buckets_;
    Fixed weight_above_last_;
};

/// Health of a snapshot account row; kInfiniteHealth when it has no borrows.
Fixed snapshot_health(const AccountSnapshot& account, const ProtocolSnapshot& snap,
                      const PriceTable& prices);

/// Sum over accounts of borrow value times the account's bucket weight, USD.
Fixed risk_weighted_assets(const ProtocolSnapshot& snap, const PriceTable& prices,
                           const RiskBucketTable& buckets);

/// reserves/rwa; absent when rwa is zero.
std::optional<double> solvency_ratio(double reserves_usd, double rwa_usd);

struct UcbMetrics {
    Fixed ucb_usd;
    std::optional<double> over_borrows;
    std::optional<double> over_reserves;
    std::optional<double> account_share; // among accounts with positive borrows
};

/// Undercollateralized borrows: accounts with health strictly below 1.
UcbMetrics ucb_metrics(const ProtocolSnapshot& snap, const PriceTable& prices,
                       Fixed reserves_usd);

/// Per-period USD flows and average stocks backing the ex-post rates.
struct PeriodAccounting {
    double interest_revenue_usd = 0;
    double interest_expense_usd = 0;
    double avg_loans_usd = 0;
    double avg_deposits_usd = 0;
};

struct ExPostRates {
    std::optional<double> active;
    std::optional<double> passive;
    std::optional<double> margin;
};

ExPostRates expost_rates(const PeriodAccounting& acct);

struct EarningsReport {
    double operating_margin_usd = 0;
    std::optional<double> roa;
    std::optional<double> roe;
    std::optional<double> reserves_over_equity;
};

EarningsReport earnings(const PeriodAccounting& acct, std::optional<double> equity_usd,
                        double avg_borrows_usd, double reserves_usd);

struct ShortfallEstimate {
    double es_fraction = 0;
    double es_usd = 0;
};

/// Expected shortfall of overlapping horizon returns on a daily price series:
/// the negated mean of the worst ceil(tail*N) returns, applied to the
/// collateral stock. Series must have at least 250 points.
ShortfallEstimate collateral_expected_shortfall(std::span<const double> daily_prices,
                                                int horizon_days, double tail,
                                                double collateral_usd);

struct RiskReport {
    std::int64_t block = 0;
    double borrows_usd = 0;
    double reserves_usd = 0;
    double collateral_usd = 0;
    std::optional<double> equity_usd;
    Fixed rwa_usd;
    Fixed ucb_usd;
    std::optional<double> solvency;
    std::optional<double> ucb_over_borrows;
    std::optional<double> ucb_over_reserves;
    std::optional<double> ucb_account_share;
    std::optional<double> active_rate;
    std::optional<double> passive_rate;
    std::optional<double> expost_margin;
    std::optional<double> operating_margin_usd;
    std::optional<double> roa;
    std::optional<double> roe;
    std::optional<double> reserves_over_equity;
    std::optional<double> collateral_es_1d;
    std::optional<double> collateral_es_5d;
    std::optional<double> collateral_es_1d_usd;
    std::optional<double> collateral_es_5d_usd;
};

struct ReportInputs {
    const ProtocolSnapshot* snapshot = nullptr;
    const PriceTable* prices = nullptr;
    const RiskBucketTable* buckets = nullptr; // standard() when null
    std::optional<PeriodAccounting> accounting;
    std::optional<double> equity_usd;
    std::span<const double> es_price_series; // daily; empty disables ES
    double es_tail = 0.01;
};

RiskReport build_risk_report(const ReportInputs& inputs);

} // namespace defisim
