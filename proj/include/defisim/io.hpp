#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "defisim/sim.hpp"

namespace defisim {

/// Daily per-asset price series on a shared date axis.
struct PriceSeries {
    std::vector<std::string> dates; // ISO-8601, consecutive days
    std::map<std::string, std::vector<Fixed>> values;

    std::vector<double> series_double(const std::string& asset) const;
};

/// Loads CSV `date,asset,price_usd`. Missing interior/trailing days are
/// forward-filled with a warning on stderr; parse errors carry line numbers.
PriceSeries load_prices(const std::string& path);

/// A market/account snapshot standing in for live API or subgraph data,
/// with optional period accounting and equity attached.
struct Fixture {
    ProtocolSnapshot snapshot;
    PriceTable prices;
    std::optional<double> equity_usd;
    std::optional<PeriodAccounting> accounting;
    // per-market realized rates, when the accounts carry accrued interest
    std::vector<MarketExPost> market_expost;
};

Fixture load_fixture(const std::string& path, double tolerance = 1e-6);
Fixture parse_fixture_json(const nlohmann::json& doc, const std::string& context,
                           double tolerance = 1e-6);

/// Engine snapshot export; load_fixture accepts exactly this document.
nlohmann::json snapshot_json(const ProtocolSnapshot& snap, const PriceTable* prices);

Scenario load_scenario(const std::string& path);
Scenario parse_scenario_json(const nlohmann::json& doc, const std::string& base_dir);

RateModel parse_rate_model(const nlohmann::json& j, const std::string& path,
                           Fixed reserve_factor);
/// Model file for the `rates` subcommand: the model object with its
/// reserve_factor inline.
RateModel load_rate_model(const std::string& path);

std::string metrics_csv(const std::vector<StepMetrics>& metrics);
std::string ledger_csv(const StrategyLedger& ledger);
std::string actions_csv(const std::vector<ActionRecord>& actions);

/// Two row blocks: USD levels, then ratios in percent.
std::string report_csv(const RiskReport& report);
/// Per-market quarterly-style table: active/passive/margin in percent.
std::string expost_csv(const std::vector<MarketExPost>& rows);
/// Fractions with explicit unit suffixes in the field names.
nlohmann::json report_json(const RiskReport& report);

/// Curve samples on a uniform utilization grid plus a trailing u_star row.
std::string rates_csv(const RateModel& model, int grid_points);

} // namespace defisim
