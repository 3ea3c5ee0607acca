#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "defisim/market.hpp"
#include "defisim/prices.hpp"
#include "defisim/risk.hpp"

namespace defisim {

struct PassiveSupplier {
    std::string market;
    Fixed amount;
};

/// Deposits collateral once at step 0, then keeps borrow value at
/// target_ratio * collateral value whenever the observed ratio drifts out of
/// [target - band, target + band]. Only borrows and repays; the collateral
/// position is never touched again. Borrowed funds are held outside the
/// protocol in the borrowed asset; repays draw on those holdings.
struct TargetLtvBorrower {
    std::string collateral_market;
    std::string borrow_market;
    Fixed collateral_amount;
    Fixed target_ratio;
    Fixed rebalance_band;
};

/// Repays up to the close-factor cap on every account with health < 1 and
/// acts when expected profit (repay value * incentive - gas) clears
/// min_profit. Unprofitable dust accounts are left alone.
struct LiquidatorPolicy {
    Fixed gas_cost_usd;
    Fixed min_profit_usd;
};

enum class PresetKind {
    PassiveCollateral, // supply the volatile asset
    PassiveStable,     // supply the stablecoin
    CollateralBorrower, // supply volatile, borrow 50% in the same asset, hold as cash
    LeveredCollateral,  // supply volatile, borrow 50% in stable, re-supply volatile
};

/// Lump-sum investment strategy executed at step 0 and held. Conversions
/// between USD and assets happen at the oracle price with no friction;
/// residual USD stays as external cash so net value is exact.
struct PresetPolicy {
    PresetKind kind;
    Fixed initial_usd;
    std::string volatile_market;
    std::string stable_market;
};

struct AgentPolicy {
    std::string id;
    std::variant<PassiveSupplier, TargetLtvBorrower, LiquidatorPolicy, PresetPolicy> policy;
};

PresetKind preset_kind_from_name(const std::string& name);
std::string preset_name(PresetKind kind);

/// Expands a named investment preset into its agent policies.
std::vector<AgentPolicy> strategy_preset(const std::string& name, Fixed initial_usd,
                                         const std::string& volatile_market,
                                         const std::string& stable_market,
                                         const std::string& agent_id);

struct MarketSeed {
    MarketParams params;
    Fixed seed_supply; // deposited by a genesis account at block 0
};

/// Scheduled market-parameter change; absent fields keep their value.
struct ParamChange {
    std::int64_t block = 0;
    std::string market;
    std::optional<RateModel> rate_model;
    std::optional<Fixed> collateral_factor;
    std::optional<Fixed> close_factor;
    std::optional<Fixed> liquidation_incentive;
};

/// Everything describing one run: markets, roster, price process, horizon
/// and cadence, seed, scheduled events.
struct Scenario {
    std::vector<MarketSeed> markets;
    std::vector<AgentPolicy> agents;
    PriceProcessConfig prices;
    std::int64_t horizon_blocks = 0;
    std::int64_t blocks_per_step = kDefaultBlocksPerYear / 365;
    std::uint64_t seed = 0;
    std::vector<ParamChange> events;

    void validate() const;
};

struct MarketMetricsRow {
    std::string asset;
    Fixed total_supply;
    Fixed total_borrows;
    Fixed reserves;
    Fixed cash;
    Fixed utilization;
    Fixed borrow_rate;
    Fixed net_supply_rate;
    Fixed exchange_rate;
    Fixed price_usd;
};

struct StepMetrics {
    int step = 0;
    std::int64_t block = 0;
    std::vector<MarketMetricsRow> markets;
    // net position value per preset agent, in roster order
    std::vector<std::pair<std::string, Fixed>> preset_net_values;
};

struct LedgerRow {
    int step = 0;
    std::int64_t block = 0;
    std::string agent;
    Fixed net_value_usd;
    Fixed interest_earned_usd;
    Fixed interest_paid_usd;
};

/// Derived, never authoritative: every row is recomputable from the
/// snapshot stream plus the agents' external holdings.
struct StrategyLedger {
    std::vector<LedgerRow> rows;
};

struct ActionRecord {
    int step = 0;
    std::int64_t block = 0;
    std::string agent;
    std::string action;
    std::string detail;
    bool ok = true;
    std::string reason;
};

struct LiquidationAction {
    std::string borrower;
    std::string repay_market;
    std::string collateral_market;
    Fixed repay_amount;
    Fixed expected_profit_usd;
};

/// Plans one liquidation per undercollateralized account: the largest borrow
/// market is repaid up to the close-factor cap (also capped by seizable
/// collateral in the largest collateral market), kept only when expected
/// profit clears the policy's threshold. Actions sorted by descending profit.
std::vector<LiquidationAction> liquidator_step(const LiquidatorPolicy& policy,
                                               const ProtocolSnapshot& snap,
                                               const PriceTable& prices);

struct MarketExPost {
    std::string asset;
    ExPostRates rates;
};

struct RunResult {
    std::vector<StepMetrics> metrics;
    StrategyLedger ledger;
    std::vector<RiskReport> reports; // one per step
    ProtocolSnapshot final_snapshot;
    std::vector<ActionRecord> actions;
    PeriodAccounting accounting; // whole-run totals and step-averaged stocks
    std::vector<MarketExPost> market_expost; // per-market realized rates
};

/// Advances block time step by step: update prices, apply scheduled events,
/// run agents in class order (suppliers, borrowers, liquidators; each
/// sub-ordered by id), book accruals, record metrics. Rejected agent actions
/// become no-op records; arithmetic failures abort with the block number.
RunResult run(const Scenario& scenario);

} // namespace defisim
