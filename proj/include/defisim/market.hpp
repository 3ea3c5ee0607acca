#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "defisim/fixed.hpp"
#include "defisim/rates.hpp"

namespace defisim {

/// floor(31,536,000 s / 13.15 s per block).
inline constexpr std::int64_t kDefaultBlocksPerYear = 2'398'174;

/// Sentinel health for accounts with no borrows.
inline constexpr Fixed kInfiniteHealth = Fixed::max();

/// Static per-market configuration. The reserve factor lives inside the rate
/// model (net supply rates depend on it) and is exposed here to keep a single
/// source of truth.
struct MarketParams {
    std::string asset;
    RateModel rate_model;
    Fixed collateral_factor;
    Fixed close_factor;
    Fixed liquidation_incentive;
    std::int64_t blocks_per_year = kDefaultBlocksPerYear;
    Fixed initial_exchange_rate = Fixed::from_mantissa(Fixed::scale / 50); // 0.02

    Fixed reserve_factor() const { return reserve_factor_of(rate_model); }
    void validate() const;
};

/// Evolving monetary aggregates of one market, in underlying units.
/// Monetary identity: total_supply = cash + total_borrows - reserves, exact
/// in fixed point after every operation.
struct MarketState {
    Fixed total_supply;
    Fixed total_borrows;
    Fixed reserves;
    Fixed cash;
    Fixed pool_token_supply;
    Fixed borrow_index = Fixed::one();
    std::int64_t last_accrual_block = 0;
};

struct Market {
    MarketParams params;
    MarketState state;
};

/// Borrow principal booked against the index value at the time of the last
/// balance-changing operation. Current balance = principal * index / snapshot.
struct BorrowPosition {
    Fixed principal;
    Fixed index_snapshot = Fixed::one();
};

struct Account {
    std::string address;
    std::map<std::string, Fixed> pool_tokens;
    std::map<std::string, BorrowPosition> borrows;
};

/// Per-asset USD prices at a block. The valuation numeraire for health checks
/// and analytics; market accounting itself stays in underlying units.
class PriceTable {
public:
    void set(const std::string& asset, Fixed price_usd);
    Fixed price(const std::string& asset) const;
    bool has(const std::string& asset) const { return prices_.count(asset) != 0; }
    const std::map<std::string, Fixed>& all() const { return prices_; }

private:
    std::map<std::string, Fixed> prices_;
};

/// One interest accrual, in underlying units of the market. reserve_share is
/// the part diverted to reserves; the rest went to suppliers.
struct AccrualEvent {
    std::string asset;
    std::int64_t from_block = 0;
    std::int64_t to_block = 0;
    Fixed interest;
    Fixed reserve_share;
};

struct MarketSnapshot {
    std::string asset;
    std::int64_t block = 0;
    Fixed total_supply;
    Fixed total_borrows;
    Fixed reserves;
    Fixed cash;
    Fixed pool_token_supply;
    Fixed borrow_index;
    Fixed exchange_rate;
    Fixed collateral_factor;
    Fixed close_factor;
    Fixed liquidation_incentive;
};

struct AccountSnapshot {
    std::string address;
    std::map<std::string, Fixed> pool_tokens;
    std::map<std::string, Fixed> supply_underlying;
    std::map<std::string, Fixed> borrow_underlying;
};

struct ProtocolSnapshot {
    std::int64_t block = 0;
    std::vector<MarketSnapshot> markets;   // sorted by asset
    std::vector<AccountSnapshot> accounts; // sorted by address
};

Fixed utilization(const MarketState& state);
Fixed exchange_rate(const MarketState& state, const MarketParams& params);

/// The pooled-lending state machine: markets, accounts, lazy interest
/// accrual, the health-check comptroller and liquidation. A Protocol is a
/// single logical state machine; mutations must be serialized by the caller.
/// Snapshots are plain values and may be shared across threads.
class Protocol {
public:
    void add_market(MarketParams params);
    bool has_market(const std::string& asset) const { return markets_.count(asset) != 0; }
    const Market& market(const std::string& asset) const;

    /// Replaces the rate curve / factors of a live market, accruing first so
    /// the old curve applies up to the current block.
    void update_market_params(const std::string& asset, MarketParams params);

    void set_block(std::int64_t block);
    std::int64_t block() const { return block_; }

    const Account* find_account(const std::string& address) const;
    const std::map<std::string, Account>& accounts() const { return accounts_; }

    void accrue(const std::string& asset);
    void accrue_all();

    void mint(const std::string& address, const std::string& asset, Fixed amount);
    void redeem(const std::string& address, const std::string& asset,
                Fixed pool_tokens, const PriceTable& prices);
    void borrow(const std::string& address, const std::string& asset, Fixed amount,
                const PriceTable& prices);
    /// Repays min(amount, outstanding balance); overpayment is not drawn.
    void repay(const std::string& address, const std::string& asset, Fixed amount);
    /// Repays part of `borrower`'s loan in repay_asset (capped by the close
    /// factor) and seizes pool tokens worth repay value * (1 + incentive)
    /// from the chosen collateral market.
    void liquidate(const std::string& liquidator, const std::string& borrower,
                   const std::string& repay_asset, const std::string& collateral_asset,
                   Fixed repay_amount, const PriceTable& prices);

    /// Index-adjusted borrow balance as of the last accrual of the market.
    Fixed borrow_balance(const std::string& address, const std::string& asset) const;
    /// Pool tokens valued at the current exchange rate, in underlying units.
    Fixed supply_underlying(const std::string& address, const std::string& asset) const;

    Fixed supply_value_usd(const std::string& address, const PriceTable& prices) const;
    Fixed weighted_collateral_usd(const std::string& address, const PriceTable& prices) const;
    Fixed borrow_value_usd(const std::string& address, const PriceTable& prices) const;

    /// Collateral-factor-weighted collateral value over borrow value;
    /// kInfiniteHealth when the account has no borrows.
    Fixed account_health(const std::string& address, const PriceTable& prices) const;

    ProtocolSnapshot snapshot() const;

    /// Accrual events since the last drain, in occurrence order.
    std::vector<AccrualEvent> drain_accrual_log();

private:
    Market& market_mut(const std::string& asset);
    Account& account_mut(const std::string& address);
    Fixed position_balance(const BorrowPosition& pos, const MarketState& state) const;
    void set_borrow_balance(Account& account, const std::string& asset, Fixed balance,
                            const MarketState& state);
    Fixed valued_borrows(const Account& acct, const PriceTable& prices) const;
    Fixed valued_weighted_collateral(const Account& acct, const PriceTable& prices) const;

    std::map<std::string, Market> markets_;
    std::map<std::string, Account> accounts_;
    std::vector<AccrualEvent> accrual_log_;
    std::int64_t block_ = 0;
};

} // namespace defisim
