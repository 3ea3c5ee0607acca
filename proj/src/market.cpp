#include "defisim/market.hpp"

#include <utility>

namespace defisim {

void MarketParams::validate() const {
    if (asset.empty())
        throw ValidationError("market asset id must not be empty");
    if (collateral_factor <= Fixed::zero() || collateral_factor >= Fixed::one())
        throw ValidationError("market " + asset + ": collateral factor must lie in (0,1)");
    if (close_factor <= Fixed::zero() || close_factor > Fixed::one())
        throw ValidationError("market " + asset + ": close factor must lie in (0,1]");
    if (liquidation_incentive.is_negative())
        throw ValidationError("market " + asset + ": liquidation incentive must be >= 0");
    if (blocks_per_year <= 0)
        throw ValidationError("market " + asset + ": blocks per year must be positive");
    if (initial_exchange_rate <= Fixed::zero())
        throw ValidationError("market " + asset + ": initial exchange rate must be positive");
}

void PriceTable::set(const std::string& asset, Fixed price_usd) {
    if (price_usd <= Fixed::zero())
        throw ValidationError("price for " + asset + " must be positive, got " + price_usd.str());
    prices_[asset] = price_usd;
}

Fixed PriceTable::price(const std::string& asset) const {
    auto it = prices_.find(asset);
    if (it == prices_.end())
        throw ValidationError("no price for asset " + asset);
    return it->second;
}

Fixed utilization(const MarketState& state) {
    if (state.total_supply <= Fixed::zero())
        return Fixed::zero();
    return fdiv(state.total_borrows, state.total_supply);
}

Fixed exchange_rate(const MarketState& state, const MarketParams& params) {
    if (state.pool_token_supply.is_zero())
        return params.initial_exchange_rate;
    return fdiv(state.cash + state.total_borrows - state.reserves, state.pool_token_supply);
}

void Protocol::add_market(MarketParams params) {
    params.validate();
    if (markets_.count(params.asset))
        throw ValidationError("market " + params.asset + " already exists");
    std::string asset = params.asset;
    Market m{std::move(params), MarketState{}};
    m.state.last_accrual_block = block_;
    markets_.emplace(std::move(asset), std::move(m));
}

const Market& Protocol::market(const std::string& asset) const {
    auto it = markets_.find(asset);
    if (it == markets_.end())
        throw ValidationError("unknown market " + asset);
    return it->second;
}

Market& Protocol::market_mut(const std::string& asset) {
    auto it = markets_.find(asset);
    if (it == markets_.end())
        throw ValidationError("unknown market " + asset);
    return it->second;
}

void Protocol::update_market_params(const std::string& asset, MarketParams params) {
    if (params.asset != asset)
        throw ValidationError("parameter update names market " + params.asset +
                              " but targets " + asset);
    params.validate();
    accrue(asset);
    market_mut(asset).params = std::move(params);
}

void Protocol::set_block(std::int64_t block) {
    if (block < block_)
        throw PreconditionError("block regression: " + std::to_string(block) +
                                " < " + std::to_string(block_));
    block_ = block;
}

const Account* Protocol::find_account(const std::string& address) const {
    auto it = accounts_.find(address);
    return it == accounts_.end() ? nullptr : &it->second;
}

Account& Protocol::account_mut(const std::string& address) {
    auto it = accounts_.find(address);
    if (it == accounts_.end()) {
        it = accounts_.emplace(address, Account{address, {}, {}}).first;
    }
    return it->second;
}

Fixed Protocol::position_balance(const BorrowPosition& pos, const MarketState& state) const {
    if (pos.principal.is_zero())
        return Fixed::zero();
    return fdiv(fmul(pos.principal, state.borrow_index), pos.index_snapshot);
}

void Protocol::set_borrow_balance(Account& account, const std::string& asset, Fixed balance,
                                  const MarketState& state) {
    if (balance.is_negative())
        throw ArithmeticError("negative borrow balance for " + account.address);
    if (balance.is_zero()) {
        account.borrows.erase(asset);
    } else {
        account.borrows[asset] = BorrowPosition{balance, state.borrow_index};
    }
}

void Protocol::accrue(const std::string& asset) {
    Market& m = market_mut(asset);
    MarketState& s = m.state;
    if (block_ < s.last_accrual_block)
        throw PreconditionError("accrual block regression in market " + asset);
    std::int64_t delta = block_ - s.last_accrual_block;
    if (delta == 0)
        return;
    std::int64_t from = s.last_accrual_block;
    s.last_accrual_block = block_;
    if (s.total_borrows.is_zero())
        return;

    Fixed b = borrow_rate(m.params.rate_model, utilization(s));
    Fixed factor = fdiv(fmul(b, Fixed::from_int(delta)),
                        Fixed::from_int(m.params.blocks_per_year));
    Fixed interest = fmul(s.total_borrows, factor);
    if (interest.is_zero())
        return;
    Fixed reserve_share = fmul(interest, m.params.reserve_factor());
    s.total_borrows += interest;
    s.reserves += reserve_share;
    // The supplier share is interest - reserve_share (not interest*(1-psi)),
    // so the monetary identity stays exact under truncation.
    s.total_supply += interest - reserve_share;
    s.borrow_index = fmul(s.borrow_index, Fixed::one() + factor);
    accrual_log_.push_back(AccrualEvent{asset, from, block_, interest, reserve_share});
}

void Protocol::accrue_all() {
    for (auto& [asset, m] : markets_) {
        (void)m;
        accrue(asset);
    }
}

void Protocol::mint(const std::string& address, const std::string& asset, Fixed amount) {
    if (amount <= Fixed::zero())
        throw PreconditionError("mint amount must be positive");
    accrue(asset);
    Market& m = market_mut(asset);
    Fixed rate = exchange_rate(m.state, m.params);
    Fixed minted = fdiv(amount, rate);
    m.state.cash += amount;
    m.state.total_supply += amount;
    m.state.pool_token_supply += minted;
    Account& acct = account_mut(address);
    acct.pool_tokens[asset] += minted;
}

namespace {

/// Un-reserved cash available for withdrawal or lending. Equals
/// total_supply - total_borrows by the monetary identity.
Fixed market_liquidity(const MarketState& s) {
    return s.total_supply - s.total_borrows;
}

} // namespace

Fixed Protocol::valued_borrows(const Account& acct, const PriceTable& prices) const {
    Fixed total = Fixed::zero();
    for (const auto& [mkt, pos] : acct.borrows)
        total += fmul(position_balance(pos, market(mkt).state), prices.price(mkt));
    return total;
}

Fixed Protocol::valued_weighted_collateral(const Account& acct,
                                           const PriceTable& prices) const {
    Fixed total = Fixed::zero();
    for (const auto& [mkt, tok] : acct.pool_tokens) {
        const Market& m = market(mkt);
        Fixed value = fmul(fmul(tok, exchange_rate(m.state, m.params)), prices.price(mkt));
        total += fmul(value, m.params.collateral_factor);
    }
    return total;
}

void Protocol::redeem(const std::string& address, const std::string& asset,
                      Fixed pool_tokens, const PriceTable& prices) {
    if (pool_tokens <= Fixed::zero())
        throw PreconditionError("redeem amount must be positive");
    accrue(asset);
    Market& m = market_mut(asset);
    Account& acct = account_mut(address);
    Fixed held = acct.pool_tokens.count(asset) ? acct.pool_tokens[asset] : Fixed::zero();
    if (held < pool_tokens)
        throw PreconditionError(address + " holds " + held.str() + " " + asset +
                                " pool tokens, cannot redeem " + pool_tokens.str());
    Fixed rate = exchange_rate(m.state, m.params);
    Fixed underlying = fmul(pool_tokens, rate);
    if (underlying > market_liquidity(m.state))
        throw LiquidityError("market " + asset + " cannot fund redeem of " +
                             underlying.str());

    if (!acct.borrows.empty()) {
        Account trial = acct;
        trial.pool_tokens[asset] = held - pool_tokens;
        if (valued_weighted_collateral(trial, prices) < valued_borrows(trial, prices))
            throw ComptrollerError("redeem would leave " + address + " undercollateralized");
    }

    acct.pool_tokens[asset] = held - pool_tokens;
    if (acct.pool_tokens[asset].is_zero())
        acct.pool_tokens.erase(asset);
    m.state.pool_token_supply -= pool_tokens;
    m.state.cash -= underlying;
    m.state.total_supply -= underlying;
}

void Protocol::borrow(const std::string& address, const std::string& asset, Fixed amount,
                      const PriceTable& prices) {
    if (amount <= Fixed::zero())
        throw PreconditionError("borrow amount must be positive");
    accrue(asset);
    Market& m = market_mut(asset);
    if (amount > market_liquidity(m.state))
        throw LiquidityError("market " + asset + " has liquidity " +
                             market_liquidity(m.state).str() + ", cannot lend " +
                             amount.str());

    Account& acct = account_mut(address);
    Fixed balance = Fixed::zero();
    if (auto it = acct.borrows.find(asset); it != acct.borrows.end())
        balance = position_balance(it->second, m.state);

    Account trial = acct;
    set_borrow_balance(trial, asset, balance + amount, m.state);
    if (valued_weighted_collateral(trial, prices) < valued_borrows(trial, prices))
        throw ComptrollerError(address + " lacks collateral to borrow " + amount.str() +
                               " " + asset);

    set_borrow_balance(acct, asset, balance + amount, m.state);
    m.state.cash -= amount;
    m.state.total_borrows += amount;
}

void Protocol::repay(const std::string& address, const std::string& asset, Fixed amount) {
    if (amount <= Fixed::zero())
        throw PreconditionError("repay amount must be positive");
    accrue(asset);
    Market& m = market_mut(asset);
    Account& acct = account_mut(address);
    auto it = acct.borrows.find(asset);
    if (it == acct.borrows.end())
        return;
    Fixed balance = position_balance(it->second, m.state);
    Fixed effective = fmin(amount, balance);
    // Per-account balances can exceed the pooled stock by truncation dust;
    // never drive total_borrows negative.
    Fixed transfer = fmin(effective, m.state.total_borrows);
    set_borrow_balance(acct, asset, balance - effective, m.state);
    m.state.cash += transfer;
    m.state.total_borrows -= transfer;
}

void Protocol::liquidate(const std::string& liquidator, const std::string& borrower,
                         const std::string& repay_asset, const std::string& collateral_asset,
                         Fixed repay_amount, const PriceTable& prices) {
    if (repay_amount <= Fixed::zero())
        throw PreconditionError("liquidation repay amount must be positive");
    if (liquidator == borrower)
        throw PreconditionError("self-liquidation is not allowed");
    accrue(repay_asset);
    if (collateral_asset != repay_asset)
        accrue(collateral_asset);

    Market& rm = market_mut(repay_asset);
    Market& cm = market_mut(collateral_asset);
    Account& debtor = account_mut(borrower);

    Fixed borrows = valued_borrows(debtor, prices);
    if (borrows.is_zero() || valued_weighted_collateral(debtor, prices) >= borrows)
        throw ComptrollerError(borrower + " is healthy, cannot be liquidated");

    auto pos_it = debtor.borrows.find(repay_asset);
    Fixed balance = pos_it == debtor.borrows.end()
                        ? Fixed::zero()
                        : position_balance(pos_it->second, rm.state);
    Fixed cap = fmul(rm.params.close_factor, balance);
    if (repay_amount > cap)
        throw ComptrollerError("repay " + repay_amount.str() + " exceeds close-factor cap " +
                               cap.str() + " in market " + repay_asset);

    Fixed repay_value = fmul(repay_amount, prices.price(repay_asset));
    Fixed seize_value = fmul(repay_value, Fixed::one() + cm.params.liquidation_incentive);
    Fixed seize_underlying = fdiv(seize_value, prices.price(collateral_asset));
    Fixed coll_rate = exchange_rate(cm.state, cm.params);
    Fixed seize_tokens = fdiv(seize_underlying, coll_rate);

    Fixed held = debtor.pool_tokens.count(collateral_asset)
                     ? debtor.pool_tokens[collateral_asset]
                     : Fixed::zero();
    if (held < seize_tokens)
        throw ComptrollerError(borrower + " holds too little " + collateral_asset +
                               " collateral to seize " + seize_underlying.str() +
                               "; pick another collateral market");

    set_borrow_balance(debtor, repay_asset, balance - repay_amount, rm.state);
    Fixed transfer = fmin(repay_amount, rm.state.total_borrows);
    rm.state.cash += transfer;
    rm.state.total_borrows -= transfer;

    debtor.pool_tokens[collateral_asset] = held - seize_tokens;
    if (debtor.pool_tokens[collateral_asset].is_zero())
        debtor.pool_tokens.erase(collateral_asset);
    account_mut(liquidator).pool_tokens[collateral_asset] += seize_tokens;
}

Fixed Protocol::borrow_balance(const std::string& address, const std::string& asset) const {
    const Account* acct = find_account(address);
    if (!acct)
        return Fixed::zero();
    auto it = acct->borrows.find(asset);
    if (it == acct->borrows.end())
        return Fixed::zero();
    return position_balance(it->second, market(asset).state);
}

Fixed Protocol::supply_underlying(const std::string& address, const std::string& asset) const {
    const Account* acct = find_account(address);
    if (!acct)
        return Fixed::zero();
    auto it = acct->pool_tokens.find(asset);
    if (it == acct->pool_tokens.end())
        return Fixed::zero();
    const Market& m = market(asset);
    return fmul(it->second, exchange_rate(m.state, m.params));
}

Fixed Protocol::supply_value_usd(const std::string& address, const PriceTable& prices) const {
    const Account* acct = find_account(address);
    if (!acct)
        return Fixed::zero();
    Fixed total = Fixed::zero();
    for (const auto& [mkt, tok] : acct->pool_tokens) {
        const Market& m = market(mkt);
        total += fmul(fmul(tok, exchange_rate(m.state, m.params)), prices.price(mkt));
    }
    return total;
}

Fixed Protocol::weighted_collateral_usd(const std::string& address,
                                        const PriceTable& prices) const {
    const Account* acct = find_account(address);
    return acct ? valued_weighted_collateral(*acct, prices) : Fixed::zero();
}

Fixed Protocol::borrow_value_usd(const std::string& address, const PriceTable& prices) const {
    const Account* acct = find_account(address);
    return acct ? valued_borrows(*acct, prices) : Fixed::zero();
}

Fixed Protocol::account_health(const std::string& address, const PriceTable& prices) const {
    Fixed borrows = borrow_value_usd(address, prices);
    if (borrows.is_zero())
        return kInfiniteHealth;
    return fdiv(weighted_collateral_usd(address, prices), borrows);
}

ProtocolSnapshot Protocol::snapshot() const {
    ProtocolSnapshot snap;
    snap.block = block_;
    for (const auto& [asset, m] : markets_) {
        MarketSnapshot ms;
        ms.asset = asset;
        ms.block = m.state.last_accrual_block;
        ms.total_supply = m.state.total_supply;
        ms.total_borrows = m.state.total_borrows;
        ms.reserves = m.state.reserves;
        ms.cash = m.state.cash;
        ms.pool_token_supply = m.state.pool_token_supply;
        ms.borrow_index = m.state.borrow_index;
        ms.exchange_rate = exchange_rate(m.state, m.params);
        ms.collateral_factor = m.params.collateral_factor;
        ms.close_factor = m.params.close_factor;
        ms.liquidation_incentive = m.params.liquidation_incentive;
        snap.markets.push_back(std::move(ms));
    }
    for (const auto& [address, acct] : accounts_) {
        AccountSnapshot as;
        as.address = address;
        for (const auto& [mkt, tok] : acct.pool_tokens) {
            if (tok.is_zero())
                continue;
            as.pool_tokens[mkt] = tok;
            as.supply_underlying[mkt] = supply_underlying(address, mkt);
        }
        for (const auto& [mkt, pos] : acct.borrows) {
            Fixed bal = position_balance(pos, market(mkt).state);
            if (!bal.is_zero())
                as.borrow_underlying[mkt] = bal;
        }
        if (!as.pool_tokens.empty() || !as.borrow_underlying.empty())
            snap.accounts.push_back(std::move(as));
    }
    return snap;
}

std::vector<AccrualEvent> Protocol::drain_accrual_log() {
    std::vector<AccrualEvent> out;
    out.swap(accrual_log_);
    return out;
}

} // namespace defisim
