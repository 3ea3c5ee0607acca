#include "defisim/sim.hpp"

#include <algorithm>

namespace defisim {

namespace {

const std::string kSeedAccount = "__seed__";

Fixed half() { return Fixed::from_mantissa(Fixed::scale / 2); }

const MarketSeed* find_market(const Scenario& sc, const std::string& asset) {
    for (const auto& ms : sc.markets)
        if (ms.params.asset == asset)
            return &ms;
    return nullptr;
}

} // namespace

PresetKind preset_kind_from_name(const std::string& name) {
    if (name == "passive_collateral")
        return PresetKind::PassiveCollateral;
    if (name == "passive_stable")
        return PresetKind::PassiveStable;
    if (name == "collateral_borrower")
        return PresetKind::CollateralBorrower;
    if (name == "levered_collateral")
        return PresetKind::LeveredCollateral;
    throw ValidationError("unknown strategy preset '" + name + "'");
}

std::string preset_name(PresetKind kind) {
    switch (kind) {
    case PresetKind::PassiveCollateral: return "passive_collateral";
    case PresetKind::PassiveStable: return "passive_stable";
    case PresetKind::CollateralBorrower: return "collateral_borrower";
    case PresetKind::LeveredCollateral: return "levered_collateral";
    }
    throw DomainError("invalid preset kind");
}

std::vector<AgentPolicy> strategy_preset(const std::string& name, Fixed initial_usd,
                                         const std::string& volatile_market,
                                         const std::string& stable_market,
                                         const std::string& agent_id) {
    if (initial_usd <= Fixed::zero())
        throw ValidationError("preset initial investment must be positive");
    PresetPolicy preset{preset_kind_from_name(name), initial_usd, volatile_market,
                        stable_market};
    std::string id = agent_id.empty() ? name : agent_id;
    return {AgentPolicy{id, preset}};
}

void Scenario::validate() const {
    if (horizon_blocks <= 0)
        throw ValidationError("scenario horizon must be positive");
    if (blocks_per_step <= 0)
        throw ValidationError("scenario blocks_per_step must be positive");
    if (markets.empty())
        throw ValidationError("scenario defines no markets");
    for (const auto& ms : markets) {
        ms.params.validate();
        if (ms.seed_supply.is_negative())
            throw ValidationError("market " + ms.params.asset +
                                  ": seed supply must be >= 0");
        for (const auto& other : markets)
            if (&other != &ms && other.params.asset == ms.params.asset)
                throw ValidationError("duplicate market " + ms.params.asset);
    }

    auto require_market = [&](const std::string& asset, const std::string& who) {
        if (!find_market(*this, asset))
            throw ValidationError(who + " references undefined market " + asset);
    };
    std::vector<std::string> ids;
    for (const auto& agent : agents) {
        if (agent.id.empty())
            throw ValidationError("agent id must not be empty");
        if (agent.id == kSeedAccount)
            throw ValidationError("agent id '" + agent.id + "' is reserved");
        ids.push_back(agent.id);
        if (const auto* s = std::get_if<PassiveSupplier>(&agent.policy)) {
            require_market(s->market, "agent " + agent.id);
            if (s->amount <= Fixed::zero())
                throw ValidationError("agent " + agent.id + ": supply amount must be positive");
        } else if (const auto* b = std::get_if<TargetLtvBorrower>(&agent.policy)) {
            require_market(b->collateral_market, "agent " + agent.id);
            require_market(b->borrow_market, "agent " + agent.id);
            if (b->collateral_amount <= Fixed::zero())
                throw ValidationError("agent " + agent.id +
                                      ": collateral amount must be positive");
            if (b->rebalance_band.is_negative())
                throw ValidationError("agent " + agent.id + ": rebalance band must be >= 0");
            const MarketSeed* coll = find_market(*this, b->collateral_market);
            if (b->target_ratio >= coll->params.collateral_factor)
                throw ValidationError("agent " + agent.id +
                                      ": target ratio must stay below the collateral factor " +
                                      coll->params.collateral_factor.str());
            if (b->target_ratio <= Fixed::zero())
                throw ValidationError("agent " + agent.id + ": target ratio must be positive");
        } else if (const auto* l = std::get_if<LiquidatorPolicy>(&agent.policy)) {
            if (l->gas_cost_usd.is_negative())
                throw ValidationError("agent " + agent.id + ": gas cost must be >= 0");
        } else if (const auto* p = std::get_if<PresetPolicy>(&agent.policy)) {
            require_market(p->volatile_market, "agent " + agent.id);
            require_market(p->stable_market, "agent " + agent.id);
            if (p->initial_usd <= Fixed::zero())
                throw ValidationError("agent " + agent.id +
                                      ": preset initial investment must be positive");
        }
    }
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
        throw ValidationError("duplicate agent id");

    for (const auto& ev : events) {
        require_market(ev.market, "scheduled event");
        if (ev.block < 0)
            throw ValidationError("scheduled event block must be >= 0");
    }
}

std::vector<LiquidationAction> liquidator_step(const LiquidatorPolicy& policy,
                                               const ProtocolSnapshot& snap,
                                               const PriceTable& prices) {
    std::map<std::string, const MarketSnapshot*> markets;
    for (const auto& m : snap.markets)
        markets[m.asset] = &m;

    std::vector<LiquidationAction> actions;
    for (const auto& account : snap.accounts) {
        if (account.borrow_underlying.empty())
            continue;
        if (snapshot_health(account, snap, prices) >= Fixed::one())
            continue;

        // Largest borrow market by USD value; ties break on asset order.
        std::string repay_market;
        Fixed repay_balance, best_borrow_value;
        for (const auto& [mkt, amount] : account.borrow_underlying) {
            Fixed value = fmul(amount, prices.price(mkt));
            if (repay_market.empty() || value > best_borrow_value) {
                repay_market = mkt;
                repay_balance = amount;
                best_borrow_value = value;
            }
        }
        // Largest collateral market by USD value.
        std::string coll_market;
        Fixed best_coll_value;
        for (const auto& [mkt, amount] : account.supply_underlying) {
            Fixed value = fmul(amount, prices.price(mkt));
            if (coll_market.empty() || value > best_coll_value) {
                coll_market = mkt;
                best_coll_value = value;
            }
        }
        if (coll_market.empty())
            continue; // nothing to seize

        const MarketSnapshot& rm = *markets.at(repay_market);
        const MarketSnapshot& cm = *markets.at(coll_market);
        Fixed repay = fmul(rm.close_factor, repay_balance);
        // Cap by what the borrower's collateral can cover, so the planned
        // seize cannot exceed the held balance.
        Fixed max_repay_value =
            fdiv(best_coll_value, Fixed::one() + cm.liquidation_incentive);
        Fixed repay_price = prices.price(repay_market);
        Fixed cap = fdiv(max_repay_value, repay_price);
        repay = fmin(repay, cap);
        if (repay <= Fixed::zero())
            continue;

        Fixed repay_value = fmul(repay, repay_price);
        Fixed profit =
            fmul(repay_value, cm.liquidation_incentive) - policy.gas_cost_usd;
        if (profit < policy.min_profit_usd)
            continue;
        actions.push_back(
            LiquidationAction{account.address, repay_market, coll_market, repay, profit});
    }
    std::sort(actions.begin(), actions.end(),
              [](const LiquidationAction& a, const LiquidationAction& b) {
                  if (a.expected_profit_usd != b.expected_profit_usd)
                      return a.expected_profit_usd > b.expected_profit_usd;
                  return a.borrower < b.borrower;
              });
    return actions;
}

namespace {

struct AgentRuntime {
    const AgentPolicy* policy = nullptr;
    int agent_class = 0; // 0 suppliers, 1 borrowers/presets, 2 liquidators
    Fixed external_cash_usd;
    std::map<std::string, Fixed> external_assets;
    std::map<std::string, Fixed> contributed;  // net underlying supplied per market
    std::map<std::string, Fixed> drawn;        // net underlying borrowed per market
    Fixed repaid_value_usd;                    // liquidators: cumulative repay value
    Fixed gas_spent_usd;
};

class Runner {
public:
    explicit Runner(const Scenario& sc) : sc_(sc) {}

    RunResult go() {
        sc_.validate();
        for (const auto& ms : sc_.markets)
            protocol_.add_market(ms.params);

        steps_ = static_cast<int>(sc_.horizon_blocks / sc_.blocks_per_step) + 1;
        path_ = PricePath::resolve(sc_.prices, steps_, sc_.seed);

        build_roster();
        try {
            for (int s = 0; s < steps_; ++s)
                step(s);
            finish();
        } catch (const ArithmeticError& e) {
            throw ArithmeticError("run aborted at block " +
                                  std::to_string(protocol_.block()) + ": " + e.what());
        }
        result_.final_snapshot = protocol_.snapshot();
        result_.accounting = finished_accounting();
        for (const auto& ms : sc_.markets) {
            const std::string& asset = ms.params.asset;
            PeriodAccounting acc;
            acc.interest_revenue_usd = market_revenue_[asset];
            acc.interest_expense_usd = market_expense_[asset];
            if (weight_ > 0) {
                acc.avg_loans_usd = market_loans_[asset] / static_cast<double>(weight_);
                acc.avg_deposits_usd =
                    market_deposits_[asset] / static_cast<double>(weight_);
            }
            result_.market_expost.push_back(MarketExPost{asset, expost_rates(acc)});
        }
        return std::move(result_);
    }

private:
    void build_roster() {
        for (const auto& agent : sc_.agents) {
            AgentRuntime rt;
            rt.policy = &agent;
            if (std::holds_alternative<PassiveSupplier>(agent.policy))
                rt.agent_class = 0;
            else if (std::holds_alternative<LiquidatorPolicy>(agent.policy))
                rt.agent_class = 2;
            else
                rt.agent_class = 1;
            roster_.push_back(std::move(rt));
        }
        std::stable_sort(roster_.begin(), roster_.end(),
                         [](const AgentRuntime& a, const AgentRuntime& b) {
                             if (a.agent_class != b.agent_class)
                                 return a.agent_class < b.agent_class;
                             return a.policy->id < b.policy->id;
                         });
    }

    void record(int step, const std::string& agent, const std::string& action,
                const std::string& detail, bool ok, const std::string& reason) {
        result_.actions.push_back(ActionRecord{step, protocol_.block(), agent, action,
                                               detail, ok, reason});
    }

    template <typename Fn>
    bool attempt(int step, const std::string& agent, const std::string& action,
                 const std::string& detail, Fn&& fn) {
        try {
            fn();
            record(step, agent, action, detail, true, "");
            return true;
        } catch (const ArithmeticError&) {
            throw;
        } catch (const Error& e) {
            record(step, agent, action, detail, false, e.what());
            return false;
        }
    }

    void apply_events(std::int64_t prev_block, std::int64_t block) {
        for (const auto& ev : sc_.events) {
            if (ev.block <= prev_block || ev.block > block)
                continue;
            MarketParams params = protocol_.market(ev.market).params;
            if (ev.rate_model)
                params.rate_model = *ev.rate_model;
            if (ev.collateral_factor)
                params.collateral_factor = *ev.collateral_factor;
            if (ev.close_factor)
                params.close_factor = *ev.close_factor;
            if (ev.liquidation_incentive)
                params.liquidation_incentive = *ev.liquidation_incentive;
            protocol_.update_market_params(ev.market, params);
        }
    }

    void step(int s) {
        std::int64_t prev_block = s == 0 ? -1 : protocol_.block();
        std::int64_t block = static_cast<std::int64_t>(s) * sc_.blocks_per_step;
        protocol_.set_block(block);
        prices_ = PriceTable();
        for (const auto& [asset, px] : path_.at(s))
            prices_.set(asset, px);
        apply_events(prev_block, block);
        protocol_.accrue_all();

        if (s == 0) {
            for (const auto& ms : sc_.markets) {
                if (ms.seed_supply > Fixed::zero())
                    protocol_.mint(kSeedAccount, ms.params.asset, ms.seed_supply);
            }
        }

        for (auto& rt : roster_)
            act(rt, s);

        book_accruals();
        sample(s, block);
    }

    void act(AgentRuntime& rt, int s) {
        const std::string& id = rt.policy->id;
        if (const auto* sup = std::get_if<PassiveSupplier>(&rt.policy->policy)) {
            if (s == 0) {
                attempt(s, id, "mint", sup->market + " " + sup->amount.str(), [&] {
                    protocol_.mint(id, sup->market, sup->amount);
                    rt.contributed[sup->market] += sup->amount;
                });
            }
        } else if (const auto* bor = std::get_if<TargetLtvBorrower>(&rt.policy->policy)) {
            act_borrower(rt, *bor, s);
        } else if (const auto* liq = std::get_if<LiquidatorPolicy>(&rt.policy->policy)) {
            act_liquidator(rt, *liq, s);
        } else if (const auto* preset = std::get_if<PresetPolicy>(&rt.policy->policy)) {
            if (s == 0)
                act_preset(rt, *preset, s);
        }
    }

    void act_borrower(AgentRuntime& rt, const TargetLtvBorrower& pol, int s) {
        const std::string& id = rt.policy->id;
        if (s == 0) {
            bool ok = attempt(s, id, "mint",
                              pol.collateral_market + " " + pol.collateral_amount.str(), [&] {
                                  protocol_.mint(id, pol.collateral_market,
                                                 pol.collateral_amount);
                                  rt.contributed[pol.collateral_market] +=
                                      pol.collateral_amount;
                              });
            if (!ok)
                return;
        }
        Fixed coll_underlying = protocol_.supply_underlying(id, pol.collateral_market);
        Fixed coll_value = fmul(coll_underlying, prices_.price(pol.collateral_market));
        if (coll_value.is_zero())
            return;
        Fixed borrow_px = prices_.price(pol.borrow_market);
        Fixed debt = protocol_.borrow_balance(id, pol.borrow_market);
        Fixed debt_value = fmul(debt, borrow_px);
        Fixed ratio = fdiv(debt_value, coll_value);
        if (fabs(ratio - pol.target_ratio) <= pol.rebalance_band && s != 0)
            return;
        Fixed target_value = fmul(pol.target_ratio, coll_value);
        if (debt_value < target_value) {
            Fixed amount = fdiv(target_value - debt_value, borrow_px);
            if (amount <= Fixed::zero())
                return;
            attempt(s, id, "borrow", pol.borrow_market + " " + amount.str(), [&] {
                protocol_.borrow(id, pol.borrow_market, amount, prices_);
                rt.drawn[pol.borrow_market] += amount;
                rt.external_assets[pol.borrow_market] += amount;
            });
        } else if (debt_value > target_value) {
            Fixed amount = fdiv(debt_value - target_value, borrow_px);
            if (amount <= Fixed::zero())
                return;
            Fixed effective = fmin(amount, debt);
            attempt(s, id, "repay", pol.borrow_market + " " + effective.str(), [&] {
                protocol_.repay(id, pol.borrow_market, effective);
                rt.drawn[pol.borrow_market] -= effective;
                rt.external_assets[pol.borrow_market] -= effective;
            });
        }
    }

    void act_liquidator(AgentRuntime& rt, const LiquidatorPolicy& pol, int s) {
        const std::string& id = rt.policy->id;
        ProtocolSnapshot snap = protocol_.snapshot();
        for (const auto& action : liquidator_step(pol, snap, prices_)) {
            if (action.borrower == id)
                continue;
            attempt(s, id, "liquidate",
                    action.borrower + " repay " + action.repay_amount.str() + " " +
                        action.repay_market + " seize " + action.collateral_market,
                    [&] {
                        protocol_.liquidate(id, action.borrower, action.repay_market,
                                            action.collateral_market, action.repay_amount,
                                            prices_);
                        rt.repaid_value_usd +=
                            fmul(action.repay_amount, prices_.price(action.repay_market));
                        rt.gas_spent_usd += pol.gas_cost_usd;
                    });
        }
    }

    void act_preset(AgentRuntime& rt, const PresetPolicy& preset, int s) {
        const std::string& id = rt.policy->id;
        const std::string& vol = preset.volatile_market;
        const std::string& stable = preset.stable_market;
        const std::string& supply_market =
            preset.kind == PresetKind::PassiveStable ? stable : vol;

        Fixed supply_px = prices_.price(supply_market);
        Fixed amount = fdiv(preset.initial_usd, supply_px);
        bool ok = attempt(s, id, "mint", supply_market + " " + amount.str(), [&] {
            protocol_.mint(id, supply_market, amount);
            rt.contributed[supply_market] += amount;
            // keep un-invested truncation dust as cash so net value is exact
            rt.external_cash_usd += preset.initial_usd - fmul(amount, supply_px);
        });
        if (!ok)
            return;

        if (preset.kind == PresetKind::CollateralBorrower) {
            Fixed vol_px = prices_.price(vol);
            Fixed borrow_amount = fdiv(fmul(preset.initial_usd, half()), vol_px);
            attempt(s, id, "borrow", vol + " " + borrow_amount.str(), [&] {
                protocol_.borrow(id, vol, borrow_amount, prices_);
                rt.drawn[vol] += borrow_amount;
                // proceeds sold to USD immediately
                rt.external_cash_usd += fmul(borrow_amount, vol_px);
            });
        } else if (preset.kind == PresetKind::LeveredCollateral) {
            Fixed stable_px = prices_.price(stable);
            Fixed vol_px = prices_.price(vol);
            Fixed borrow_amount = fdiv(fmul(preset.initial_usd, half()), stable_px);
            bool borrowed = attempt(s, id, "borrow", stable + " " + borrow_amount.str(), [&] {
                protocol_.borrow(id, stable, borrow_amount, prices_);
                rt.drawn[stable] += borrow_amount;
            });
            if (!borrowed)
                return;
            Fixed proceeds = fmul(borrow_amount, stable_px);
            Fixed resupply = fdiv(proceeds, vol_px);
            attempt(s, id, "mint", vol + " " + resupply.str(), [&] {
                protocol_.mint(id, vol, resupply);
                rt.contributed[vol] += resupply;
                rt.external_cash_usd += proceeds - fmul(resupply, vol_px);
            });
        }
    }

    void book_accruals() {
        for (const auto& ev : protocol_.drain_accrual_log()) {
            Fixed px = prices_.price(ev.asset);
            double revenue = fmul(ev.interest, px).to_double();
            double expense = fmul(ev.interest - ev.reserve_share, px).to_double();
            revenue_usd_ += revenue;
            expense_usd_ += expense;
            market_revenue_[ev.asset] += revenue;
            market_expense_[ev.asset] += expense;
        }
    }

    void sample(int s, std::int64_t block) {
        StepMetrics metrics;
        metrics.step = s;
        metrics.block = block;
        double loans = 0, deposits = 0;
        for (const auto& ms : sc_.markets) {
            const Market& m = protocol_.market(ms.params.asset);
            MarketMetricsRow row;
            row.asset = ms.params.asset;
            row.total_supply = m.state.total_supply;
            row.total_borrows = m.state.total_borrows;
            row.reserves = m.state.reserves;
            row.cash = m.state.cash;
            row.utilization = utilization(m.state);
            RateQuote q = quote(m.params.rate_model, row.utilization);
            row.borrow_rate = q.borrow_rate;
            row.net_supply_rate = q.net_supply_rate;
            row.exchange_rate = exchange_rate(m.state, m.params);
            row.price_usd = prices_.price(ms.params.asset);
            double loans_usd = fmul(row.total_borrows, row.price_usd).to_double();
            double deposits_usd = fmul(row.total_supply, row.price_usd).to_double();
            loans += loans_usd;
            deposits += deposits_usd;
            market_loans_[ms.params.asset] += loans_usd;
            market_deposits_[ms.params.asset] += deposits_usd;
            metrics.markets.push_back(std::move(row));
        }
        std::sort(metrics.markets.begin(), metrics.markets.end(),
                  [](const MarketMetricsRow& a, const MarketMetricsRow& b) {
                      return a.asset < b.asset;
                  });

        loans_weighted_ += loans;
        deposits_weighted_ += deposits;
        ++weight_;

        for (const auto& rt : roster_) {
            LedgerRow row = ledger_row(rt, s, block);
            if (std::holds_alternative<PresetPolicy>(rt.policy->policy))
                metrics.preset_net_values.emplace_back(row.agent, row.net_value_usd);
            result_.ledger.rows.push_back(std::move(row));
        }
        result_.metrics.push_back(std::move(metrics));

        ProtocolSnapshot snap = protocol_.snapshot();
        ReportInputs inputs;
        inputs.snapshot = &snap;
        inputs.prices = &prices_;
        inputs.accounting = finished_accounting();
        result_.reports.push_back(build_risk_report(inputs));
    }

    LedgerRow ledger_row(const AgentRuntime& rt, int s, std::int64_t block) const {
        const std::string& id = rt.policy->id;
        Fixed supply_value = protocol_.supply_value_usd(id, prices_);
        Fixed borrow_value = protocol_.borrow_value_usd(id, prices_);
        Fixed external = rt.external_cash_usd;
        for (const auto& [asset, amount] : rt.external_assets)
            external += fmul(amount, prices_.price(asset));

        Fixed net = supply_value + external - borrow_value;
        Fixed earned = Fixed::zero();
        for (const auto& [mkt, contributed] : rt.contributed) {
            Fixed underlying = protocol_.supply_underlying(id, mkt);
            earned += fmul(underlying - contributed, prices_.price(mkt));
        }
        Fixed paid = Fixed::zero();
        for (const auto& [mkt, drawn] : rt.drawn) {
            Fixed debt = protocol_.borrow_balance(id, mkt);
            paid += fmul(debt - drawn, prices_.price(mkt));
        }
        if (rt.agent_class == 2)
            net = supply_value - rt.repaid_value_usd - rt.gas_spent_usd;
        return LedgerRow{s, block, id, net, earned, paid};
    }

    void finish() {
        std::int64_t last = static_cast<std::int64_t>(steps_ - 1) * sc_.blocks_per_step;
        if (last < sc_.horizon_blocks) {
            protocol_.set_block(sc_.horizon_blocks);
            protocol_.accrue_all();
            book_accruals();
            sample(steps_, sc_.horizon_blocks);
        }
    }

    PeriodAccounting finished_accounting() const {
        PeriodAccounting acc;
        acc.interest_revenue_usd = revenue_usd_;
        acc.interest_expense_usd = expense_usd_;
        if (weight_ > 0) {
            acc.avg_loans_usd = loans_weighted_ / static_cast<double>(weight_);
            acc.avg_deposits_usd = deposits_weighted_ / static_cast<double>(weight_);
        }
        return acc;
    }

    const Scenario& sc_;
    Protocol protocol_;
    PricePath path_;
    PriceTable prices_;
    std::vector<AgentRuntime> roster_;
    RunResult result_;
    int steps_ = 0;
    double revenue_usd_ = 0;
    double expense_usd_ = 0;
    double loans_weighted_ = 0;
    double deposits_weighted_ = 0;
    std::map<std::string, double> market_revenue_;
    std::map<std::string, double> market_expense_;
    std::map<std::string, double> market_loans_;
    std::map<std::string, double> market_deposits_;
    std::int64_t weight_ = 0;
};

} // namespace

RunResult run(const Scenario& scenario) {
    return Runner(scenario).go();
}

} // namespace defisim
