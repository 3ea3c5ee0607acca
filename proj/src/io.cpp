#include "defisim/io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace defisim {

namespace {

using nlohmann::json;

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

std::string fmt_optional(const std::optional<double>& v, double factor = 1.0) {
    return v ? fmt_double(*v * factor) : std::string();
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += "\"\"";
        else
            out.push_back(c);
    }
    out.push_back('"');
    return out;
}

// Days since 1970-01-01 (Howard Hinnant's civil-days algorithm).
long days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const long era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<long>(doe) - 719468;
}

void civil_from_days(long z, int& y, int& m, int& d) {
    z += 719468;
    const long era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    y = static_cast<int>(yoe) + static_cast<int>(era) * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y += m <= 2;
}

long parse_iso_date(const std::string& text, const std::string& where) {
    int y, m, d;
    char tail;
    if (std::sscanf(text.c_str(), "%4d-%2d-%2d%c", &y, &m, &d, &tail) != 3 ||
        text.size() != 10 || m < 1 || m > 12 || d < 1 || d > 31)
        throw ParseError(where + ": bad ISO-8601 date '" + text + "'");
    return days_from_civil(y, m, d);
}

std::string iso_date(long days) {
    int y, m, d;
    civil_from_days(days, y, m, d);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
    return buf;
}

// --- strict JSON access helpers -------------------------------------------

void expect_keys(const json& j, const std::string& path,
                 const std::set<std::string>& allowed) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!allowed.count(key))
            throw ValidationError(path + "." + key + ": unknown field");
    }
}

const json& require(const json& j, const std::string& path, const std::string& key) {
    auto it = j.find(key);
    if (it == j.end())
        throw ValidationError(path + "." + key + ": missing required field");
    return *it;
}

Fixed get_fixed(const json& j, const std::string& path) {
    if (j.is_string()) {
        try {
            return Fixed::parse(j.get<std::string>());
        } catch (const Error& e) {
            throw ValidationError(path + ": " + e.what());
        }
    }
    if (j.is_number_integer())
        return Fixed::from_int(j.get<std::int64_t>());
    throw ValidationError(path + ": expected a decimal string, got " +
                          std::string(j.type_name()));
}

Fixed get_fixed(const json& j, const std::string& path, const std::string& key) {
    return get_fixed(require(j, path, key), path + "." + key);
}

Fixed get_fixed_or(const json& j, const std::string& path, const std::string& key,
                   Fixed fallback) {
    auto it = j.find(key);
    return it == j.end() ? fallback : get_fixed(*it, path + "." + key);
}

std::int64_t get_int(const json& j, const std::string& path) {
    if (j.is_number_integer())
        return j.get<std::int64_t>();
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        try {
            std::size_t pos = 0;
            std::int64_t v = std::stoll(s, &pos);
            if (pos == s.size())
                return v;
        } catch (...) {
        }
        throw ValidationError(path + ": expected an integer, got '" + s + "'");
    }
    throw ValidationError(path + ": expected an integer, got " +
                          std::string(j.type_name()));
}

std::int64_t get_int(const json& j, const std::string& path, const std::string& key) {
    return get_int(require(j, path, key), path + "." + key);
}

std::string get_string(const json& j, const std::string& path, const std::string& key) {
    const json& v = require(j, path, key);
    if (!v.is_string())
        throw ValidationError(path + "." + key + ": expected a string");
    return v.get<std::string>();
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ParseError("cannot open " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
    return doc;
}

std::string dirname_of(const std::string& path) {
    auto pos = path.find_last_of('/');
    return pos == std::string::npos ? std::string(".") : path.substr(0, pos);
}

} // namespace

// --- prices ----------------------------------------------------------------

std::vector<double> PriceSeries::series_double(const std::string& asset) const {
    auto it = values.find(asset);
    if (it == values.end())
        throw ValidationError("price series has no asset " + asset);
    std::vector<double> out;
    out.reserve(it->second.size());
    for (Fixed v : it->second)
        out.push_back(v.to_double());
    return out;
}

PriceSeries load_prices(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ParseError("cannot open " + path);

    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line))
        throw ParseError(path + ": empty file");
    ++line_no;
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    if (line != "date,asset,price_usd")
        throw ParseError(path + ":1: expected header 'date,asset,price_usd', got '" +
                         line + "'");

    std::map<std::string, std::map<long, Fixed>> observed;
    long min_day = 0, max_day = 0;
    bool any = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        const std::string where = path + ":" + std::to_string(line_no);
        auto c1 = line.find(',');
        auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
        if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos)
            throw ParseError(where + ": expected 3 comma-separated fields");
        std::string date = line.substr(0, c1);
        std::string asset = line.substr(c1 + 1, c2 - c1 - 1);
        std::string value = line.substr(c2 + 1);
        if (asset.empty())
            throw ParseError(where + ": empty asset");
        long day = parse_iso_date(date, where);
        Fixed price;
        try {
            price = Fixed::parse(value);
        } catch (const Error& e) {
            throw ParseError(where + ": " + e.what());
        }
        if (price <= Fixed::zero())
            throw ValidationError(where + ": price for " + asset +
                                  " must be positive, got " + value);
        if (observed[asset].count(day))
            throw ValidationError(where + ": duplicate price for " + asset + " on " + date);
        observed[asset][day] = price;
        min_day = any ? std::min(min_day, day) : day;
        max_day = any ? std::max(max_day, day) : day;
        any = true;
    }
    if (!any)
        throw ParseError(path + ": no price rows");

    PriceSeries series;
    for (long day = min_day; day <= max_day; ++day)
        series.dates.push_back(iso_date(day));
    for (const auto& [asset, days] : observed) {
        if (days.begin()->first != min_day)
            throw ValidationError(path + ": asset " + asset + " has no price on " +
                                  iso_date(min_day) + ", the start of the series");
        std::vector<Fixed>& out = series.values[asset];
        Fixed last = days.begin()->second;
        for (long day = min_day; day <= max_day; ++day) {
            auto it = days.find(day);
            if (it != days.end()) {
                last = it->second;
            } else {
                std::cerr << "warning: " << path << ": no " << asset << " price on "
                          << iso_date(day) << ", forward-filling previous value\n";
            }
            out.push_back(last);
        }
    }
    return series;
}

// --- fixtures / snapshots ----------------------------------------------------

nlohmann::json snapshot_json(const ProtocolSnapshot& snap, const PriceTable* prices) {
    json doc;
    doc["block"] = snap.block;
    json markets = json::array();
    for (const auto& m : snap.markets) {
        json jm;
        jm["asset"] = m.asset;
        jm["total_supply"] = m.total_supply.str();
        jm["total_borrows"] = m.total_borrows.str();
        jm["reserves"] = m.reserves.str();
        jm["cash"] = m.cash.str();
        jm["pool_token_supply"] = m.pool_token_supply.str();
        jm["borrow_index"] = m.borrow_index.str();
        jm["exchange_rate"] = m.exchange_rate.str();
        jm["collateral_factor"] = m.collateral_factor.str();
        jm["close_factor"] = m.close_factor.str();
        jm["liquidation_incentive"] = m.liquidation_incentive.str();
        if (prices && prices->has(m.asset))
            jm["price_usd"] = prices->price(m.asset).str();
        markets.push_back(std::move(jm));
    }
    doc["markets"] = std::move(markets);
    json accounts = json::array();
    for (const auto& a : snap.accounts) {
        json ja;
        ja["address"] = a.address;
        json positions = json::array();
        std::set<std::string> touched;
        for (const auto& [mkt, v] : a.supply_underlying)
            touched.insert(mkt);
        for (const auto& [mkt, v] : a.borrow_underlying)
            touched.insert(mkt);
        for (const auto& mkt : touched) {
            json jp;
            jp["market"] = mkt;
            if (auto it = a.supply_underlying.find(mkt); it != a.supply_underlying.end())
                jp["supply_balance"] = it->second.str();
            if (auto it = a.pool_tokens.find(mkt); it != a.pool_tokens.end())
                jp["pool_tokens"] = it->second.str();
            if (auto it = a.borrow_underlying.find(mkt); it != a.borrow_underlying.end())
                jp["borrow_balance"] = it->second.str();
            positions.push_back(std::move(jp));
        }
        ja["positions"] = std::move(positions);
        accounts.push_back(std::move(ja));
    }
    doc["accounts"] = std::move(accounts);
    return doc;
}

Fixture parse_fixture_json(const json& doc, const std::string& context, double tolerance) {
    expect_keys(doc, context,
                {"block", "markets", "accounts", "equity_usd", "period",
                 "reconcile_tolerance"});
    Fixture fx;
    fx.snapshot.block = get_int(doc, context, "block");
    if (doc.count("reconcile_tolerance"))
        tolerance = get_fixed(doc, context, "reconcile_tolerance").to_double();

    const json& markets = require(doc, context, "markets");
    if (!markets.is_array() || markets.empty())
        throw ValidationError(context + ".markets: expected a non-empty array");
    for (std::size_t i = 0; i < markets.size(); ++i) {
        const std::string path = context + ".markets[" + std::to_string(i) + "]";
        const json& jm = markets[i];
        expect_keys(jm, path,
                    {"asset", "total_supply", "total_borrows", "reserves", "cash",
                     "pool_token_supply", "borrow_index", "exchange_rate",
                     "collateral_factor", "close_factor", "liquidation_incentive",
                     "price_usd"});
        MarketSnapshot ms;
        ms.asset = get_string(jm, path, "asset");
        ms.block = fx.snapshot.block;
        ms.total_supply = get_fixed(jm, path, "total_supply");
        ms.total_borrows = get_fixed(jm, path, "total_borrows");
        ms.reserves = get_fixed(jm, path, "reserves");
        Fixed inferred = ms.total_supply - ms.total_borrows + ms.reserves;
        ms.cash = get_fixed_or(jm, path, "cash", inferred);
        if (ms.cash != inferred)
            throw ValidationError(path + ": market " + ms.asset +
                                  " breaks the monetary identity: cash " + ms.cash.str() +
                                  " != TS - TB + R = " + inferred.str());
        if (ms.cash.is_negative())
            throw ValidationError(path + ": market " + ms.asset +
                                  " has negative inferred cash " + ms.cash.str());
        ms.pool_token_supply = get_fixed_or(jm, path, "pool_token_supply", Fixed::zero());
        ms.borrow_index = get_fixed_or(jm, path, "borrow_index", Fixed::one());
        ms.exchange_rate = get_fixed_or(jm, path, "exchange_rate", Fixed::zero());
        ms.collateral_factor = get_fixed(jm, path, "collateral_factor");
        ms.close_factor = get_fixed_or(jm, path, "close_factor", Fixed::parse("0.5"));
        ms.liquidation_incentive =
            get_fixed_or(jm, path, "liquidation_incentive", Fixed::zero());
        fx.prices.set(ms.asset, get_fixed(jm, path, "price_usd"));
        fx.snapshot.markets.push_back(std::move(ms));
    }
    std::sort(fx.snapshot.markets.begin(), fx.snapshot.markets.end(),
              [](const MarketSnapshot& a, const MarketSnapshot& b) {
                  return a.asset < b.asset;
              });

    Fixed accrued_revenue, accrued_expense;
    std::map<std::string, Fixed> market_revenue, market_expense;
    bool any_accrued = false;
    const json& accounts = require(doc, context, "accounts");
    if (!accounts.is_array())
        throw ValidationError(context + ".accounts: expected an array");
    std::map<std::string, Fixed> supply_sum, borrow_sum;
    for (std::size_t i = 0; i < accounts.size(); ++i) {
        const std::string path = context + ".accounts[" + std::to_string(i) + "]";
        const json& ja = accounts[i];
        expect_keys(ja, path, {"address", "positions"});
        AccountSnapshot as;
        as.address = get_string(ja, path, "address");
        const json& positions = require(ja, path, "positions");
        if (!positions.is_array())
            throw ValidationError(path + ".positions: expected an array");
        for (std::size_t p = 0; p < positions.size(); ++p) {
            const std::string ppath = path + ".positions[" + std::to_string(p) + "]";
            const json& jp = positions[p];
            expect_keys(jp, ppath,
                        {"market", "supply_balance", "pool_tokens", "borrow_balance",
                         "accrued_supply_interest", "accrued_borrow_interest"});
            std::string mkt = get_string(jp, ppath, "market");
            bool known = false;
            for (const auto& m : fx.snapshot.markets)
                known = known || m.asset == mkt;
            if (!known)
                throw ValidationError(ppath + ": unknown market " + mkt);
            Fixed supply = get_fixed_or(jp, ppath, "supply_balance", Fixed::zero());
            Fixed borrow = get_fixed_or(jp, ppath, "borrow_balance", Fixed::zero());
            if (supply.is_negative() || borrow.is_negative())
                throw ValidationError(ppath + ": balances must be >= 0");
            if (!supply.is_zero())
                as.supply_underlying[mkt] = supply;
            if (jp.count("pool_tokens"))
                as.pool_tokens[mkt] = get_fixed(jp, ppath, "pool_tokens");
            if (!borrow.is_zero())
                as.borrow_underlying[mkt] = borrow;
            supply_sum[mkt] += supply;
            borrow_sum[mkt] += borrow;
            Fixed px = fx.prices.price(mkt);
            if (jp.count("accrued_supply_interest")) {
                Fixed v = fmul(get_fixed(jp, ppath, "accrued_supply_interest"), px);
                accrued_expense += v;
                market_expense[mkt] += v;
                any_accrued = true;
            }
            if (jp.count("accrued_borrow_interest")) {
                Fixed v = fmul(get_fixed(jp, ppath, "accrued_borrow_interest"), px);
                accrued_revenue += v;
                market_revenue[mkt] += v;
                any_accrued = true;
            }
        }
        fx.snapshot.accounts.push_back(std::move(as));
    }
    std::sort(fx.snapshot.accounts.begin(), fx.snapshot.accounts.end(),
              [](const AccountSnapshot& a, const AccountSnapshot& b) {
                  return a.address < b.address;
              });

    if (!fx.snapshot.accounts.empty()) {
        for (const auto& m : fx.snapshot.markets) {
            auto relerr = [](Fixed got, Fixed want) {
                double denom = std::max(std::abs(want.to_double()), 1.0);
                return std::abs(got.to_double() - want.to_double()) / denom;
            };
            if (relerr(supply_sum[m.asset], m.total_supply) > tolerance)
                throw ValidationError("market " + m.asset + ": account supply sum " +
                                      supply_sum[m.asset].str() +
                                      " does not reconcile to total_supply " +
                                      m.total_supply.str());
            if (relerr(borrow_sum[m.asset], m.total_borrows) > tolerance)
                throw ValidationError("market " + m.asset + ": account borrow sum " +
                                      borrow_sum[m.asset].str() +
                                      " does not reconcile to total_borrows " +
                                      m.total_borrows.str());
        }
    }

    if (doc.count("equity_usd"))
        fx.equity_usd = get_fixed(doc, context, "equity_usd").to_double();

    if (doc.count("period")) {
        const json& jp = doc["period"];
        const std::string path = context + ".period";
        expect_keys(jp, path,
                    {"interest_revenue_usd", "interest_expense_usd", "avg_loans_usd",
                     "avg_deposits_usd"});
        PeriodAccounting acc;
        acc.interest_revenue_usd = get_fixed(jp, path, "interest_revenue_usd").to_double();
        acc.interest_expense_usd = get_fixed(jp, path, "interest_expense_usd").to_double();
        Fixed end_loans, end_deposits;
        for (const auto& m : fx.snapshot.markets) {
            end_loans += fmul(m.total_borrows, fx.prices.price(m.asset));
            end_deposits += fmul(m.total_supply, fx.prices.price(m.asset));
        }
        acc.avg_loans_usd =
            get_fixed_or(jp, path, "avg_loans_usd", end_loans).to_double();
        acc.avg_deposits_usd =
            get_fixed_or(jp, path, "avg_deposits_usd", end_deposits).to_double();
        fx.accounting = acc;
    } else if (any_accrued) {
        // End-of-period convention: accrued account interest over closing stocks.
        PeriodAccounting acc;
        acc.interest_revenue_usd = accrued_revenue.to_double();
        acc.interest_expense_usd = accrued_expense.to_double();
        Fixed end_loans, end_deposits;
        for (const auto& m : fx.snapshot.markets) {
            end_loans += fmul(m.total_borrows, fx.prices.price(m.asset));
            end_deposits += fmul(m.total_supply, fx.prices.price(m.asset));
        }
        acc.avg_loans_usd = end_loans.to_double();
        acc.avg_deposits_usd = end_deposits.to_double();
        fx.accounting = acc;
    }
    if (any_accrued) {
        for (const auto& m : fx.snapshot.markets) {
            PeriodAccounting acc;
            acc.interest_revenue_usd = market_revenue[m.asset].to_double();
            acc.interest_expense_usd = market_expense[m.asset].to_double();
            acc.avg_loans_usd = fmul(m.total_borrows, fx.prices.price(m.asset)).to_double();
            acc.avg_deposits_usd =
                fmul(m.total_supply, fx.prices.price(m.asset)).to_double();
            fx.market_expost.push_back(MarketExPost{m.asset, expost_rates(acc)});
        }
    }
    return fx;
}

Fixture load_fixture(const std::string& path, double tolerance) {
    return parse_fixture_json(load_json_file(path), path, tolerance);
}

// --- scenario ----------------------------------------------------------------

RateModel parse_rate_model(const json& j, const std::string& path, Fixed reserve_factor) {
    std::string kind = get_string(j, path, "kind");
    try {
        if (kind == "linear") {
            expect_keys(j, path, {"kind", "alpha", "beta", "reserve_factor"});
            return LinearRateModel(get_fixed(j, path, "alpha"), get_fixed(j, path, "beta"),
                                   reserve_factor);
        }
        if (kind == "kinked") {
            expect_keys(j, path, {"kind", "alpha", "beta", "gamma", "u_kink",
                                  "reserve_factor"});
            return KinkedRateModel(get_fixed(j, path, "alpha"), get_fixed(j, path, "beta"),
                                   get_fixed(j, path, "gamma"),
                                   get_fixed(j, path, "u_kink"), reserve_factor);
        }
    } catch (const DomainError& e) {
        throw ValidationError(path + ": " + e.what());
    }
    throw ValidationError(path + ".kind: expected 'linear' or 'kinked', got '" + kind + "'");
}

RateModel load_rate_model(const std::string& path) {
    const json doc = load_json_file(path);
    Fixed rf = get_fixed(doc, path, "reserve_factor");
    return parse_rate_model(doc, path, rf);
}

namespace {

MarketParams parse_market_params(const json& jm, const std::string& path) {
    expect_keys(jm, path,
                {"asset", "rate_model", "reserve_factor", "collateral_factor",
                 "close_factor", "liquidation_incentive", "blocks_per_year",
                 "initial_exchange_rate", "seed_supply"});
    Fixed rf = get_fixed(jm, path, "reserve_factor");
    MarketParams params{get_string(jm, path, "asset"),
                        parse_rate_model(require(jm, path, "rate_model"),
                                         path + ".rate_model", rf),
                        get_fixed(jm, path, "collateral_factor"),
                        get_fixed(jm, path, "close_factor"),
                        get_fixed(jm, path, "liquidation_incentive")};
    if (jm.count("blocks_per_year"))
        params.blocks_per_year = get_int(jm, path, "blocks_per_year");
    if (jm.count("initial_exchange_rate"))
        params.initial_exchange_rate = get_fixed(jm, path, "initial_exchange_rate");
    return params;
}

PriceProcessConfig parse_price_process(const json& j, const std::string& path,
                                       const std::string& base_dir) {
    PriceProcessConfig config;
    std::string kind = get_string(j, path, "kind");
    if (kind == "constant") {
        expect_keys(j, path, {"kind", "values"});
        config.kind = PriceKind::Constant;
        const json& values = require(j, path, "values");
        for (const auto& [asset, v] : values.items())
            config.initial[asset] = get_fixed(v, path + ".values." + asset);
    } else if (kind == "path") {
        expect_keys(j, path, {"kind", "csv", "series"});
        config.kind = PriceKind::Path;
        if (j.count("csv") == j.count("series"))
            throw ValidationError(path + ": give exactly one of 'csv' or 'series'");
        if (j.count("csv")) {
            std::string csv = get_string(j, path, "csv");
            if (!csv.empty() && csv.front() != '/')
                csv = base_dir + "/" + csv;
            PriceSeries series = load_prices(csv);
            for (const auto& [asset, vals] : series.values)
                config.series[asset] = vals;
        } else {
            const json& series = require(j, path, "series");
            for (const auto& [asset, arr] : series.items()) {
                if (!arr.is_array() || arr.empty())
                    throw ValidationError(path + ".series." + asset +
                                          ": expected a non-empty array");
                for (std::size_t i = 0; i < arr.size(); ++i)
                    config.series[asset].push_back(
                        get_fixed(arr[i], path + ".series." + asset + "[" +
                                              std::to_string(i) + "]"));
            }
        }
    } else if (kind == "random_walk") {
        expect_keys(j, path, {"kind", "initial", "drift_per_step", "vol_per_step"});
        config.kind = PriceKind::RandomWalk;
        const json& initial = require(j, path, "initial");
        for (const auto& [asset, v] : initial.items())
            config.initial[asset] = get_fixed(v, path + ".initial." + asset);
        if (j.count("drift_per_step"))
            for (const auto& [asset, v] : j["drift_per_step"].items())
                config.drift_per_step[asset] =
                    get_fixed(v, path + ".drift_per_step." + asset).to_double();
        if (j.count("vol_per_step"))
            for (const auto& [asset, v] : j["vol_per_step"].items())
                config.vol_per_step[asset] =
                    get_fixed(v, path + ".vol_per_step." + asset).to_double();
    } else {
        throw ValidationError(path + ".kind: expected 'constant', 'path' or 'random_walk'");
    }
    return config;
}

AgentPolicy parse_agent(const json& ja, const std::string& path) {
    std::string id = get_string(ja, path, "id");
    std::string kind = get_string(ja, path, "kind");
    if (kind == "passive_supplier") {
        expect_keys(ja, path, {"id", "kind", "market", "amount"});
        return AgentPolicy{id, PassiveSupplier{get_string(ja, path, "market"),
                                               get_fixed(ja, path, "amount")}};
    }
    if (kind == "target_ltv_borrower") {
        expect_keys(ja, path,
                    {"id", "kind", "collateral_market", "borrow_market",
                     "collateral_amount", "target_ratio", "rebalance_band"});
        return AgentPolicy{
            id, TargetLtvBorrower{get_string(ja, path, "collateral_market"),
                                  get_string(ja, path, "borrow_market"),
                                  get_fixed(ja, path, "collateral_amount"),
                                  get_fixed(ja, path, "target_ratio"),
                                  get_fixed_or(ja, path, "rebalance_band", Fixed::zero())}};
    }
    if (kind == "liquidator") {
        expect_keys(ja, path, {"id", "kind", "gas_cost_usd", "min_profit_usd"});
        return AgentPolicy{
            id, LiquidatorPolicy{get_fixed_or(ja, path, "gas_cost_usd", Fixed::zero()),
                                 get_fixed_or(ja, path, "min_profit_usd", Fixed::zero())}};
    }
    if (kind == "preset") {
        expect_keys(ja, path,
                    {"id", "kind", "name", "initial_usd", "volatile_market",
                     "stable_market"});
        return strategy_preset(get_string(ja, path, "name"),
                               get_fixed(ja, path, "initial_usd"),
                               get_string(ja, path, "volatile_market"),
                               get_string(ja, path, "stable_market"), id)
            .front();
    }
    throw ValidationError(path + ".kind: unknown agent kind '" + kind + "'");
}

} // namespace

Scenario parse_scenario_json(const json& doc, const std::string& base_dir) {
    const std::string root = "scenario";
    expect_keys(doc, root,
                {"horizon_blocks", "blocks_per_step", "seed", "markets", "prices",
                 "agents", "events"});
    Scenario sc;
    sc.horizon_blocks = get_int(doc, root, "horizon_blocks");
    if (doc.count("blocks_per_step"))
        sc.blocks_per_step = get_int(doc, root, "blocks_per_step");
    if (doc.count("seed"))
        sc.seed = static_cast<std::uint64_t>(get_int(doc, root, "seed"));

    const json& markets = require(doc, root, "markets");
    if (!markets.is_array() || markets.empty())
        throw ValidationError(root + ".markets: expected a non-empty array");
    for (std::size_t i = 0; i < markets.size(); ++i) {
        const std::string path = root + ".markets[" + std::to_string(i) + "]";
        MarketSeed seed{parse_market_params(markets[i], path), Fixed::zero()};
        seed.seed_supply = get_fixed_or(markets[i], path, "seed_supply", Fixed::zero());
        sc.markets.push_back(std::move(seed));
    }

    sc.prices = parse_price_process(require(doc, root, "prices"), root + ".prices",
                                    base_dir);

    if (doc.count("agents")) {
        const json& agents = doc["agents"];
        if (!agents.is_array())
            throw ValidationError(root + ".agents: expected an array");
        for (std::size_t i = 0; i < agents.size(); ++i)
            sc.agents.push_back(
                parse_agent(agents[i], root + ".agents[" + std::to_string(i) + "]"));
    }

    if (doc.count("events")) {
        const json& events = doc["events"];
        if (!events.is_array())
            throw ValidationError(root + ".events: expected an array");
        for (std::size_t i = 0; i < events.size(); ++i) {
            const std::string path = root + ".events[" + std::to_string(i) + "]";
            const json& je = events[i];
            expect_keys(je, path,
                        {"block", "market", "rate_model", "reserve_factor",
                         "collateral_factor", "close_factor", "liquidation_incentive"});
            ParamChange ev;
            ev.block = get_int(je, path, "block");
            ev.market = get_string(je, path, "market");
            if (je.count("rate_model")) {
                Fixed rf = get_fixed(je, path, "reserve_factor");
                ev.rate_model =
                    parse_rate_model(je["rate_model"], path + ".rate_model", rf);
            } else if (je.count("reserve_factor")) {
                throw ValidationError(path +
                                      ".reserve_factor: needs rate_model alongside it");
            }
            if (je.count("collateral_factor"))
                ev.collateral_factor = get_fixed(je, path, "collateral_factor");
            if (je.count("close_factor"))
                ev.close_factor = get_fixed(je, path, "close_factor");
            if (je.count("liquidation_incentive"))
                ev.liquidation_incentive = get_fixed(je, path, "liquidation_incentive");
            sc.events.push_back(std::move(ev));
        }
    }
    sc.validate();
    return sc;
}

Scenario load_scenario(const std::string& path) {
    return parse_scenario_json(load_json_file(path), dirname_of(path));
}

// --- emission ------------------------------------------------------------------

std::string metrics_csv(const std::vector<StepMetrics>& metrics) {
    std::ostringstream out;
    out << "step,block";
    if (!metrics.empty()) {
        for (const auto& row : metrics.front().markets) {
            const std::string& a = row.asset;
            out << "," << a << "_total_supply," << a << "_total_borrows," << a
                << "_reserves," << a << "_cash," << a << "_utilization," << a
                << "_borrow_rate," << a << "_net_supply_rate," << a << "_exchange_rate,"
                << a << "_price_usd";
        }
        for (const auto& [agent, value] : metrics.front().preset_net_values) {
            (void)value;
            out << "," << agent << "_net_value_usd";
        }
    }
    out << "\n";
    for (const auto& step : metrics) {
        out << step.step << "," << step.block;
        for (const auto& row : step.markets) {
            out << "," << row.total_supply.str() << "," << row.total_borrows.str() << ","
                << row.reserves.str() << "," << row.cash.str() << ","
                << row.utilization.str() << "," << row.borrow_rate.str() << ","
                << row.net_supply_rate.str() << "," << row.exchange_rate.str() << ","
                << row.price_usd.str();
        }
        for (const auto& [agent, value] : step.preset_net_values) {
            (void)agent;
            out << "," << value.str();
        }
        out << "\n";
    }
    return out.str();
}

std::string expost_csv(const std::vector<MarketExPost>& rows) {
    std::ostringstream out;
    out << "market,active_percent,passive_percent,margin_percent\n";
    for (const auto& row : rows) {
        out << row.asset << "," << fmt_optional(row.rates.active, 100.0) << ","
            << fmt_optional(row.rates.passive, 100.0) << ","
            << fmt_optional(row.rates.margin, 100.0) << "\n";
    }
    return out.str();
}

std::string ledger_csv(const StrategyLedger& ledger) {
    std::ostringstream out;
    out << "step,block,agent,net_value_usd,interest_earned_usd,interest_paid_usd\n";
    for (const auto& row : ledger.rows) {
        out << row.step << "," << row.block << "," << csv_escape(row.agent) << ","
            << row.net_value_usd.str() << "," << row.interest_earned_usd.str() << ","
            << row.interest_paid_usd.str() << "\n";
    }
    return out.str();
}

std::string actions_csv(const std::vector<ActionRecord>& actions) {
    std::ostringstream out;
    out << "step,block,agent,action,detail,ok,reason\n";
    for (const auto& a : actions) {
        out << a.step << "," << a.block << "," << csv_escape(a.agent) << ","
            << csv_escape(a.action) << "," << csv_escape(a.detail) << ","
            << (a.ok ? "true" : "false") << "," << csv_escape(a.reason) << "\n";
    }
    return out.str();
}

std::string report_csv(const RiskReport& report) {
    std::ostringstream out;
    out << "section,metric,value\n";
    out << "levels,block," << report.block << "\n";
    out << "levels,borrows_usd," << fmt_double(report.borrows_usd) << "\n";
    out << "levels,rwa_usd," << report.rwa_usd.str() << "\n";
    out << "levels,ucb_usd," << report.ucb_usd.str() << "\n";
    out << "levels,reserves_usd," << fmt_double(report.reserves_usd) << "\n";
    out << "levels,collateral_usd," << fmt_double(report.collateral_usd) << "\n";
    out << "levels,equity_usd," << fmt_optional(report.equity_usd) << "\n";
    out << "levels,operating_margin_usd," << fmt_optional(report.operating_margin_usd)
        << "\n";
    out << "levels,collateral_es_1d_usd," << fmt_optional(report.collateral_es_1d_usd)
        << "\n";
    out << "levels,collateral_es_5d_usd," << fmt_optional(report.collateral_es_5d_usd)
        << "\n";
    const double pct = 100.0;
    out << "ratios_percent,solvency," << fmt_optional(report.solvency, pct) << "\n";
    out << "ratios_percent,ucb_over_reserves,"
        << fmt_optional(report.ucb_over_reserves, pct) << "\n";
    out << "ratios_percent,ucb_over_borrows," << fmt_optional(report.ucb_over_borrows, pct)
        << "\n";
    out << "ratios_percent,ucb_account_share,"
        << fmt_optional(report.ucb_account_share, pct) << "\n";
    out << "ratios_percent,active_rate," << fmt_optional(report.active_rate, pct) << "\n";
    out << "ratios_percent,passive_rate," << fmt_optional(report.passive_rate, pct)
        << "\n";
    out << "ratios_percent,expost_margin," << fmt_optional(report.expost_margin, pct)
        << "\n";
    out << "ratios_percent,roe," << fmt_optional(report.roe, pct) << "\n";
    out << "ratios_percent,roa," << fmt_optional(report.roa, pct) << "\n";
    out << "ratios_percent,reserves_over_equity,"
        << fmt_optional(report.reserves_over_equity, pct) << "\n";
    out << "ratios_percent,collateral_es_1d," << fmt_optional(report.collateral_es_1d, pct)
        << "\n";
    out << "ratios_percent,collateral_es_5d," << fmt_optional(report.collateral_es_5d, pct)
        << "\n";
    return out.str();
}

nlohmann::json report_json(const RiskReport& report) {
    json j;
    j["block"] = report.block;
    json levels;
    levels["borrows_usd"] = report.borrows_usd;
    levels["rwa_usd"] = report.rwa_usd.to_double();
    levels["ucb_usd"] = report.ucb_usd.to_double();
    levels["reserves_usd"] = report.reserves_usd;
    levels["collateral_usd"] = report.collateral_usd;
    auto set_opt = [](json& obj, const char* key, const std::optional<double>& v) {
        if (v)
            obj[key] = *v;
        else
            obj[key] = nullptr;
    };
    set_opt(levels, "equity_usd", report.equity_usd);
    set_opt(levels, "operating_margin_usd", report.operating_margin_usd);
    set_opt(levels, "collateral_es_1d_usd", report.collateral_es_1d_usd);
    set_opt(levels, "collateral_es_5d_usd", report.collateral_es_5d_usd);
    j["levels_usd"] = std::move(levels);
    json ratios;
    set_opt(ratios, "solvency", report.solvency);
    set_opt(ratios, "ucb_over_reserves", report.ucb_over_reserves);
    set_opt(ratios, "ucb_over_borrows", report.ucb_over_borrows);
    set_opt(ratios, "ucb_account_share", report.ucb_account_share);
    set_opt(ratios, "active_rate", report.active_rate);
    set_opt(ratios, "passive_rate", report.passive_rate);
    set_opt(ratios, "expost_margin", report.expost_margin);
    set_opt(ratios, "roe", report.roe);
    set_opt(ratios, "roa", report.roa);
    set_opt(ratios, "reserves_over_equity", report.reserves_over_equity);
    set_opt(ratios, "collateral_es_1d", report.collateral_es_1d);
    set_opt(ratios, "collateral_es_5d", report.collateral_es_5d);
    j["ratios_fraction"] = std::move(ratios);
    return j;
}

std::string rates_csv(const RateModel& model, int grid_points) {
    if (grid_points < 1)
        throw DomainError("rates grid needs at least one interval");
    std::ostringstream out;
    out << "u,borrow_rate,gross_supply_rate,net_supply_rate,quoted_margin\n";
    for (int i = 0; i <= grid_points; ++i) {
        Fixed u = fdiv(Fixed::from_int(i), Fixed::from_int(grid_points));
        RateQuote q = quote(model, u);
        out << u.str() << "," << q.borrow_rate.str() << "," << q.gross_supply_rate.str()
            << "," << q.net_supply_rate.str() << "," << q.quoted_margin.str() << "\n";
    }
    Fixed ustar;
    if (const auto* lin = std::get_if<LinearRateModel>(&model)) {
        ustar = optimal_utilization(*lin);
    } else {
        // No closed form above the kink; scan the same 1e-6 grid the
        // acceptance checks use.
        const auto& k = std::get<KinkedRateModel>(model);
        double alpha = k.alpha.to_double(), beta = k.beta.to_double();
        double gamma = k.gamma.to_double(), kink = k.u_kink.to_double();
        double psi = k.reserve_factor.to_double();
        double best_u = 0, best_m = -1;
        for (int i = 0; i <= 1'000'000; ++i) {
            double u = i * 1e-6;
            double b = u <= kink ? alpha + beta * u : alpha + beta * kink + gamma * (u - kink);
            double m = b * (1.0 - u * (1.0 - psi));
            if (m > best_m) {
                best_m = m;
                best_u = u;
            }
        }
        ustar = Fixed::from_double(best_u);
    }
    out << "u_star," << ustar.str() << ",,,\n";
    return out.str();
}

} // namespace defisim
