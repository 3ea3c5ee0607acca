#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "defisim/cli.hpp"
#include "defisim/io.hpp"
#include "defisim/sim.hpp"

namespace py = pybind11;
using namespace defisim;

namespace {

Fixed fixed_from(const std::string& s) { return Fixed::parse(s); }

MarketParams make_market_params(const std::string& asset, const RateModel& model,
                                const Fixed& collateral_factor,
                                const Fixed& close_factor,
                                const Fixed& liquidation_incentive,
                                std::int64_t blocks_per_year,
                                const Fixed& initial_exchange_rate) {
    MarketParams params{asset, model, collateral_factor, close_factor,
                        liquidation_incentive, blocks_per_year};
    params.initial_exchange_rate = initial_exchange_rate;
    params.validate();
    return params;
}

py::dict run_scenario_to_dict(const Scenario& scenario) {
    RunResult result = run(scenario);
    py::dict out;
    out["metrics_csv"] = metrics_csv(result.metrics);
    out["ledger_csv"] = ledger_csv(result.ledger);
    out["actions_csv"] = actions_csv(result.actions);
    out["expost_csv"] = expost_csv(result.market_expost);
    out["snapshot_json"] = snapshot_json(result.final_snapshot, nullptr).dump(2);
    if (!result.reports.empty()) {
        out["report_csv"] = report_csv(result.reports.back());
        out["report_json"] = report_json(result.reports.back()).dump(2);
    }
    return out;
}

} // namespace

PYBIND11_MODULE(_defisim, m) {
    m.doc() = "Pooled-lending protocol simulator and risk analytics";

    py::register_exception<Error>(m, "DefisimError");

    py::class_<Fixed>(m, "Fixed")
        .def(py::init(&fixed_from), py::arg("text"))
        .def("__str__", &Fixed::str)
        .def("__repr__", [](const Fixed& v) { return "Fixed('" + v.str() + "')"; })
        .def("__float__", &Fixed::to_double)
        .def("__add__", [](Fixed a, Fixed b) { return a + b; })
        .def("__sub__", [](Fixed a, Fixed b) { return a - b; })
        .def("__neg__", [](Fixed a) { return -a; })
        .def("__mul__", &defisim::fmul)
        .def("__truediv__", &defisim::fdiv)
        .def("__eq__", [](Fixed a, Fixed b) { return a == b; })
        .def("__lt__", [](Fixed a, Fixed b) { return a < b; })
        .def("__le__", [](Fixed a, Fixed b) { return a <= b; });
    py::implicitly_convertible<py::str, Fixed>();

    m.def("fmul", &defisim::fmul, "Truncating fixed-point product");
    m.def("fdiv", &defisim::fdiv, "Truncating fixed-point quotient");

    py::class_<LinearRateModel>(m, "LinearRateModel")
        .def(py::init<Fixed, Fixed, Fixed>(), py::arg("alpha"), py::arg("beta"),
             py::arg("reserve_factor"))
        .def_readonly("alpha", &LinearRateModel::alpha)
        .def_readonly("beta", &LinearRateModel::beta)
        .def_readonly("reserve_factor", &LinearRateModel::reserve_factor);

    py::class_<KinkedRateModel>(m, "KinkedRateModel")
        .def(py::init<Fixed, Fixed, Fixed, Fixed, Fixed>(), py::arg("alpha"),
             py::arg("beta"), py::arg("gamma"), py::arg("u_kink"),
             py::arg("reserve_factor"))
        .def_readonly("alpha", &KinkedRateModel::alpha)
        .def_readonly("u_kink", &KinkedRateModel::u_kink);

    m.def("borrow_rate", [](const LinearRateModel& mdl, Fixed u) {
        return borrow_rate(RateModel(mdl), u);
    });
    m.def("borrow_rate", [](const KinkedRateModel& mdl, Fixed u) {
        return borrow_rate(RateModel(mdl), u);
    });
    m.def("supply_rates", [](const LinearRateModel& mdl, Fixed u) {
        return supply_rates(RateModel(mdl), u);
    });
    m.def("supply_rates", [](const KinkedRateModel& mdl, Fixed u) {
        return supply_rates(RateModel(mdl), u);
    });
    m.def("quoted_margin", [](const LinearRateModel& mdl, Fixed u) {
        return quoted_margin(RateModel(mdl), u);
    });
    m.def("quoted_margin", [](const KinkedRateModel& mdl, Fixed u) {
        return quoted_margin(RateModel(mdl), u);
    });
    m.def("optimal_utilization", &optimal_utilization);

    py::class_<PriceTable>(m, "PriceTable")
        .def(py::init<>())
        .def("set", &PriceTable::set, py::arg("asset"), py::arg("price_usd"))
        .def("price", &PriceTable::price, py::arg("asset"));

    py::class_<Protocol>(m, "Protocol")
        .def(py::init<>())
        .def("add_linear_market",
             [](Protocol& p, const std::string& asset, Fixed alpha, Fixed beta,
                Fixed reserve_factor, Fixed collateral_factor, Fixed close_factor,
                Fixed liquidation_incentive, std::int64_t blocks_per_year,
                Fixed initial_exchange_rate) {
                 p.add_market(make_market_params(
                     asset, LinearRateModel(alpha, beta, reserve_factor),
                     collateral_factor, close_factor, liquidation_incentive,
                     blocks_per_year, initial_exchange_rate));
             },
             py::arg("asset"), py::arg("alpha"), py::arg("beta"),
             py::arg("reserve_factor"), py::arg("collateral_factor"),
             py::arg("close_factor"), py::arg("liquidation_incentive"),
             py::arg("blocks_per_year") = kDefaultBlocksPerYear,
             py::arg("initial_exchange_rate") = Fixed::parse("0.02"))
        .def("add_kinked_market",
             [](Protocol& p, const std::string& asset, Fixed alpha, Fixed beta,
                Fixed gamma, Fixed u_kink, Fixed reserve_factor, Fixed collateral_factor,
                Fixed close_factor, Fixed liquidation_incentive,
                std::int64_t blocks_per_year, Fixed initial_exchange_rate) {
                 p.add_market(make_market_params(
                     asset, KinkedRateModel(alpha, beta, gamma, u_kink, reserve_factor),
                     collateral_factor, close_factor, liquidation_incentive,
                     blocks_per_year, initial_exchange_rate));
             },
             py::arg("asset"), py::arg("alpha"), py::arg("beta"), py::arg("gamma"),
             py::arg("u_kink"), py::arg("reserve_factor"), py::arg("collateral_factor"),
             py::arg("close_factor"), py::arg("liquidation_incentive"),
             py::arg("blocks_per_year") = kDefaultBlocksPerYear,
             py::arg("initial_exchange_rate") = Fixed::parse("0.02"))
        .def("set_block", &Protocol::set_block)
        .def("block", &Protocol::block)
        .def("accrue", &Protocol::accrue)
        .def("accrue_all", &Protocol::accrue_all)
        .def("mint", &Protocol::mint)
        .def("redeem", &Protocol::redeem)
        .def("borrow", &Protocol::borrow)
        .def("repay", &Protocol::repay)
        .def("liquidate", &Protocol::liquidate)
        .def("borrow_balance", &Protocol::borrow_balance)
        .def("supply_underlying", &Protocol::supply_underlying)
        .def("account_health", &Protocol::account_health)
        .def("utilization",
             [](const Protocol& p, const std::string& asset) {
                 return utilization(p.market(asset).state);
             })
        .def("exchange_rate",
             [](const Protocol& p, const std::string& asset) {
                 const Market& mkt = p.market(asset);
                 return exchange_rate(mkt.state, mkt.params);
             })
        .def("snapshot_json", [](const Protocol& p) {
            return snapshot_json(p.snapshot(), nullptr).dump(2);
        });

    m.def("infinite_health", [] { return kInfiniteHealth; });

    m.def(
        "run_scenario_file",
        [](const std::string& path) { return run_scenario_to_dict(load_scenario(path)); },
        py::arg("path"),
        "Run a scenario JSON file; returns the emitted artifacts as strings");
    m.def(
        "run_scenario_json",
        [](const std::string& text) {
            return run_scenario_to_dict(
                parse_scenario_json(nlohmann::json::parse(text), "."));
        },
        py::arg("text"), "Run a scenario given as a JSON string");
    m.def(
        "analyze_fixture_file",
        [](const std::string& path, const std::string& prices_csv,
           const std::string& es_asset, double tail) {
            Fixture fixture = load_fixture(path);
            std::vector<double> series;
            if (!prices_csv.empty())
                series = load_prices(prices_csv).series_double(es_asset);
            ReportInputs inputs;
            inputs.snapshot = &fixture.snapshot;
            inputs.prices = &fixture.prices;
            inputs.accounting = fixture.accounting;
            inputs.equity_usd = fixture.equity_usd;
            inputs.es_price_series = series;
            inputs.es_tail = tail;
            return report_json(build_risk_report(inputs)).dump(2);
        },
        py::arg("path"), py::arg("prices_csv") = "", py::arg("es_asset") = "ETH",
        py::arg("tail") = 0.01, "Risk report (JSON string) for a fixture snapshot");
    m.def(
        "expected_shortfall",
        [](const std::vector<double>& prices, int horizon_days, double tail,
           double collateral_usd) {
            ShortfallEstimate es = collateral_expected_shortfall(prices, horizon_days,
                                                                 tail, collateral_usd);
            return py::make_tuple(es.es_fraction, es.es_usd);
        },
        py::arg("daily_prices"), py::arg("horizon_days"), py::arg("tail") = 0.01,
        py::arg("collateral_usd") = 1.0,
        "(fraction, usd) expected shortfall of the worst tail returns");
    m.def(
        "cli", [](const std::vector<std::string>& args) { return run_cli(args); },
        py::arg("args"), "Invoke the command-line interface in-process");
}
