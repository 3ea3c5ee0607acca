#include "defisim/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "defisim/io.hpp"

namespace defisim {

namespace {

void write_file(const std::string& dir, const std::string& name,
                const std::string& content) {
    std::filesystem::create_directories(dir);
    std::string path = dir + "/" + name;
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write " + path);
    out << content;
}

int do_simulate(const std::string& scenario_path, const std::string& out_dir,
                std::optional<std::int64_t> seed) {
    Scenario scenario = load_scenario(scenario_path);
    if (seed)
        scenario.seed = static_cast<std::uint64_t>(*seed);
    RunResult result = run(scenario);

    write_file(out_dir, "metrics.csv", metrics_csv(result.metrics));
    write_file(out_dir, "ledger.csv", ledger_csv(result.ledger));
    write_file(out_dir, "actions.csv", actions_csv(result.actions));
    write_file(out_dir, "expost.csv", expost_csv(result.market_expost));
    write_file(out_dir, "snapshot.json",
               snapshot_json(result.final_snapshot, nullptr).dump(2) + "\n");
    if (!result.reports.empty()) {
        const RiskReport& last = result.reports.back();
        write_file(out_dir, "report.csv", report_csv(last));
        write_file(out_dir, "report.json", report_json(last).dump(2) + "\n");
    }
    std::cout << "simulated " << scenario.horizon_blocks << " blocks, "
              << result.metrics.size() << " samples, " << result.actions.size()
              << " agent actions -> " << out_dir << "\n";
    return 0;
}

int do_analyze(const std::string& fixture_path, const std::string& prices_csv,
               const std::string& es_asset, double tail, const std::string& out_dir) {
    Fixture fixture = load_fixture(fixture_path);
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
    RiskReport report = build_risk_report(inputs);

    write_file(out_dir, "report.csv", report_csv(report));
    write_file(out_dir, "report.json", report_json(report).dump(2) + "\n");
    if (!fixture.market_expost.empty())
        write_file(out_dir, "expost.csv", expost_csv(fixture.market_expost));
    std::cout << "analyzed " << fixture_path << " at block " << report.block << " -> "
              << out_dir << "\n";
    return 0;
}

int do_rates(const std::string& model_path, int grid, const std::string& out_dir) {
    RateModel model = load_rate_model(model_path);
    std::string csv = rates_csv(model, grid);
    write_file(out_dir, "rates.csv", csv);
    // echo the u_star row for quick inspection
    auto pos = csv.rfind("u_star,");
    std::cout << csv.substr(pos);
    return 0;
}

} // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"Pooled-lending protocol simulator and risk analytics"};
    app.require_subcommand(1);

    std::string scenario_path, fixture_path, model_path;
    std::string out_dir = ".";
    std::string prices_csv, es_asset = "ETH";
    double tail = 0.01;
    int grid = 100;
    std::optional<std::int64_t> seed;

    CLI::App* simulate = app.add_subcommand("simulate", "Run a scenario file");
    simulate->add_option("scenario", scenario_path, "Scenario JSON file")->required();
    simulate->add_option("--out", out_dir, "Output directory");
    simulate->add_option("--seed", seed, "Override the scenario RNG seed");

    CLI::App* analyze = app.add_subcommand("analyze", "Risk report from a fixture snapshot");
    analyze->add_option("fixture", fixture_path, "Fixture JSON file")->required();
    analyze->add_option("--prices", prices_csv,
                        "Daily price CSV for the collateral shortfall");
    analyze->add_option("--es-asset", es_asset, "Asset whose series drives the shortfall");
    analyze->add_option("--tail", tail, "Expected-shortfall tail level");
    analyze->add_option("--out", out_dir, "Output directory");

    CLI::App* rates = app.add_subcommand("rates", "Emit rate/margin curves for a model");
    rates->add_option("model", model_path, "Rate model JSON file")->required();
    rates->add_option("--grid", grid, "Number of grid intervals");
    rates->add_option("--out", out_dir, "Output directory");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (simulate->parsed())
            return do_simulate(scenario_path, out_dir, seed);
        if (analyze->parsed())
            return do_analyze(fixture_path, prices_csv, es_asset, tail, out_dir);
        if (rates->parsed())
            return do_rates(model_path, grid, out_dir);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

} // namespace defisim
