// didb-size: capacity calculator.

#include "didb/sizing.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iomanip>
#include <iostream>

using namespace didb::sizing;

int main(int argc, char** argv) {
    CLI::App app{"DIDB capacity calculator"};
    std::uint64_t records = 0, growth = 0, years = 10, machines = 0;
    double chunk_mb = 4.9, rate_mbps = 1, fraction = 0.01, per_node = 100;
    std::uint64_t checksum_bytes = kChecksumBytes;
    bool reference = false, json = false;
    app.add_option("--records", records, "identities in the store");
    app.add_option("--chunk-mb", chunk_mb);
    app.add_option("--rate-mbps", rate_mbps, "sync rate in MB/s");
    app.add_option("--checksum-bytes", checksum_bytes);
    app.add_option("--growth", growth, "new records per year");
    app.add_option("--years", years);
    app.add_option("--machines", machines);
    app.add_option("--fraction", fraction, "share of machines running a node");
    app.add_option("--per-node-rps", per_node);
    app.add_flag("--paper", reference, "reference scenarios against their published values");
    app.add_flag("--json", json);
    CLI11_PARSE(app, argc, argv);

    if (reference) {
        auto rows = reference_scenarios();
        bool ok = true;
        nlohmann::json out = nlohmann::json::array();
        if (!json) std::printf("%-22s %-6s %22s %22s %10s  %s\n", "scenario", "unit", "computed", "expected", "rel_err", "result");
        for (const auto& r : rows) {
            ok = ok && r.passes();
            if (json) {
                out.push_back({{"name", r.name}, {"unit", r.unit}, {"computed", r.computed},
                               {"compared", r.compared_value()}, {"expected", r.printed},
                               {"relative_error", r.relative_error()}, {"pass", r.passes()}});
            } else {
                std::printf("%-22s %-6s %22.11f %22.11f %10.3g  %s\n", r.name.c_str(), r.unit.c_str(),
                            r.computed, r.printed, r.relative_error(), r.passes() ? "PASS" : "FAIL");
            }
        }
        if (json) std::cout << nlohmann::json{{"scenarios", out}, {"all_pass", ok}}.dump(2) << "\n";
        return ok ? 0 : 1;
    }

    if (chunk_mb <= 0 || rate_mbps <= 0) {
        std::cerr << "didb-size: --chunk-mb and --rate-mbps must be positive\n";
        return 2;
    }
    auto bytes = didb_size_bytes(records);
    auto chunks = chunk_count(static_cast<double>(bytes), chunk_mb * kMiB);
    auto fleet = fleet_capacity(machines, fraction, per_node);
    nlohmann::json out = {
        {"records", records},
        {"store_bytes", bytes},
        {"store_gb", bytes / kGiB},
        {"chunk_files", chunks},
        {"checksum_bytes", checksum_storage(chunks, checksum_bytes)},
        {"full_sync_hours", sync_time(static_cast<double>(bytes), rate_mbps * kMiB)},
        {"growth_bytes", annual_growth(growth, years)},
        {"growth_gb_rounded_chain", annual_growth_rounded_gb(growth, years)},
        {"fleet_nodes", fleet.nodes},
        {"fleet_requests_per_second", fleet.requests_per_second},
    };
    if (json) {
        std::cout << out.dump(2) << "\n";
    } else {
        for (auto it = out.begin(); it != out.end(); ++it)
            std::cout << std::left << std::setw(28) << it.key() << it.value().dump() << "\n";
    }
    return 0;
}
