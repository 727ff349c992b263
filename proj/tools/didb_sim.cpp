// didb-sim: run a cluster scenario on localhost and report as JSON.
// Scenarios: bootstrap, update, failover, offline, all.

#include "cli_common.hpp"
#include "didb/simnet.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <unistd.h>

using namespace didb;
namespace fs = std::filesystem;

int main(int argc, char** argv) {
    CLI::App app{"DIDB localhost cluster scenarios"};
    std::string scenario, report_path, work_dir, bin_dir;
    simnet::SimConfig config;
    double change = -1, kill = 0.5, interval = 0.2, timeout = 60;
    std::size_t probes = 200;
    bool keep = false;
    app.add_option("scenario", scenario, "bootstrap | update | failover | offline | all")
        ->required()
        ->check(CLI::IsMember({"bootstrap", "update", "failover", "offline", "all"}));
    app.add_option("--nodes", config.followers, "follower count (a seed node is added)");
    app.add_option("--records", config.records);
    app.add_option("--seed", config.seed);
    app.add_option("--json-report", report_path);
    app.add_option("--change", change, "update: fraction of records changed (default: one record)");
    app.add_option("--kill", kill, "failover: fraction of nodes killed");
    app.add_option("--probes", probes);
    app.add_option("--interval", interval, "node sync interval, seconds");
    app.add_option("--timeout", timeout, "convergence timeout, seconds");
    app.add_option("--work-dir", work_dir, "default: a fresh temporary directory");
    app.add_option("--bin-dir", bin_dir, "where didb-node lives (default: next to this binary)");
    app.add_flag("--keep", keep, "keep the work directory");
    CLI11_PARSE(app, argc, argv);

    config.interval = std::chrono::milliseconds(static_cast<std::int64_t>(interval * 1000));
    config.convergence_timeout = std::chrono::milliseconds(static_cast<std::int64_t>(timeout * 1000));
    config.bin_dir = bin_dir.empty() ? fs::read_symlink("/proc/self/exe").parent_path() : fs::path(bin_dir);
    bool temp = work_dir.empty();
    if (temp) {
        std::string tmpl = (fs::temp_directory_path() / "didb-sim-XXXXXX").string();
        if (!::mkdtemp(tmpl.data())) {
            std::cerr << "didb-sim: cannot create a work directory\n";
            return 2;
        }
        work_dir = tmpl;
    }
    config.work_dir = work_dir;

    nlohmann::json report = {{"scenario", scenario}, {"work_dir", work_dir}};
    int status = 0;
    try {
        simnet::Cluster cluster(config);
        auto run = [&](const std::string& name, nlohmann::json r) {
            if (!r.value("pass", false)) status = 1;
            report[name] = std::move(r);
        };
        run("bootstrap", cluster.bootstrap());
        if (change < 0) change = 1.0 / static_cast<double>(std::max<std::uint64_t>(config.records, 1));
        if (scenario == "update" || scenario == "all") run("update", cluster.update(change));
        if (scenario == "failover" || scenario == "all") run("failover", cluster.failover(kill, probes));
        if (scenario == "offline" || scenario == "all") run("offline", cluster.offline(probes));
        cluster.shutdown();
        report["pass"] = status == 0;
    } catch (const std::exception& e) {
        report["error"] = cli::error_json(e)["error"];
        report["pass"] = false;
        std::cerr << "didb-sim: " << e.what() << "\n";
        status = 2;
    }
    std::cout << report.dump(2) << "\n";
    cli::write_report(report_path, report);
    if (temp && !keep) {
        std::error_code ec;
        fs::remove_all(work_dir, ec);
    }
    return status;
}
