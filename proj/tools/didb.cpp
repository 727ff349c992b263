// didb: build, rebuild, diff, generate and validate stores.

#include "cli_common.hpp"
#include "didb/builder.hpp"
#include "didb/store.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace didb;
namespace fs = std::filesystem;

namespace {

nlohmann::json manifest_summary(const Manifest& m) {
    return {{"didb_version", m.didb_version},
            {"records", m.total_records},
            {"chunks", m.descriptors.size()}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DIDB store tool"};
    app.require_subcommand(1);
    std::string report_path;

    std::string cidb, out, old_dir, new_dir, store_dir;
    std::uint64_t version = 0, count = 0, seed = 0;

    auto* build_cmd = app.add_subcommand("build", "build a store from a CIDB export");
    build_cmd->add_option("--cidb", cidb)->required();
    build_cmd->add_option("--out", out)->required();
    build_cmd->add_option("--version", version)->required();
    build_cmd->add_option("--report", report_path);

    auto* rebuild_cmd = app.add_subcommand("rebuild", "build a new version and list chunks that changed");
    rebuild_cmd->add_option("--old", old_dir)->required();
    rebuild_cmd->add_option("--cidb", cidb)->required();
    rebuild_cmd->add_option("--out", out)->required();
    rebuild_cmd->add_option("--version", version)->required();
    rebuild_cmd->add_option("--report", report_path);

    auto* diff_cmd = app.add_subcommand("diff", "chunks of --new that differ from --old");
    diff_cmd->add_option("--old", old_dir)->required();
    diff_cmd->add_option("--new", new_dir)->required();
    diff_cmd->add_option("--report", report_path);

    auto* gen_cmd = app.add_subcommand("gen", "write a synthetic CIDB export");
    gen_cmd->add_option("--count", count)->required();
    gen_cmd->add_option("--seed", seed)->required();
    gen_cmd->add_option("--out", out)->required();
    gen_cmd->add_option("--report", report_path);

    auto* validate_cmd = app.add_subcommand("validate", "check a store against its manifest");
    validate_cmd->add_option("store", store_dir)->required();
    validate_cmd->add_option("--report", report_path);

    CLI11_PARSE(app, argc, argv);

    nlohmann::json report;
    int status = 0;
    try {
        if (*build_cmd) {
            auto r = build(cidb, version, out);
            report = r.report.to_json();
        } else if (*rebuild_cmd) {
            auto r = rebuild_incremental(old_dir, cidb, version, out);
            report = r.report.to_json();
        } else if (*diff_cmd) {
            auto a = read_manifest(old_dir), b = read_manifest(new_dir);
            auto changed = diff_manifests(a, b);
            report = {{"old", manifest_summary(a)}, {"new", manifest_summary(b)}, {"changed_chunks", changed}};
        } else if (*gen_cmd) {
            generate_synthetic_cidb(count, seed, out);
            report = {{"rows", count}, {"seed", seed}, {"out", out}};
        } else if (*validate_cmd) {
            auto bad = validate_store(store_dir);
            report = {{"store", store_dir}, {"corrupted_chunks", bad}, {"valid", bad.empty()}};
            if (!bad.empty()) status = 1;
        }
        report["ok"] = status == 0;
    } catch (const std::exception& e) {
        report = cli::error_json(e);
        std::cerr << "didb: " << e.what() << "\n";
        status = 1;
    }
    std::cout << report.dump() << "\n";
    cli::write_report(report_path, report);
    return status;
}
