// didb-verify: outside-machine verification client.
// Exit status: 0 FOUND, 1 NOT_FOUND, 2 error.

#include "didb/client.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace didb;

int main(int argc, char** argv) {
    CLI::App app{"Verify an identity document against the DIDB network"};
    std::string directory, serial, name, dob, blood, place, issue, param;
    std::vector<std::string> nodes;
    std::size_t retries = 0;
    double timeout = 2;
    std::uint64_t seed = 0;
    bool json = false;
    app.add_option("--directory", directory, "host:port of the trusted directory");
    app.add_option("--node", nodes, "host:port of a node; skips the directory");
    app.add_option("--serial", serial);
    app.add_option("--name", name);
    app.add_option("--dob", dob, "YYYY-MM-DD");
    app.add_option("--blood", blood);
    app.add_option("--place", place);
    app.add_option("--issue", issue, "YYYY-MM-DD");
    app.add_option("--param", param, "pre-hashed 46-character parameter");
    app.add_option("--retries", retries, "attempt budget (default: one per node)");
    app.add_option("--timeout", timeout, "seconds per attempt");
    app.add_option("--seed", seed, "seed for node order");
    app.add_flag("--json", json, "print a JSON result with the attempts log");
    CLI11_PARSE(app, argc, argv);

    std::vector<Attempt> attempts;
    try {
        ClientConfig config;
        if (!directory.empty()) config.directory = protocol::NodeDescriptor::parse(directory);
        for (const auto& n : nodes) config.nodes.push_back(protocol::NodeDescriptor::parse(n));
        config.retry_budget = retries;
        config.timeout = net::Millis(static_cast<std::int64_t>(timeout * 1000));
        if (app.count("--seed")) config.seed = seed;

        DidbRecord parameter = param.empty()
            ? make_record(IdentityFields::from_text(serial, name, dob, blood, place, issue))
            : parse_record(param);
        Client client(config);
        auto result = client.verify_parameter(parameter);
        if (json)
            std::cout << result.to_json().dump() << "\n";
        else
            std::cout << (result.verdict == Verdict::Found ? "FOUND" : "NOT_FOUND") << " version "
                      << result.didb_version << " via " << result.node.str() << "\n";
        return result.verdict == Verdict::Found ? 0 : 1;
    } catch (const std::exception& e) {
        if (const auto* f = dynamic_cast<const VerifyFailure*>(&e)) attempts = f->attempts();
        if (json) {
            nlohmann::json out = {{"status", "ERROR"}, {"error", e.what()}, {"attempts", attempts_to_json(attempts)}};
            if (const auto* de = dynamic_cast<const Error*>(&e)) out["code"] = to_string(de->code());
            std::cout << out.dump() << "\n";
        } else {
            std::cerr << "didb-verify: " << e.what() << "\n";
        }
        return 2;
    }
}
