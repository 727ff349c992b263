// didb-node: private node daemon (store, peer sync, verification server).

#include "didb/node.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <iostream>

using namespace didb;

int main(int argc, char** argv) {
    CLI::App app{"DIDB private node"};
    std::string config_file, store, directory, bind = "0.0.0.0", name;
    std::vector<std::string> peers;
    std::uint16_t verify_port = 0, sync_port = 0;
    double interval = 0;
    app.add_option("--config", config_file, "key = value file; flags override it");
    app.add_option("--store", store);
    app.add_option("--bind", bind);
    app.add_option("--verify-port", verify_port);
    app.add_option("--sync-port", sync_port);
    app.add_option("--directory", directory, "host:port");
    app.add_option("--peer", peers, "host:port of a peer sync port");
    app.add_option("--interval", interval, "seconds between sync rounds");
    app.add_option("--name", name, "label for log lines");
    CLI11_PARSE(app, argc, argv);

    try {
        NodeConfig config = config_file.empty() ? NodeConfig{} : NodeConfig::from_file(config_file);
        if (!store.empty()) config.store_root = store;
        if (app.count("--bind")) config.bind_host = bind;
        if (app.count("--verify-port")) config.verify_port = verify_port;
        if (app.count("--sync-port")) config.sync_port = sync_port;
        if (!directory.empty()) config.directory = protocol::NodeDescriptor::parse(directory);
        for (const auto& p : peers) config.peers.push_back(protocol::NodeDescriptor::parse(p));
        if (app.count("--interval"))
            config.interval = std::chrono::milliseconds(static_cast<std::int64_t>(interval * 1000));
        config.log = stderr_log_sink(name);

        sigset_t signals;
        sigemptyset(&signals);
        sigaddset(&signals, SIGINT);
        sigaddset(&signals, SIGTERM);
        pthread_sigmask(SIG_BLOCK, &signals, nullptr);

        Node node(config);
        node.start();
        int sig = 0;
        sigwait(&signals, &sig);
        node.stop();
    } catch (const std::exception& e) {
        std::cerr << "didb-node: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
