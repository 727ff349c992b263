// didb-directory: trusted server relaying live node addresses.

#include "didb/directory.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <iostream>

using namespace didb;

int main(int argc, char** argv) {
    CLI::App app{"DIDB directory"};
    DirectoryConfig config;
    double ttl = 30;
    app.add_option("--port", config.port)->required();
    app.add_option("--bind", config.bind_host);
    app.add_option("--ttl", ttl, "seconds a registration stays live");
    CLI11_PARSE(app, argc, argv);
    if (ttl <= 0) {
        std::cerr << "didb-directory: --ttl must be positive\n";
        return 2;
    }
    config.ttl = std::chrono::milliseconds(static_cast<std::int64_t>(ttl * 1000));

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);
    try {
        DirectoryServer server(config);
        server.start();
        std::cerr << nlohmann::json{{"event", "listening"}, {"port", server.port()}}.dump() << std::endl;
        int sig = 0;
        sigwait(&signals, &sig);
        server.stop();
    } catch (const std::exception& e) {
        std::cerr << "didb-directory: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
