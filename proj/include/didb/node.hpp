#pragma once

// A private node: local DIDB store, pull-based peer sync, and the
// verification server, plus directory heartbeats.
//
// Store root layout. The active store is resolved as:
//   <root>/CURRENT holds a relative path (e.g. "versions/4")  -> that directory
//   otherwise <root>/MANIFEST exists                           -> <root> itself
//   otherwise                                                  -> not ready
// Versions fetched from peers land in <root>/versions/<didb_version>.

#include "didb/net.hpp"
#include "didb/protocol.hpp"
#include "didb/store.hpp"

#include <json.hpp>

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace didb {

using LogSink = std::function<void(const nlohmann::json&)>;

/// Writes one JSON object per line to stderr.
LogSink stderr_log_sink(std::string node_name = {});

struct NodeConfig {
    std::filesystem::path store_root;
    std::string bind_host = "0.0.0.0";
    std::uint16_t verify_port = 0;  // 0 picks a free port
    std::uint16_t sync_port = 0;
    std::optional<protocol::NodeDescriptor> directory;
    std::vector<protocol::NodeDescriptor> peers;
    std::chrono::milliseconds interval{10'000};
    net::Millis peer_timeout{5'000};
    /// Bad chunk deliveries tolerated per peer session before giving up on it.
    int chunk_failure_budget = 3;
    LogSink log;

    /// Throws Error(InvalidConfig): empty store root, equal non-zero ports,
    /// non-positive interval.
    void validate() const;

    /// Reads `key = value` lines (# comments). Keys: store, bind, verify-port,
    /// sync-port, directory, peer (repeatable), interval (seconds).
    static NodeConfig from_file(const std::filesystem::path& path);
};

/// Resolves the active store directory under a node root, if any.
std::optional<std::filesystem::path> active_store_dir(const std::filesystem::path& root);

/// Points <root>/CURRENT at `store_dir` (which must live under root).
void set_current(const std::filesystem::path& root, const std::filesystem::path& store_dir);

class Node {
public:
    explicit Node(NodeConfig config);
    ~Node();
    Node(const Node&) = delete;
    Node& operator=(const Node&) = delete;

    /// Loads the local store if one exists, starts both servers, the sync
    /// loop and (with a directory) the heartbeat.
    void start();
    /// Stops background activity, then drains and closes both servers.
    void stop();

    std::uint16_t verify_port() const noexcept { return verify_server_.port(); }
    std::uint16_t sync_port() const noexcept { return sync_server_.port(); }
    const ActiveStore& store() const noexcept { return store_; }
    std::optional<std::uint64_t> version() const;

    /// Activates a newer version found on local disk. Returns true on swap.
    bool reload_local();
    /// One sync round over the peers in random order. Returns true if a newer
    /// version was activated.
    bool sync_round();

    /// Verification reply for one request line; never throws.
    std::string answer_verify(std::string_view line) const;

private:
    void serve_verify(net::Stream& stream);
    void serve_sync(net::Stream& stream);
    bool sync_from(const protocol::NodeDescriptor& peer);
    void activate_dir(const std::filesystem::path& dir, const nlohmann::json& context);
    void background_loop();
    void heartbeat();
    void log(nlohmann::json event) const;

    NodeConfig config_;
    ActiveStore store_;
    net::TcpServer verify_server_;
    net::TcpServer sync_server_;

    std::mutex sync_mutex_;  // one sync/reload at a time
    std::map<std::string, int> peer_failures_;
    std::mt19937_64 rng_;

    std::mutex wake_mutex_;
    std::condition_variable wake_;
    bool stopping_ = false;
    std::thread background_;
    bool started_ = false;
};

}  // namespace didb
