#pragma once

// The trusted directory: nodes heartbeat REGISTER <port>; outside machines
// ask LIST for the nodes seen within the TTL.

#include "didb/net.hpp"
#include "didb/protocol.hpp"

#include <chrono>
#include <mutex>
#include <vector>

namespace didb {

/// Soft-state registry keyed by (host, port), kept in first-registration order.
class Registry {
public:
    using Clock = std::chrono::steady_clock;

    explicit Registry(std::chrono::milliseconds ttl) : ttl_(ttl) {}

    void upsert(const protocol::NodeDescriptor& node, Clock::time_point now);
    /// Drops expired entries and returns the rest. An entry is live while
    /// now - last_seen < ttl.
    std::vector<protocol::NodeDescriptor> live(Clock::time_point now);
    std::size_t size() const;

private:
    struct Entry {
        protocol::NodeDescriptor node;
        Clock::time_point last_seen;
    };

    std::chrono::milliseconds ttl_;
    mutable std::mutex mutex_;
    std::vector<Entry> entries_;
};

struct DirectoryConfig {
    std::string bind_host = "0.0.0.0";
    std::uint16_t port = 0;
    std::chrono::milliseconds ttl{30'000};
};

class DirectoryServer {
public:
    explicit DirectoryServer(DirectoryConfig config)
        : config_(std::move(config)), registry_(config_.ttl) {}

    void start();
    void stop() { server_.stop(); }
    std::uint16_t port() const noexcept { return server_.port(); }
    Registry& registry() noexcept { return registry_; }

private:
    void handle(net::Stream& stream, const std::string& peer);

    DirectoryConfig config_;
    Registry registry_;
    net::TcpServer server_;
};

// Client side of the directory conversation.
std::vector<protocol::NodeDescriptor> fetch_node_list(const protocol::NodeDescriptor& directory,
                                                      net::Millis timeout);
void register_node(const protocol::NodeDescriptor& directory, std::uint16_t port,
                   net::Millis timeout);
bool ping_directory(const protocol::NodeDescriptor& directory, net::Millis timeout);

}  // namespace didb
