#pragma once

#include "didb/net.hpp"
#include "didb/node.hpp"
#include "didb/protocol.hpp"

#include <json.hpp>

#include <chrono>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace testutil {

inline didb::protocol::NodeDescriptor local(std::uint16_t port) { return {"127.0.0.1", port}; }

/// Collects node log events.
class LogCapture {
public:
    didb::LogSink sink() {
        return [this](const nlohmann::json& e) {
            std::lock_guard lock(mutex_);
            events_.push_back(e);
        };
    }
    std::vector<nlohmann::json> events(const std::string& kind = {}) const {
        std::lock_guard lock(mutex_);
        std::vector<nlohmann::json> out;
        for (const auto& e : events_)
            if (kind.empty() || e.value("event", "") == kind) out.push_back(e);
        return out;
    }

private:
    mutable std::mutex mutex_;
    std::vector<nlohmann::json> events_;
};

inline bool wait_until(const std::function<bool()>& pred,
                       std::chrono::milliseconds timeout = std::chrono::seconds(20)) {
    auto deadline = std::chrono::steady_clock::now() + timeout;
    while (std::chrono::steady_clock::now() < deadline) {
        if (pred()) return true;
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    return pred();
}

/// One request line, one reply line.
inline std::string roundtrip(std::uint16_t port, const std::string& line) {
    didb::net::Stream s(didb::net::connect_tcp(local(port), std::chrono::seconds(5)));
    s.write_line(line);
    auto reply = s.read_line();
    return reply ? *reply : "<eof>";
}

/// A port nobody listens on (bound then released).
inline std::uint16_t dead_port() {
    didb::net::TcpServer probe;
    probe.start("127.0.0.1", 0, [](didb::net::Stream&, const std::string&) {});
    auto port = probe.port();
    probe.stop();
    return port;
}

}  // namespace testutil
