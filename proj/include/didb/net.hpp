#pragma once

// Minimal blocking TCP over POSIX sockets: RAII descriptors, a buffered
// line/payload reader, and a thread-per-connection server that drains
// in-flight requests on stop.

#include "didb/protocol.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <list>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>

namespace didb::net {

using Millis = std::chrono::milliseconds;

class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) noexcept : fd_(fd) {}
    ~Socket() { close(); }
    Socket(Socket&& other) noexcept : fd_(other.release()) {}
    Socket& operator=(Socket&& other) noexcept {
        if (this != &other) {
            close();
            fd_ = other.release();
        }
        return *this;
    }
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;

    int fd() const noexcept { return fd_; }
    bool valid() const noexcept { return fd_ >= 0; }
    int release() noexcept { return std::exchange(fd_, -1); }
    void close() noexcept;

    /// Applies SO_RCVTIMEO/SO_SNDTIMEO; zero disables.
    void set_timeout(Millis timeout);

private:
    int fd_ = -1;
};

/// Connects with a bounded wait. Throws Error(ConnectionFailed) or
/// Error(Timeout). The returned socket carries `timeout` for I/O as well.
Socket connect_tcp(const protocol::NodeDescriptor& to, Millis timeout);

/// Buffered reads and whole writes over one connection. Counts every byte
/// received.
class Stream {
public:
    explicit Stream(Socket socket) : socket_(std::move(socket)) {}

    /// Next LF-terminated line without the LF; nullopt on orderly EOF at a
    /// line boundary. Throws Error(MalformedLine) past `max_bytes`,
    /// Error(Timeout) or Error(ConnectionFailed).
    std::optional<std::string> read_line(std::size_t max_bytes = protocol::kMaxLineBytes);

    /// Throws Error(LengthMismatch) if the peer closes early.
    std::string read_exact(std::size_t count);

    /// Throws Error(ConnectionFailed).
    void write_all(std::string_view data);
    void write_line(std::string_view line);

    std::uint64_t bytes_received() const noexcept { return received_; }
    Socket& socket() noexcept { return socket_; }

private:
    bool fill();

    Socket socket_;
    std::string buffer_;
    std::size_t offset_ = 0;
    std::uint64_t received_ = 0;
};

std::string peer_host(const Socket& socket);

/// Listening socket plus a thread per accepted connection.
class TcpServer {
public:
    using Handler = std::function<void(Stream&, const std::string& peer_host)>;

    TcpServer() = default;
    ~TcpServer() { stop(); }
    TcpServer(const TcpServer&) = delete;
    TcpServer& operator=(const TcpServer&) = delete;

    /// Binds `bind_host:port` (port 0 picks a free one) and starts accepting.
    /// Throws Error(ConnectionFailed).
    void start(const std::string& bind_host, std::uint16_t port, Handler handler);

    /// Stops accepting, half-closes every open connection for reading so
    /// handlers finish their current request and see EOF, then joins them.
    void stop();

    std::uint16_t port() const noexcept { return port_; }
    bool running() const noexcept { return running_; }

private:
    struct Connection {
        int fd = -1;
        std::thread thread;
        std::atomic<bool> done{false};
    };

    void accept_loop();
    void reap(bool all);

    Socket listener_;
    std::uint16_t port_ = 0;
    Handler handler_;
    std::atomic<bool> running_{false};
    std::thread acceptor_;
    std::mutex mutex_;
    std::list<Connection> connections_;
};

}  // namespace didb::net
