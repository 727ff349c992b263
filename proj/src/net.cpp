#include "didb/net.hpp"

#include "didb/error.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace didb::net {
namespace {

[[noreturn]] void io_error(std::string_view what) {
    if (errno == EAGAIN || errno == EWOULDBLOCK)
        throw Error(ErrorCode::Timeout, std::string(what) + " timed out");
    throw Error(ErrorCode::ConnectionFailed, std::string(what) + ": " + std::strerror(errno));
}

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (int rc = ::getaddrinfo(host.c_str(), nullptr, &hints, &res); rc != 0 || res == nullptr)
        throw Error(ErrorCode::ConnectionFailed,
                    "cannot resolve '" + host + "': " + ::gai_strerror(rc));
    sockaddr_in addr{};
    std::memcpy(&addr, res->ai_addr, sizeof addr);
    ::freeaddrinfo(res);
    addr.sin_port = htons(port);
    return addr;
}

}  // namespace

void Socket::close() noexcept {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

void Socket::set_timeout(Millis timeout) {
    timeval tv{};
    tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
    tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
    ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    ::setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
}

Socket connect_tcp(const protocol::NodeDescriptor& to, Millis timeout) {
    auto addr = resolve(to.host, to.port);
    Socket sock(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!sock.valid()) io_error("socket");
    int flags = ::fcntl(sock.fd(), F_GETFL, 0);
    ::fcntl(sock.fd(), F_SETFL, flags | O_NONBLOCK);
    if (::connect(sock.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        if (errno != EINPROGRESS)
            throw Error(ErrorCode::ConnectionFailed, to.str() + ": " + std::strerror(errno));
        pollfd pfd{sock.fd(), POLLOUT, 0};
        int rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
        if (rc == 0) throw Error(ErrorCode::Timeout, "connect to " + to.str() + " timed out");
        int err = 0;
        socklen_t len = sizeof err;
        ::getsockopt(sock.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
        if (rc < 0 || err != 0)
            throw Error(ErrorCode::ConnectionFailed, to.str() + ": " + std::strerror(err ? err : errno));
    }
    ::fcntl(sock.fd(), F_SETFL, flags);
    int one = 1;
    ::setsockopt(sock.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    sock.set_timeout(timeout);
    return sock;
}

bool Stream::fill() {
    if (offset_ > 0 && offset_ == buffer_.size()) {
        buffer_.clear();
        offset_ = 0;
    } else if (offset_ > 65536) {
        buffer_.erase(0, offset_);
        offset_ = 0;
    }
    char chunk[65536];
    while (true) {
        auto n = ::recv(socket_.fd(), chunk, sizeof chunk, 0);
        if (n > 0) {
            buffer_.append(chunk, static_cast<std::size_t>(n));
            received_ += static_cast<std::uint64_t>(n);
            return true;
        }
        if (n == 0) return false;
        if (errno == EINTR) continue;
        io_error("recv");
    }
}

std::optional<std::string> Stream::read_line(std::size_t max_bytes) {
    std::size_t scanned = 0;
    while (true) {
        auto nl = buffer_.find('\n', offset_ + scanned);
        if (nl != std::string::npos) {
            if (nl - offset_ > max_bytes) throw Error(ErrorCode::MalformedLine, "line too long");
            std::string line = buffer_.substr(offset_, nl - offset_);
            offset_ = nl + 1;
            return line;
        }
        if (buffer_.size() - offset_ > max_bytes)
            throw Error(ErrorCode::MalformedLine, "line too long");
        scanned = buffer_.size() - offset_;
        if (!fill()) {
            if (offset_ == buffer_.size()) return std::nullopt;
            throw Error(ErrorCode::ConnectionFailed, "connection closed mid-line");
        }
    }
}

std::string Stream::read_exact(std::size_t count) {
    while (buffer_.size() - offset_ < count) {
        if (!fill())
            throw Error(ErrorCode::LengthMismatch,
                        "expected " + std::to_string(count) + " bytes, connection closed after " +
                            std::to_string(buffer_.size() - offset_));
    }
    std::string out = buffer_.substr(offset_, count);
    offset_ += count;
    return out;
}

void Stream::write_all(std::string_view data) {
    while (!data.empty()) {
        auto n = ::send(socket_.fd(), data.data(), data.size(), MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            io_error("send");
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
}

void Stream::write_line(std::string_view line) {
    std::string out;
    out.reserve(line.size() + 1);
    out.append(line);
    out.push_back('\n');
    write_all(out);
}

std::string peer_host(const Socket& socket) {
    sockaddr_in addr{};
    socklen_t len = sizeof addr;
    if (::getpeername(socket.fd(), reinterpret_cast<sockaddr*>(&addr), &len) != 0) return "unknown";
    char buf[INET_ADDRSTRLEN] = {};
    ::inet_ntop(AF_INET, &addr.sin_addr, buf, sizeof buf);
    return buf;
}

void TcpServer::start(const std::string& bind_host, std::uint16_t port, Handler handler) {
    auto addr = resolve(bind_host, port);
    Socket sock(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!sock.valid()) io_error("socket");
    int one = 1;
    ::setsockopt(sock.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(sock.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
        throw Error(ErrorCode::ConnectionFailed, "bind " + bind_host + ":" + std::to_string(port) +
                                                     ": " + std::strerror(errno));
    if (::listen(sock.fd(), 512) != 0) io_error("listen");
    sockaddr_in bound{};
    socklen_t len = sizeof bound;
    ::getsockname(sock.fd(), reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
    listener_ = std::move(sock);
    handler_ = std::move(handler);
    running_ = true;
    acceptor_ = std::thread([this] { accept_loop(); });
}

void TcpServer::accept_loop() {
    while (running_) {
        pollfd pfd{listener_.fd(), POLLIN, 0};
        int rc = ::poll(&pfd, 1, 100);
        reap(false);
        if (rc <= 0 || !running_) continue;
        int fd = ::accept4(listener_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
        if (fd < 0) continue;
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);

        std::lock_guard lock(mutex_);
        auto& conn = connections_.emplace_back();
        conn.fd = fd;
        conn.thread = std::thread([this, &conn, fd] {
            Stream stream{Socket(fd)};
            try {
                handler_(stream, peer_host(stream.socket()));
            } catch (...) {
                // A broken connection never takes the server down.
            }
            {
                std::lock_guard guard(mutex_);
                conn.fd = -1;
            }
            conn.done = true;
        });
    }
}

void TcpServer::reap(bool all) {
    std::list<Connection> finished;
    {
        std::lock_guard lock(mutex_);
        for (auto it = connections_.begin(); it != connections_.end();) {
            auto next = std::next(it);
            if (all || it->done) finished.splice(finished.end(), connections_, it);
            it = next;
        }
    }
    for (auto& c : finished)
        if (c.thread.joinable()) c.thread.join();
}

void TcpServer::stop() {
    if (!running_.exchange(false)) return;
    if (acceptor_.joinable()) acceptor_.join();
    listener_.close();
    {
        std::lock_guard lock(mutex_);
        for (auto& c : connections_)
            if (c.fd >= 0) ::shutdown(c.fd, SHUT_RD);
    }
    reap(true);
}

}  // namespace didb::net
