#include "didb/directory.hpp"

#include "didb/error.hpp"

#include <algorithm>

namespace didb {

using protocol::NodeDescriptor;

void Registry::upsert(const NodeDescriptor& node, Clock::time_point now) {
    std::lock_guard lock(mutex_);
    auto it = std::find_if(entries_.begin(), entries_.end(),
                           [&](const Entry& e) { return e.node == node; });
    if (it != entries_.end() && now - it->last_seen < ttl_) {
        it->last_seen = now;
        return;
    }
    if (it != entries_.end()) entries_.erase(it);
    entries_.push_back({node, now});
}

std::vector<NodeDescriptor> Registry::live(Clock::time_point now) {
    std::lock_guard lock(mutex_);
    std::erase_if(entries_, [&](const Entry& e) { return now - e.last_seen >= ttl_; });
    std::vector<NodeDescriptor> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.node);
    return out;
}

std::size_t Registry::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

void DirectoryServer::start() {
    server_.start(config_.bind_host, config_.port,
                  [this](net::Stream& s, const std::string& peer) { handle(s, peer); });
}

void DirectoryServer::handle(net::Stream& stream, const std::string& peer) {
    while (true) {
        std::optional<std::string> line;
        try {
            line = stream.read_line();
        } catch (const Error& e) {
            if (e.code() != ErrorCode::MalformedLine) return;
            stream.write_line(protocol::kErrBadRequest);
            return;
        }
        if (!line) return;
        protocol::DirectoryRequest request;
        try {
            request = protocol::decode_directory_request(*line);
        } catch (const Error&) {
            stream.write_line(protocol::kErrBadRequest);
            continue;
        }
        switch (request.command) {
        case protocol::DirectoryCommand::Register:
            registry_.upsert({peer, request.port}, Registry::Clock::now());
            stream.write_line(protocol::kOk);
            break;
        case protocol::DirectoryCommand::List:
            stream.write_all(protocol::encode_list_response(registry_.live(Registry::Clock::now())));
            break;
        case protocol::DirectoryCommand::Ping:
            stream.write_line(protocol::kPong);
            break;
        }
    }
}

namespace {

std::string expect_line(net::Stream& stream) {
    auto line = stream.read_line();
    if (!line) throw Error(ErrorCode::ConnectionFailed, "directory closed the connection");
    return *line;
}

}  // namespace

std::vector<NodeDescriptor> fetch_node_list(const NodeDescriptor& directory, net::Millis timeout) {
    net::Stream stream(net::connect_tcp(directory, timeout));
    stream.write_line(protocol::encode(protocol::DirectoryRequest{protocol::DirectoryCommand::List, 0}));
    std::vector<std::string> lines;
    while (true) {
        lines.push_back(expect_line(stream));
        if (lines.back() == protocol::kEnd) break;
        if (lines.size() > 100'000) throw Error(ErrorCode::MalformedLine, "LIST reply too long");
    }
    return protocol::decode_list_response(lines);
}

void register_node(const NodeDescriptor& directory, std::uint16_t port, net::Millis timeout) {
    net::Stream stream(net::connect_tcp(directory, timeout));
    stream.write_line(
        protocol::encode(protocol::DirectoryRequest{protocol::DirectoryCommand::Register, port}));
    auto reply = expect_line(stream);
    if (reply != protocol::kOk) throw Error(ErrorCode::MalformedLine, "REGISTER answered '" + reply + "'");
}

bool ping_directory(const NodeDescriptor& directory, net::Millis timeout) {
    try {
        net::Stream stream(net::connect_tcp(directory, timeout));
        stream.write_line(protocol::encode(protocol::DirectoryRequest{protocol::DirectoryCommand::Ping, 0}));
        return expect_line(stream) == protocol::kPong;
    } catch (const Error&) {
        return false;
    }
}

}  // namespace didb
