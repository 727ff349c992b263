#include "didb/node.hpp"

#include "didb/directory.hpp"
#include "didb/error.hpp"
#include "didb/text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;

namespace didb {

using protocol::NodeDescriptor;

namespace {

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::uint16_t parse_port_value(const std::string& value, const std::string& key) {
    std::uint64_t port = 0;
    if (!parse_decimal(value, port) || port > 65535)
        throw Error(ErrorCode::InvalidConfig, key + " must be a port number");
    return static_cast<std::uint16_t>(port);
}

}  // namespace

LogSink stderr_log_sink(std::string node_name) {
    auto mutex = std::make_shared<std::mutex>();
    return [mutex, node_name = std::move(node_name)](const nlohmann::json& event) {
        auto line = event;
        if (!node_name.empty()) line["node"] = node_name;
        std::lock_guard lock(*mutex);
        std::cerr << line.dump() << std::endl;
    };
}

void NodeConfig::validate() const {
    if (store_root.empty()) throw Error(ErrorCode::InvalidConfig, "store root is required");
    if (verify_port != 0 && verify_port == sync_port)
        throw Error(ErrorCode::InvalidConfig, "verify and sync ports must differ");
    if (interval.count() <= 0) throw Error(ErrorCode::InvalidConfig, "interval must be positive");
    if (chunk_failure_budget < 1)
        throw Error(ErrorCode::InvalidConfig, "chunk failure budget must be at least 1");
}

NodeConfig NodeConfig::from_file(const fs::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error& e) {
        throw Error(ErrorCode::InvalidConfig, e.what());
    }
    NodeConfig config;
    std::size_t line_no = 0;
    for (auto raw : split(text, '\n')) {
        ++line_no;
        auto line = trim(raw.substr(0, raw.find('#')));
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(line_no) + ": expected key = value");
        auto key = trim(std::string_view(line).substr(0, eq));
        auto value = trim(std::string_view(line).substr(eq + 1));
        try {
            if (key == "store") {
                config.store_root = value;
            } else if (key == "bind") {
                config.bind_host = value;
            } else if (key == "verify-port") {
                config.verify_port = parse_port_value(value, key);
            } else if (key == "sync-port") {
                config.sync_port = parse_port_value(value, key);
            } else if (key == "directory") {
                config.directory = NodeDescriptor::parse(value);
            } else if (key == "peer") {
                config.peers.push_back(NodeDescriptor::parse(value));
            } else if (key == "interval") {
                double seconds = std::stod(value);
                config.interval = std::chrono::milliseconds(std::llround(seconds * 1000));
            } else {
                throw Error(ErrorCode::InvalidConfig, "unknown key '" + key + "'");
            }
        } catch (const Error& e) {
            if (e.code() == ErrorCode::InvalidConfig) throw;
            throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(line_no) + ": " + e.what());
        } catch (const std::exception&) {
            throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(line_no) + ": bad value for " + key);
        }
    }
    return config;
}

std::optional<fs::path> active_store_dir(const fs::path& root) {
    std::error_code ec;
    auto current = root / "CURRENT";
    if (fs::is_regular_file(current, ec)) {
        auto rel = trim(read_file(current));
        if (!rel.empty()) return root / rel;
    }
    if (fs::is_regular_file(manifest_path(root), ec)) return root;
    return std::nullopt;
}

void set_current(const fs::path& root, const fs::path& store_dir) {
    auto rel = fs::relative(store_dir, root);
    write_file_atomic(root / "CURRENT", rel.generic_string() + "\n");
}

Node::Node(NodeConfig config) : config_(std::move(config)), rng_(std::random_device{}()) {
    config_.validate();
    if (!config_.log) config_.log = stderr_log_sink();
}

Node::~Node() { stop(); }

void Node::log(nlohmann::json event) const {
    event["ts_ms"] = now_ms();
    config_.log(event);
}

std::optional<std::uint64_t> Node::version() const {
    auto snap = store_.snapshot();
    if (!snap) return std::nullopt;
    return snap->version();
}

void Node::start() {
    if (started_) return;
    std::error_code ec;
    fs::create_directories(config_.store_root, ec);
    reload_local();
    if (!store_.loaded()) log({{"event", "not_ready"}, {"store", config_.store_root.string()}});

    verify_server_.start(config_.bind_host, config_.verify_port,
                         [this](net::Stream& s, const std::string&) { serve_verify(s); });
    sync_server_.start(config_.bind_host, config_.sync_port,
                       [this](net::Stream& s, const std::string&) { serve_sync(s); });
    log({{"event", "listening"},
         {"verify_port", verify_port()},
         {"sync_port", sync_port()},
         {"version", version() ? nlohmann::json(*version()) : nlohmann::json(nullptr)}});

    {
        std::lock_guard lock(wake_mutex_);
        stopping_ = false;
    }
    background_ = std::thread([this] { background_loop(); });
    started_ = true;
}

void Node::stop() {
    if (!started_) return;
    {
        std::lock_guard lock(wake_mutex_);
        stopping_ = true;
    }
    wake_.notify_all();
    if (background_.joinable()) background_.join();
    verify_server_.stop();
    sync_server_.stop();
    started_ = false;
    log({{"event", "stopped"}});
}

void Node::background_loop() {
    std::thread beat;
    if (config_.directory) beat = std::thread([this] { heartbeat(); });
    while (true) {
        try {
            reload_local();
            sync_round();
        } catch (const std::exception& e) {
            log({{"event", "sync_error"}, {"error", e.what()}});
        }
        std::unique_lock lock(wake_mutex_);
        if (wake_.wait_for(lock, config_.interval, [this] { return stopping_; })) break;
    }
    if (beat.joinable()) beat.join();
}

void Node::heartbeat() {
    bool reachable = true;
    while (true) {
        try {
            register_node(*config_.directory, verify_port(), config_.peer_timeout);
            if (!reachable) log({{"event", "directory_reachable"}});
            reachable = true;
        } catch (const std::exception& e) {
            if (reachable) log({{"event", "directory_unreachable"}, {"error", e.what()}});
            reachable = false;
        }
        std::unique_lock lock(wake_mutex_);
        if (wake_.wait_for(lock, config_.interval, [this] { return stopping_; })) return;
    }
}

std::string Node::answer_verify(std::string_view line) const {
    using protocol::VerifyResponse;
    try {
        auto request = protocol::decode_verify_request(line);
        auto snap = store_.snapshot();
        if (!snap) return protocol::encode(VerifyResponse::error(protocol::kNotReady));
        return protocol::encode(snap->contains(request.parameter)
                                    ? VerifyResponse::found(snap->version())
                                    : VerifyResponse::not_found(snap->version()));
    } catch (const Error& e) {
        if (e.code() == ErrorCode::BadParameter || e.code() == ErrorCode::MalformedLine)
            return protocol::encode(VerifyResponse::error(protocol::kBadParam));
        return protocol::encode(VerifyResponse::error(protocol::kInternal));
    } catch (...) {
        return protocol::encode(VerifyResponse::error(protocol::kInternal));
    }
}

void Node::serve_verify(net::Stream& stream) {
    while (true) {
        std::optional<std::string> line;
        try {
            line = stream.read_line();
        } catch (const Error& e) {
            if (e.code() == ErrorCode::MalformedLine)
                stream.write_line(protocol::encode(protocol::VerifyResponse::error(protocol::kBadParam)));
            return;
        }
        if (!line) return;
        stream.write_line(answer_verify(*line));
    }
}

void Node::serve_sync(net::Stream& stream) {
    using protocol::SyncResponse;
    while (true) {
        auto line = stream.read_line();
        if (!line) return;
        protocol::SyncRequest request;
        try {
            request = protocol::decode_sync_request(*line);
        } catch (const Error&) {
            stream.write_all(protocol::encode_frame(SyncResponse::error(protocol::kBadRequest)));
            continue;
        }
        auto snap = store_.snapshot();
        switch (request.command) {
        case protocol::SyncCommand::Hello:
            stream.write_all(protocol::encode_frame(SyncResponse::hello()));
            break;
        case protocol::SyncCommand::Manifest:
            if (!snap) {
                stream.write_all(protocol::encode_frame(SyncResponse::error(protocol::kNotReady)));
            } else {
                const auto& bytes = snap->manifest_bytes();
                stream.write_line("MANIFEST " + std::to_string(bytes.size()));
                stream.write_all(bytes);
            }
            break;
        case protocol::SyncCommand::GetChunk:
            if (!snap) {
                stream.write_all(protocol::encode_frame(SyncResponse::error(protocol::kNotReady)));
            } else if (request.chunk_index >= snap->chunk_count()) {
                stream.write_all(protocol::encode_frame(SyncResponse::error(protocol::kNoSuchChunk)));
            } else {
                const auto& bytes = snap->chunk_bytes(request.chunk_index);
                stream.write_line(protocol::encode_header(
                    {protocol::SyncReply::Chunk, request.chunk_index, bytes.size(), {}}));
                stream.write_all(bytes);
            }
            break;
        }
    }
}

void Node::activate_dir(const fs::path& dir, const nlohmann::json& context) {
    auto previous = store_.snapshot();
    auto manifest = store_.swap_version(dir);
    set_current(config_.store_root, dir);
    auto event = context;
    event["event"] = "swap";
    event["version"] = manifest.didb_version;
    event["from_version"] = previous ? nlohmann::json(previous->version()) : nlohmann::json(nullptr);
    log(event);

    // Drop the superseded copy if it was one this node fetched.
    if (previous) {
        auto versions = fs::weakly_canonical(config_.store_root / "versions");
        auto old_dir = fs::weakly_canonical(previous->root());
        if (old_dir.parent_path() == versions && old_dir != fs::weakly_canonical(dir)) {
            std::error_code ec;
            fs::remove_all(old_dir, ec);
        }
    }
}

bool Node::reload_local() {
    std::lock_guard lock(sync_mutex_);
    std::optional<fs::path> dir;
    try {
        dir = active_store_dir(config_.store_root);
    } catch (const Error& e) {
        log({{"event", "local_store_error"}, {"error", e.what()}});
        return false;
    }
    if (!dir) return false;
    auto snap = store_.snapshot();
    if (snap && fs::weakly_canonical(snap->root()) == fs::weakly_canonical(*dir)) return false;
    try {
        auto manifest = read_manifest(*dir);
        if (snap && manifest.didb_version <= snap->version()) return false;
        activate_dir(*dir, {{"source", "local"}, {"dir", dir->string()}});
        return true;
    } catch (const Error& e) {
        log({{"event", "local_store_rejected"}, {"dir", dir->string()}, {"error", e.what()}});
        return false;
    }
}

bool Node::sync_round() {
    auto peers = config_.peers;
    std::shuffle(peers.begin(), peers.end(), rng_);
    // Peers that recently served bad chunks go last.
    std::stable_sort(peers.begin(), peers.end(), [this](const NodeDescriptor& a, const NodeDescriptor& b) {
        return peer_failures_[a.str()] < peer_failures_[b.str()];
    });
    bool activated = false;
    for (const auto& peer : peers) {
        {
            std::lock_guard lock(wake_mutex_);
            if (stopping_) break;
        }
        activated = sync_from(peer) || activated;
    }
    return activated;
}

bool Node::sync_from(const NodeDescriptor& peer) {
    using protocol::SyncReply;
    std::lock_guard lock(sync_mutex_);
    std::unique_ptr<net::Stream> stream;
    std::uint64_t chunks_fetched = 0;
    auto fail = [&](const std::string& why) {
        log({{"event", "sync_abort"},
             {"peer", peer.str()},
             {"reason", why},
             {"chunks_fetched", chunks_fetched},
             {"bytes_received", stream ? stream->bytes_received() : 0}});
        return false;
    };

    try {
        stream = std::make_unique<net::Stream>(net::connect_tcp(peer, config_.peer_timeout));
        auto request = [&](const protocol::SyncRequest& r) {
            stream->write_line(protocol::encode(r));
            auto line = stream->read_line();
            if (!line) throw Error(ErrorCode::ConnectionFailed, "peer closed the connection");
            return protocol::decode_sync_header(*line);
        };

        auto hello = request({protocol::SyncCommand::Hello, 0});
        if (hello.reply != SyncReply::Hello) return fail("bad HELLO reply");

        auto mh = request({protocol::SyncCommand::Manifest, 0});
        if (mh.reply == SyncReply::Err) {
            // A peer without a store has nothing to offer; not worth a log line per poll.
            return false;
        }
        if (mh.reply != SyncReply::Manifest) return fail("bad MANIFEST reply");
        auto manifest_bytes = stream->read_exact(mh.length);
        auto remote = Manifest::parse(manifest_bytes);

        auto local = store_.snapshot();
        nlohmann::json decision = {{"event", "sync_decision"},
                                   {"peer", peer.str()},
                                   {"local_version", local ? nlohmann::json(local->version()) : nlohmann::json(nullptr)},
                                   {"remote_version", remote.didb_version}};
        if (local && remote.didb_version <= local->version()) {
            decision["action"] = "skip";
            decision["bytes_received"] = stream->bytes_received();
            log(decision);
            return false;
        }
        auto wanted = diff_manifests(local ? local->manifest() : Manifest{}, remote);
        decision["action"] = "fetch";
        decision["chunks_to_fetch"] = wanted.size();
        decision["chunks_total"] = remote.descriptors.size();
        log(decision);

        std::vector<std::string> chunks(remote.descriptors.size());
        std::vector<bool> have(remote.descriptors.size(), false);
        if (local) {
            for (const auto& d : remote.descriptors) {
                if (std::find(wanted.begin(), wanted.end(), d.index) != wanted.end()) continue;
                chunks[d.index] = local->chunk_bytes(d.index);
                have[d.index] = true;
            }
        }

        int failures = 0;
        for (auto idx : wanted) {
            const auto& expected = remote.descriptors[idx];
            while (!have[idx]) {
                auto ch = request({protocol::SyncCommand::GetChunk, idx});
                if (ch.reply == SyncReply::Err)
                    return fail("peer answered ERR " + ch.error_code + " for chunk " + std::to_string(idx));
                if (ch.reply != SyncReply::Chunk || ch.chunk_index != idx)
                    return fail("unexpected reply for chunk " + std::to_string(idx));
                auto bytes = stream->read_exact(ch.length);
                ++chunks_fetched;
                if (sha256_hex(bytes) == expected.checksum) {
                    chunks[idx] = std::move(bytes);
                    have[idx] = true;
                    continue;
                }
                ++failures;
                ++peer_failures_[peer.str()];
                log({{"event", "chunk_rejected"}, {"peer", peer.str()}, {"chunk", idx}, {"failures", failures}});
                if (failures >= config_.chunk_failure_budget) return fail("checksum failure budget exhausted");
            }
        }

        auto dir = config_.store_root / "versions" / std::to_string(remote.didb_version);
        std::error_code ec;
        fs::create_directories(dir.parent_path(), ec);
        if (fs::exists(dir, ec)) fs::remove_all(dir, ec);
        write_raw_store(manifest_bytes, chunks, dir);
        try {
            activate_dir(dir, {{"source", "peer"},
                               {"peer", peer.str()},
                               {"chunks_fetched", chunks_fetched},
                               {"bytes_received", stream->bytes_received()}});
        } catch (const Error& e) {
            fs::remove_all(dir, ec);
            return fail(e.what());
        }
        peer_failures_[peer.str()] = 0;
        return true;
    } catch (const Error& e) {
        if (!stream && (e.code() == ErrorCode::ConnectionFailed || e.code() == ErrorCode::Timeout)) {
            log({{"event", "peer_unreachable"}, {"peer", peer.str()}, {"error", e.what()}});
            return false;
        }
        return fail(e.what());
    }
}

}  // namespace didb
