#include "didb/directory.hpp"
#include "didb/error.hpp"
#include "didb/node.hpp"
#include "net_test_util.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <memory>
#include <random>

using namespace didb;
using namespace std::chrono_literals;
using protocol::NodeDescriptor;
using testutil::LogCapture;
using testutil::local;
using testutil::roundtrip;
using testutil::TempDir;
using testutil::wait_until;
namespace fs = std::filesystem;

namespace {

NodeConfig config_for(const fs::path& root, LogCapture& logs,
                      std::chrono::milliseconds interval = std::chrono::hours(1)) {
    NodeConfig c;
    c.store_root = root;
    c.bind_host = "127.0.0.1";
    c.interval = interval;
    c.peer_timeout = 2s;
    c.log = logs.sink();
    return c;
}

// Replaces the last digest character of one record without changing its
// sort position.
std::vector<DidbRecord> tweak(std::vector<DidbRecord> records, std::size_t at) {
    auto text = std::string(records[at].view());
    for (char c : std::string("0123456789abcdef")) {
        text[45] = c;
        auto candidate = parse_record(text);
        if (candidate != records[at] && records[at - 1] < candidate && candidate < records[at + 1]) {
            records[at] = candidate;
            return records;
        }
    }
    throw std::runtime_error("no neighbour-preserving tweak");
}

std::string manifest_bytes_of(const fs::path& root) {
    return read_file(manifest_path(*active_store_dir(root)));
}

}  // namespace

TEST(NodeConfigTest, Validation) {
    NodeConfig c;
    EXPECT_THROW(c.validate(), Error);
    c.store_root = "/tmp/x";
    c.verify_port = 9000;
    c.sync_port = 9000;
    EXPECT_THROW(c.validate(), Error);
    c.sync_port = 9001;
    c.interval = 0ms;
    EXPECT_THROW(c.validate(), Error);
    c.interval = 10ms;
    EXPECT_NO_THROW(c.validate());
}

TEST(NodeConfigTest, FromFile) {
    TempDir dir;
    std::ofstream(dir / "node.conf") << "# node\nstore = /srv/didb\nverify-port=9001\n"
                                        "sync-port = 9002\ndirectory = 10.0.0.1:7000\n"
                                        "peer = 10.0.0.2:9002\npeer = 10.0.0.3:9002 # seed\n"
                                        "interval = 2.5\n";
    auto c = NodeConfig::from_file(dir / "node.conf");
    EXPECT_EQ(c.store_root, "/srv/didb");
    EXPECT_EQ(c.verify_port, 9001);
    EXPECT_EQ(c.sync_port, 9002);
    EXPECT_EQ(c.directory->str(), "10.0.0.1:7000");
    ASSERT_EQ(c.peers.size(), 2u);
    EXPECT_EQ(c.peers[1].str(), "10.0.0.3:9002");
    EXPECT_EQ(c.interval, 2500ms);

    std::ofstream(dir / "bad.conf") << "colour = blue\n";
    try {
        NodeConfig::from_file(dir / "bad.conf");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
    }
    std::ofstream(dir / "bad2.conf") << "verify-port = 99999\n";
    EXPECT_THROW(NodeConfig::from_file(dir / "bad2.conf"), Error);
}

TEST(NodeTest, NotReadyWithoutStore) {
    TempDir dir;
    LogCapture logs;
    Node node(config_for(dir / "node", logs));
    node.start();
    EXPECT_EQ(roundtrip(node.verify_port(), "VERIFY 198012" + std::string(40, 'a')), "ERR NOT_READY");
    EXPECT_EQ(roundtrip(node.sync_port(), "MANIFEST"), "ERR NOT_READY");
    EXPECT_FALSE(node.version());
}

TEST(NodeTest, AnswersFromLocalStore) {
    TempDir dir;
    LogCapture logs;
    auto records = testutil::random_records(5000, 1);
    write_store(pack_chunks(records), 3, dir / "node");
    Node node(config_for(dir / "node", logs));
    node.start();
    EXPECT_EQ(node.version(), 3u);
    EXPECT_EQ(roundtrip(node.verify_port(), "VERIFY " + records[17].encode()), "FOUND 3");
    std::mt19937_64 rng(9);
    auto absent = testutil::random_record(rng);
    ASSERT_FALSE(std::binary_search(records.begin(), records.end(), absent));
    EXPECT_EQ(roundtrip(node.verify_port(), "VERIFY " + absent.encode()), "NOT_FOUND 3");
    EXPECT_EQ(roundtrip(node.verify_port(), "VERIFY nope"), "ERR BAD_PARAM");
    EXPECT_EQ(roundtrip(node.verify_port(), "HELLO"), "ERR BAD_PARAM");

    // Pipelined requests on one connection.
    net::Stream s(net::connect_tcp(local(node.verify_port()), 2s));
    std::string batch;
    for (int i = 0; i < 50; ++i) batch += "VERIFY " + records[static_cast<std::size_t>(i) * 10].encode() + "\n";
    s.write_all(batch);
    for (int i = 0; i < 50; ++i) EXPECT_EQ(s.read_line().value(), "FOUND 3");
}

TEST(NodeTest, ServesSyncGrammar) {
    TempDir dir;
    LogCapture logs;
    auto records = testutil::random_records(2 * kChunkCapacity + 10, 2);
    auto manifest = write_store(pack_chunks(records), 1, dir / "node");
    Node node(config_for(dir / "node", logs));
    node.start();

    net::Stream s(net::connect_tcp(local(node.sync_port()), 5s));
    s.write_line("HELLO 1");
    EXPECT_EQ(s.read_line().value(), "HELLO 1");
    s.write_line("MANIFEST");
    auto header = protocol::decode_sync_header(s.read_line().value());
    ASSERT_EQ(header.reply, protocol::SyncReply::Manifest);
    EXPECT_EQ(s.read_exact(header.length), read_file(manifest_path(dir / "node")));
    for (std::uint32_t i = 0; i < 3; ++i) {
        s.write_line("GET_CHUNK " + std::to_string(i));
        auto h = protocol::decode_sync_header(s.read_line().value());
        ASSERT_EQ(h.reply, protocol::SyncReply::Chunk);
        EXPECT_EQ(h.chunk_index, i);
        EXPECT_EQ(sha256_hex(s.read_exact(h.length)), manifest.descriptors[i].checksum);
    }
    s.write_line("GET_CHUNK 999999");
    EXPECT_EQ(s.read_line().value(), "ERR NO_SUCH_CHUNK");
    s.write_line("GET_CHUNK -1");
    EXPECT_EQ(s.read_line().value(), "ERR BAD_REQUEST");
}

TEST(NodeTest, EmptyFollowerConvergesThenFetchesOnlyChangedChunk) {
    TempDir dir;
    LogCapture seed_logs, follower_logs;
    auto v1 = testutil::random_records(2 * kChunkCapacity + 500, 3);
    write_store(pack_chunks(v1), 1, dir / "seed");
    Node seed(config_for(dir / "seed", seed_logs));
    seed.start();

    auto fc = config_for(dir / "follower", follower_logs);
    fc.peers = {local(seed.sync_port())};
    Node follower(fc);
    follower.start();
    ASSERT_TRUE(wait_until([&] { return follower.version() == 1u; }));
    EXPECT_EQ(manifest_bytes_of(dir / "follower"), manifest_bytes_of(dir / "seed"));
    EXPECT_TRUE(validate_store(*active_store_dir(dir / "follower")).empty());
    auto swaps = follower_logs.events("swap");
    ASSERT_EQ(swaps.size(), 1u);
    EXPECT_EQ(swaps[0]["chunks_fetched"], 3);

    // Version 2 changes one record inside chunk 1.
    auto v2 = tweak(v1, kChunkCapacity + 1000);
    write_store(pack_chunks(v2), 2, dir / "seed" / "versions" / "2");
    set_current(dir / "seed", dir / "seed" / "versions" / "2");
    ASSERT_TRUE(seed.reload_local());
    EXPECT_EQ(seed.version(), 2u);

    EXPECT_TRUE(follower.sync_round());
    EXPECT_EQ(follower.version(), 2u);
    swaps = follower_logs.events("swap");
    ASSERT_EQ(swaps.size(), 2u);
    EXPECT_EQ(swaps[1]["chunks_fetched"], 1);
    EXPECT_EQ(manifest_bytes_of(dir / "follower"), manifest_bytes_of(dir / "seed"));
    auto tweaked = v2[kChunkCapacity + 1000];
    EXPECT_EQ(roundtrip(follower.verify_port(), "VERIFY " + tweaked.encode()), "FOUND 2");
    // The version-1 copy fetched earlier is gone; only the active one remains.
    EXPECT_FALSE(fs::exists(dir / "follower" / "versions" / "1"));

    // Same version again: nothing to do.
    EXPECT_FALSE(follower.sync_round());
    EXPECT_EQ(follower_logs.events("sync_decision").back()["action"], "skip");

    // Restart from disk with no peers.
    follower.stop();
    LogCapture restart_logs;
    Node again(config_for(dir / "follower", restart_logs));
    again.start();
    EXPECT_EQ(again.version(), 2u);
    EXPECT_EQ(roundtrip(again.verify_port(), "VERIFY " + tweaked.encode()), "FOUND 2");
}

TEST(NodeTest, CorruptPeerChunkIsNeverActivated) {
    TempDir dir;
    auto records = testutil::random_records(3000, 4);
    auto manifest = write_store(pack_chunks(records), 5, dir / "real");
    auto manifest_text = read_file(manifest_path(dir / "real"));
    auto chunk = read_file(chunk_path(dir / "real", 0));
    chunk[100] ^= 0x01;

    std::atomic<int> chunk_requests{0};
    net::TcpServer liar;
    liar.start("127.0.0.1", 0, [&](net::Stream& s, const std::string&) {
        while (auto line = s.read_line()) {
            auto req = protocol::decode_sync_request(*line);
            if (req.command == protocol::SyncCommand::Hello)
                s.write_all(protocol::encode_frame(protocol::SyncResponse::hello()));
            else if (req.command == protocol::SyncCommand::Manifest)
                s.write_all(protocol::encode_frame(protocol::SyncResponse::manifest(manifest_text)));
            else {
                ++chunk_requests;
                s.write_all(protocol::encode_frame(protocol::SyncResponse::chunk(req.chunk_index, chunk)));
            }
        }
    });

    LogCapture logs;
    auto fc = config_for(dir / "follower", logs);
    fc.peers = {local(liar.port())};
    Node follower(fc);
    follower.start();
    ASSERT_TRUE(wait_until([&] { return !logs.events("sync_abort").empty(); }));
    EXPECT_FALSE(follower.version());
    EXPECT_EQ(chunk_requests.load(), fc.chunk_failure_budget);
    EXPECT_EQ(logs.events("chunk_rejected").size(), static_cast<std::size_t>(fc.chunk_failure_budget));
    EXPECT_TRUE(logs.events("swap").empty());
    EXPECT_FALSE(fs::exists(dir / "follower" / "versions" / "5"));
}

TEST(NodeTest, UnreachablePeerIsRetriedLater) {
    TempDir dir;
    LogCapture logs;
    auto records = testutil::random_records(1000, 5);
    write_store(pack_chunks(records), 1, dir / "seed");

    // Reserve the port the seed will use, then start the follower first.
    auto port = testutil::dead_port();
    auto fc = config_for(dir / "follower", logs, 100ms);
    fc.peers = {local(port)};
    Node follower(fc);
    follower.start();
    ASSERT_TRUE(wait_until([&] { return !logs.events("peer_unreachable").empty(); }));
    EXPECT_FALSE(follower.version());

    LogCapture seed_logs;
    auto sc = config_for(dir / "seed", seed_logs);
    sc.sync_port = port;
    Node seed(sc);
    seed.start();
    ASSERT_TRUE(wait_until([&] { return follower.version() == 1u; }));
}

TEST(NodeTest, ConcurrentProbesMatchOracle) {
    TempDir dir;
    LogCapture logs;
    auto records = testutil::random_records(100'000, 6);
    write_store(pack_chunks(records), 9, dir / "node");
    Node node(config_for(dir / "node", logs));
    node.start();

    std::mt19937_64 rng(7);
    std::vector<DidbRecord> probes;
    for (int i = 0; i < 1000; ++i)
        probes.push_back(i % 2 ? records[rng() % records.size()] : testutil::random_record(rng));

    // 250 connections open at once, 4 probes each.
    std::vector<net::Stream> conns;
    for (int c = 0; c < 250; ++c) conns.emplace_back(net::connect_tcp(local(node.verify_port()), 5s));
    for (std::size_t i = 0; i < probes.size(); ++i)
        conns[i % conns.size()].write_line("VERIFY " + probes[i].encode());
    int mismatches = 0;
    for (std::size_t i = 0; i < probes.size(); ++i) {
        auto reply = conns[i % conns.size()].read_line().value();
        bool expected = std::binary_search(records.begin(), records.end(), probes[i]);
        if (reply != (expected ? "FOUND 9" : "NOT_FOUND 9")) ++mismatches;
    }
    EXPECT_EQ(mismatches, 0);
}

TEST(NodeTest, HeartbeatRegistersAndExpires) {
    TempDir dir;
    DirectoryServer directory({"127.0.0.1", 0, 600ms});
    directory.start();
    auto records = testutil::random_records(100, 7);
    write_store(pack_chunks(records), 1, dir / "node");

    LogCapture logs;
    auto nc = config_for(dir / "node", logs, 150ms);
    nc.directory = local(directory.port());
    auto node = std::make_unique<Node>(nc);
    node->start();
    NodeDescriptor me{"127.0.0.1", node->verify_port()};
    ASSERT_TRUE(wait_until([&] {
        auto list = fetch_node_list(local(directory.port()), 1s);
        return list.size() == 1 && list[0] == me;
    }));
    node->stop();
    ASSERT_TRUE(wait_until([&] { return fetch_node_list(local(directory.port()), 1s).empty(); }, 5s));
}

TEST(NodeTest, OfflineWhenDirectoryIsDown) {
    TempDir dir;
    auto records = testutil::random_records(100, 8);
    write_store(pack_chunks(records), 1, dir / "node");
    LogCapture logs;
    auto nc = config_for(dir / "node", logs, 100ms);
    nc.directory = local(testutil::dead_port());
    nc.peers = {local(testutil::dead_port())};
    Node node(nc);
    node.start();
    ASSERT_TRUE(wait_until([&] { return !logs.events("directory_unreachable").empty(); }));
    for (int i = 0; i < 20; ++i)
        EXPECT_EQ(roundtrip(node.verify_port(), "VERIFY " + records[static_cast<std::size_t>(i)].encode()),
                  "FOUND 1");
}

TEST(NodeTest, StopDrainsIdleConnections) {
    TempDir dir;
    LogCapture logs;
    write_store(pack_chunks(testutil::random_records(10, 9)), 1, dir / "node");
    Node node(config_for(dir / "node", logs));
    node.start();
    net::Stream idle(net::connect_tcp(local(node.verify_port()), 2s));
    idle.write_line("VERIFY 198012" + std::string(40, 'a'));
    EXPECT_EQ(idle.read_line().value(), "NOT_FOUND 1");
    auto t0 = std::chrono::steady_clock::now();
    node.stop();
    EXPECT_LT(std::chrono::steady_clock::now() - t0, 2s);
    EXPECT_FALSE(idle.read_line());
}
