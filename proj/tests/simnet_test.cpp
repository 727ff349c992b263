#include "didb/simnet.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace didb;
using testutil::TempDir;

namespace {

simnet::SimConfig config(const TempDir& dir, std::size_t followers, std::uint64_t records) {
    simnet::SimConfig c;
    c.bin_dir = DIDB_TOOLS_DIR;
    c.work_dir = dir.path();
    c.followers = followers;
    c.records = records;
    c.seed = 3;
    return c;
}

}  // namespace

TEST(SimnetTest, FreePortsAreDistinct) {
    auto ports = simnet::free_ports(20);
    std::set<std::uint16_t> unique(ports.begin(), ports.end());
    EXPECT_EQ(unique.size(), 20u);
}

TEST(SimnetTest, NoFollowersIsTriviallyConverged) {
    TempDir dir;
    simnet::Cluster cluster(config(dir, 0, 1000));
    auto r = cluster.bootstrap();
    EXPECT_TRUE(r["converged"]);
    EXPECT_TRUE(r["pass"]);
    EXPECT_EQ(r["nodes"].size(), 1u);
}

TEST(SimnetTest, UpdateZeroThenAll) {
    TempDir dir;
    simnet::Cluster cluster(config(dir, 2, 150'000));
    ASSERT_TRUE(cluster.bootstrap()["converged"]);

    auto none = cluster.update(0);
    EXPECT_EQ(none["records_changed"], 0);
    EXPECT_EQ(none["didb_version"], 1);
    EXPECT_EQ(none["max_chunks_per_follower"], 0);

    auto all = cluster.update(1.0);
    EXPECT_TRUE(all["converged"]);
    EXPECT_EQ(all["didb_version"], 2);
    EXPECT_EQ(all["chunks_total"], 2);
    for (const auto& t : all["transfers"]) EXPECT_EQ(t["chunks_fetched"], 2);
}

TEST(SimnetTest, NoKillsMeansOneAttempt) {
    TempDir dir;
    simnet::Cluster cluster(config(dir, 2, 2000));
    ASSERT_TRUE(cluster.bootstrap()["converged"]);
    auto r = cluster.failover(0, 50);
    EXPECT_EQ(r["succeeded"], 50);
    EXPECT_DOUBLE_EQ(r["mean_attempts"].get<double>(), 1.0);
}

TEST(SimnetTest, ProcessLifecycle) {
    TempDir dir;
    simnet::Process p("/bin/sleep", {"30"}, dir / "sleep.log");
    EXPECT_TRUE(p.alive());
    p.terminate();
    EXPECT_FALSE(p.alive());
}
