#pragma once

// Desk-scale harness: runs a directory, a seed node and N followers as real
// processes on localhost, then measures convergence, update transfer,
// failover and offline service. Reads only process logs and on-disk state.

#include "didb/core.hpp"
#include "didb/protocol.hpp"

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace didb::simnet {

/// A child process with stdout and stderr sent to a log file.
class Process {
public:
    Process(const std::filesystem::path& program, const std::vector<std::string>& args,
            const std::filesystem::path& log_file);
    ~Process();
    Process(const Process&) = delete;
    Process& operator=(const Process&) = delete;

    bool alive();
    /// SIGKILL, as in a crash.
    void kill();
    /// SIGTERM, then SIGKILL after `grace`.
    void terminate(std::chrono::milliseconds grace = std::chrono::milliseconds(5000));
    int pid() const noexcept { return pid_; }

private:
    void reap(bool block);
    int pid_ = -1;
    bool exited_ = false;
};

struct SimConfig {
    std::filesystem::path bin_dir;   // holds didb-node and didb-directory
    std::filesystem::path work_dir;  // created if missing
    std::size_t followers = 4;
    std::uint64_t records = 100'000;
    std::uint64_t seed = 1;
    std::chrono::milliseconds interval{200};
    std::chrono::milliseconds convergence_timeout{60'000};
    /// Long enough that killed nodes stay listed during failover probes.
    std::chrono::milliseconds directory_ttl{30'000};
};

struct NodeHandle {
    std::string name;
    std::filesystem::path root;
    std::uint16_t verify_port = 0;
    std::uint16_t sync_port = 0;
    std::filesystem::path log_file;
    std::unique_ptr<Process> process;
    bool killed = false;
};

/// Free localhost ports, distinct within one call.
std::vector<std::uint16_t> free_ports(std::size_t count);

/// JSON lines of a log file; other lines are skipped.
std::vector<nlohmann::json> read_log(const std::filesystem::path& file);

/// Manifest bytes of the active store under a node root, if any.
std::optional<std::string> active_manifest_bytes(const std::filesystem::path& root);

class Cluster {
public:
    explicit Cluster(SimConfig config);
    ~Cluster();

    /// Builds the seed store, starts followers before the seed, and waits
    /// until every follower holds byte-identical MANIFEST bytes.
    nlohmann::json bootstrap();
    /// Renames the holders of `change_fraction` of the CIDB rows (at least one
    /// when the fraction is positive), publishes version+1 on the seed and
    /// waits for convergence. Zero changes publish nothing.
    nlohmann::json update(double change_fraction);
    /// Kills round(kill_fraction * nodes) nodes, then sends `probes` client
    /// verifications through the directory.
    nlohmann::json failover(double kill_fraction, std::size_t probes);
    /// Stops the directory and every other node, probes one surviving node
    /// directly, then restarts it with no network and probes again.
    nlohmann::json offline(std::size_t probes);

    /// Seed first, then followers.
    const std::vector<NodeHandle>& nodes() const noexcept { return nodes_; }
    protocol::NodeDescriptor directory() const;
    std::uint64_t version() const noexcept { return version_; }
    void shutdown();

private:
    void start_directory();
    void start_node(NodeHandle& node, bool with_network);
    std::vector<std::string> node_args(const NodeHandle& node, bool with_network) const;
    /// Waits until every live node's active manifest equals the seed's.
    bool wait_converged(double* seconds);
    std::vector<DidbRecord> probe_set(std::size_t count, std::uint64_t salt);
    std::vector<DidbRecord> current_records() const;
    nlohmann::json convergence_state() const;

    SimConfig config_;
    std::filesystem::path cidb_;
    std::uint16_t directory_port_ = 0;
    std::unique_ptr<Process> directory_;
    std::vector<NodeHandle> nodes_;
    std::uint64_t version_ = 0;
};

}  // namespace didb::simnet
