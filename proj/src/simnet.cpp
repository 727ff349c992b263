#include "didb/simnet.hpp"

#include "didb/builder.hpp"
#include "didb/client.hpp"
#include "didb/directory.hpp"
#include "didb/error.hpp"
#include "didb/node.hpp"
#include "didb/store.hpp"

#include <algorithm>
#include <cerrno>
#include <csignal>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <thread>

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <sys/prctl.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

namespace didb::simnet {

namespace fs = std::filesystem;
using namespace std::chrono_literals;
using protocol::NodeDescriptor;

namespace {

std::int64_t wall_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

NodeDescriptor local(std::uint16_t port) { return {"127.0.0.1", port}; }

std::vector<DidbRecord> load_records(const fs::path& store) {
    auto manifest = read_manifest(store);
    std::vector<DidbRecord> out;
    out.reserve(manifest.total_records);
    for (const auto& d : manifest.descriptors) {
        auto bytes = read_file(chunk_path(store, d.index));
        for (std::size_t off = 0; off + kRecordSize <= bytes.size(); off += kRecordSize)
            out.push_back(parse_record(std::string_view(bytes).substr(off, kRecordSize)));
    }
    return out;
}

DidbRecord random_record(std::mt19937_64& rng) {
    char prefix[16];
    std::snprintf(prefix, sizeof prefix, "%04d%02d", 1900 + static_cast<int>(rng() % 121),
                  1 + static_cast<int>(rng() % 12));
    return DidbRecord(BirthPrefix::parse(prefix), truncated_sha256("absent-" + std::to_string(rng())));
}

}  // namespace

Process::Process(const fs::path& program, const std::vector<std::string>& args, const fs::path& log_file) {
    std::vector<std::string> storage;
    storage.push_back(program.string());
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : storage) argv.push_back(s.data());
    argv.push_back(nullptr);
    auto log_path = log_file.string();

    pid_ = ::fork();
    if (pid_ < 0) throw Error(ErrorCode::IoFailure, std::string("fork: ") + std::strerror(errno));
    if (pid_ == 0) {
        ::prctl(PR_SET_PDEATHSIG, SIGKILL);
        int fd = ::open(log_path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
        if (fd >= 0) {
            ::dup2(fd, STDOUT_FILENO);
            ::dup2(fd, STDERR_FILENO);
            ::close(fd);
        }
        sigset_t none;
        sigemptyset(&none);
        ::sigprocmask(SIG_SETMASK, &none, nullptr);
        ::execv(argv[0], argv.data());
        ::_exit(127);
    }
}

Process::~Process() {
    try {
        terminate(2000ms);
    } catch (...) {
    }
}

void Process::reap(bool block) {
    if (exited_ || pid_ <= 0) return;
    int status = 0;
    auto r = ::waitpid(pid_, &status, block ? 0 : WNOHANG);
    if (r == pid_ || (r < 0 && errno == ECHILD)) exited_ = true;
}

bool Process::alive() {
    reap(false);
    return !exited_;
}

void Process::kill() {
    if (!alive()) return;
    ::kill(pid_, SIGKILL);
    reap(true);
}

void Process::terminate(std::chrono::milliseconds grace) {
    if (!alive()) return;
    ::kill(pid_, SIGTERM);
    auto deadline = std::chrono::steady_clock::now() + grace;
    while (std::chrono::steady_clock::now() < deadline) {
        if (!alive()) return;
        std::this_thread::sleep_for(10ms);
    }
    kill();
}

std::vector<std::uint16_t> free_ports(std::size_t count) {
    std::vector<int> fds;
    std::vector<std::uint16_t> ports;
    for (std::size_t i = 0; i < count; ++i) {
        int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw Error(ErrorCode::IoFailure, "socket");
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
            ::close(fd);
            throw Error(ErrorCode::IoFailure, "bind");
        }
        socklen_t len = sizeof addr;
        ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
        fds.push_back(fd);
        ports.push_back(ntohs(addr.sin_port));
    }
    for (int fd : fds) ::close(fd);
    return ports;
}

std::vector<nlohmann::json> read_log(const fs::path& file) {
    std::vector<nlohmann::json> out;
    std::ifstream in(file);
    std::string line;
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (!j.is_discarded() && j.is_object()) out.push_back(std::move(j));
    }
    return out;
}

std::optional<std::string> active_manifest_bytes(const fs::path& root) {
    try {
        auto dir = active_store_dir(root);
        if (!dir) return std::nullopt;
        return read_file(manifest_path(*dir));
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

Cluster::Cluster(SimConfig config) : config_(std::move(config)) {
    if (!fs::exists(config_.bin_dir / "didb-node") || !fs::exists(config_.bin_dir / "didb-directory"))
        throw Error(ErrorCode::InvalidConfig, "didb-node/didb-directory not found in " + config_.bin_dir.string());
    fs::create_directories(config_.work_dir);
    cidb_ = config_.work_dir / "cidb.csv";

    auto ports = free_ports(1 + 2 * (config_.followers + 1));
    directory_port_ = ports[0];
    for (std::size_t i = 0; i <= config_.followers; ++i) {
        NodeHandle n;
        n.name = i == 0 ? "seed" : "follower-" + std::to_string(i);
        n.root = config_.work_dir / n.name;
        n.verify_port = ports[1 + 2 * i];
        n.sync_port = ports[2 + 2 * i];
        n.log_file = config_.work_dir / (n.name + ".log");
        nodes_.push_back(std::move(n));
    }
}

Cluster::~Cluster() { shutdown(); }

void Cluster::shutdown() {
    for (auto& n : nodes_) n.process.reset();
    directory_.reset();
}

NodeDescriptor Cluster::directory() const { return local(directory_port_); }

void Cluster::start_directory() {
    directory_ = std::make_unique<Process>(
        config_.bin_dir / "didb-directory",
        std::vector<std::string>{"--bind", "127.0.0.1", "--port", std::to_string(directory_port_), "--ttl",
                                 std::to_string(config_.directory_ttl.count() / 1000.0)},
        config_.work_dir / "directory.log");
    auto deadline = std::chrono::steady_clock::now() + 10s;
    while (std::chrono::steady_clock::now() < deadline) {
        if (ping_directory(directory(), 500ms)) return;
        std::this_thread::sleep_for(20ms);
    }
    throw Error(ErrorCode::Timeout, "directory did not come up");
}

std::vector<std::string> Cluster::node_args(const NodeHandle& node, bool with_network) const {
    std::vector<std::string> args = {"--store", node.root.string(),
                                     "--bind", "127.0.0.1",
                                     "--verify-port", std::to_string(node.verify_port),
                                     "--sync-port", std::to_string(node.sync_port),
                                     "--interval", std::to_string(config_.interval.count() / 1000.0),
                                     "--name", node.name};
    if (!with_network) return args;
    args.insert(args.end(), {"--directory", directory().str()});
    if (&node != &nodes_[0]) {
        for (const auto& peer : nodes_)
            if (&peer != &node) args.insert(args.end(), {"--peer", local(peer.sync_port).str()});
    }
    return args;
}

void Cluster::start_node(NodeHandle& node, bool with_network) {
    node.process = std::make_unique<Process>(config_.bin_dir / "didb-node", node_args(node, with_network),
                                             node.log_file);
    node.killed = false;
}

bool Cluster::wait_converged(double* seconds) {
    auto t0 = std::chrono::steady_clock::now();
    auto deadline = t0 + config_.convergence_timeout;
    while (true) {
        auto reference = active_manifest_bytes(nodes_[0].root);
        bool all = reference.has_value();
        for (std::size_t i = 1; all && i < nodes_.size(); ++i) {
            if (nodes_[i].killed) continue;
            all = active_manifest_bytes(nodes_[i].root) == reference;
        }
        if (all) {
            if (seconds) *seconds = seconds_since(t0);
            return true;
        }
        if (std::chrono::steady_clock::now() >= deadline) {
            if (seconds) *seconds = seconds_since(t0);
            return false;
        }
        std::this_thread::sleep_for(50ms);
    }
}

nlohmann::json Cluster::convergence_state() const {
    auto reference = active_manifest_bytes(nodes_[0].root);
    auto out = nlohmann::json::array();
    for (const auto& n : nodes_) {
        if (n.killed) continue;
        auto bytes = active_manifest_bytes(n.root);
        nlohmann::json entry = {{"name", n.name}, {"manifest_identical", bytes && bytes == reference}};
        entry["didb_version"] = bytes ? nlohmann::json(Manifest::parse(*bytes).didb_version) : nlohmann::json(nullptr);
        out.push_back(entry);
    }
    return out;
}

std::vector<DidbRecord> Cluster::current_records() const {
    auto dir = active_store_dir(nodes_[0].root);
    if (!dir) throw Error(ErrorCode::StoreNotLoaded, "seed has no store");
    return load_records(*dir);
}

std::vector<DidbRecord> Cluster::probe_set(std::size_t count, std::uint64_t salt) {
    auto records = current_records();
    std::mt19937_64 rng(config_.seed * 1'000'003 + salt);
    std::vector<DidbRecord> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (i % 2 == 0 && !records.empty()) {
            out.push_back(records[rng() % records.size()]);
        } else {
            auto r = random_record(rng);
            while (std::binary_search(records.begin(), records.end(), r)) r = random_record(rng);
            out.push_back(r);
        }
    }
    return out;
}

nlohmann::json Cluster::bootstrap() {
    auto t_build = std::chrono::steady_clock::now();
    generate_synthetic_cidb(config_.records, config_.seed, cidb_);
    version_ = 1;
    auto seed_store = nodes_[0].root / "versions" / "1";
    auto built = build(cidb_, version_, seed_store);
    set_current(nodes_[0].root, seed_store);
    double build_seconds = seconds_since(t_build);

    std::uint64_t store_bytes = built.manifest.total_records * kRecordSize;
    std::uint64_t manifest_size = built.manifest.serialize().size();
    // Store plus manifest plus 1% for framing.
    double bound = static_cast<double>(store_bytes + manifest_size) * 1.01;

    start_directory();
    auto t0 = std::chrono::steady_clock::now();
    // Followers first: they must pick the seed up once it appears.
    for (std::size_t i = 1; i < nodes_.size(); ++i) start_node(nodes_[i], true);
    std::this_thread::sleep_for(config_.interval);
    start_node(nodes_[0], true);

    double waited = 0;
    bool converged = wait_converged(&waited);
    double total = seconds_since(t0);

    nlohmann::json followers = nlohmann::json::array();
    bool within = true;
    for (std::size_t i = 1; i < nodes_.size(); ++i) {
        std::uint64_t bytes = 0, chunks = 0;
        for (const auto& e : read_log(nodes_[i].log_file)) {
            auto kind = e.value("event", "");
            if (kind == "swap" || kind == "sync_abort") {
                bytes += e.value("bytes_received", std::uint64_t{0});
                chunks += e.value("chunks_fetched", std::uint64_t{0});
            }
        }
        bool ok = static_cast<double>(bytes) <= bound;
        within = within && ok;
        followers.push_back({{"name", nodes_[i].name},
                             {"bytes_transferred", bytes},
                             {"chunks_fetched", chunks},
                             {"within_bound", ok}});
    }
    return {{"scenario", "bootstrap"},
            {"followers", config_.followers},
            {"cidb_rows", config_.records},
            {"records", built.manifest.total_records},
            {"chunks", built.manifest.descriptors.size()},
            {"didb_version", version_},
            {"store_bytes", store_bytes},
            {"manifest_bytes", manifest_size},
            {"transfer_bound_bytes", bound},
            {"build_seconds", build_seconds},
            {"converged", converged},
            {"time_to_convergence_s", total},
            {"nodes", convergence_state()},
            {"transfers", followers},
            {"all_within_bound", within},
            {"pass", converged && within}};
}

nlohmann::json Cluster::update(double change_fraction) {
    if (change_fraction < 0 || change_fraction > 1)
        throw Error(ErrorCode::BadParameter, "change fraction must be in [0, 1]");
    auto text = read_file(cidb_);
    CsvReader reader(text);
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> fields;
    while (reader.next(fields)) rows.push_back(fields);
    if (rows.empty()) throw Error(ErrorCode::InputUnreadable, "empty CIDB");
    std::size_t data_rows = rows.size() - 1;

    auto changes = static_cast<std::size_t>(std::llround(change_fraction * static_cast<double>(data_rows)));
    if (change_fraction > 0) changes = std::max<std::size_t>(changes, 1);
    std::vector<std::size_t> order(data_rows);
    for (std::size_t i = 0; i < data_rows; ++i) order[i] = i + 1;
    std::mt19937_64 rng(config_.seed + version_ * 7919);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < changes; ++i) {
        auto& row = rows[order[i]];
        if (row.size() > 1) row[1] += " Corrected";
    }

    auto start_ms = wall_ms();
    auto t0 = std::chrono::steady_clock::now();
    std::uint64_t new_version = version_;
    std::vector<std::uint32_t> changed;
    std::size_t total_chunks = 0;
    if (changes > 0) {
        std::string out;
        for (const auto& row : rows) {
            for (std::size_t f = 0; f < row.size(); ++f) {
                if (f) out += ',';
                out += csv_escape(row[f]);
            }
            out += '\n';
        }
        write_file_atomic(cidb_, out);
        new_version = version_ + 1;
        auto old_dir = *active_store_dir(nodes_[0].root);
        auto new_dir = nodes_[0].root / "versions" / std::to_string(new_version);
        auto rebuilt = rebuild_incremental(old_dir, cidb_, new_version, new_dir);
        changed = rebuilt.report.changed_chunks;
        total_chunks = rebuilt.manifest.descriptors.size();
        set_current(nodes_[0].root, new_dir);
        version_ = new_version;
    } else {
        total_chunks = read_manifest(*active_store_dir(nodes_[0].root)).descriptors.size();
        // Nothing published; give followers a few rounds to (not) react.
        std::this_thread::sleep_for(config_.interval * 5);
    }

    double waited = 0;
    bool converged = wait_converged(&waited);
    // Let any in-flight logging settle.
    std::this_thread::sleep_for(config_.interval);

    nlohmann::json followers = nlohmann::json::array();
    std::uint64_t max_chunks = 0;
    bool atomic = true;
    for (std::size_t i = 1; i < nodes_.size(); ++i) {
        if (nodes_[i].killed) continue;
        std::uint64_t chunks = 0, bytes = 0, swaps = 0;
        for (const auto& e : read_log(nodes_[i].log_file)) {
            if (e.value("ts_ms", std::int64_t{0}) < start_ms) continue;
            auto kind = e.value("event", "");
            if (kind == "swap" || kind == "sync_abort") {
                chunks += e.value("chunks_fetched", std::uint64_t{0});
                bytes += e.value("bytes_received", std::uint64_t{0});
            }
            if (kind == "swap") {
                ++swaps;
                if (e.value("version", std::uint64_t{0}) != new_version) atomic = false;
            }
        }
        max_chunks = std::max(max_chunks, chunks);
        followers.push_back({{"name", nodes_[i].name},
                             {"chunks_fetched", chunks},
                             {"bytes_transferred", bytes},
                             {"swaps", swaps}});
    }
    return {{"scenario", "update"},
            {"change_fraction", change_fraction},
            {"records_changed", changes},
            {"didb_version", new_version},
            {"chunks_total", total_chunks},
            {"changed_chunks", changed},
            {"converged", converged},
            {"time_to_convergence_s", seconds_since(t0)},
            {"nodes", convergence_state()},
            {"transfers", followers},
            {"max_chunks_per_follower", max_chunks},
            {"single_swap_to_new_version", atomic},
            {"pass", converged && atomic && max_chunks <= changed.size()}};
}

nlohmann::json Cluster::failover(double kill_fraction, std::size_t probes) {
    if (kill_fraction < 0 || kill_fraction > 1)
        throw Error(ErrorCode::BadParameter, "kill fraction must be in [0, 1]");
    auto records = current_records();
    auto probe_records = probe_set(probes, 17);

    std::vector<std::size_t> alive;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (!nodes_[i].killed) alive.push_back(i);
    auto to_kill = static_cast<std::size_t>(std::llround(kill_fraction * static_cast<double>(alive.size())));
    std::mt19937_64 rng(config_.seed + 31);
    std::shuffle(alive.begin(), alive.end(), rng);
    nlohmann::json killed = nlohmann::json::array();
    for (std::size_t k = 0; k < to_kill; ++k) {
        auto& n = nodes_[alive[k]];
        n.process->kill();
        n.killed = true;
        killed.push_back(n.name);
    }

    ClientConfig cc;
    cc.directory = directory();
    cc.timeout = 2000ms;
    cc.seed = config_.seed;
    Client client(cc);

    std::size_t ok = 0, wrong = 0, all_failed = 0, other_errors = 0, attempts_total = 0, max_attempts = 0;
    std::map<std::size_t, std::size_t> histogram;
    for (const auto& probe : probe_records) {
        std::size_t attempts = 0;
        try {
            auto r = client.verify_parameter(probe);
            attempts = r.attempts.size();
            bool expected = std::binary_search(records.begin(), records.end(), probe);
            if ((r.verdict == Verdict::Found) == expected && r.didb_version == version_)
                ++ok;
            else
                ++wrong;
        } catch (const VerifyFailure& e) {
            attempts = e.attempts().size();
            if (e.code() == ErrorCode::AllNodesFailed)
                ++all_failed;
            else
                ++other_errors;
        }
        attempts_total += attempts;
        max_attempts = std::max(max_attempts, attempts);
        ++histogram[attempts];
    }
    nlohmann::json hist = nlohmann::json::object();
    for (auto [k, v] : histogram) hist[std::to_string(k)] = v;
    bool any_alive = to_kill < alive.size();
    bool pass = any_alive ? ok == probes : all_failed == probes;
    return {{"scenario", "failover"},
            {"nodes", alive.size()},
            {"kill_fraction", kill_fraction},
            {"killed", killed},
            {"probes", probes},
            {"succeeded", ok},
            {"wrong_answers", wrong},
            {"all_nodes_failed", all_failed},
            {"other_errors", other_errors},
            {"mean_attempts", probes ? static_cast<double>(attempts_total) / static_cast<double>(probes) : 0.0},
            {"max_attempts", max_attempts},
            {"attempt_histogram", hist},
            {"pass", pass}};
}

nlohmann::json Cluster::offline(std::size_t probes) {
    auto records = current_records();
    auto probe_records = probe_set(probes, 23);

    // Survivor: the first live follower, else the seed.
    std::optional<std::size_t> survivor;
    for (std::size_t i = 1; i < nodes_.size() && !survivor; ++i)
        if (!nodes_[i].killed) survivor = i;
    if (!survivor && !nodes_[0].killed) survivor = 0;
    if (!survivor) throw Error(ErrorCode::AllNodesFailed, "no live node to take offline");
    auto& node = nodes_[*survivor];

    directory_.reset();
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (i == *survivor || nodes_[i].killed) continue;
        nodes_[i].process->terminate();
        nodes_[i].killed = true;
    }
    auto node_version = Manifest::parse(active_manifest_bytes(node.root).value_or("")).didb_version;
    std::vector<DidbRecord> oracle = records;
    if (node_version != version_) oracle = load_records(*active_store_dir(node.root));

    auto run = [&](const char* phase) {
        ClientConfig cc;
        cc.nodes = {local(node.verify_port)};
        cc.seed = config_.seed;
        Client client(cc);
        std::size_t ok = 0, found = 0, not_found = 0, errors = 0;
        for (const auto& probe : probe_records) {
            try {
                auto r = client.verify_parameter(probe);
                bool expected = std::binary_search(oracle.begin(), oracle.end(), probe);
                bool got = r.verdict == Verdict::Found;
                (got ? found : not_found)++;
                if (got == expected && r.didb_version == node_version) ++ok;
            } catch (const Error&) {
                ++errors;
            }
        }
        return nlohmann::json{{"phase", phase}, {"probes", probes}, {"correct", ok},
                               {"found", found},  {"not_found", not_found}, {"errors", errors}};
    };

    auto live = run("network_down");

    // Restart from disk with no directory and no peers.
    node.process->terminate();
    start_node(node, false);
    auto deadline = std::chrono::steady_clock::now() + 15s;
    while (std::chrono::steady_clock::now() < deadline) {
        try {
            ClientConfig cc;
            cc.nodes = {local(node.verify_port)};
            cc.timeout = 500ms;
            Client(cc).verify_parameter(parse_record("190001" + std::string(kDigestSize, '0')));
            break;
        } catch (const Error&) {
            std::this_thread::sleep_for(50ms);
        }
    }
    auto restarted = run("restarted_offline");
    bool pass = live["correct"] == probes && restarted["correct"] == probes;
    return {{"scenario", "offline"},
            {"node", node.name},
            {"didb_version", node_version},
            {"results", {live, restarted}},
            {"pass", pass}};
}

}  // namespace didb::simnet
