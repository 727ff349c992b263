#pragma once

// Outside-machine verifier: hashes the document fields into the 46-character
// parameter, obtains the node list (directory LIST or an explicit list) and
// asks nodes in random order until one answers.

#include "didb/core.hpp"
#include "didb/error.hpp"
#include "didb/net.hpp"
#include "didb/protocol.hpp"

#include <json.hpp>

#include <chrono>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace didb {

/// Same 46 characters the builder stores for these fields.
std::string build_parameter(const IdentityFields& fields);

struct ClientConfig {
    std::optional<protocol::NodeDescriptor> directory;
    /// When non-empty, used instead of asking the directory.
    std::vector<protocol::NodeDescriptor> nodes;
    /// Maximum attempts per verification; 0 means one per listed node.
    std::size_t retry_budget = 0;
    net::Millis timeout{2'000};
    std::chrono::milliseconds list_ttl{60'000};
    std::optional<std::uint64_t> seed;
};

struct Attempt {
    protocol::NodeDescriptor node;
    std::string outcome;  // FOUND, NOT_FOUND, ERR <code>, unreachable, timeout, protocol_error
    std::string detail;
};

enum class Verdict { Found, NotFound };

struct VerifyResult {
    Verdict verdict = Verdict::NotFound;
    std::uint64_t didb_version = 0;
    protocol::NodeDescriptor node;
    std::string parameter;
    std::vector<Attempt> attempts;

    nlohmann::json to_json() const;
};

nlohmann::json attempts_to_json(const std::vector<Attempt>& attempts);

/// Error(AllNodesFailed | EmptyNodeList | DirectoryUnreachable) with the
/// attempts made so far.
class VerifyFailure : public Error {
public:
    VerifyFailure(ErrorCode code, const std::string& what, std::vector<Attempt> attempts)
        : Error(code, what), attempts_(std::move(attempts)) {}
    const std::vector<Attempt>& attempts() const noexcept { return attempts_; }

private:
    std::vector<Attempt> attempts_;
};

class Client {
public:
    explicit Client(ClientConfig config);

    /// Canonicalization errors surface before any network activity.
    VerifyResult verify(const IdentityFields& fields);
    VerifyResult verify_parameter(const DidbRecord& parameter);

    /// Explicit list, or the cached directory LIST (refreshed after list_ttl).
    std::vector<protocol::NodeDescriptor> node_list();
    void invalidate_cache() { cached_at_.reset(); }

private:
    ClientConfig config_;
    std::mt19937_64 rng_;
    std::vector<protocol::NodeDescriptor> cached_;
    std::optional<std::chrono::steady_clock::time_point> cached_at_;
};

}  // namespace didb
