#include "didb/client.hpp"

#include "didb/directory.hpp"

#include <algorithm>

namespace didb {

using protocol::NodeDescriptor;

std::string build_parameter(const IdentityFields& fields) { return make_record(fields).encode(); }

nlohmann::json attempts_to_json(const std::vector<Attempt>& attempts) {
    auto out = nlohmann::json::array();
    for (const auto& a : attempts) {
        nlohmann::json entry = {{"node", a.node.str()}, {"outcome", a.outcome}};
        if (!a.detail.empty()) entry["detail"] = a.detail;
        out.push_back(entry);
    }
    return out;
}

nlohmann::json VerifyResult::to_json() const {
    return {{"status", verdict == Verdict::Found ? "FOUND" : "NOT_FOUND"},
            {"didb_version", didb_version},
            {"node", node.str()},
            {"parameter", parameter},
            {"attempts", attempts_to_json(attempts)}};
}

Client::Client(ClientConfig config)
    : config_(std::move(config)), rng_(config_.seed ? *config_.seed : std::random_device{}()) {}

std::vector<NodeDescriptor> Client::node_list() {
    if (!config_.nodes.empty()) return config_.nodes;
    if (!config_.directory)
        throw VerifyFailure(ErrorCode::EmptyNodeList, "no directory or node list configured", {});
    auto now = std::chrono::steady_clock::now();
    if (cached_at_ && now - *cached_at_ < config_.list_ttl) return cached_;
    try {
        cached_ = fetch_node_list(*config_.directory, config_.timeout);
    } catch (const Error& e) {
        throw VerifyFailure(ErrorCode::DirectoryUnreachable,
                            config_.directory->str() + ": " + e.what(), {});
    }
    cached_at_ = now;
    return cached_;
}

VerifyResult Client::verify(const IdentityFields& fields) {
    return verify_parameter(make_record(fields));
}

VerifyResult Client::verify_parameter(const DidbRecord& parameter) {
    auto nodes = node_list();
    if (nodes.empty()) throw VerifyFailure(ErrorCode::EmptyNodeList, "node list is empty", {});
    std::shuffle(nodes.begin(), nodes.end(), rng_);
    std::size_t budget = config_.retry_budget == 0 ? nodes.size() : config_.retry_budget;

    const auto request = protocol::encode(protocol::VerifyRequest{parameter}) + "\n";
    std::vector<Attempt> attempts;
    for (std::size_t i = 0; i < budget; ++i) {
        const auto& node = nodes[i % nodes.size()];
        try {
            net::Stream stream(net::connect_tcp(node, config_.timeout));
            stream.write_all(request);
            auto line = stream.read_line();
            if (!line) throw Error(ErrorCode::ConnectionFailed, "closed without a reply");
            auto reply = protocol::decode_verify_response(*line);
            if (reply.status == protocol::VerifyStatus::Err) {
                attempts.push_back({node, "ERR " + reply.error_code, {}});
                continue;
            }
            bool found = reply.status == protocol::VerifyStatus::Found;
            attempts.push_back({node, found ? "FOUND" : "NOT_FOUND", {}});
            return VerifyResult{found ? Verdict::Found : Verdict::NotFound, reply.didb_version, node,
                                parameter.encode(), std::move(attempts)};
        } catch (const Error& e) {
            std::string outcome = e.code() == ErrorCode::Timeout            ? "timeout"
                                  : e.code() == ErrorCode::ConnectionFailed ? "unreachable"
                                                                            : "protocol_error";
            attempts.push_back({node, outcome, e.what()});
        }
    }
    auto what = std::to_string(attempts.size()) + " attempt(s) failed";
    throw VerifyFailure(ErrorCode::AllNodesFailed, what, std::move(attempts));
}

}  // namespace didb
