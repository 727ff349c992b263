#include "didb/protocol.hpp"

#include "didb/error.hpp"
#include "didb/text.hpp"

#include <algorithm>

namespace didb::protocol {
namespace {

[[noreturn]] void malformed_line(std::string_view line) {
    std::string shown(line.substr(0, 64));
    throw Error(ErrorCode::MalformedLine, "'" + shown + "'");
}

[[noreturn]] void malformed_frame(std::string_view why) {
    throw Error(ErrorCode::MalformedFrame, std::string(why));
}

bool is_verify_error(std::string_view code) {
    return code == kBadParam || code == kNotReady || code == kInternal;
}

bool is_sync_error(std::string_view code) {
    return code == kNoSuchChunk || code == kNotReady || code == kBadRequest;
}

bool parse_u32(std::string_view text, std::uint32_t& out) {
    std::uint64_t value = 0;
    if (!parse_decimal(text, value) || value > 0xffffffffULL) return false;
    out = static_cast<std::uint32_t>(value);
    return true;
}

bool parse_port(std::string_view text, std::uint16_t& out) {
    std::uint64_t value = 0;
    if (!parse_decimal(text, value) || value == 0 || value > 65535) return false;
    out = static_cast<std::uint16_t>(value);
    return true;
}

bool is_host_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '.' || c == '-' || c == '_';
}

}  // namespace

// ---------------------------------------------------------------- verification

std::string encode(const VerifyRequest& request) {
    return "VERIFY " + request.parameter.encode();
}

VerifyRequest decode_verify_request(std::string_view line) {
    constexpr std::string_view verb = "VERIFY ";
    if (!line.starts_with(verb)) malformed_line(line);
    try {
        return VerifyRequest{parse_record(line.substr(verb.size()))};
    } catch (const Error& e) {
        throw Error(ErrorCode::BadParameter, e.what());
    }
}

std::string encode(const VerifyResponse& response) {
    switch (response.status) {
    case VerifyStatus::Found: return "FOUND " + std::to_string(response.didb_version);
    case VerifyStatus::NotFound: return "NOT_FOUND " + std::to_string(response.didb_version);
    case VerifyStatus::Err:
        if (!is_verify_error(response.error_code)) malformed_line(response.error_code);
        return "ERR " + response.error_code;
    }
    malformed_line("");
}

VerifyResponse decode_verify_response(std::string_view line) {
    auto space = line.find(' ');
    if (space == std::string_view::npos) malformed_line(line);
    auto verb = line.substr(0, space);
    auto arg = line.substr(space + 1);
    if (verb == "ERR") {
        if (!is_verify_error(arg)) malformed_line(line);
        return VerifyResponse::error(arg);
    }
    std::uint64_t version = 0;
    if (!parse_decimal(arg, version)) malformed_line(line);
    if (verb == "FOUND") return VerifyResponse::found(version);
    if (verb == "NOT_FOUND") return VerifyResponse::not_found(version);
    malformed_line(line);
}

// ------------------------------------------------------------------------ sync

std::string encode(const SyncRequest& request) {
    switch (request.command) {
    case SyncCommand::Hello: return "HELLO " + std::to_string(kSyncProtocolVersion);
    case SyncCommand::Manifest: return "MANIFEST";
    case SyncCommand::GetChunk: return "GET_CHUNK " + std::to_string(request.chunk_index);
    }
    malformed_line("");
}

SyncRequest decode_sync_request(std::string_view line) {
    if (line == "HELLO 1") return {SyncCommand::Hello, 0};
    if (line == "MANIFEST") return {SyncCommand::Manifest, 0};
    constexpr std::string_view get = "GET_CHUNK ";
    std::uint32_t index = 0;
    if (line.starts_with(get) && parse_u32(line.substr(get.size()), index))
        return {SyncCommand::GetChunk, index};
    malformed_line(line);
}

SyncResponse SyncResponse::hello() { return {{SyncReply::Hello, 0, 0, {}}, {}}; }

SyncResponse SyncResponse::manifest(std::string bytes) {
    SyncResponse r{{SyncReply::Manifest, 0, bytes.size(), {}}, std::move(bytes)};
    return r;
}

SyncResponse SyncResponse::chunk(std::uint32_t index, std::string bytes) {
    SyncResponse r{{SyncReply::Chunk, index, bytes.size(), {}}, std::move(bytes)};
    return r;
}

SyncResponse SyncResponse::error(std::string_view code) {
    return {{SyncReply::Err, 0, 0, std::string(code)}, {}};
}

std::string encode_header(const SyncHeader& header) {
    switch (header.reply) {
    case SyncReply::Hello: return "HELLO " + std::to_string(kSyncProtocolVersion);
    case SyncReply::Manifest: return "MANIFEST " + std::to_string(header.length);
    case SyncReply::Chunk:
        return "CHUNK " + std::to_string(header.chunk_index) + " " + std::to_string(header.length);
    case SyncReply::Err:
        if (!is_sync_error(header.error_code)) malformed_frame("unknown sync error code");
        return "ERR " + header.error_code;
    }
    malformed_frame("bad reply kind");
}

SyncHeader decode_sync_header(std::string_view line) {
    if (line == "HELLO 1") return {SyncReply::Hello, 0, 0, {}};
    auto parts = split(line, ' ');
    SyncHeader h;
    if (parts.size() == 2 && parts[0] == "ERR" && is_sync_error(parts[1])) {
        h.reply = SyncReply::Err;
        h.error_code = std::string(parts[1]);
        return h;
    }
    if (parts.size() == 2 && parts[0] == "MANIFEST" && parse_decimal(parts[1], h.length)) {
        h.reply = SyncReply::Manifest;
    } else if (parts.size() == 3 && parts[0] == "CHUNK" && parse_u32(parts[1], h.chunk_index) &&
               parse_decimal(parts[2], h.length)) {
        h.reply = SyncReply::Chunk;
    } else {
        malformed_frame("bad sync header '" + std::string(line.substr(0, 64)) + "'");
    }
    if (h.length > kMaxPayloadBytes) malformed_frame("payload too large");
    return h;
}

std::string encode_frame(const SyncResponse& response) {
    auto header = response.header;
    if (header.reply == SyncReply::Manifest || header.reply == SyncReply::Chunk)
        header.length = response.payload.size();
    std::string out = encode_header(header);
    out += '\n';
    out += response.payload;
    return out;
}

SyncResponse decode_sync_frame(std::string_view frame) {
    auto nl = frame.find('\n');
    if (nl == std::string_view::npos || nl > kMaxLineBytes) malformed_frame("missing header line");
    SyncResponse r;
    r.header = decode_sync_header(frame.substr(0, nl));
    auto payload = frame.substr(nl + 1);
    if (payload.size() != r.header.length)
        throw Error(ErrorCode::LengthMismatch, "declared " + std::to_string(r.header.length) +
                                                   " bytes, got " + std::to_string(payload.size()));
    r.payload = std::string(payload);
    return r;
}

// ------------------------------------------------------------------- directory

NodeDescriptor NodeDescriptor::parse(std::string_view text) {
    auto colon = text.rfind(':');
    if (colon == std::string_view::npos || colon == 0) malformed_line(text);
    auto host = text.substr(0, colon);
    if (!std::all_of(host.begin(), host.end(), is_host_char)) malformed_line(text);
    NodeDescriptor d;
    if (!parse_port(text.substr(colon + 1), d.port)) malformed_line(text);
    d.host = std::string(host);
    return d;
}

std::string encode(const DirectoryRequest& request) {
    switch (request.command) {
    case DirectoryCommand::Register: return "REGISTER " + std::to_string(request.port);
    case DirectoryCommand::List: return "LIST";
    case DirectoryCommand::Ping: return "PING";
    }
    malformed_line("");
}

DirectoryRequest decode_directory_request(std::string_view line) {
    if (line == "LIST") return {DirectoryCommand::List, 0};
    if (line == "PING") return {DirectoryCommand::Ping, 0};
    constexpr std::string_view reg = "REGISTER ";
    std::uint16_t port = 0;
    if (line.starts_with(reg) && parse_port(line.substr(reg.size()), port))
        return {DirectoryCommand::Register, port};
    malformed_line(line);
}

std::string encode_list_response(std::span<const NodeDescriptor> nodes) {
    std::string out;
    for (const auto& n : nodes) out += n.str() + "\n";
    out += kEnd;
    out += '\n';
    return out;
}

std::vector<NodeDescriptor> decode_list_response(std::span<const std::string> lines) {
    if (lines.empty() || lines.back() != kEnd) malformed_line(lines.empty() ? "" : lines.back());
    std::vector<NodeDescriptor> nodes;
    for (std::size_t i = 0; i + 1 < lines.size(); ++i) nodes.push_back(NodeDescriptor::parse(lines[i]));
    return nodes;
}

}  // namespace didb::protocol
