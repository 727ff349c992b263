#pragma once

// Wire codecs for the three conversations. Every exchange is a UTF-8 command
// line terminated by LF; sync payloads follow their header line as a
// length-prefixed byte run. Encoders return lines without the trailing LF
// unless noted. Decoders accept exactly what the encoders produce and throw
// didb::Error otherwise.
//
//   verification  VERIFY <record>        -> FOUND <v> | NOT_FOUND <v> | ERR <code>
//   sync          HELLO 1                -> HELLO 1
//                 MANIFEST               -> MANIFEST <len>\n<bytes>
//                 GET_CHUNK <i>          -> CHUNK <i> <len>\n<bytes> | ERR NO_SUCH_CHUNK
//   directory     REGISTER <port>        -> OK
//                 LIST                   -> <host:port>\n ... END
//                 PING                   -> PONG

#include "didb/core.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace didb::protocol {

inline constexpr std::size_t kMaxLineBytes = 4096;
inline constexpr std::uint64_t kMaxPayloadBytes = 64ULL * 1024 * 1024;
inline constexpr int kSyncProtocolVersion = 1;

// ---------------------------------------------------------------- verification

struct VerifyRequest {
    DidbRecord parameter;
    friend bool operator==(const VerifyRequest&, const VerifyRequest&) = default;
};

enum class VerifyStatus { Found, NotFound, Err };

/// Error codes a node may answer with.
inline constexpr std::string_view kBadParam = "BAD_PARAM";
inline constexpr std::string_view kNotReady = "NOT_READY";
inline constexpr std::string_view kInternal = "INTERNAL";

struct VerifyResponse {
    VerifyStatus status = VerifyStatus::Err;
    std::uint64_t didb_version = 0;  // FOUND / NOT_FOUND only
    std::string error_code;          // ERR only

    static VerifyResponse found(std::uint64_t version) { return {VerifyStatus::Found, version, {}}; }
    static VerifyResponse not_found(std::uint64_t version) {
        return {VerifyStatus::NotFound, version, {}};
    }
    static VerifyResponse error(std::string_view code) {
        return {VerifyStatus::Err, 0, std::string(code)};
    }

    friend bool operator==(const VerifyResponse&, const VerifyResponse&) = default;
};

std::string encode(const VerifyRequest& request);
/// Throws Error(BadParameter) when the verb is right but the record is not,
/// Error(MalformedLine) otherwise.
VerifyRequest decode_verify_request(std::string_view line);

/// Throws Error(MalformedLine) for an ERR code outside the closed set.
std::string encode(const VerifyResponse& response);
VerifyResponse decode_verify_response(std::string_view line);

// ------------------------------------------------------------------------ sync

enum class SyncCommand { Hello, Manifest, GetChunk };

struct SyncRequest {
    SyncCommand command = SyncCommand::Hello;
    std::uint32_t chunk_index = 0;  // GetChunk only

    friend bool operator==(const SyncRequest&, const SyncRequest&) = default;
};

inline constexpr std::string_view kNoSuchChunk = "NO_SUCH_CHUNK";
inline constexpr std::string_view kBadRequest = "BAD_REQUEST";

enum class SyncReply { Hello, Manifest, Chunk, Err };

/// Header line of a sync response; `length` payload bytes follow it.
struct SyncHeader {
    SyncReply reply = SyncReply::Err;
    std::uint32_t chunk_index = 0;
    std::uint64_t length = 0;
    std::string error_code;

    friend bool operator==(const SyncHeader&, const SyncHeader&) = default;
};

struct SyncResponse {
    SyncHeader header;
    std::string payload;

    static SyncResponse hello();
    static SyncResponse manifest(std::string bytes);
    static SyncResponse chunk(std::uint32_t index, std::string bytes);
    static SyncResponse error(std::string_view code);

    friend bool operator==(const SyncResponse&, const SyncResponse&) = default;
};

std::string encode(const SyncRequest& request);
/// Throws Error(MalformedLine).
SyncRequest decode_sync_request(std::string_view line);

/// Header line (no LF).
std::string encode_header(const SyncHeader& header);
/// Throws Error(MalformedFrame).
SyncHeader decode_sync_header(std::string_view line);

/// Full frame: header line, LF, payload.
std::string encode_frame(const SyncResponse& response);
/// Decodes one complete frame. Throws Error(MalformedFrame) for a bad header
/// and Error(LengthMismatch) when the payload size differs from the header.
SyncResponse decode_sync_frame(std::string_view frame);

// ------------------------------------------------------------------- directory

struct NodeDescriptor {
    std::string host;
    std::uint16_t port = 0;

    std::string str() const { return host + ":" + std::to_string(port); }
    /// `host:port`; host is [A-Za-z0-9._-]+, port 1..65535. Throws
    /// Error(MalformedLine).
    static NodeDescriptor parse(std::string_view text);

    friend auto operator<=>(const NodeDescriptor&, const NodeDescriptor&) = default;
};

enum class DirectoryCommand { Register, List, Ping };

struct DirectoryRequest {
    DirectoryCommand command = DirectoryCommand::Ping;
    std::uint16_t port = 0;  // Register only

    friend bool operator==(const DirectoryRequest&, const DirectoryRequest&) = default;
};

std::string encode(const DirectoryRequest& request);
/// Throws Error(MalformedLine).
DirectoryRequest decode_directory_request(std::string_view line);

inline constexpr std::string_view kOk = "OK";
inline constexpr std::string_view kPong = "PONG";
inline constexpr std::string_view kEnd = "END";
inline constexpr std::string_view kErrBadRequest = "ERR BAD_REQUEST";

/// LIST reply lines, each LF-terminated, ending with END.
std::string encode_list_response(std::span<const NodeDescriptor> nodes);
/// `lines` excludes LFs; the last one must be END. Throws Error(MalformedLine).
std::vector<NodeDescriptor> decode_list_response(std::span<const std::string> lines);

}  // namespace didb::protocol
