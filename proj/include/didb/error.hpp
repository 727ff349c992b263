#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace didb {

enum class ErrorCode {
    // core
    FieldContainsSeparator,
    InvalidDate,
    EmptyField,
    BadLength,
    BadPrefix,
    BadDigestAlphabet,
    // store
    UnsortedInput,
    DuplicateRecord,
    IoFailure,
    InsufficientSpace,
    ManifestMissing,
    ManifestMalformed,
    StoreNotLoaded,
    ValidationFailed,
    StaleVersion,
    // builder
    InputUnreadable,
    AllRowsInvalid,
    // protocol
    MalformedLine,
    BadParameter,
    MalformedFrame,
    LengthMismatch,
    // network / client
    ConnectionFailed,
    Timeout,
    DirectoryUnreachable,
    AllNodesFailed,
    EmptyNodeList,
    InvalidConfig,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::FieldContainsSeparator: return "FieldContainsSeparator";
    case ErrorCode::InvalidDate: return "InvalidDate";
    case ErrorCode::EmptyField: return "EmptyField";
    case ErrorCode::BadLength: return "BadLength";
    case ErrorCode::BadPrefix: return "BadPrefix";
    case ErrorCode::BadDigestAlphabet: return "BadDigestAlphabet";
    case ErrorCode::UnsortedInput: return "UnsortedInput";
    case ErrorCode::DuplicateRecord: return "DuplicateRecord";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::InsufficientSpace: return "InsufficientSpace";
    case ErrorCode::ManifestMissing: return "ManifestMissing";
    case ErrorCode::ManifestMalformed: return "ManifestMalformed";
    case ErrorCode::StoreNotLoaded: return "StoreNotLoaded";
    case ErrorCode::ValidationFailed: return "ValidationFailed";
    case ErrorCode::StaleVersion: return "StaleVersion";
    case ErrorCode::InputUnreadable: return "InputUnreadable";
    case ErrorCode::AllRowsInvalid: return "AllRowsInvalid";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::BadParameter: return "BadParameter";
    case ErrorCode::MalformedFrame: return "MalformedFrame";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ConnectionFailed: return "ConnectionFailed";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::DirectoryUnreachable: return "DirectoryUnreachable";
    case ErrorCode::AllNodesFailed: return "AllNodesFailed";
    case ErrorCode::EmptyNodeList: return "EmptyNodeList";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    }
    return "Unknown";
}

/// Every failure surfaced by the library carries one of the codes above.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace didb
