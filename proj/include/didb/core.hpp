#pragma once

// Record model shared by the builder, the node and the client: canonical
// field bundling, truncated SHA-256 and the 46-character record.

#include <array>
#include <chrono>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

namespace didb {

inline constexpr std::size_t kPrefixSize = 6;
inline constexpr std::size_t kDigestSize = 40;
inline constexpr std::size_t kRecordSize = kPrefixSize + kDigestSize;
inline constexpr int kMinYear = 1800;
inline constexpr int kMaxYear = 9999;

using Date = std::chrono::year_month_day;

/// Parses a strict `YYYY-MM-DD` Gregorian date with year in [1800, 9999].
/// Throws Error(InvalidDate).
Date parse_date(std::string_view text);
std::string format_date(const Date& date);

/// The six document fields a verification covers. Construction enforces the
/// invariants (non-empty serial and name, valid dates); separator checks are
/// left to canonicalize().
class IdentityFields {
public:
    IdentityFields(std::string serial, std::string name, Date date_of_birth,
                   std::string blood_group, std::string place_of_birth, Date issue_date);

    /// Same as the constructor but with dates given as `YYYY-MM-DD` text.
    static IdentityFields from_text(std::string serial, std::string name,
                                    std::string_view date_of_birth, std::string blood_group,
                                    std::string place_of_birth, std::string_view issue_date);

    const std::string& serial() const noexcept { return serial_; }
    const std::string& name() const noexcept { return name_; }
    const Date& date_of_birth() const noexcept { return date_of_birth_; }
    const std::string& blood_group() const noexcept { return blood_group_; }
    const std::string& place_of_birth() const noexcept { return place_of_birth_; }
    const Date& issue_date() const noexcept { return issue_date_; }

private:
    std::string serial_;
    std::string name_;
    Date date_of_birth_;
    std::string blood_group_;
    std::string place_of_birth_;
    Date issue_date_;
};

/// Six ASCII digits, yyyymm.
class BirthPrefix {
public:
    /// Throws Error(BadPrefix).
    static BirthPrefix parse(std::string_view text);

    std::string_view view() const noexcept { return {chars_.data(), chars_.size()}; }
    std::string str() const { return std::string(view()); }
    int year() const noexcept;
    unsigned month() const noexcept;

    /// The following calendar month; wraps December into January of year+1.
    /// Returns the same prefix for 999912.
    BirthPrefix next_month() const;

    friend auto operator<=>(const BirthPrefix&, const BirthPrefix&) = default;

private:
    BirthPrefix() = default;
    std::array<char, kPrefixSize> chars_{};
};

/// First 160 bits of a SHA-256 digest as 40 lowercase hex characters.
class Digest40 {
public:
    /// Throws Error(BadLength) or Error(BadDigestAlphabet).
    static Digest40 parse(std::string_view text);

    std::string_view view() const noexcept { return {chars_.data(), chars_.size()}; }
    std::string str() const { return std::string(view()); }

    friend auto operator<=>(const Digest40&, const Digest40&) = default;

private:
    Digest40() = default;
    std::array<char, kDigestSize> chars_{};
};

/// Prefix followed by digest. The 46-character text is both the storage
/// unit and the wire parameter; ordering is lexicographic over that text.
class DidbRecord {
public:
    DidbRecord(const BirthPrefix& prefix, const Digest40& digest) noexcept;

    BirthPrefix prefix() const;
    Digest40 digest() const;
    std::string_view view() const noexcept { return {text_.data(), text_.size()}; }
    std::string encode() const { return std::string(view()); }

    friend auto operator<=>(const DidbRecord&, const DidbRecord&) = default;

private:
    std::array<char, kRecordSize> text_{};
};

/// Incremental SHA-256.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(std::string_view data);
    std::array<std::uint8_t, 32> finish();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::array<std::uint8_t, 32> sha256(std::string_view data);
/// Full digest, 64 lowercase hex characters.
std::string sha256_hex(std::string_view data);
std::string to_hex(const std::uint8_t* data, std::size_t size);

/// Bundles the fields into the byte sequence that gets hashed:
///   serial|NAME|yyyy-mm-dd|BLOOD|place|yyyy-mm-dd
/// Each field is NFC-normalized, trimmed and has whitespace runs collapsed to a
/// single space; name and blood group are uppercased. Throws
/// Error(FieldContainsSeparator) when a field holds '|'.
std::string canonicalize(const IdentityFields& fields);

Digest40 truncated_sha256(std::string_view data);
BirthPrefix derive_prefix(const Date& date_of_birth);
DidbRecord make_record(const IdentityFields& fields);

/// Throws Error(BadLength), Error(BadPrefix) or Error(BadDigestAlphabet).
DidbRecord parse_record(std::string_view text);

}  // namespace didb
