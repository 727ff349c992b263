#pragma once

// Turns a CIDB export (CSV) into a versioned DIDB store, and produces
// incremental updates as a full deterministic rebuild plus a checksum diff.

#include "didb/core.hpp"
#include "didb/store.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace didb {

inline constexpr std::string_view kCidbHeader =
    "serial,name,date_of_birth,blood_group,place_of_birth,issue_date";

/// RFC 4180 reader over an in-memory buffer: quoted fields, doubled quotes,
/// embedded separators and newlines, LF or CRLF record ends.
class CsvReader {
public:
    explicit CsvReader(std::string_view text) : text_(text) {}

    /// Reads the next record into `fields`. Returns false at end of input.
    /// Throws Error(InputUnreadable) on an unterminated quote.
    bool next(std::vector<std::string>& fields);

private:
    std::string_view text_;
    std::size_t pos_ = 0;
};

std::string csv_escape(std::string_view field);

/// One data row of the export, 1-based (the header is not counted).
struct CidbRow {
    std::size_t row_number = 0;
    std::array<std::string, 6> columns;
};

/// Throws the didb::Error that explains why the row is unusable.
IdentityFields parse_row(const CidbRow& row);

struct RejectedRow {
    std::size_t row_number = 0;
    std::string reason;
};

struct BuildReport {
    std::uint64_t didb_version = 0;
    std::size_t rows = 0;
    std::size_t records = 0;
    std::size_t duplicates = 0;
    std::size_t chunks = 0;
    std::vector<RejectedRow> rejected;
    std::vector<std::uint32_t> changed_chunks;  // incremental builds only

    nlohmann::json to_json() const;
};

/// Parses every row of the export and returns its records sorted and
/// deduplicated. Fills the row counters of `report`. Throws
/// Error(InputUnreadable) or Error(AllRowsInvalid).
std::vector<DidbRecord> collect_records(const std::filesystem::path& cidb, BuildReport& report);

struct BuildResult {
    Manifest manifest;
    BuildReport report;
};

BuildResult build(const std::filesystem::path& cidb, std::uint64_t didb_version,
                  const std::filesystem::path& out);

/// Validates `old_store`, rebuilds from `cidb` into `out` and reports which
/// chunks a replica at the old version must fetch (report.changed_chunks).
/// Throws Error(ValidationFailed) when the old store is corrupt.
BuildResult rebuild_incremental(const std::filesystem::path& old_store,
                                const std::filesystem::path& cidb, std::uint64_t didb_version,
                                const std::filesystem::path& out);

/// Deterministic pseudo-random export: same (count, seed), same bytes.
/// Serials are unique; dates fall in [1900, 2020].
void generate_synthetic_cidb(std::uint64_t count, std::uint64_t seed,
                             const std::filesystem::path& out);

}  // namespace didb
