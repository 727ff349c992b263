#pragma once

// Capacity arithmetic for a DIDB deployment. All MB/GB figures are binary
// (1024-based).

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace didb::sizing {

inline constexpr double kKiB = 1024.0;
inline constexpr double kMiB = 1024.0 * 1024.0;
inline constexpr double kGiB = 1024.0 * 1024.0 * 1024.0;
inline constexpr std::uint64_t kRecordBytes = 46;
inline constexpr std::uint64_t kChecksumBytes = 64;

constexpr std::uint64_t didb_size_bytes(std::uint64_t records) { return records * kRecordBytes; }

/// Exact growth: didb_size_bytes(records_per_year) * years.
constexpr std::uint64_t annual_growth(std::uint64_t records_per_year, std::uint64_t years) {
    return didb_size_bytes(records_per_year) * years;
}

/// Growth in GB after rounding the yearly increment to whole MB first
/// (3M records/yr -> 132 MB/yr -> 1.2890625 GB over 10 years).
inline double annual_growth_rounded_gb(std::uint64_t records_per_year, std::uint64_t years) {
    double mb_per_year = std::round(static_cast<double>(didb_size_bytes(records_per_year)) / kMiB);
    return mb_per_year * static_cast<double>(years) / kKiB;
}

/// Ceiling division; 0 for an empty store.
constexpr std::uint64_t chunk_count(std::uint64_t total_bytes, std::uint64_t chunk_bytes) {
    return chunk_bytes == 0 ? 0 : (total_bytes + chunk_bytes - 1) / chunk_bytes;
}

/// Fractional sizes (e.g. 7.30 GB over 4.9 MB chunks).
inline std::uint64_t chunk_count(double total_bytes, double chunk_bytes) {
    if (total_bytes <= 0 || chunk_bytes <= 0) return 0;
    return static_cast<std::uint64_t>(std::ceil(total_bytes / chunk_bytes));
}

constexpr std::uint64_t checksum_storage(std::uint64_t files,
                                         std::uint64_t bytes_per_checksum = kChecksumBytes) {
    return files * bytes_per_checksum;
}

inline double sync_seconds(double total_bytes, double bytes_per_second) {
    return bytes_per_second > 0 ? total_bytes / bytes_per_second : 0.0;
}

inline double sync_time(double total_bytes, double bytes_per_second) {
    return sync_seconds(total_bytes, bytes_per_second) / 3600.0;
}

struct FleetCapacity {
    std::uint64_t nodes = 0;
    double requests_per_second = 0;
};

inline FleetCapacity fleet_capacity(std::uint64_t machines, double participation_fraction,
                                    double requests_per_node_per_s) {
    auto nodes = static_cast<std::uint64_t>(
        std::llround(static_cast<double>(machines) * participation_fraction));
    return {nodes, static_cast<double>(nodes) * requests_per_node_per_s};
}

/// One reference scenario: a computed figure against the published one.
/// `printed_decimals` < 0 compares at full precision; otherwise the computed
/// value is rounded to that many decimals first, matching how the published
/// figure was rounded.
struct ReferenceScenario {
    std::string name;
    std::string unit;
    double computed = 0;
    double printed = 0;
    int printed_decimals = -1;

    double compared_value() const {
        if (printed_decimals < 0) return computed;
        double scale = std::pow(10.0, printed_decimals);
        return std::round(computed * scale) / scale;
    }
    double relative_error() const {
        return printed == 0 ? std::fabs(compared_value())
                            : std::fabs(compared_value() - printed) / std::fabs(printed);
    }
    bool passes(double tolerance = 1e-9) const { return relative_error() < tolerance; }
};

inline std::vector<ReferenceScenario> reference_scenarios() {
    auto fleet = fleet_capacity(27'440, 0.01, 100);
    return {
        {"didb_size_170M", "GB", static_cast<double>(didb_size_bytes(170'000'000)) / kGiB,
         7.28294253349},
        {"yearly_growth_3M", "MB", static_cast<double>(didb_size_bytes(3'000'000)) / kMiB,
         131.607055664},
        {"growth_10y_rounded", "GB", annual_growth_rounded_gb(3'000'000, 10), 1.2890625},
        {"chunk_files", "files",
         static_cast<double>(chunk_count(7.30 * kGiB, 4.9 * kMiB)), 1526},
        {"checksum_storage", "MB", static_cast<double>(checksum_storage(1526, 64)) / kMiB,
         0.09313964843},
        {"sync_10GB_at_1MBps", "hours", sync_time(10'240 * kMiB, 1 * kMiB), 2.844, 3},
        {"fleet_nodes", "nodes", static_cast<double>(fleet.nodes), 274},
        {"fleet_capacity", "req/s", fleet.requests_per_second, 27'400},
    };
}

}  // namespace didb::sizing
