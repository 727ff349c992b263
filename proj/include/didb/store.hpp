#pragma once

// On-disk DIDB: globally sorted records packed into record-aligned chunk
// files, a MANIFEST listing each chunk's prefix range and SHA-256, and an
// in-memory prefix index for membership queries.
//
// Layout under a store root:
//   MANIFEST                 text, see Manifest::serialize()
//   chunks/000000.didb ...   raw concatenated 46-byte records, no header

#include "didb/core.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace didb {

/// floor(4.9 MiB / 46): the 4.9 MB chunk target aligned to whole records.
inline constexpr std::size_t kChunkCapacity = 111'696;
inline constexpr int kManifestFormat = 1;

struct Chunk {
    std::uint32_t index = 0;
    std::vector<DidbRecord> records;

    /// Raw file bytes: the records' 46-character encodings back to back.
    std::string bytes() const;
};

struct ChunkDescriptor {
    std::uint32_t index = 0;
    BirthPrefix first_prefix;
    BirthPrefix last_prefix;
    std::uint64_t record_count = 0;
    std::string checksum;  // 64 lowercase hex

    friend bool operator==(const ChunkDescriptor&, const ChunkDescriptor&) = default;
};

struct Manifest {
    int format_version = kManifestFormat;
    std::uint64_t didb_version = 0;
    std::uint64_t total_records = 0;
    std::vector<ChunkDescriptor> descriptors;

    /// Bit-exact text form:
    ///   DIDB-MANIFEST 1
    ///   version <n>
    ///   records <n>
    ///   <index> <first_prefix> <last_prefix> <record_count> <sha256>   (per chunk)
    /// Every line ends with LF.
    std::string serialize() const;

    /// Accepts only text that serialize() could have produced and whose
    /// descriptors satisfy the manifest invariants. Throws
    /// Error(ManifestMalformed).
    static Manifest parse(std::string_view text);

    friend bool operator==(const Manifest&, const Manifest&) = default;
};

/// Birth prefix -> indices of chunks whose [first_prefix, last_prefix]
/// range covers it.
class PrefixIndex {
public:
    PrefixIndex() = default;
    static PrefixIndex from_manifest(const Manifest& manifest);
    static PrefixIndex from_chunks(std::span<const Chunk> chunks);

    std::span<const std::uint32_t> candidates(const BirthPrefix& prefix) const;
    std::size_t size() const noexcept { return entries_.size(); }

    friend bool operator==(const PrefixIndex&, const PrefixIndex&) = default;

private:
    void add_range(std::uint32_t index, const BirthPrefix& first, const BirthPrefix& last);
    std::map<BirthPrefix, std::vector<std::uint32_t>> entries_;
};

/// Greedy fill: every chunk but the last holds exactly kChunkCapacity
/// records. Throws Error(UnsortedInput) or Error(DuplicateRecord).
std::vector<Chunk> pack_chunks(std::span<const DidbRecord> records);

ChunkDescriptor describe_chunk(const Chunk& chunk);

std::filesystem::path manifest_path(const std::filesystem::path& root);
std::filesystem::path chunk_path(const std::filesystem::path& root, std::uint32_t index);

/// Writes chunk files and MANIFEST into a staging directory next to `root`,
/// then renames it into place. `root` must not exist or be empty.
/// Throws Error(IoFailure) or Error(InsufficientSpace).
Manifest write_store(std::span<const Chunk> chunks, std::uint64_t didb_version,
                     const std::filesystem::path& root);

/// Same contract as write_store, for chunk bytes received verbatim
/// (e.g. from a peer). `manifest_bytes` is written unchanged.
void write_raw_store(std::string_view manifest_bytes, std::span<const std::string> chunk_bytes,
                     const std::filesystem::path& root);

/// Throws Error(ManifestMissing) or Error(ManifestMalformed).
Manifest read_manifest(const std::filesystem::path& root);

/// Indices of chunks whose file is missing, fails its checksum, has the
/// wrong size, is not sorted, or disagrees with its descriptor's prefix
/// range. Empty means the store is intact.
std::vector<std::uint32_t> validate_store(const std::filesystem::path& root);

/// Indices present in `updated` whose checksum differs from `current` at the
/// same index, plus indices beyond `current`'s length.
std::vector<std::uint32_t> diff_manifests(const Manifest& current, const Manifest& updated);

std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// A validated store held in memory. Immutable once loaded.
class StoreSnapshot {
public:
    /// Loads and validates the store under `root`. Throws
    /// Error(ValidationFailed) when validate_store reports any chunk, or the
    /// manifest errors.
    static std::shared_ptr<const StoreSnapshot> load(const std::filesystem::path& root);

    const Manifest& manifest() const noexcept { return manifest_; }
    const std::string& manifest_bytes() const noexcept { return manifest_bytes_; }
    std::uint64_t version() const noexcept { return manifest_.didb_version; }
    std::size_t chunk_count() const noexcept { return chunks_.size(); }
    const std::string& chunk_bytes(std::uint32_t index) const { return chunks_.at(index); }
    const PrefixIndex& index() const noexcept { return index_; }
    const std::filesystem::path& root() const noexcept { return root_; }

    /// Consults only the chunks the prefix index names, then binary-searches.
    bool contains(const DidbRecord& record) const;

private:
    StoreSnapshot() = default;

    std::filesystem::path root_;
    Manifest manifest_;
    std::string manifest_bytes_;
    std::vector<std::string> chunks_;
    PrefixIndex index_;
};

struct LookupResult {
    bool found = false;
    std::uint64_t didb_version = 0;
};

/// The serving store of a node: many concurrent readers, one swapper. Each
/// lookup runs against a single snapshot, so its answer and version always
/// come from the same store.
class ActiveStore {
public:
    std::shared_ptr<const StoreSnapshot> snapshot() const;
    bool loaded() const { return snapshot() != nullptr; }

    /// Throws Error(StoreNotLoaded).
    LookupResult lookup(const DidbRecord& record) const;

    /// Loads and validates `root`, then activates it. Throws
    /// Error(ValidationFailed) or Error(StaleVersion) and leaves the current
    /// snapshot serving.
    Manifest swap_version(const std::filesystem::path& root);

    /// Activates an already loaded snapshot under the same version rule.
    void activate(std::shared_ptr<const StoreSnapshot> next);

private:
    mutable std::mutex mutex_;
    std::shared_ptr<const StoreSnapshot> current_;
};

}  // namespace didb
