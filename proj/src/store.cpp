#include "didb/store.hpp"

#include "didb/error.hpp"
#include "didb/text.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace didb {
namespace {

std::string_view record_at(std::string_view bytes, std::size_t i) {
    return bytes.substr(i * kRecordSize, kRecordSize);
}

[[noreturn]] void malformed(const std::string& why) {
    throw Error(ErrorCode::ManifestMalformed, why);
}

bool is_checksum(std::string_view text) {
    return text.size() == 64 && std::all_of(text.begin(), text.end(), [](char c) {
               return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
           });
}

fs::path staging_path(const fs::path& root) {
    static std::atomic<unsigned> counter{0};
    auto parent = root.parent_path().empty() ? fs::path(".") : root.parent_path();
    return parent / (".staging-" + root.filename().string() + "-" + std::to_string(::getpid()) +
                     "-" + std::to_string(counter++));
}

void check_target(const fs::path& root) {
    std::error_code ec;
    if (fs::exists(root, ec) && !(fs::is_directory(root, ec) && fs::is_empty(root, ec)))
        throw Error(ErrorCode::IoFailure, root.string() + " exists and is not an empty directory");
}

void check_space(const fs::path& root, std::uintmax_t needed) {
    std::error_code ec;
    auto parent = root.parent_path().empty() ? fs::path(".") : root.parent_path();
    auto info = fs::space(parent, ec);
    if (!ec && info.available < needed)
        throw Error(ErrorCode::InsufficientSpace, "need " + std::to_string(needed) +
                                                      " bytes, " + std::to_string(info.available) +
                                                      " available");
}

void write_plain(const fs::path& path, std::string_view contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.close();
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
}

template <typename WriteChunks>
void write_staged(const fs::path& root, std::uintmax_t total_bytes, WriteChunks&& write_chunks) {
    check_target(root);
    check_space(root, total_bytes);
    auto staging = staging_path(root);
    std::error_code ec;
    fs::remove_all(staging, ec);
    try {
        fs::create_directories(staging / "chunks");
        write_chunks(staging);
        fs::rename(staging, root);
    } catch (const fs::filesystem_error& e) {
        fs::remove_all(staging, ec);
        throw Error(ErrorCode::IoFailure, e.what());
    } catch (...) {
        fs::remove_all(staging, ec);
        throw;
    }
}

}  // namespace

std::string Chunk::bytes() const {
    std::string out;
    out.reserve(records.size() * kRecordSize);
    for (const auto& r : records) out.append(r.view());
    return out;
}

std::string Manifest::serialize() const {
    std::string out = "DIDB-MANIFEST " + std::to_string(format_version) + "\n";
    out += "version " + std::to_string(didb_version) + "\n";
    out += "records " + std::to_string(total_records) + "\n";
    for (const auto& d : descriptors) {
        out += std::to_string(d.index);
        out += ' ';
        out += d.first_prefix.view();
        out += ' ';
        out += d.last_prefix.view();
        out += ' ';
        out += std::to_string(d.record_count);
        out += ' ';
        out += d.checksum;
        out += '\n';
    }
    return out;
}

Manifest Manifest::parse(std::string_view text) {
    if (text.empty() || text.back() != '\n') malformed("missing trailing newline");
    auto lines = split(text.substr(0, text.size() - 1), '\n');
    if (lines.size() < 3) malformed("truncated header");
    if (lines[0] != "DIDB-MANIFEST 1") malformed("bad magic line");

    Manifest m;
    auto header_value = [&](std::string_view line, std::string_view key) {
        std::uint64_t value = 0;
        if (line.size() <= key.size() + 1 || line.substr(0, key.size()) != key ||
            line[key.size()] != ' ' || !parse_decimal(line.substr(key.size() + 1), value))
            malformed("bad '" + std::string(key) + "' line");
        return value;
    };
    m.didb_version = header_value(lines[1], "version");
    m.total_records = header_value(lines[2], "records");

    std::uint64_t sum = 0;
    for (std::size_t i = 3; i < lines.size(); ++i) {
        auto fields = split(lines[i], ' ');
        std::uint64_t index = 0;
        std::uint64_t count = 0;
        if (fields.size() != 5 || !parse_decimal(fields[0], index) ||
            !parse_decimal(fields[3], count) || !is_checksum(fields[4]))
            malformed("bad descriptor line " + std::to_string(i + 1));
        if (index != i - 3) malformed("chunk indices must be 0..n-1");
        if (count == 0 || count > kChunkCapacity) malformed("bad record count");
        try {
            ChunkDescriptor d{static_cast<std::uint32_t>(index), BirthPrefix::parse(fields[1]),
                              BirthPrefix::parse(fields[2]), count, std::string(fields[4])};
            if (d.last_prefix < d.first_prefix) malformed("first_prefix > last_prefix");
            if (!m.descriptors.empty() && d.first_prefix < m.descriptors.back().last_prefix)
                malformed("prefix ranges are not sorted");
            m.descriptors.push_back(std::move(d));
        } catch (const Error& e) {
            if (e.code() == ErrorCode::ManifestMalformed) throw;
            malformed(e.what());
        }
        sum += count;
    }
    if (sum != m.total_records) malformed("records total does not match descriptors");
    return m;
}

void PrefixIndex::add_range(std::uint32_t index, const BirthPrefix& first,
                            const BirthPrefix& last) {
    for (BirthPrefix p = first;; p = p.next_month()) {
        auto& list = entries_[p];
        if (list.empty() || list.back() != index) list.push_back(index);
        if (!(p < last) || p.next_month() == p) break;
    }
}

PrefixIndex PrefixIndex::from_manifest(const Manifest& manifest) {
    PrefixIndex idx;
    for (const auto& d : manifest.descriptors) idx.add_range(d.index, d.first_prefix, d.last_prefix);
    return idx;
}

PrefixIndex PrefixIndex::from_chunks(std::span<const Chunk> chunks) {
    PrefixIndex idx;
    for (const auto& c : chunks)
        if (!c.records.empty())
            idx.add_range(c.index, c.records.front().prefix(), c.records.back().prefix());
    return idx;
}

std::span<const std::uint32_t> PrefixIndex::candidates(const BirthPrefix& prefix) const {
    auto it = entries_.find(prefix);
    if (it == entries_.end()) return {};
    return it->second;
}

std::vector<Chunk> pack_chunks(std::span<const DidbRecord> records) {
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (records[i] == records[i - 1])
            throw Error(ErrorCode::DuplicateRecord, std::string(records[i].view()));
        if (records[i] < records[i - 1])
            throw Error(ErrorCode::UnsortedInput, "record " + std::to_string(i) + " out of order");
    }
    std::vector<Chunk> chunks;
    for (std::size_t start = 0; start < records.size(); start += kChunkCapacity) {
        auto end = std::min(records.size(), start + kChunkCapacity);
        Chunk chunk;
        chunk.index = static_cast<std::uint32_t>(chunks.size());
        chunk.records.assign(records.begin() + static_cast<std::ptrdiff_t>(start),
                             records.begin() + static_cast<std::ptrdiff_t>(end));
        chunks.push_back(std::move(chunk));
    }
    return chunks;
}

ChunkDescriptor describe_chunk(const Chunk& chunk) {
    if (chunk.records.empty() || chunk.records.size() > kChunkCapacity)
        throw Error(ErrorCode::IoFailure,
                    "chunk " + std::to_string(chunk.index) + " has an invalid record count");
    return ChunkDescriptor{chunk.index, chunk.records.front().prefix(),
                           chunk.records.back().prefix(), chunk.records.size(),
                           sha256_hex(chunk.bytes())};
}

fs::path manifest_path(const fs::path& root) { return root / "MANIFEST"; }

fs::path chunk_path(const fs::path& root, std::uint32_t index) {
    char name[32];
    std::snprintf(name, sizeof name, "%06u.didb", index);
    return root / "chunks" / name;
}

Manifest write_store(std::span<const Chunk> chunks, std::uint64_t didb_version,
                     const fs::path& root) {
    Manifest manifest;
    manifest.didb_version = didb_version;
    std::uintmax_t total_bytes = 0;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        if (chunks[i].index != i)
            throw Error(ErrorCode::IoFailure, "chunk indices must be 0..n-1");
        if (i > 0 && !(chunks[i - 1].records.back() < chunks[i].records.front()))
            throw Error(ErrorCode::UnsortedInput, "chunks are not globally sorted");
        manifest.descriptors.push_back(describe_chunk(chunks[i]));
        manifest.total_records += chunks[i].records.size();
        total_bytes += chunks[i].records.size() * kRecordSize;
    }
    auto manifest_text = manifest.serialize();
    write_staged(root, total_bytes + manifest_text.size(), [&](const fs::path& staging) {
        for (const auto& c : chunks) write_plain(chunk_path(staging, c.index), c.bytes());
        write_plain(manifest_path(staging), manifest_text);
    });
    return manifest;
}

void write_raw_store(std::string_view manifest_bytes, std::span<const std::string> chunk_bytes,
                     const fs::path& root) {
    std::uintmax_t total = manifest_bytes.size();
    for (const auto& c : chunk_bytes) total += c.size();
    write_staged(root, total, [&](const fs::path& staging) {
        for (std::size_t i = 0; i < chunk_bytes.size(); ++i)
            write_plain(chunk_path(staging, static_cast<std::uint32_t>(i)), chunk_bytes[i]);
        write_plain(manifest_path(staging), manifest_bytes);
    });
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
    return std::move(buf).str();
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
    auto tmp = path;
    tmp += ".tmp-" + std::to_string(::getpid());
    write_plain(tmp, contents);
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw Error(ErrorCode::IoFailure, "cannot rename into " + path.string());
    }
}

Manifest read_manifest(const fs::path& root) {
    auto path = manifest_path(root);
    std::error_code ec;
    if (!fs::is_regular_file(path, ec))
        throw Error(ErrorCode::ManifestMissing, path.string());
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error&) {
        throw Error(ErrorCode::ManifestMissing, path.string());
    }
    return Manifest::parse(text);
}

namespace {

// Checks one chunk's bytes against its descriptor and the previous chunk's
// last record. Returns false on any mismatch.
bool chunk_matches(std::string_view bytes, const ChunkDescriptor& d, std::string_view previous_last) {
    if (bytes.size() != d.record_count * kRecordSize) return false;
    if (sha256_hex(bytes) != d.checksum) return false;
    std::string_view prev = previous_last;
    for (std::size_t i = 0; i < d.record_count; ++i) {
        auto rec = record_at(bytes, i);
        if (!prev.empty() && !(prev < rec)) return false;
        prev = rec;
    }
    try {
        auto first = parse_record(record_at(bytes, 0));
        auto last = parse_record(record_at(bytes, d.record_count - 1));
        if (first.prefix() != d.first_prefix || last.prefix() != d.last_prefix) return false;
        for (std::size_t i = 1; i + 1 < d.record_count; ++i) parse_record(record_at(bytes, i));
    } catch (const Error&) {
        return false;
    }
    return true;
}

}  // namespace

std::vector<std::uint32_t> validate_store(const fs::path& root) {
    auto manifest = read_manifest(root);
    std::vector<std::uint32_t> corrupt;
    std::string previous_last;
    for (const auto& d : manifest.descriptors) {
        std::string bytes;
        bool ok = true;
        try {
            bytes = read_file(chunk_path(root, d.index));
        } catch (const Error&) {
            ok = false;
        }
        ok = ok && chunk_matches(bytes, d, previous_last);
        if (!ok) {
            corrupt.push_back(d.index);
            previous_last.clear();
        } else {
            previous_last = std::string(record_at(bytes, d.record_count - 1));
        }
    }
    return corrupt;
}

std::vector<std::uint32_t> diff_manifests(const Manifest& current, const Manifest& updated) {
    std::vector<std::uint32_t> out;
    for (const auto& d : updated.descriptors) {
        if (d.index >= current.descriptors.size() ||
            current.descriptors[d.index].checksum != d.checksum)
            out.push_back(d.index);
    }
    return out;
}

std::shared_ptr<const StoreSnapshot> StoreSnapshot::load(const fs::path& root) {
    auto snap = std::shared_ptr<StoreSnapshot>(new StoreSnapshot());
    snap->root_ = root;
    try {
        snap->manifest_bytes_ = read_file(manifest_path(root));
    } catch (const Error&) {
        throw Error(ErrorCode::ManifestMissing, manifest_path(root).string());
    }
    snap->manifest_ = Manifest::parse(snap->manifest_bytes_);
    std::string previous_last;
    for (const auto& d : snap->manifest_.descriptors) {
        std::string bytes;
        try {
            bytes = read_file(chunk_path(root, d.index));
        } catch (const Error&) {
            throw Error(ErrorCode::ValidationFailed, "chunk " + std::to_string(d.index) + " missing");
        }
        if (!chunk_matches(bytes, d, previous_last))
            throw Error(ErrorCode::ValidationFailed, "chunk " + std::to_string(d.index) + " corrupt");
        previous_last = std::string(record_at(bytes, d.record_count - 1));
        snap->chunks_.push_back(std::move(bytes));
    }
    snap->index_ = PrefixIndex::from_manifest(snap->manifest_);
    return snap;
}

bool StoreSnapshot::contains(const DidbRecord& record) const {
    auto key = record.view();
    for (auto idx : index_.candidates(record.prefix())) {
        std::string_view bytes = chunks_[idx];
        std::size_t lo = 0;
        std::size_t hi = bytes.size() / kRecordSize;
        while (lo < hi) {
            std::size_t mid = lo + (hi - lo) / 2;
            int cmp = record_at(bytes, mid).compare(key);
            if (cmp == 0) return true;
            if (cmp < 0)
                lo = mid + 1;
            else
                hi = mid;
        }
    }
    return false;
}

std::shared_ptr<const StoreSnapshot> ActiveStore::snapshot() const {
    std::lock_guard lock(mutex_);
    return current_;
}

LookupResult ActiveStore::lookup(const DidbRecord& record) const {
    auto snap = snapshot();
    if (!snap) throw Error(ErrorCode::StoreNotLoaded, "no store is active");
    return {snap->contains(record), snap->version()};
}

Manifest ActiveStore::swap_version(const fs::path& root) {
    std::shared_ptr<const StoreSnapshot> next;
    try {
        next = StoreSnapshot::load(root);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ValidationFailed) throw;
        throw Error(ErrorCode::ValidationFailed, e.what());
    }
    activate(next);
    return next->manifest();
}

void ActiveStore::activate(std::shared_ptr<const StoreSnapshot> next) {
    if (!next) throw Error(ErrorCode::StoreNotLoaded, "null snapshot");
    std::lock_guard lock(mutex_);
    if (current_ && next->version() <= current_->version())
        throw Error(ErrorCode::StaleVersion, "version " + std::to_string(next->version()) +
                                                 " is not newer than " +
                                                 std::to_string(current_->version()));
    current_ = std::move(next);
}

}  // namespace didb
