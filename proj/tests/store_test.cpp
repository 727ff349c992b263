#include "didb/error.hpp"
#include "didb/store.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <thread>

using namespace didb;
using testutil::TempDir;
namespace fs = std::filesystem;

namespace {

template <typename F>
ErrorCode code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected didb::Error";
    return ErrorCode::InvalidConfig;
}

// Brute-force membership: read every chunk file and compare every record.
bool linear_scan(const fs::path& root, std::string_view record) {
    for (std::uint32_t i = 0;; ++i) {
        auto path = chunk_path(root, i);
        if (!fs::exists(path)) return false;
        auto bytes = read_file(path);
        for (std::size_t off = 0; off + kRecordSize <= bytes.size(); off += kRecordSize)
            if (std::string_view(bytes).substr(off, kRecordSize) == record) return true;
    }
}

void flip_byte(const fs::path& path, std::size_t offset, char mask = 0x01) {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(static_cast<std::streamoff>(offset));
    char c = 0;
    f.read(&c, 1);
    c = static_cast<char>(c ^ mask);
    f.seekp(static_cast<std::streamoff>(offset));
    f.write(&c, 1);
}

Manifest build_store(const fs::path& root, std::size_t count, std::uint64_t seed,
                     std::uint64_t version = 1) {
    auto records = testutil::random_records(count, seed);
    return write_store(pack_chunks(records), version, root);
}

}  // namespace

TEST(PackChunks, MillionRecordsGreedyFill) {
    auto records = testutil::random_records(1'000'000, 1);
    auto chunks = pack_chunks(records);
    ASSERT_EQ(chunks.size(), 9u);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(chunks[i].records.size(), 111'696u);
    EXPECT_EQ(chunks[8].records.size(), 1'000'000u - 8 * 111'696u);
    EXPECT_EQ(chunks[8].records.size(), 106'432u);
    std::size_t pos = 0;
    for (const auto& c : chunks)
        for (const auto& r : c.records) ASSERT_EQ(r, records[pos++]);
}

TEST(PackChunks, Boundaries) {
    EXPECT_EQ(kChunkCapacity * 46, 5'138'016u);
    EXPECT_EQ(kChunkCapacity, static_cast<std::size_t>(4.9 * 1024 * 1024 / 46));
    EXPECT_TRUE(pack_chunks({}).empty());
    auto one = testutil::random_records(1, 2);
    auto chunks = pack_chunks(one);
    ASSERT_EQ(chunks.size(), 1u);
    EXPECT_EQ(chunks[0].records.size(), 1u);
    auto full = testutil::random_records(kChunkCapacity + 1, 3);
    EXPECT_EQ(pack_chunks(std::span(full).first(kChunkCapacity)).size(), 1u);
    EXPECT_EQ(pack_chunks(full).size(), 2u);
}

TEST(PackChunks, RejectsUnsortedAndDuplicates) {
    auto records = testutil::random_records(10, 4);
    auto dup = records;
    dup.insert(dup.begin() + 3, records[3]);
    EXPECT_EQ(code_of([&] { pack_chunks(dup); }), ErrorCode::DuplicateRecord);
    std::swap(records[2], records[7]);
    EXPECT_EQ(code_of([&] { pack_chunks(records); }), ErrorCode::UnsortedInput);
}

TEST(WriteStore, EmptyStore) {
    TempDir dir;
    auto m = write_store({}, 3, dir / "s");
    EXPECT_TRUE(m.descriptors.empty());
    EXPECT_EQ(m.total_records, 0u);
    EXPECT_EQ(read_file(manifest_path(dir / "s")), "DIDB-MANIFEST 1\nversion 3\nrecords 0\n");
    EXPECT_TRUE(validate_store(dir / "s").empty());
}

TEST(WriteStore, RoundTripAndSizeLaw) {
    TempDir dir;
    auto records = testutil::random_records(250'000, 5);
    auto chunks = pack_chunks(records);
    auto m = write_store(chunks, 7, dir / "s");
    EXPECT_EQ(read_manifest(dir / "s"), m);
    EXPECT_EQ(m.total_records, records.size());
    std::uintmax_t total = 0;
    for (const auto& c : chunks) {
        auto bytes = read_file(chunk_path(dir / "s", c.index));
        EXPECT_EQ(bytes, c.bytes());
        EXPECT_EQ(sha256_hex(bytes), m.descriptors[c.index].checksum);
        total += fs::file_size(chunk_path(dir / "s", c.index));
    }
    EXPECT_EQ(total, 46u * m.total_records);
    // Staging directories never linger.
    for (const auto& entry : fs::directory_iterator(dir.path()))
        EXPECT_EQ(entry.path().filename(), "s");
}

TEST(WriteStore, RefusesNonEmptyTarget) {
    TempDir dir;
    build_store(dir / "s", 10, 6);
    EXPECT_EQ(code_of([&] { build_store(dir / "s", 10, 6); }), ErrorCode::IoFailure);
    fs::create_directories(dir / "empty");
    EXPECT_NO_THROW(build_store(dir / "empty", 10, 6));
}

TEST(ManifestFormat, ExactText) {
    Manifest m;
    m.didb_version = 12;
    m.total_records = 3;
    m.descriptors.push_back({0, BirthPrefix::parse("198001"), BirthPrefix::parse("198012"), 3,
                             std::string(64, 'a')});
    EXPECT_EQ(m.serialize(), "DIDB-MANIFEST 1\nversion 12\nrecords 3\n0 198001 198012 3 " +
                                 std::string(64, 'a') + "\n");
    EXPECT_EQ(Manifest::parse(m.serialize()), m);
}

TEST(ManifestFormat, RejectsNonCanonicalText) {
    const std::string sum(64, 'b');
    const std::string good = "DIDB-MANIFEST 1\nversion 2\nrecords 5\n0 190001 190506 5 " + sum + "\n";
    ASSERT_NO_THROW(Manifest::parse(good));
    for (std::string bad : {
             std::string("DIDB-MANIFEST 2\nversion 2\nrecords 0\n"),
             std::string("DIDB-MANIFEST 1\nversion 02\nrecords 0\n"),
             std::string("DIDB-MANIFEST 1\nversion 2\nrecords 0"),
             std::string("DIDB-MANIFEST 1\r\nversion 2\nrecords 0\n"),
             std::string("DIDB-MANIFEST 1\nversion  2\nrecords 0\n"),
             std::string("DIDB-MANIFEST 1\nversion 2\nrecords 4\n0 190001 190506 5 " + sum + "\n"),
             std::string("DIDB-MANIFEST 1\nversion 2\nrecords 5\n1 190001 190506 5 " + sum + "\n"),
             std::string("DIDB-MANIFEST 1\nversion 2\nrecords 5\n0 190506 190001 5 " + sum + "\n"),
             std::string("DIDB-MANIFEST 1\nversion 2\nrecords 5\n0 190001 190513 5 " + sum + "\n"),
             std::string("DIDB-MANIFEST 1\nversion 2\nrecords 5\n0 190001 190506 5 " +
                         std::string(64, 'B') + "\n"),
             std::string("DIDB-MANIFEST 1\nversion 2\nrecords 0\n\n"),
             std::string(""),
         })
        EXPECT_EQ(code_of([&] { Manifest::parse(bad); }), ErrorCode::ManifestMalformed) << bad;
}

TEST(ValidateStore, DetectsCorruption) {
    TempDir dir;
    auto root = dir / "s";
    build_store(root, 4 * kChunkCapacity + 10, 8);
    EXPECT_TRUE(validate_store(root).empty());

    flip_byte(chunk_path(root, 3), 1234);
    EXPECT_EQ(validate_store(root), std::vector<std::uint32_t>{3});
    flip_byte(chunk_path(root, 3), 1234);
    EXPECT_TRUE(validate_store(root).empty());

    fs::resize_file(chunk_path(root, 1), fs::file_size(chunk_path(root, 1)) - 1);
    EXPECT_EQ(validate_store(root), std::vector<std::uint32_t>{1});

    fs::remove(chunk_path(root, 4));
    EXPECT_EQ(validate_store(root), (std::vector<std::uint32_t>{1, 4}));
}

TEST(ValidateStore, ManifestErrors) {
    TempDir dir;
    EXPECT_EQ(code_of([&] { validate_store(dir / "nothing"); }), ErrorCode::ManifestMissing);
    build_store(dir / "s", 100, 9);
    std::ofstream(manifest_path(dir / "s"), std::ios::app) << "garbage\n";
    EXPECT_EQ(code_of([&] { validate_store(dir / "s"); }), ErrorCode::ManifestMalformed);
}

TEST(PrefixIndexTest, RebuildFromManifestMatchesWriteTime) {
    TempDir dir;
    auto records = testutil::random_records(3 * kChunkCapacity + 5, 10);
    auto chunks = pack_chunks(records);
    auto m = write_store(chunks, 1, dir / "s");
    auto from_chunks = PrefixIndex::from_chunks(chunks);
    EXPECT_EQ(PrefixIndex::from_manifest(read_manifest(dir / "s")), from_chunks);
    EXPECT_EQ(PrefixIndex::from_manifest(m), PrefixIndex::from_manifest(m));
    // Prefixes on a chunk boundary map to both neighbours.
    auto boundary = chunks[0].records.back().prefix();
    auto c = from_chunks.candidates(boundary);
    ASSERT_GE(c.size(), 1u);
    EXPECT_EQ(c[0], 0u);
    EXPECT_TRUE(from_chunks.candidates(BirthPrefix::parse("180001")).empty());
}

TEST(Lookup, AgreesWithLinearScan) {
    TempDir dir;
    auto root = dir / "s";
    auto records = testutil::random_records(10'000, 11);
    write_store(pack_chunks(records), 1, root);
    auto snap = StoreSnapshot::load(root);

    std::mt19937_64 rng(12);
    for (int i = 0; i < 1000; ++i) {
        auto probe = (i % 2 == 0) ? records[rng() % records.size()] : testutil::random_record(rng);
        ASSERT_EQ(snap->contains(probe), linear_scan(root, probe.view())) << probe.view();
    }
    for (const auto& r : records) ASSERT_TRUE(snap->contains(r));
}

TEST(Lookup, MultiChunkStore) {
    TempDir dir;
    auto records = testutil::random_records(2 * kChunkCapacity + 100, 13);
    write_store(pack_chunks(records), 1, dir / "s");
    auto snap = StoreSnapshot::load(dir / "s");
    ASSERT_EQ(snap->chunk_count(), 3u);
    for (std::size_t i = 0; i < records.size(); i += 997) ASSERT_TRUE(snap->contains(records[i]));
    EXPECT_TRUE(snap->contains(records[kChunkCapacity - 1]));
    EXPECT_TRUE(snap->contains(records[kChunkCapacity]));
    std::mt19937_64 rng(14);
    for (int i = 0; i < 500; ++i) {
        auto probe = testutil::random_record(rng);
        ASSERT_EQ(snap->contains(probe), std::binary_search(records.begin(), records.end(), probe));
    }
}

TEST(DiffManifests, ChecksumDriven) {
    TempDir dir;
    auto records = testutil::random_records(2 * kChunkCapacity + 50, 15);
    auto m1 = write_store(pack_chunks(records), 1, dir / "a");
    EXPECT_TRUE(diff_manifests(m1, m1).empty());

    auto appended = records;
    appended.push_back(parse_record("999912" + std::string(40, 'f')));
    auto m2 = write_store(pack_chunks(appended), 2, dir / "b");
    EXPECT_EQ(diff_manifests(m1, m2), std::vector<std::uint32_t>{2});

    // Replace one record in the middle of chunk 1 with a neighbour-preserving value.
    auto edited = records;
    auto& victim = edited[kChunkCapacity + 500];
    auto text = std::string(victim.view());
    text[45] = text[45] == '0' ? '1' : '0';
    auto replacement = parse_record(text);
    ASSERT_LT(edited[kChunkCapacity + 499], replacement);
    ASSERT_LT(replacement, edited[kChunkCapacity + 501]);
    victim = replacement;
    auto m3 = write_store(pack_chunks(edited), 3, dir / "c");
    EXPECT_EQ(diff_manifests(m1, m3), std::vector<std::uint32_t>{1});

    // Only checksums matter: versions and totals are ignored.
    auto relabelled = m1;
    relabelled.didb_version = 99;
    EXPECT_TRUE(diff_manifests(m1, relabelled).empty());
    EXPECT_EQ(diff_manifests(Manifest{}, m1), (std::vector<std::uint32_t>{0, 1, 2}));
}

TEST(ActiveStoreTest, NotLoaded) {
    ActiveStore store;
    EXPECT_FALSE(store.loaded());
    EXPECT_EQ(code_of([&] { store.lookup(parse_record("198012" + std::string(40, 'a'))); }),
              ErrorCode::StoreNotLoaded);
}

TEST(ActiveStoreTest, SwapRules) {
    TempDir dir;
    auto r1 = testutil::random_records(1000, 16);
    auto r2 = testutil::random_records(1000, 17);
    write_store(pack_chunks(r1), 1, dir / "v1");
    write_store(pack_chunks(r2), 2, dir / "v2");
    write_store(pack_chunks(r2), 1, dir / "v1b");

    ActiveStore store;
    EXPECT_EQ(store.swap_version(dir / "v1").didb_version, 1u);
    EXPECT_EQ(code_of([&] { store.swap_version(dir / "v1b"); }), ErrorCode::StaleVersion);

    fs::copy(dir / "v2", dir / "v2bad", fs::copy_options::recursive);
    flip_byte(chunk_path(dir / "v2bad", 0), 10);
    EXPECT_EQ(code_of([&] { store.swap_version(dir / "v2bad"); }), ErrorCode::ValidationFailed);
    EXPECT_EQ(code_of([&] { store.swap_version(dir / "missing"); }), ErrorCode::ValidationFailed);
    auto still = store.lookup(r1[5]);
    EXPECT_TRUE(still.found);
    EXPECT_EQ(still.didb_version, 1u);

    store.swap_version(dir / "v2");
    auto after = store.lookup(r2[5]);
    EXPECT_TRUE(after.found);
    EXPECT_EQ(after.didb_version, 2u);
}

TEST(ActiveStoreTest, ReadersSeeOnlyWholeVersions) {
    TempDir dir;
    auto r1 = testutil::random_records(5000, 18);
    auto r2 = testutil::random_records(5000, 19);
    write_store(pack_chunks(r1), 1, dir / "v1");
    write_store(pack_chunks(r2), 2, dir / "v2");
    ActiveStore store;
    store.swap_version(dir / "v1");

    std::atomic<bool> stop{false};
    std::atomic<int> bad{0};
    std::atomic<long> answered{0};
    std::vector<std::thread> readers;
    for (int t = 0; t < 3; ++t) {
        readers.emplace_back([&, t] {
            std::size_t i = static_cast<std::size_t>(t);
            std::uint64_t last = 0;
            while (!stop) {
                auto res = store.lookup(r1[i % r1.size()]);
                bool consistent = (res.didb_version == 1 && res.found) ||
                                  (res.didb_version == 2 &&
                                   res.found == std::binary_search(r2.begin(), r2.end(),
                                                                   r1[i % r1.size()]));
                if (!consistent || res.didb_version < last) ++bad;
                last = res.didb_version;
                ++answered;
                ++i;
            }
        });
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    store.swap_version(dir / "v2");
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    stop = true;
    for (auto& t : readers) t.join();
    EXPECT_EQ(bad.load(), 0);
    EXPECT_GT(answered.load(), 0);
}
