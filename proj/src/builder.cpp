#include "didb/builder.hpp"

#include "didb/error.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>

namespace fs = std::filesystem;

namespace didb {

bool CsvReader::next(std::vector<std::string>& fields) {
    fields.clear();
    if (pos_ >= text_.size()) return false;
    std::string field;
    bool quoted = false;
    bool was_quoted = false;
    while (pos_ < text_.size()) {
        char c = text_[pos_++];
        if (quoted) {
            if (c == '"') {
                if (pos_ < text_.size() && text_[pos_] == '"') {
                    field.push_back('"');
                    ++pos_;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"' && field.empty() && !was_quoted) {
            quoted = was_quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
            was_quoted = false;
        } else if (c == '\n') {
            break;
        } else if (c == '\r' && pos_ < text_.size() && text_[pos_] == '\n') {
            ++pos_;
            break;
        } else {
            field.push_back(c);
        }
    }
    if (quoted) throw Error(ErrorCode::InputUnreadable, "unterminated quoted field");
    fields.push_back(std::move(field));
    return true;
}

std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

IdentityFields parse_row(const CidbRow& row) {
    const auto& c = row.columns;
    return IdentityFields::from_text(c[0], c[1], c[2], c[3], c[4], c[5]);
}

nlohmann::json BuildReport::to_json() const {
    nlohmann::json rejected_rows = nlohmann::json::array();
    for (const auto& r : rejected)
        rejected_rows.push_back({{"row", r.row_number}, {"reason", r.reason}});
    nlohmann::json out = {{"didb_version", didb_version}, {"rows", rows},
                          {"records", records},           {"duplicates", duplicates},
                          {"chunks", chunks},             {"rejected", rejected_rows},
                          {"changed_chunks", changed_chunks}};
    return out;
}

std::vector<DidbRecord> collect_records(const fs::path& cidb, BuildReport& report) {
    std::string text;
    try {
        text = read_file(cidb);
    } catch (const Error& e) {
        throw Error(ErrorCode::InputUnreadable, e.what());
    }
    if (text.starts_with("\xEF\xBB\xBF")) text.erase(0, 3);

    CsvReader reader(text);
    std::vector<std::string> fields;
    if (!reader.next(fields) || fields.size() != 6)
        throw Error(ErrorCode::InputUnreadable, "missing CSV header");
    std::string header;
    for (std::size_t i = 0; i < fields.size(); ++i) header += (i ? "," : "") + fields[i];
    if (header != kCidbHeader)
        throw Error(ErrorCode::InputUnreadable, "unexpected CSV header '" + header + "'");

    std::vector<DidbRecord> records;
    std::size_t row_number = 0;
    while (true) {
        bool more = false;
        try {
            more = reader.next(fields);
        } catch (const Error& e) {
            report.rejected.push_back({row_number + 1, e.what()});
            ++report.rows;
            break;
        }
        if (!more) break;
        if (fields.size() == 1 && fields[0].empty()) continue;
        ++row_number;
        ++report.rows;
        if (fields.size() != 6) {
            report.rejected.push_back(
                {row_number, "expected 6 columns, got " + std::to_string(fields.size())});
            continue;
        }
        CidbRow row{row_number, {}};
        std::move(fields.begin(), fields.end(), row.columns.begin());
        try {
            records.push_back(make_record(parse_row(row)));
        } catch (const Error& e) {
            report.rejected.push_back({row_number, e.what()});
        }
    }
    if (report.rows > 0 && records.empty())
        throw Error(ErrorCode::AllRowsInvalid,
                    "all " + std::to_string(report.rows) + " rows were rejected");

    std::sort(records.begin(), records.end());
    auto accepted = records.size();
    records.erase(std::unique(records.begin(), records.end()), records.end());
    report.duplicates = accepted - records.size();
    report.records = records.size();
    return records;
}

BuildResult build(const fs::path& cidb, std::uint64_t didb_version, const fs::path& out) {
    if (didb_version == 0) throw Error(ErrorCode::InvalidConfig, "didb_version must be positive");
    BuildResult result;
    result.report.didb_version = didb_version;
    auto records = collect_records(cidb, result.report);
    auto chunks = pack_chunks(records);
    result.report.chunks = chunks.size();
    result.manifest = write_store(chunks, didb_version, out);
    return result;
}

BuildResult rebuild_incremental(const fs::path& old_store, const fs::path& cidb,
                                std::uint64_t didb_version, const fs::path& out) {
    auto corrupt = validate_store(old_store);
    if (!corrupt.empty())
        throw Error(ErrorCode::ValidationFailed,
                    "old store has " + std::to_string(corrupt.size()) + " corrupt chunk(s)");
    auto old_manifest = read_manifest(old_store);
    auto result = build(cidb, didb_version, out);
    result.report.changed_chunks = diff_manifests(old_manifest, result.manifest);
    return result;
}

namespace {

constexpr const char* kGivenNames[] = {
    "Abdul",  "Rahim",   "Karim",  "Fatema", "Ayesha", "Nusrat", "Tanvir", "Sadia",
    "Imran",  "Farhana", "Mahmud", "Shirin", "Rafiq",  "Nasrin", "Jamal",  "Ruma",
    "Hasan",  "Laila",   "Sohel",  "Mitu",   "Arif",   "Sharmin", "Kamal", "Rina",
    "Anis",   "Sumaiya", "Habib",  "Tania",  "Ashraf", "Moni",   "Zahid",  "Lucky"};
constexpr const char* kFamilyNames[] = {
    "Rahman", "Hossain", "Ahmed",  "Islam",    "Khan",   "Chowdhury", "Akter", "Begum",
    "Uddin",  "Ali",     "Sarkar", "Mia",      "Talukder", "Sheikh", "Bhuiyan", "Das",
    "Roy",    "Saha",    "Mondal", "Haque",    "Kabir",  "Siddique", "Alam",  "Karim"};
constexpr const char* kBloodGroups[] = {"A+", "A-", "B+", "B-", "AB+", "AB-", "O+", "O-", ""};
constexpr const char* kPlaces[] = {
    "Dhaka",    "Chattogram", "Khulna",   "Rajshahi", "Sylhet",  "Barishal",  "Rangpur",
    "Mymensingh", "Cumilla",  "Gazipur",  "Narayanganj", "Bogura", "Jashore", "Dinajpur",
    "Pabna",    "Tangail",    "Noakhali", "Feni",     "Kushtia", "Faridpur"};

template <typename T, std::size_t N>
const T& pick(std::mt19937_64& rng, const T (&items)[N]) {
    return items[rng() % N];
}

unsigned days_in(int year, unsigned month) {
    using namespace std::chrono;
    return static_cast<unsigned>(
        (std::chrono::year{year} / std::chrono::month{month} / last).day());
}

std::string date_text(int year, unsigned month, unsigned day) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", year, month, day);
    return buf;
}

}  // namespace

void generate_synthetic_cidb(std::uint64_t count, std::uint64_t seed, const fs::path& out) {
    // mt19937_64's output sequence is fixed by the standard; plain modulo keeps
    // the mapping identical across standard libraries.
    std::mt19937_64 rng(seed);
    constexpr std::uint64_t kSerialSpace = 10'000'000'000ULL;
    const std::uint64_t serial_offset = (seed * 2'654'435'761ULL) % kSerialSpace;

    std::string text(kCidbHeader);
    text += '\n';
    for (std::uint64_t i = 0; i < count; ++i) {
        char serial[16];
        std::snprintf(serial, sizeof serial, "%010llu",
                      static_cast<unsigned long long>((serial_offset + i * 7919) % kSerialSpace));
        int birth_year = 1900 + static_cast<int>(rng() % 121);
        unsigned birth_month = 1 + static_cast<unsigned>(rng() % 12);
        unsigned birth_day = 1 + static_cast<unsigned>(rng() % days_in(birth_year, birth_month));
        int issue_year = birth_year + static_cast<int>(rng() % static_cast<unsigned>(2021 - birth_year));
        unsigned issue_month = 1 + static_cast<unsigned>(rng() % 12);
        unsigned issue_day = 1 + static_cast<unsigned>(rng() % days_in(issue_year, issue_month));
        auto dob = date_text(birth_year, birth_month, birth_day);
        auto issue = date_text(issue_year, issue_month, issue_day);
        if (issue < dob) issue = dob;

        std::string name = pick(rng, kGivenNames);
        name += ' ';
        name += pick(rng, kFamilyNames);

        text += serial;
        text += ',';
        text += csv_escape(name);
        text += ',';
        text += dob;
        text += ',';
        text += pick(rng, kBloodGroups);
        text += ',';
        text += pick(rng, kPlaces);
        text += ',';
        text += issue;
        text += '\n';
    }
    std::ofstream file(out, std::ios::binary | std::ios::trunc);
    file.write(text.data(), static_cast<std::streamsize>(text.size()));
    file.close();
    if (!file) throw Error(ErrorCode::IoFailure, "cannot write " + out.string());
}

}  // namespace didb
