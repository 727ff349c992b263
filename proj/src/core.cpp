#include "didb/core.hpp"

#include "didb/error.hpp"

#include <openssl/evp.h>
#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <charconv>
#include <cstdio>

namespace didb {
namespace {

bool is_digit(char c) noexcept { return c >= '0' && c <= '9'; }
bool is_lower_hex(char c) noexcept { return is_digit(c) || (c >= 'a' && c <= 'f'); }

int parse_digits(std::string_view text) {
    int value = 0;
    std::from_chars(text.data(), text.data() + text.size(), value);
    return value;
}

bool is_ascii(std::string_view text) noexcept {
    return std::all_of(text.begin(), text.end(),
                       [](char c) { return static_cast<unsigned char>(c) < 0x80; });
}

// ASCII members of the Unicode White_Space property.
bool is_ascii_space(char c) noexcept { return c == ' ' || (c >= '\t' && c <= '\r'); }

std::string normalize_ascii(std::string_view text, bool upper) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char c : text) {
        if (is_ascii_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        if (upper && c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
        out.push_back(c);
    }
    return out;
}

std::string normalize_unicode(std::string_view text, bool upper) {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) throw std::runtime_error("ICU NFC normalizer unavailable");
    icu::UnicodeString composed =
        nfc->normalize(icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(),
                                                                    static_cast<int32_t>(text.size()))),
                       status);
    if (U_FAILURE(status)) throw std::runtime_error("ICU normalization failed");

    icu::UnicodeString collapsed;
    bool pending_space = false;
    for (int32_t i = 0; i < composed.length();) {
        UChar32 cp = composed.char32At(i);
        i += U16_LENGTH(cp);
        if (u_isUWhiteSpace(cp)) {
            pending_space = !collapsed.isEmpty();
            continue;
        }
        if (pending_space) {
            collapsed.append(static_cast<UChar>(u' '));
            pending_space = false;
        }
        collapsed.append(cp);
    }
    if (upper) collapsed.toUpper(icu::Locale::getRoot());
    std::string out;
    collapsed.toUTF8String(out);
    return out;
}

std::string normalize_field(std::string_view text, bool upper) {
    return is_ascii(text) ? normalize_ascii(text, upper) : normalize_unicode(text, upper);
}

void require_no_separator(std::string_view field, std::string_view label) {
    if (field.find('|') != std::string_view::npos)
        throw Error(ErrorCode::FieldContainsSeparator, std::string(label) + " contains '|'");
}

}  // namespace

Date parse_date(std::string_view text) {
    auto bad = [&] { return Error(ErrorCode::InvalidDate, "'" + std::string(text) + "'"); };
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') throw bad();
    for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9})
        if (!is_digit(text[i])) throw bad();
    int year = parse_digits(text.substr(0, 4));
    unsigned month = static_cast<unsigned>(parse_digits(text.substr(5, 2)));
    unsigned day = static_cast<unsigned>(parse_digits(text.substr(8, 2)));
    Date date{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}};
    if (!date.ok() || year < kMinYear || year > kMaxYear) throw bad();
    return date;
}

std::string format_date(const Date& date) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(date.year()),
                  static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
    return buf;
}

namespace {
void require_date(const Date& date, std::string_view label) {
    int year = static_cast<int>(date.year());
    if (!date.ok() || year < kMinYear || year > kMaxYear)
        throw Error(ErrorCode::InvalidDate, std::string(label) + " out of range");
}
}  // namespace

IdentityFields::IdentityFields(std::string serial, std::string name, Date date_of_birth,
                               std::string blood_group, std::string place_of_birth,
                               Date issue_date)
    : serial_(std::move(serial)),
      name_(std::move(name)),
      date_of_birth_(date_of_birth),
      blood_group_(std::move(blood_group)),
      place_of_birth_(std::move(place_of_birth)),
      issue_date_(issue_date) {
    if (normalize_field(serial_, false).empty())
        throw Error(ErrorCode::EmptyField, "serial is empty");
    if (normalize_field(name_, false).empty()) throw Error(ErrorCode::EmptyField, "name is empty");
    require_date(date_of_birth_, "date_of_birth");
    require_date(issue_date_, "issue_date");
}

IdentityFields IdentityFields::from_text(std::string serial, std::string name,
                                         std::string_view date_of_birth, std::string blood_group,
                                         std::string place_of_birth,
                                         std::string_view issue_date) {
    return IdentityFields(std::move(serial), std::move(name), parse_date(date_of_birth),
                          std::move(blood_group), std::move(place_of_birth),
                          parse_date(issue_date));
}

BirthPrefix BirthPrefix::parse(std::string_view text) {
    auto bad = [&] { return Error(ErrorCode::BadPrefix, "'" + std::string(text) + "'"); };
    if (text.size() != kPrefixSize || !std::all_of(text.begin(), text.end(), is_digit)) throw bad();
    int year = parse_digits(text.substr(0, 4));
    int month = parse_digits(text.substr(4, 2));
    if (year < kMinYear || year > kMaxYear || month < 1 || month > 12) throw bad();
    BirthPrefix prefix;
    std::copy(text.begin(), text.end(), prefix.chars_.begin());
    return prefix;
}

int BirthPrefix::year() const noexcept { return parse_digits(view().substr(0, 4)); }
unsigned BirthPrefix::month() const noexcept {
    return static_cast<unsigned>(parse_digits(view().substr(4, 2)));
}

BirthPrefix BirthPrefix::next_month() const {
    int y = year();
    unsigned m = month();
    if (y == kMaxYear && m == 12) return *this;
    if (++m > 12) {
        m = 1;
        ++y;
    }
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d%02u", y, m);
    return parse(buf);
}

Digest40 Digest40::parse(std::string_view text) {
    if (text.size() != kDigestSize)
        throw Error(ErrorCode::BadLength, "digest must be 40 characters");
    if (!std::all_of(text.begin(), text.end(), is_lower_hex))
        throw Error(ErrorCode::BadDigestAlphabet, "'" + std::string(text) + "'");
    Digest40 digest;
    std::copy(text.begin(), text.end(), digest.chars_.begin());
    return digest;
}

DidbRecord::DidbRecord(const BirthPrefix& prefix, const Digest40& digest) noexcept {
    auto p = prefix.view();
    auto d = digest.view();
    std::copy(p.begin(), p.end(), text_.begin());
    std::copy(d.begin(), d.end(), text_.begin() + kPrefixSize);
}

BirthPrefix DidbRecord::prefix() const { return BirthPrefix::parse(view().substr(0, kPrefixSize)); }
Digest40 DidbRecord::digest() const { return Digest40::parse(view().substr(kPrefixSize)); }

struct Sha256::Impl {
    EVP_MD_CTX* ctx = nullptr;
    ~Impl() { EVP_MD_CTX_free(ctx); }
};

Sha256::Sha256() : impl_(std::make_unique<Impl>()) {
    impl_->ctx = EVP_MD_CTX_new();
    if (impl_->ctx == nullptr || EVP_DigestInit_ex(impl_->ctx, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("EVP_DigestInit_ex failed");
}

Sha256::~Sha256() = default;

void Sha256::update(std::string_view data) {
    if (EVP_DigestUpdate(impl_->ctx, data.data(), data.size()) != 1)
        throw std::runtime_error("EVP_DigestUpdate failed");
}

std::array<std::uint8_t, 32> Sha256::finish() {
    std::array<std::uint8_t, 32> out{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(impl_->ctx, out.data(), &len) != 1 || len != out.size())
        throw std::runtime_error("EVP_DigestFinal_ex failed");
    EVP_DigestInit_ex(impl_->ctx, EVP_sha256(), nullptr);
    return out;
}

std::array<std::uint8_t, 32> sha256(std::string_view data) {
    std::array<std::uint8_t, 32> out{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("EVP_Digest failed");
    return out;
}

std::string to_hex(const std::uint8_t* data, std::size_t size) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out(size * 2, '0');
    for (std::size_t i = 0; i < size; ++i) {
        out[2 * i] = kHex[data[i] >> 4];
        out[2 * i + 1] = kHex[data[i] & 0x0f];
    }
    return out;
}

std::string sha256_hex(std::string_view data) {
    auto digest = sha256(data);
    return to_hex(digest.data(), digest.size());
}

std::string canonicalize(const IdentityFields& fields) {
    require_no_separator(fields.serial(), "serial");
    require_no_separator(fields.name(), "name");
    require_no_separator(fields.blood_group(), "blood_group");
    require_no_separator(fields.place_of_birth(), "place_of_birth");

    std::string out = normalize_field(fields.serial(), false);
    out += '|';
    out += normalize_field(fields.name(), true);
    out += '|';
    out += format_date(fields.date_of_birth());
    out += '|';
    out += normalize_field(fields.blood_group(), true);
    out += '|';
    out += normalize_field(fields.place_of_birth(), false);
    out += '|';
    out += format_date(fields.issue_date());
    return out;
}

Digest40 truncated_sha256(std::string_view data) {
    auto digest = sha256(data);
    return Digest40::parse(to_hex(digest.data(), kDigestSize / 2));
}

BirthPrefix derive_prefix(const Date& date_of_birth) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d%02u", static_cast<int>(date_of_birth.year()),
                  static_cast<unsigned>(date_of_birth.month()));
    return BirthPrefix::parse(std::string_view(buf, kPrefixSize));
}

DidbRecord make_record(const IdentityFields& fields) {
    return DidbRecord(derive_prefix(fields.date_of_birth()), truncated_sha256(canonicalize(fields)));
}

DidbRecord parse_record(std::string_view text) {
    if (text.size() != kRecordSize)
        throw Error(ErrorCode::BadLength,
                    "record must be 46 characters, got " + std::to_string(text.size()));
    return DidbRecord(BirthPrefix::parse(text.substr(0, kPrefixSize)),
                      Digest40::parse(text.substr(kPrefixSize)));
}

}  // namespace didb
