#pragma once

// Straight FIPS 180-4 SHA-256, kept in the test tree as an independent
// reference for the library's OpenSSL-backed hashing.

#include <string>
#include <string_view>

namespace oracle {

/// 64 lowercase hex characters.
std::string sha256_hex(std::string_view data);

}  // namespace oracle
