#pragma once

#include <filesystem>
#include <string>

namespace lnc {

/// SHA-256 of a byte range, lowercase hex.
std::string sha256_hex(const void* data, size_t len);

std::string sha256_hex(const std::string& s);

/// SHA-256 of a file's contents; throws on I/O failure.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace lnc
