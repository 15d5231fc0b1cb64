#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace photoprior {

/// Lower-case hex SHA-256 of a byte buffer.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

/// Streams the file through SHA-256; this is the video identity used for caching.
std::string sha256_file(const std::filesystem::path& path);

/// Random 12-character hex id for freshly created resources.
std::string random_id();

}  // namespace photoprior
