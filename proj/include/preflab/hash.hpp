#pragma once

// SHA-256 content hashes for artifact manifests.

#include <filesystem>
#include <string>
#include <string_view>

namespace preflab {

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace preflab
