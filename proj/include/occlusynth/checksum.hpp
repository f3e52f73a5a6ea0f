// FNV-1a 64-bit checksums for run manifests and dataset integrity.

#pragma once

#include <cstdint>
#include <string>

namespace occl {

std::uint64_t fnv1a64(const void* data, std::size_t len,
                      std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64_file(const std::string& path);
std::string checksum_hex(std::uint64_t h);

}  // namespace occl
