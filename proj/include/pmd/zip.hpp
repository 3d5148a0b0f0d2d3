#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace pmd {

struct ZipEntry {
    std::string name; // forward-slash relative path
    std::string data;
};

/// Packs entries with the "store" method and zeroed timestamps; entry order
/// is preserved, so packing the same inputs is byte-deterministic.
std::string zip_pack(const std::vector<ZipEntry>& entries);

/// Packs a directory tree (regular files, sorted paths).
std::string zip_pack_dir(const std::filesystem::path& dir);

/// Reads a zip archive. Supports store and deflate entries; rejects
/// absolute or parent-escaping paths.
std::vector<ZipEntry> zip_unpack(std::string_view bytes);

void zip_extract_to_dir(std::string_view bytes, const std::filesystem::path& dir);

} // namespace pmd
