// Binary bundle of a prepared (inverse-augmented, snapshot-grouped) dataset.
//
// Layout (little endian): "MTDMDATA", u32 version, u64 |E|, u64 |R|,
// then for train, valid and test: u64 snapshot count and per snapshot
// i64 t, u64 fact count, (i64 s, i64 r, i64 o) per fact. A 32-byte SHA-256
// of everything before it closes the file.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mtdm/graph_data.hpp"

namespace mtdm {

inline constexpr std::uint32_t kCacheVersion = 1;
inline constexpr const char* kCacheFileName = "dataset.mtdmc";

/// Canonical byte encoding of the bundle body (no hash trailer).
std::string encode_prepared(const PreparedData& data);

/// Lowercase hex SHA-256 of encode_prepared(data).
std::string content_hash(const PreparedData& data);

/// Writes the bundle and returns its content hash.
std::string write_cache(const PreparedData& data, const std::filesystem::path& path);

/// Reads and verifies a bundle. Throws DataError on a bad magic, version,
/// truncation or hash mismatch.
PreparedData read_cache(const std::filesystem::path& path, std::string* hash_out = nullptr);

/// Accepts a cache file, a directory holding one, or a raw dataset directory
/// (train.txt, valid.txt, test.txt, stat.txt), which is parsed in memory.
PreparedData load_prepared(const std::filesystem::path& path);

bool operator==(const PreparedData& a, const PreparedData& b);

}  // namespace mtdm
