#pragma once
// Little-endian float32 blocks and content digests shared by the
// checkpoint, schema-vector and run-manifest writers.

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rmpi::io {

void write_f32_le(std::ostream& out, std::span<const double> values);
std::vector<double> read_f32_le(std::istream& in, std::size_t count);

std::string sha256_hex(std::string_view data);
// Digest of a file the way git names blobs: sha1("blob <size>\0" + bytes).
std::string git_blob_digest(const std::filesystem::path& file);

std::string read_file(const std::filesystem::path& file);

}  // namespace rmpi::io
