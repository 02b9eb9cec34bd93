#include "rmpi/io_util.hpp"

#include "rmpi/kgstore.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace rmpi::io {

namespace {

std::string hex_digest(const EVP_MD* md, std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> buf{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), buf.data(), &len, md, nullptr) != 1)
        throw std::runtime_error("digest computation failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[buf[i] >> 4]);
        out.push_back(kHex[buf[i] & 0xF]);
    }
    return out;
}

}  // namespace

void write_f32_le(std::ostream& out, std::span<const double> values) {
    std::vector<char> bytes;
    bytes.reserve(values.size() * 4);
    for (double v : values) {
        auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<double> read_f32_le(std::istream& in, std::size_t count) {
    std::vector<char> bytes(count * 4);
    in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size())
        throw DataError("truncated float32 block");
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b)
            bits |= std::uint32_t{static_cast<unsigned char>(bytes[i * 4 + b])} << (8 * b);
        out[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    return out;
}

std::string sha256_hex(std::string_view data) { return hex_digest(EVP_sha256(), data); }

std::string read_file(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DataError("cannot open " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string git_blob_digest(const std::filesystem::path& file) {
    std::string content = read_file(file);
    std::string blob = "blob " + std::to_string(content.size());
    blob.push_back('\0');
    blob += content;
    return hex_digest(EVP_sha1(), blob);
}

}  // namespace rmpi::io
