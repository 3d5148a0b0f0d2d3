#include "pmd/zip.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "pmd/error.hpp"

namespace pmd {

namespace {

void put16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint16_t get16(std::string_view s, size_t off) {
    return static_cast<uint8_t>(s[off]) | (static_cast<uint8_t>(s[off + 1]) << 8);
}

uint32_t get32(std::string_view s, size_t off) {
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i)
        v = (v << 8) | static_cast<uint8_t>(s[off + i]);
    return v;
}

constexpr uint32_t kLocalSig = 0x04034b50;
constexpr uint32_t kCentralSig = 0x02014b50;
constexpr uint32_t kEndSig = 0x06054b50;

std::string inflate_raw(std::string_view compressed, size_t expected_size) {
    std::string out(expected_size, '\0');
    z_stream zs{};
    if (inflateInit2(&zs, -15) != Z_OK)
        fail(ErrorCode::FormatError, "zip: inflate init failed");
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(compressed.data()));
    zs.avail_in = static_cast<uInt>(compressed.size());
    zs.next_out = reinterpret_cast<Bytef*>(out.data());
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = inflate(&zs, Z_FINISH);
    inflateEnd(&zs);
    if (rc != Z_STREAM_END || zs.total_out != expected_size)
        fail(ErrorCode::FormatError, "zip: corrupt deflate stream");
    return out;
}

bool safe_entry_name(const std::string& name) {
    if (name.empty() || name.front() == '/' || name.find('\\') != std::string::npos)
        return false;
    size_t pos = 0;
    while (pos < name.size()) {
        size_t next = name.find('/', pos);
        if (next == std::string::npos)
            next = name.size();
        if (name.substr(pos, next - pos) == "..")
            return false;
        pos = next + 1;
    }
    return true;
}

} // namespace

std::string zip_pack(const std::vector<ZipEntry>& entries) {
    std::string out;
    std::string central;
    for (const auto& e : entries) {
        if (!safe_entry_name(e.name))
            fail(ErrorCode::InvalidArgument, "zip_pack: bad entry name " + e.name);
        const uint32_t crc = static_cast<uint32_t>(
            crc32(0L, reinterpret_cast<const Bytef*>(e.data.data()), static_cast<uInt>(e.data.size())));
        const uint32_t offset = static_cast<uint32_t>(out.size());

        put32(out, kLocalSig);
        put16(out, 20);                // version needed
        put16(out, 0);                 // flags
        put16(out, 0);                 // method: store
        put16(out, 0);                 // mod time
        put16(out, 0x21);              // mod date (fixed, deterministic)
        put32(out, crc);
        put32(out, static_cast<uint32_t>(e.data.size()));
        put32(out, static_cast<uint32_t>(e.data.size()));
        put16(out, static_cast<uint16_t>(e.name.size()));
        put16(out, 0); // extra len
        out += e.name;
        out += e.data;

        put32(central, kCentralSig);
        put16(central, 20); // version made by
        put16(central, 20);
        put16(central, 0);
        put16(central, 0);
        put16(central, 0);
        put16(central, 0x21);
        put32(central, crc);
        put32(central, static_cast<uint32_t>(e.data.size()));
        put32(central, static_cast<uint32_t>(e.data.size()));
        put16(central, static_cast<uint16_t>(e.name.size()));
        put16(central, 0);
        put16(central, 0);
        put16(central, 0); // disk number
        put16(central, 0); // internal attrs
        put32(central, 0); // external attrs
        put32(central, offset);
        central += e.name;
    }
    const uint32_t central_offset = static_cast<uint32_t>(out.size());
    out += central;
    put32(out, kEndSig);
    put16(out, 0);
    put16(out, 0);
    put16(out, static_cast<uint16_t>(entries.size()));
    put16(out, static_cast<uint16_t>(entries.size()));
    put32(out, static_cast<uint32_t>(central.size()));
    put32(out, central_offset);
    put16(out, 0); // comment length
    return out;
}

std::string zip_pack_dir(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir))
        if (entry.is_regular_file())
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    std::vector<ZipEntry> entries;
    entries.reserve(files.size());
    for (const auto& p : files) {
        std::ifstream in(p, std::ios::binary);
        if (!in)
            fail(ErrorCode::IoError, "cannot read " + p.string());
        std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        entries.push_back({std::filesystem::relative(p, dir).generic_string(), std::move(data)});
    }
    return zip_pack(entries);
}

std::vector<ZipEntry> zip_unpack(std::string_view bytes) {
    if (bytes.size() < 22)
        fail(ErrorCode::FormatError, "zip: archive too small");
    // find end-of-central-directory record
    size_t eocd = std::string_view::npos;
    const size_t scan_limit = bytes.size() >= 22 + 65535 ? bytes.size() - 22 - 65535 : 0;
    for (size_t i = bytes.size() - 22; ; --i) {
        if (get32(bytes, i) == kEndSig) {
            eocd = i;
            break;
        }
        if (i == scan_limit)
            break;
    }
    if (eocd == std::string_view::npos)
        fail(ErrorCode::FormatError, "zip: end record not found");

    const uint16_t count = get16(bytes, eocd + 10);
    const uint32_t central_size = get32(bytes, eocd + 12);
    const uint32_t central_offset = get32(bytes, eocd + 16);
    if (central_offset + central_size > bytes.size())
        fail(ErrorCode::FormatError, "zip: corrupt central directory");

    std::vector<ZipEntry> entries;
    size_t pos = central_offset;
    for (uint16_t i = 0; i < count; ++i) {
        if (pos + 46 > bytes.size() || get32(bytes, pos) != kCentralSig)
            fail(ErrorCode::FormatError, "zip: corrupt central entry");
        const uint16_t method = get16(bytes, pos + 10);
        const uint32_t csize = get32(bytes, pos + 20);
        const uint32_t usize = get32(bytes, pos + 24);
        const uint16_t name_len = get16(bytes, pos + 28);
        const uint16_t extra_len = get16(bytes, pos + 30);
        const uint16_t comment_len = get16(bytes, pos + 32);
        const uint32_t local_offset = get32(bytes, pos + 42);
        const uint32_t crc_expected = get32(bytes, pos + 16);
        std::string name(bytes.substr(pos + 46, name_len));
        pos += 46 + name_len + extra_len + comment_len;

        if (!name.empty() && name.back() == '/')
            continue; // directory entry
        if (!safe_entry_name(name))
            fail(ErrorCode::FormatError, "zip: unsafe entry name " + name);

        if (local_offset + 30 > bytes.size() || get32(bytes, local_offset) != kLocalSig)
            fail(ErrorCode::FormatError, "zip: corrupt local header for " + name);
        const uint16_t local_name_len = get16(bytes, local_offset + 26);
        const uint16_t local_extra_len = get16(bytes, local_offset + 28);
        const size_t data_start = local_offset + 30 + local_name_len + local_extra_len;
        if (data_start + csize > bytes.size())
            fail(ErrorCode::FormatError, "zip: truncated data for " + name);

        std::string data;
        const std::string_view raw = bytes.substr(data_start, csize);
        if (method == 0) {
            if (csize != usize)
                fail(ErrorCode::FormatError, "zip: stored size mismatch for " + name);
            data.assign(raw);
        } else if (method == 8) {
            data = inflate_raw(raw, usize);
        } else {
            fail(ErrorCode::FormatError, "zip: unsupported compression method for " + name);
        }
        const uint32_t crc_actual = static_cast<uint32_t>(
            crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size())));
        if (crc_actual != crc_expected)
            fail(ErrorCode::FormatError, "zip: crc mismatch for " + name);
        entries.push_back({std::move(name), std::move(data)});
    }
    return entries;
}

void zip_extract_to_dir(std::string_view bytes, const std::filesystem::path& dir) {
    const auto entries = zip_unpack(bytes);
    for (const auto& e : entries) {
        const std::filesystem::path target = dir / e.name;
        std::filesystem::create_directories(target.parent_path());
        std::ofstream out(target, std::ios::binary);
        if (!out)
            fail(ErrorCode::IoError, "cannot write " + target.string());
        out.write(e.data.data(), static_cast<std::streamsize>(e.data.size()));
    }
}

} // namespace pmd
