#include <fmt/format.h>

#include "disco/binary_io.hpp"
#include "disco/errors.hpp"
#include "disco/vq.hpp"

namespace disco::vq {

namespace {
constexpr std::string_view kCodebookMagic = "DISCODIC";
constexpr std::string_view kIndexMagic = "DISCOIDX";
}  // namespace

std::vector<std::uint8_t> encode_codebook(const Codebook<float>& book) {
    book.validate();
    io::ByteWriter w;
    w.raw(kCodebookMagic);
    w.u32(kCodebookVersion);
    w.u32(static_cast<std::uint32_t>(book.size));
    w.u32(static_cast<std::uint32_t>(book.dim));
    for (float v : book.entries) w.f32(v);
    return w.take();
}

Codebook<float> decode_codebook(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    r.expect_magic(kCodebookMagic);
    const std::size_t at = r.offset();
    if (const auto version = r.u32(); version != kCodebookVersion)
        throw FormatError(fmt::format("unsupported codebook version {}", version), at);
    Codebook<float> book;
    const std::size_t k_at = r.offset();
    book.size = r.u32();
    book.dim = r.u32();
    if (book.size == 0 || book.dim == 0) throw FormatError("codebook has zero entries or zero dimension", k_at);
    if (r.remaining() != book.size * book.dim * 4)
        throw FormatError(fmt::format("codebook payload is {} bytes, expected {}", r.remaining(), book.size * book.dim * 4),
                          r.offset());
    book.entries.resize(book.size * book.dim);
    for (auto& v : book.entries) v = r.f32();
    r.expect_end();
    return book;
}

void write_codebook(const std::filesystem::path& path, const Codebook<float>& book) {
    io::write_file(path, encode_codebook(book));
}

Codebook<float> read_codebook(const std::filesystem::path& path) { return decode_codebook(io::read_file(path)); }

std::vector<std::uint8_t> encode_index_map(const IndexMap& map) {
    require(map.indices.size() == map.width * map.height, "index map size does not match w*h");
    io::ByteWriter w;
    w.raw(kIndexMagic);
    w.u32(kIndexMapVersion);
    w.u32(static_cast<std::uint32_t>(map.width));
    w.u32(static_cast<std::uint32_t>(map.height));
    for (auto k : map.indices) {
        if (k > 0xFFFFu) throw ContractError(fmt::format("index {} does not fit the 16-bit index-map format", k));
        w.u16(static_cast<std::uint16_t>(k));
    }
    return w.take();
}

IndexMap decode_index_map(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    r.expect_magic(kIndexMagic);
    const std::size_t at = r.offset();
    if (const auto version = r.u32(); version != kIndexMapVersion)
        throw FormatError(fmt::format("unsupported index-map version {}", version), at);
    IndexMap map;
    map.width = r.u32();
    map.height = r.u32();
    if (r.remaining() != map.width * map.height * 2)
        throw FormatError(fmt::format("index payload is {} bytes, expected {}", r.remaining(), map.width * map.height * 2),
                          r.offset());
    map.indices.resize(map.width * map.height);
    for (auto& k : map.indices) k = r.u16();
    return map;
}

void write_index_map(const std::filesystem::path& path, const IndexMap& map) {
    io::write_file(path, encode_index_map(map));
}

IndexMap read_index_map(const std::filesystem::path& path) { return decode_index_map(io::read_file(path)); }

}  // namespace disco::vq
