#include "disco/checkpoint.hpp"

#include <fmt/format.h>

#include "disco/binary_io.hpp"
#include "disco/errors.hpp"

namespace disco::ckpt {

namespace {
constexpr std::string_view kMagic = "DISCOCKPT";
}

bool Checkpoint::has(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return true;
    return false;
}

const NamedTensor& Checkpoint::get(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return t;
    throw ContractError("checkpoint has no tensor named '" + name + "'");
}

std::vector<std::uint8_t> encode(const Checkpoint& ckpt) {
    io::ByteWriter w;
    w.raw(kMagic);
    w.u32(kVersion);
    w.str(ckpt.metadata);
    w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& t : ckpt.tensors) {
        std::size_t count = 1;
        for (auto d : t.dims) count *= d;
        require(count == t.data.size(), fmt::format("checkpoint tensor '{}' data does not match its dims", t.name));
        w.str(t.name);
        w.u32(static_cast<std::uint32_t>(t.dims.size()));
        for (auto d : t.dims) w.u32(d);
        w.u8(kDtypeFloat32);
        for (float v : t.data) w.f32(v);
    }
    return w.take();
}

Checkpoint decode(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    r.expect_magic(kMagic);
    const std::size_t at = r.offset();
    if (const auto version = r.u32(); version != kVersion)
        throw FormatError(fmt::format("unsupported checkpoint version {}", version), at);
    Checkpoint ckpt;
    ckpt.metadata = r.str();
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        t.name = r.str();
        const std::size_t rank_at = r.offset();
        const std::uint32_t rank = r.u32();
        if (rank > 8) throw FormatError(fmt::format("tensor '{}' has implausible rank {}", t.name, rank), rank_at);
        std::size_t n = 1;
        for (std::uint32_t k = 0; k < rank; ++k) {
            t.dims.push_back(r.u32());
            n *= t.dims.back();
        }
        const std::size_t dtype_at = r.offset();
        if (const auto dtype = r.u8(); dtype != kDtypeFloat32)
            throw FormatError(fmt::format("tensor '{}' has unknown dtype tag {}", t.name, dtype), dtype_at);
        if (n * 4 > r.remaining())
            throw FormatError(fmt::format("tensor '{}' payload truncated", t.name), r.offset());
        t.data.resize(n);
        for (auto& v : t.data) v = r.f32();
        ckpt.tensors.push_back(std::move(t));
    }
    r.expect_end();
    return ckpt;
}

void write(const std::filesystem::path& path, const Checkpoint& ckpt) { io::write_file(path, encode(ckpt)); }

Checkpoint read(const std::filesystem::path& path) { return decode(io::read_file(path)); }

template <typename T>
void add_params(Checkpoint& ckpt, const nn::ParamList<T>& params, const std::string& prefix) {
    for (const auto& [name, t] : params) {
        NamedTensor nt;
        nt.name = prefix + name;
        for (auto d : t.shape()) nt.dims.push_back(static_cast<std::uint32_t>(d));
        nt.data.assign(t.values().begin(), t.values().end());
        ckpt.tensors.push_back(std::move(nt));
    }
}

template <typename T>
void load_params(const Checkpoint& ckpt, const nn::ParamList<T>& params, const std::string& prefix) {
    for (const auto& [name, t] : params) {
        const auto& src = ckpt.get(prefix + name);
        std::vector<std::uint32_t> dims;
        for (auto d : t.shape()) dims.push_back(static_cast<std::uint32_t>(d));
        if (dims != src.dims)
            throw ContractError(fmt::format("checkpoint tensor '{}' has shape [{}], model expects {}", src.name,
                                            fmt::join(src.dims, ", "), nn::shape_str(t.shape())));
        auto& dst = nn::Tensor<T>(t).values();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src.data[i]);
    }
}

template void add_params(Checkpoint&, const nn::ParamList<float>&, const std::string&);
template void add_params(Checkpoint&, const nn::ParamList<double>&, const std::string&);
template void load_params(const Checkpoint&, const nn::ParamList<float>&, const std::string&);
template void load_params(const Checkpoint&, const nn::ParamList<double>&, const std::string&);

}  // namespace disco::ckpt
