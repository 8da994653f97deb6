#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "disco/layers.hpp"

/// DISCOCKPT container: magic, version, length-prefixed UTF-8 metadata, then
/// named float32 tensors. Encoding is deterministic, so save -> load -> save
/// reproduces the same bytes.
namespace disco::ckpt {

inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::uint8_t kDtypeFloat32 = 0;

struct NamedTensor {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<float> data;
};

struct Checkpoint {
    std::string metadata;
    std::vector<NamedTensor> tensors;

    [[nodiscard]] bool has(const std::string& name) const;
    [[nodiscard]] const NamedTensor& get(const std::string& name) const;
};

std::vector<std::uint8_t> encode(const Checkpoint& ckpt);
Checkpoint decode(std::span<const std::uint8_t> bytes);
void write(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read(const std::filesystem::path& path);

/// Appends every parameter (converted to float32) under `prefix`.
template <typename T>
void add_params(Checkpoint& ckpt, const nn::ParamList<T>& params, const std::string& prefix = "");

/// Overwrites parameter values from the checkpoint; names and shapes must match.
template <typename T>
void load_params(const Checkpoint& ckpt, const nn::ParamList<T>& params, const std::string& prefix = "");

}  // namespace disco::ckpt
