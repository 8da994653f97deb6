#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "disco/rng.hpp"
#include "disco/tensor.hpp"

/// Dictionary of local content vectors: nearest-neighbour quantization,
/// straight-through composition, the two-sided VQ loss and the on-disk
/// codebook / index-map formats.
namespace disco::vq {

/// K x d_c matrix of entries, row-major.
template <typename T>
struct Codebook {
    std::size_t size = 0;  // K
    std::size_t dim = 0;   // d_c
    std::vector<T> entries;

    [[nodiscard]] std::span<const T> entry(std::size_t k) const { return {entries.data() + k * dim, dim}; }
    /// Validates K >= 1, shape consistency and finiteness.
    void validate() const;

    static Codebook random(std::size_t size, std::size_t dim, double stddev, Rng& rng);
};

/// w x h grid of d_c vectors, stored position-major in raster order
/// (left to right, then top to bottom): position i = row * width + col.
template <typename T>
struct ContentMap {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 0;
    std::vector<T> values;

    [[nodiscard]] std::size_t positions() const { return width * height; }
    [[nodiscard]] std::span<const T> at(std::size_t i) const { return {values.data() + i * channels, channels}; }

    /// From one sample of an NCHW feature tensor ([C, H, W] plane block).
    static ContentMap from_chw(std::span<const T> chw, std::size_t channels, std::size_t height, std::size_t width);
    [[nodiscard]] std::vector<T> to_chw() const;
};

struct IndexMap {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint32_t> indices;  // raster order

    bool operator==(const IndexMap&) const = default;
};

template <typename T>
struct QuantizedContentMap {
    IndexMap indices;
    ContentMap<T> decoded;
};

/// Sum of squared differences, accumulated in index order. Quantization and
/// the VQ loss share this routine so their values agree bit-for-bit.
template <typename T>
T squared_distance(std::span<const T> a, std::span<const T> b);

/// argmin_j ||v - e_j||^2; ties go to the lowest index.
template <typename T>
std::uint32_t nearest_index(std::span<const T> v, const Codebook<T>& book);

template <typename T>
QuantizedContentMap<T> quantize(const ContentMap<T>& content, const Codebook<T>& book);

/// Exact row lookup of every index.
template <typename T>
ContentMap<T> decode(const IndexMap& indices, const Codebook<T>& book);

/// ||sg[C] - C_hat||^2 + ||sg[C_hat] - C||^2 on plain values.
template <typename T>
T vq_loss_value(const ContentMap<T>& content, const ContentMap<T>& quantized);

// ---- graph versions ------------------------------------------------------

/// Nearest codebook row for every row of `rows` [M, d].
template <typename T>
std::vector<std::uint32_t> nearest_rows(const nn::Tensor<T>& rows, const nn::Tensor<T>& codebook);

/// Two-sided VQ loss over rows [M, d] assigned to `indices` in codebook [K, d].
/// Returns the sum over rows; the gradient of the first term reaches only the
/// codebook, that of the second only `rows`.
template <typename T>
nn::Tensor<T> vq_loss(const nn::Tensor<T>& rows, const nn::Tensor<T>& codebook,
                      std::span<const std::uint32_t> indices);

/// Tracks which entries were selected since the last reset and re-seeds
/// entries that went unused for a whole epoch.
class UsageTracker {
  public:
    explicit UsageTracker(std::size_t size) : counts_(size, 0) {}
    void record(std::span<const std::uint32_t> indices);
    [[nodiscard]] std::size_t unused() const;
    /// Overwrites every unused row of `codebook` [K, d] with a random row of
    /// `candidates` [M, d] and resets the counts. Returns how many rows changed.
    template <typename T>
    std::size_t reseed(nn::Tensor<T>& codebook, const nn::Tensor<T>& candidates, Rng& rng);

  private:
    std::vector<std::uint64_t> counts_;
};

// ---- files ---------------------------------------------------------------

inline constexpr std::uint32_t kCodebookVersion = 1;
inline constexpr std::uint32_t kIndexMapVersion = 1;
inline constexpr std::size_t kCodebookHeaderBytes = 8 + 4 + 4 + 4;
inline constexpr std::size_t kIndexMapHeaderBytes = 8 + 4 + 4 + 4;

constexpr std::size_t codebook_file_size(std::size_t k, std::size_t d) { return kCodebookHeaderBytes + k * d * 4; }
constexpr std::size_t index_map_file_size(std::size_t w, std::size_t h) { return kIndexMapHeaderBytes + w * h * 2; }

std::vector<std::uint8_t> encode_codebook(const Codebook<float>& book);
Codebook<float> decode_codebook(std::span<const std::uint8_t> bytes);
void write_codebook(const std::filesystem::path& path, const Codebook<float>& book);
Codebook<float> read_codebook(const std::filesystem::path& path);

/// Indices are stored as u16, so every index must be < 65536.
std::vector<std::uint8_t> encode_index_map(const IndexMap& map);
IndexMap decode_index_map(std::span<const std::uint8_t> bytes);
void write_index_map(const std::filesystem::path& path, const IndexMap& map);
IndexMap read_index_map(const std::filesystem::path& path);

}  // namespace disco::vq
