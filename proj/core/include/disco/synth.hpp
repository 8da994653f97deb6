#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "disco/dataset.hpp"
#include "disco/image.hpp"
#include "disco/rng.hpp"

/// Procedural shapes dataset: the shape (content) and the colour/texture
/// (style) are drawn independently, so both factors are known exactly.
namespace disco::synth {

enum class Texture { Solid, Stripes, Dots };
enum class ShapeKind { Ellipse, Triangle, Rectangle };

const char* to_string(Texture t);
const char* to_string(ShapeKind s);
ShapeKind parse_shape(const std::string& name);

struct CategorySpec {
    std::size_t id = 0;
    double base_hue = 0.0;       // [0, 1)
    double secondary_hue = 0.0;  // [0, 1), background
    Texture texture = Texture::Solid;
    bool seen = true;
};

/// Geometry in image-fraction coordinates: (0, 0) is the top-left corner,
/// (1, 1) the bottom-right one.
struct ContentFactors {
    ShapeKind shape = ShapeKind::Ellipse;
    double cx = 0.5;
    double cy = 0.5;
    double rotation = 0.0;  // radians
    double scale = 0.3;     // half-extent of the unit shape

    bool operator==(const ContentFactors&) const = default;
};

/// Style parameters are a pure function of (id, seed).
CategorySpec make_category(std::size_t id, std::uint64_t seed, bool seen);

/// Axis-aligned half-extents of the placed shape.
std::array<double, 2> half_extent(const ContentFactors& f);
/// Throws ContractError unless the shape lies fully inside the canvas.
void check_factors(const ContentFactors& f);
/// Category-independent draw of valid factors.
ContentFactors random_factors(Rng& rng);

/// Shape membership of the point (u, v) in image-fraction coordinates.
bool inside(const ContentFactors& f, double u, double v);

/// Foreground coverage per pixel in {0, 1/4, 2/4, 3/4, 1} (2x2 supersampling).
std::vector<float> coverage(const ContentFactors& f, std::size_t image_size);

/// Foreground and background RGB in [0, 1] for a category.
std::array<double, 3> foreground_rgb(const CategorySpec& cat);
std::array<double, 3> background_rgb(const CategorySpec& cat);

Image render_sample(const CategorySpec& cat, const ContentFactors& f, std::size_t image_size);

struct SynthSpec {
    std::uint64_t seed = 0;
    std::size_t n_seen = 8;
    std::size_t n_unseen = 2;
    std::size_t samples_per_category = 200;
    std::size_t image_size = 32;
};

struct SynthDataset {
    SynthSpec spec;
    std::vector<CategorySpec> categories;  // ids 0..n_seen-1 seen, then unseen
    LabeledImages data;                    // label == category id
    std::vector<ContentFactors> factors;   // per sample
    std::vector<std::string> paths;        // relative to the dataset root

    [[nodiscard]] std::vector<std::size_t> seen_ids() const;
    [[nodiscard]] std::vector<std::size_t> unseen_ids() const;
};

/// Renders the dataset in memory. Equal specs give identical datasets.
SynthDataset generate(const SynthSpec& spec);

/// Writes images/<category>/<sample>.png and manifest.jsonl under `root`.
/// `config_hash` is echoed into every manifest record when non-empty.
void write_dataset(const SynthDataset& ds, const std::filesystem::path& root, const std::string& config_hash = "");

/// generate() followed by write_dataset().
SynthDataset build_dataset(const SynthSpec& spec, const std::filesystem::path& root,
                           const std::string& config_hash = "");

/// One manifest line per sample.
struct ManifestRecord {
    std::string path;
    std::size_t category = 0;
    bool seen = true;
    ContentFactors factors;
};
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& file);

}  // namespace disco::synth
