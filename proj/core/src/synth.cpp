#include "disco/synth.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include <fmt/format.h>
#include <json.hpp>

#include "disco/binary_io.hpp"
#include "disco/errors.hpp"

namespace disco::synth {

namespace fs = std::filesystem;
using json = nlohmann::json;

const char* to_string(Texture t) {
    switch (t) {
        case Texture::Solid: return "solid";
        case Texture::Stripes: return "stripes";
        case Texture::Dots: return "dots";
    }
    return "?";
}

const char* to_string(ShapeKind s) {
    switch (s) {
        case ShapeKind::Ellipse: return "ellipse";
        case ShapeKind::Triangle: return "triangle";
        case ShapeKind::Rectangle: return "rectangle";
    }
    return "?";
}

ShapeKind parse_shape(const std::string& name) {
    if (name == "ellipse") return ShapeKind::Ellipse;
    if (name == "triangle") return ShapeKind::Triangle;
    if (name == "rectangle") return ShapeKind::Rectangle;
    throw FormatError(fmt::format("unknown shape '{}'", name), 0);
}

namespace {

constexpr double kEllipseMinor = 0.6;
constexpr double kRectMinor = 0.55;
constexpr double kGolden = 0.618034;
// unit triangle inscribed in the unit circle, counter-clockwise
constexpr std::array<std::array<double, 2>, 3> kTriangle{{{1.0, 0.0}, {-0.5, 0.8660254037844386}, {-0.5, -0.8660254037844386}}};

double frac(double v) { return v - std::floor(v); }

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
    h = frac(h) * 6.0;
    const int sector = static_cast<int>(h) % 6;
    const double f = h - std::floor(h);
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    switch (sector) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, q, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}

std::array<double, 3> dark_rgb(const CategorySpec& cat) { return hsv_to_rgb(cat.base_hue, 0.8, 0.45); }

std::vector<std::array<double, 2>> polygon(const ContentFactors& f) {
    if (f.shape == ShapeKind::Triangle) return {kTriangle.begin(), kTriangle.end()};
    return {{1.0, kRectMinor}, {-1.0, kRectMinor}, {-1.0, -kRectMinor}, {1.0, -kRectMinor}};
}

// Texture pattern in pixel units; true selects the darker shade.
bool dark_texel(Texture t, double px, double py, std::size_t image_size) {
    const double period = std::max(2.0, static_cast<double>(image_size) / 4.0);
    switch (t) {
        case Texture::Solid: return false;
        case Texture::Stripes: return static_cast<long>(std::floor((px + py) / (period / 2.0))) % 2 != 0;
        case Texture::Dots: {
            const double dx = frac(px / period) - 0.5, dy = frac(py / period) - 0.5;
            return dx * dx + dy * dy <= 0.0625;  // radius period / 4
        }
    }
    return false;
}

}  // namespace

CategorySpec make_category(std::size_t id, std::uint64_t seed, bool seen) {
    const double offset = static_cast<double>(mix_seed(seed) >> 11) * 0x1.0p-53;
    CategorySpec c;
    c.id = id;
    c.base_hue = frac(offset + static_cast<double>(id) * kGolden);
    c.secondary_hue = frac(c.base_hue + 0.5);
    c.texture = static_cast<Texture>(id % 3);
    c.seen = seen;
    return c;
}

std::array<double, 2> half_extent(const ContentFactors& f) {
    const double c = std::cos(f.rotation), s = std::sin(f.rotation);
    if (f.shape == ShapeKind::Ellipse) {
        const double a = f.scale, b = f.scale * kEllipseMinor;
        return {std::sqrt(a * a * c * c + b * b * s * s), std::sqrt(a * a * s * s + b * b * c * c)};
    }
    std::array<double, 2> ext{0.0, 0.0};
    for (const auto& [a, b] : polygon(f)) {
        ext[0] = std::max(ext[0], std::abs(f.scale * (a * c - b * s)));
        ext[1] = std::max(ext[1], std::abs(f.scale * (a * s + b * c)));
    }
    return ext;
}

void check_factors(const ContentFactors& f) {
    if (!(std::isfinite(f.cx) && std::isfinite(f.cy) && std::isfinite(f.rotation) && std::isfinite(f.scale)) ||
        f.scale <= 0.0)
        throw ContractError("content factors must be finite with a positive scale");
    const auto [ex, ey] = half_extent(f);
    if (f.cx - ex < 0.0 || f.cx + ex > 1.0 || f.cy - ey < 0.0 || f.cy + ey > 1.0)
        throw ContractError(fmt::format("{} at ({:.3f}, {:.3f}) with scale {:.3f} extends outside the canvas",
                                        to_string(f.shape), f.cx, f.cy, f.scale));
}

ContentFactors random_factors(Rng& rng) {
    for (;;) {
        ContentFactors f;
        f.shape = static_cast<ShapeKind>(rng.below(3));
        f.scale = rng.uniform(0.22, 0.34);
        f.rotation = rng.uniform(0.0, 2.0 * std::numbers::pi);
        f.cx = rng.uniform(0.3, 0.7);
        f.cy = rng.uniform(0.3, 0.7);
        const auto [ex, ey] = half_extent(f);
        if (f.cx - ex >= 0.0 && f.cx + ex <= 1.0 && f.cy - ey >= 0.0 && f.cy + ey <= 1.0) return f;
    }
}

bool inside(const ContentFactors& f, double u, double v) {
    const double dx = u - f.cx, dy = v - f.cy;
    const double c = std::cos(f.rotation), s = std::sin(f.rotation);
    const double a = (c * dx + s * dy) / f.scale;
    const double b = (-s * dx + c * dy) / f.scale;
    switch (f.shape) {
        case ShapeKind::Ellipse: return a * a + (b / kEllipseMinor) * (b / kEllipseMinor) <= 1.0;
        case ShapeKind::Rectangle: return std::abs(a) <= 1.0 && std::abs(b) <= kRectMinor;
        case ShapeKind::Triangle:
            for (std::size_t i = 0; i < 3; ++i) {
                const auto& p = kTriangle[i];
                const auto& q = kTriangle[(i + 1) % 3];
                if ((q[0] - p[0]) * (b - p[1]) - (q[1] - p[1]) * (a - p[0]) < 0.0) return false;
            }
            return true;
    }
    return false;
}

std::vector<float> coverage(const ContentFactors& f, std::size_t image_size) {
    check_factors(f);
    const double n = static_cast<double>(image_size);
    std::vector<float> out(image_size * image_size);
    for (std::size_t y = 0; y < image_size; ++y)
        for (std::size_t x = 0; x < image_size; ++x) {
            int hits = 0;
            for (double sy : {0.25, 0.75})
                for (double sx : {0.25, 0.75}) hits += inside(f, (x + sx) / n, (y + sy) / n);
            out[y * image_size + x] = static_cast<float>(hits) / 4.0f;
        }
    return out;
}

std::array<double, 3> foreground_rgb(const CategorySpec& cat) { return hsv_to_rgb(cat.base_hue, 0.8, 0.9); }
std::array<double, 3> background_rgb(const CategorySpec& cat) { return hsv_to_rgb(cat.secondary_hue, 0.5, 0.35); }

Image render_sample(const CategorySpec& cat, const ContentFactors& f, std::size_t image_size) {
    require(image_size >= 4, "render_sample: image size must be at least 4");
    check_factors(f);
    const auto fg = foreground_rgb(cat), bg = background_rgb(cat), dk = dark_rgb(cat);
    const double n = static_cast<double>(image_size);
    std::vector<std::uint8_t> rgb(3 * image_size * image_size);
    for (std::size_t y = 0; y < image_size; ++y)
        for (std::size_t x = 0; x < image_size; ++x) {
            std::array<double, 3> acc{0.0, 0.0, 0.0};
            for (double sy : {0.25, 0.75})
                for (double sx : {0.25, 0.75}) {
                    const double px = x + sx, py = y + sy;
                    const auto& col = !inside(f, px / n, py / n)                         ? bg
                                      : dark_texel(cat.texture, px, py, image_size) ? dk
                                                                                     : fg;
                    for (int c = 0; c < 3; ++c) acc[c] += col[c];
                }
            for (int c = 0; c < 3; ++c)
                rgb[(y * image_size + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(acc[c] / 4.0 * 255.0));
        }
    return from_rgb8(rgb, image_size, image_size);
}

std::vector<std::size_t> SynthDataset::seen_ids() const {
    std::vector<std::size_t> out;
    for (const auto& c : categories)
        if (c.seen) out.push_back(c.id);
    return out;
}

std::vector<std::size_t> SynthDataset::unseen_ids() const {
    std::vector<std::size_t> out;
    for (const auto& c : categories)
        if (!c.seen) out.push_back(c.id);
    return out;
}

SynthDataset generate(const SynthSpec& spec) {
    require(spec.n_seen >= 1 && spec.n_unseen >= 1 && spec.samples_per_category >= 1,
            "synthetic dataset: category and sample counts must be at least 1");
    require(spec.image_size >= 4, "synthetic dataset: image size must be at least 4");
    SynthDataset ds;
    ds.spec = spec;
    Rng rng(mix_seed(spec.seed ^ 0xFAC7025));
    const std::size_t total = spec.n_seen + spec.n_unseen;
    for (std::size_t id = 0; id < total; ++id) {
        ds.categories.push_back(make_category(id, spec.seed, id < spec.n_seen));
        ds.data.categories.push_back(fmt::format("c{:03d}", id));
    }
    for (std::size_t id = 0; id < total; ++id)
        for (std::size_t i = 0; i < spec.samples_per_category; ++i) {
            const auto f = random_factors(rng);
            ds.data.images.push_back(render_sample(ds.categories[id], f, spec.image_size));
            ds.data.labels.push_back(id);
            ds.factors.push_back(f);
            ds.paths.push_back(fmt::format("images/c{:03d}/s{:05d}.png", id, i));
        }
    return ds;
}

void write_dataset(const SynthDataset& ds, const fs::path& root, const std::string& config_hash) {
    fs::create_directories(root);
    std::string manifest;
    for (std::size_t i = 0; i < ds.data.size(); ++i) {
        write_png(root / ds.paths[i], ds.data.images[i]);
        const auto& f = ds.factors[i];
        const auto label = ds.data.labels[i];
        json rec{{"path", ds.paths[i]},
                 {"category", label},
                 {"seen", ds.categories[label].seen},
                 {"factors",
                  {{"shape", to_string(f.shape)}, {"cx", f.cx}, {"cy", f.cy}, {"rotation", f.rotation}, {"scale", f.scale}}}};
        if (!config_hash.empty()) rec["config_hash"] = config_hash;
        manifest += rec.dump() + "\n";
    }
    io::write_text(root / "manifest.jsonl", manifest);
}

SynthDataset build_dataset(const SynthSpec& spec, const fs::path& root, const std::string& config_hash) {
    SynthDataset ds = generate(spec);
    write_dataset(ds, root, config_hash);
    return ds;
}

std::vector<ManifestRecord> read_manifest(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw IoError(fmt::format("cannot open manifest {}", file.string()));
    std::vector<ManifestRecord> out;
    std::string line;
    std::size_t offset = 0;
    while (std::getline(in, line)) {
        const std::size_t here = offset;
        offset += line.size() + 1;
        if (line.empty()) continue;
        try {
            const auto j = json::parse(line);
            ManifestRecord r;
            r.path = j.at("path").get<std::string>();
            r.category = j.at("category").get<std::size_t>();
            r.seen = j.at("seen").get<bool>();
            const auto& f = j.at("factors");
            r.factors.shape = parse_shape(f.at("shape").get<std::string>());
            r.factors.cx = f.at("cx").get<double>();
            r.factors.cy = f.at("cy").get<double>();
            r.factors.rotation = f.at("rotation").get<double>();
            r.factors.scale = f.at("scale").get<double>();
            out.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw FormatError(fmt::format("{}: malformed manifest record: {}", file.string(), e.what()), here);
        }
    }
    return out;
}

}  // namespace disco::synth
