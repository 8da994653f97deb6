#include "disco/config.hpp"

#include <charconv>
#include <cmath>
#include <sstream>
#include <type_traits>
#include <variant>

#include <fmt/format.h>

#include "disco/binary_io.hpp"
#include "disco/errors.hpp"

namespace disco {

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seed is stored through a size_t field pointer");

namespace {

using Member = std::variant<std::size_t RunConfig::*, double RunConfig::*, bool RunConfig::*, std::string RunConfig::*>;

struct Field {
    const char* name;
    Member member;
    bool hashed;
};

const std::vector<Field>& fields() {
    static const std::vector<Field> f{
        {"seed", &RunConfig::seed, true},
        {"output_dir", &RunConfig::output_dir, false},
        {"dataset", &RunConfig::dataset, true},
        {"n_seen", &RunConfig::n_seen, true},
        {"n_unseen", &RunConfig::n_unseen, true},
        {"samples_per_category", &RunConfig::samples_per_category, true},
        {"holdout_fraction", &RunConfig::holdout_fraction, true},
        {"image_size", &RunConfig::image_size, true},
        {"downsamples", &RunConfig::downsamples, true},
        {"content_dim", &RunConfig::content_dim, true},
        {"style_dim", &RunConfig::style_dim, true},
        {"codebook_size", &RunConfig::codebook_size, true},
        {"base_channels", &RunConfig::base_channels, true},
        {"max_channels", &RunConfig::max_channels, true},
        {"res_blocks", &RunConfig::res_blocks, true},
        {"disc_downsamples", &RunConfig::disc_downsamples, true},
        {"lambda_r", &RunConfig::lambda_r, true},
        {"lambda_f", &RunConfig::lambda_f, true},
        {"lambda_vq", &RunConfig::lambda_vq, true},
        {"stage1_lr", &RunConfig::stage1_lr, false},
        {"stage1_batch", &RunConfig::stage1_batch, false},
        {"stage1_steps", &RunConfig::stage1_steps, false},
        {"flip_augment", &RunConfig::flip_augment, false},
        {"reseed_dead_codes", &RunConfig::reseed_dead_codes, false},
        {"r1_penalty", &RunConfig::r1_penalty, false},
        {"r1_gamma", &RunConfig::r1_gamma, false},
        {"variant", &RunConfig::variant, false},
        {"ar_layers", &RunConfig::ar_layers, false},
        {"ar_embed", &RunConfig::ar_embed, false},
        {"ar_heads", &RunConfig::ar_heads, false},
        {"stage2_lr", &RunConfig::stage2_lr, false},
        {"stage2_batch", &RunConfig::stage2_batch, false},
        {"stage2_steps", &RunConfig::stage2_steps, false},
        {"top_k", &RunConfig::top_k, false},
        {"window_rows", &RunConfig::window_rows, false},
        {"classifier_steps", &RunConfig::classifier_steps, false},
        {"fewshot_ways", &RunConfig::fewshot_ways, false},
        {"fewshot_shots", &RunConfig::fewshot_shots, false},
        {"fewshot_augment", &RunConfig::fewshot_augment, false},
        {"fewshot_episodes", &RunConfig::fewshot_episodes, false},
        {"eval_per_category", &RunConfig::eval_per_category, false},
        {"hshot", &RunConfig::hshot, false},
        {"log_every", &RunConfig::log_every, false},
        {"checkpoint_every", &RunConfig::checkpoint_every, false},
    };
    return f;
}

const Field& find(const std::string& key) {
    for (const auto& f : fields())
        if (key == f.name) return f;
    throw ContractError(fmt::format("unknown config key '{}'", key));
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::size_t parse_count(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
        throw ContractError(fmt::format("config key '{}': '{}' is not a non-negative integer", key, v));
    return out;
}

double parse_real(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size() && std::isfinite(d)) return d;
    } catch (const std::exception&) {
    }
    throw ContractError(fmt::format("config key '{}': '{}' is not a finite number", key, v));
}

bool parse_flag(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ContractError(fmt::format("config key '{}': '{}' is not a boolean", key, v));
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& raw) {
    const Field& f = find(key);
    const std::string value = trim(raw);
    std::visit(
        [&](auto member) {
            using V = std::remove_reference_t<decltype(this->*member)>;
            if constexpr (std::is_same_v<V, std::size_t>)
                this->*member = parse_count(key, value);
            else if constexpr (std::is_same_v<V, double>)
                this->*member = parse_real(key, value);
            else if constexpr (std::is_same_v<V, bool>)
                this->*member = parse_flag(key, value);
            else
                this->*member = value;
        },
        f.member);
}

std::string RunConfig::get(const std::string& key) const {
    const Field& f = find(key);
    return std::visit(
        [&](auto member) -> std::string {
            using V = std::remove_cvref_t<decltype(this->*member)>;
            if constexpr (std::is_same_v<V, bool>)
                return this->*member ? "true" : "false";
            else if constexpr (std::is_same_v<V, std::string>)
                return this->*member;
            else
                return fmt::format("{}", this->*member);
        },
        f.member);
}

const std::vector<std::string>& RunConfig::keys() {
    static const std::vector<std::string> k = [] {
        std::vector<std::string> out;
        for (const auto& f : fields()) out.emplace_back(f.name);
        return out;
    }();
    return k;
}

bool RunConfig::is_key(const std::string& key) {
    for (const auto& f : fields())
        if (key == f.name) return true;
    return false;
}

std::string RunConfig::to_text() const {
    std::string out;
    for (const auto& f : fields()) out += fmt::format("{} = {}\n", f.name, get(f.name));
    return out;
}

std::map<std::string, std::string> RunConfig::to_map() const {
    std::map<std::string, std::string> m;
    for (const auto& f : fields()) m[f.name] = get(f.name);
    return m;
}

std::string RunConfig::hash() const {
    std::string canon;
    for (const auto& f : fields())
        if (f.hashed) canon += fmt::format("{}={}\n", f.name, get(f.name));
    return io::hex64(io::fnv1a(canon));
}

stage1::ModelConfig RunConfig::model_config() const {
    stage1::ModelConfig m;
    m.image_size = image_size;
    m.downsamples = downsamples;
    m.content_dim = content_dim;
    m.style_dim = style_dim;
    m.codebook_size = codebook_size;
    m.num_classes = n_seen;
    m.base_channels = base_channels;
    m.max_channels = max_channels;
    m.res_blocks = res_blocks;
    m.disc_downsamples = disc_downsamples;
    return m;
}

stage1::TrainConfig RunConfig::stage1_train_config() const {
    stage1::TrainConfig t;
    t.learning_rate = stage1_lr;
    t.batch_size = stage1_batch;
    t.weights = {lambda_r, lambda_f, lambda_vq};
    t.flip_augment = flip_augment;
    t.reseed_dead_codes = reseed_dead_codes;
    t.r1_penalty = r1_penalty;
    t.r1_gamma = r1_gamma;
    t.seed = seed;
    return t;
}

ar::ArConfig RunConfig::ar_config() const {
    ar::ArConfig a;
    a.codebook_size = codebook_size;
    a.grid_width = a.grid_height = image_size >> downsamples;
    a.style_dim = style_dim;
    a.layers = ar_layers;
    a.embed_dim = ar_embed;
    a.heads = ar_heads;
    a.mode = ar::parse_mode(variant);
    return a;
}

ar::Stage2TrainConfig RunConfig::stage2_train_config() const {
    return {stage2_lr, stage2_batch, seed};
}

synth::SynthSpec RunConfig::synth_spec() const {
    return {seed, n_seen, n_unseen, samples_per_category, image_size};
}

ar::SamplingOptions RunConfig::sampling() const { return {top_k, window_rows}; }

std::vector<std::size_t> RunConfig::hshot_values() const {
    std::vector<std::size_t> out;
    std::stringstream ss(hshot);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_count("hshot", trim(item)));
    require(!out.empty(), "config key 'hshot' must list at least one value");
    return out;
}

void RunConfig::validate() const {
    model_config().validate();
    ar_config().validate();
    require(holdout_fraction >= 0.0 && holdout_fraction < 1.0, "holdout_fraction must be in [0, 1)");
    require(stage1_batch >= 1 && stage2_batch >= 1, "batch sizes must be at least 1");
    require(top_k >= 1 && top_k <= codebook_size, fmt::format("top_k must be in [1, {}]", codebook_size));
    require(log_every >= 1 && checkpoint_every >= 1, "log_every and checkpoint_every must be at least 1");
    require(stage1_lr >= 0.0 && stage2_lr >= 0.0, "learning rates must be non-negative");
    (void)hshot_values();
}

RunConfig parse_config(const std::string& text, RunConfig base) {
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ContractError(fmt::format("config line {}: expected 'key = value', got '{}'", lineno, line));
        const std::string key = trim(line.substr(0, eq));
        if (!RunConfig::is_key(key)) throw ContractError(fmt::format("config line {}: unknown key '{}'", lineno, key));
        base.set(key, line.substr(eq + 1));
    }
    return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
    const auto bytes = io::read_file(path);
    return parse_config(std::string(bytes.begin(), bytes.end()), std::move(base));
}

}  // namespace disco
