#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "disco/image.hpp"

namespace disco {

/// Images with integer category labels. `categories[label]` names the label.
struct LabeledImages {
    std::vector<std::string> categories;
    std::vector<Image> images;
    std::vector<std::size_t> labels;

    [[nodiscard]] std::size_t size() const { return images.size(); }
    [[nodiscard]] std::size_t num_categories() const { return categories.size(); }
    /// Sample indices grouped by label.
    [[nodiscard]] std::vector<std::vector<std::size_t>> by_label() const;
    void validate() const;
};

/// Keeps only samples whose label is in `keep` and relabels them 0..keep.size()-1
/// in the order given.
LabeledImages select_categories(const LabeledImages& data, const std::vector<std::size_t>& keep);

/// Splits every category deterministically: the first ceil(fraction * n)
/// samples of each category go to the first set, the rest to the second.
std::pair<LabeledImages, LabeledImages> split_per_category(const LabeledImages& data, double fraction);

/// One subdirectory per category (sorted lexicographically), PNG files inside
/// (also sorted). Images are resized to `image_size` when it is non-zero.
/// Undecodable files are collected into a single LoadError.
LabeledImages load_image_folder(const std::filesystem::path& root, std::size_t image_size = 0);

}  // namespace disco
