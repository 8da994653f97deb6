#include "disco/dataset.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "disco/errors.hpp"

namespace disco {

namespace fs = std::filesystem;

std::vector<std::vector<std::size_t>> LabeledImages::by_label() const {
    std::vector<std::vector<std::size_t>> out(categories.size());
    for (std::size_t i = 0; i < labels.size(); ++i) out.at(labels[i]).push_back(i);
    return out;
}

void LabeledImages::validate() const {
    require(images.size() == labels.size(), "dataset: image and label counts differ");
    for (auto l : labels)
        if (l >= categories.size())
            throw ContractError(fmt::format("dataset: label {} out of range [0, {})", l, categories.size()));
}

LabeledImages select_categories(const LabeledImages& data, const std::vector<std::size_t>& keep) {
    LabeledImages out;
    std::vector<std::ptrdiff_t> remap(data.categories.size(), -1);
    for (std::size_t i = 0; i < keep.size(); ++i) {
        require(keep[i] < data.categories.size(), "select_categories: category out of range");
        remap[keep[i]] = static_cast<std::ptrdiff_t>(i);
        out.categories.push_back(data.categories[keep[i]]);
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (remap[data.labels[i]] < 0) continue;
        out.images.push_back(data.images[i]);
        out.labels.push_back(static_cast<std::size_t>(remap[data.labels[i]]));
    }
    return out;
}

std::pair<LabeledImages, LabeledImages> split_per_category(const LabeledImages& data, double fraction) {
    require(fraction >= 0.0 && fraction <= 1.0, "split_per_category: fraction must be in [0, 1]");
    std::pair<LabeledImages, LabeledImages> out;
    out.first.categories = out.second.categories = data.categories;
    for (const auto& members : data.by_label()) {
        const auto cut = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(members.size())));
        for (std::size_t j = 0; j < members.size(); ++j) {
            auto& dst = j < cut ? out.first : out.second;
            dst.images.push_back(data.images[members[j]]);
            dst.labels.push_back(data.labels[members[j]]);
        }
    }
    return out;
}

LabeledImages load_image_folder(const fs::path& root, std::size_t image_size) {
    if (!fs::is_directory(root)) throw IoError(fmt::format("image folder {} does not exist", root.string()));
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    require(!dirs.empty(), fmt::format("image folder {} has no category subdirectories", root.string()));

    LabeledImages data;
    std::vector<std::string> failures;
    for (const auto& dir : dirs) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        if (files.empty())
            throw ContractError(fmt::format("category directory {} contains no images", dir.string()));
        const std::size_t label = data.categories.size();
        data.categories.push_back(dir.filename().string());
        for (const auto& f : files) {
            try {
                Image img = read_png(f);
                if (image_size != 0 && (img.height != image_size || img.width != image_size))
                    img = resize(img, image_size, image_size);
                data.images.push_back(std::move(img));
                data.labels.push_back(label);
            } catch (const IoError& e) {
                failures.emplace_back(e.what());
            }
        }
    }
    if (!failures.empty()) throw LoadError(std::move(failures));
    return data;
}

}  // namespace disco
