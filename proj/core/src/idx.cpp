#include "lsplab/idx.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace lsplab {

namespace {

std::uint32_t read_be_u32(std::istream& in, const char* field) {
    std::uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in)
        throw std::runtime_error(std::string("idx: truncated file reading ") + field);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace

LabeledDataset load_idx_dataset(const std::filesystem::path& images_path,
                                const std::filesystem::path& labels_path) {
    std::ifstream img_in(images_path, std::ios::binary);
    if (!img_in)
        throw std::runtime_error("idx: cannot open images file " + images_path.string());
    std::ifstream lab_in(labels_path, std::ios::binary);
    if (!lab_in)
        throw std::runtime_error("idx: cannot open labels file " + labels_path.string());

    const std::uint32_t img_magic = read_be_u32(img_in, "images magic");
    if (img_magic != 0x00000803)
        throw std::runtime_error("idx: bad images magic (expected 0x00000803)");
    const std::uint32_t n_images = read_be_u32(img_in, "images count");
    const std::uint32_t rows = read_be_u32(img_in, "images rows");
    const std::uint32_t cols = read_be_u32(img_in, "images cols");

    const std::uint32_t lab_magic = read_be_u32(lab_in, "labels magic");
    if (lab_magic != 0x00000801)
        throw std::runtime_error("idx: bad labels magic (expected 0x00000801)");
    const std::uint32_t n_labels = read_be_u32(lab_in, "labels count");

    if (n_images != n_labels)
        throw std::runtime_error("idx: count mismatch, " + std::to_string(n_images) +
                                 " images vs " + std::to_string(n_labels) + " labels");
    if (rows == 0 || cols == 0)
        throw std::runtime_error("idx: zero image dimensions");

    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    std::vector<std::uint8_t> img_buf(pixels);
    std::vector<std::uint8_t> lab_buf(n_labels);
    lab_in.read(reinterpret_cast<char*>(lab_buf.data()), n_labels);
    if (!lab_in) throw std::runtime_error("idx: truncated file reading label bytes");

    int max_label = 0;
    for (std::uint8_t l : lab_buf) max_label = std::max(max_label, int(l));
    const int num_classes = max_label + 1;
    if (num_classes < 2) throw std::runtime_error("idx: fewer than two classes in labels");

    LabeledDataset out;
    out.num_classes = num_classes;
    out.split_tag = SplitTag::benign_train;
    out.samples.reserve(n_images);
    for (std::uint32_t i = 0; i < n_images; ++i) {
        img_in.read(reinterpret_cast<char*>(img_buf.data()),
                    static_cast<std::streamsize>(pixels));
        if (!img_in)
            throw std::runtime_error("idx: truncated file reading image " +
                                     std::to_string(i));
        ImageTensor img(static_cast<int>(rows), static_cast<int>(cols), 1);
        for (std::size_t p = 0; p < pixels; ++p)
            img.data[p] = static_cast<double>(img_buf[p]) / 255.0;
        out.samples.push_back(
            {std::move(img), SoftLabel::one_hot(num_classes, lab_buf[i])});
    }
    return out;
}

}  // namespace lsplab
