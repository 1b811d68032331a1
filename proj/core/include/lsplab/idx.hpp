#pragma once

#include <filesystem>

#include "lsplab/dataset.hpp"

namespace lsplab {

/// Reads an MNIST-layout IDX image/label file pair (big-endian headers,
/// magic 0x00000803 for images and 0x00000801 for labels). Pixel bytes are
/// scaled to [0,1]; labels become one-hot. Throws std::runtime_error naming
/// the offending field on malformed input.
LabeledDataset load_idx_dataset(const std::filesystem::path& images_path,
                                const std::filesystem::path& labels_path);

}  // namespace lsplab
