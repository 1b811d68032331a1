#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "lsplab/rng.hpp"
#include "lsplab/tensor.hpp"

namespace lsplab {

enum class SplitTag { benign_train, poison_source, test };

std::string to_string(SplitTag tag);
SplitTag split_tag_from_string(const std::string& s);

struct LabeledDataset {
    std::vector<std::pair<ImageTensor, SoftLabel>> samples;
    int num_classes = 0;
    SplitTag split_tag = SplitTag::benign_train;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }

    const ImageTensor& image(std::size_t i) const { return samples[i].first; }
    const SoftLabel& label(std::size_t i) const { return samples[i].second; }

    int height() const { return samples.empty() ? 0 : samples[0].first.height; }
    int width() const { return samples.empty() ? 0 : samples[0].first.width; }
    int channels() const { return samples.empty() ? 0 : samples[0].first.channels; }
};

/// Stratified split into (benign, poison-source) partitions. The poison
/// side gets floor(|X| * poison_fraction) samples, class proportions kept
/// within one sample per class. The partitions are disjoint and their
/// union is the input.
std::pair<LabeledDataset, LabeledDataset> split_for_poisoning(
    const LabeledDataset& dataset, double poison_fraction, RngSeed seed);

/// Procedural K-class image dataset: each class has a distinct shape /
/// position / intensity motif plus per-sample jitter and noise. Labels are
/// one-hot. Deterministic per seed.
LabeledDataset generate_synthetic_dataset(int num_classes, int per_class,
                                          int height, int width, RngSeed seed,
                                          int channels = 1);

/// Directory layout: images.f32 (N*H*W*C), labels.f32 (N*K), manifest.json.
void save_dataset(const LabeledDataset& dataset, const std::filesystem::path& dir,
                  std::uint64_t seed = 0);
LabeledDataset load_dataset(const std::filesystem::path& dir);

}  // namespace lsplab
