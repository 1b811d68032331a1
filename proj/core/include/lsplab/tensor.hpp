#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace lsplab {

/// H x W x C image with values in [0, 1], row-major by (h, w, c).
struct ImageTensor {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    ImageTensor() = default;
    ImageTensor(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c) {
        if (h <= 0 || w <= 0 || c <= 0)
            throw std::invalid_argument("ImageTensor: dimensions must be positive");
        data.assign(static_cast<std::size_t>(h) * w * c, fill);
    }

    std::size_t size() const { return data.size(); }

    double& at(int y, int x, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    double at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    bool same_shape(const ImageTensor& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

/// Length-K probability vector. One-hot labels are the degenerate case.
struct SoftLabel {
    std::vector<double> probs;

    SoftLabel() = default;
    explicit SoftLabel(std::vector<double> p);
    static SoftLabel one_hot(int num_classes, int cls);

    int num_classes() const { return static_cast<int>(probs.size()); }
    int argmax() const;
};

/// Checks shape and range invariants; throws std::invalid_argument on violation.
void validate(const ImageTensor& img);
void validate(const SoftLabel& label);

}  // namespace lsplab
