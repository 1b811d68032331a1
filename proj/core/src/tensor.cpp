#include "lsplab/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace lsplab {

SoftLabel::SoftLabel(std::vector<double> p) : probs(std::move(p)) {
    validate(*this);
}

SoftLabel SoftLabel::one_hot(int num_classes, int cls) {
    if (num_classes < 2 || cls < 0 || cls >= num_classes)
        throw std::invalid_argument("SoftLabel::one_hot: class out of range");
    SoftLabel l;
    l.probs.assign(num_classes, 0.0);
    l.probs[cls] = 1.0;
    return l;
}

int SoftLabel::argmax() const {
    return static_cast<int>(
        std::max_element(probs.begin(), probs.end()) - probs.begin());
}

void validate(const ImageTensor& img) {
    if (img.height <= 0 || img.width <= 0 || img.channels <= 0)
        throw std::invalid_argument("ImageTensor: dimensions must be positive");
    if (img.data.size() !=
        static_cast<std::size_t>(img.height) * img.width * img.channels)
        throw std::invalid_argument("ImageTensor: data length does not match dims");
    for (double v : img.data)
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("ImageTensor: value outside [0,1]");
}

void validate(const SoftLabel& label) {
    if (label.probs.empty())
        throw std::invalid_argument("SoftLabel: empty probability vector");
    double sum = 0.0;
    for (double p : label.probs) {
        if (p < 0.0) throw std::invalid_argument("SoftLabel: negative entry");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("SoftLabel: probabilities do not sum to 1");
}

}  // namespace lsplab
