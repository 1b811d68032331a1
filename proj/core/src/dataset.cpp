#include "lsplab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "lsplab/serialize.hpp"

namespace lsplab {

std::string to_string(SplitTag tag) {
    switch (tag) {
        case SplitTag::benign_train: return "benign_train";
        case SplitTag::poison_source: return "poison_source";
        case SplitTag::test: return "test";
    }
    throw std::logic_error("unknown split tag");
}

SplitTag split_tag_from_string(const std::string& s) {
    if (s == "benign_train") return SplitTag::benign_train;
    if (s == "poison_source") return SplitTag::poison_source;
    if (s == "test") return SplitTag::test;
    throw std::invalid_argument("unknown split tag: " + s);
}

std::pair<LabeledDataset, LabeledDataset> split_for_poisoning(
    const LabeledDataset& dataset, double poison_fraction, RngSeed seed) {
    if (!(poison_fraction >= 0.0 && poison_fraction < 1.0))
        throw std::invalid_argument("split_for_poisoning: fraction must be in [0,1)");
    if (dataset.empty())
        throw std::invalid_argument("split_for_poisoning: empty dataset");

    const int k = dataset.num_classes;
    std::vector<std::vector<std::size_t>> by_class(k);
    for (std::size_t i = 0; i < dataset.size(); ++i)
        by_class[dataset.label(i).argmax()].push_back(i);

    Rng rng(seed);
    for (int c = 0; c < k; ++c) {
        Rng class_rng = rng.split(static_cast<std::uint64_t>(c));
        class_rng.shuffle(by_class[c]);
    }

    // Per-class quota by floor, then hand out the remaining slots to the
    // classes with the largest fractional parts so the global count is
    // exactly floor(N * fraction).
    const std::size_t target =
        static_cast<std::size_t>(std::floor(static_cast<double>(dataset.size()) *
                                            poison_fraction));
    std::vector<std::size_t> quota(k);
    std::vector<std::pair<double, int>> remainders;
    std::size_t assigned = 0;
    for (int c = 0; c < k; ++c) {
        double exact = static_cast<double>(by_class[c].size()) * poison_fraction;
        quota[c] = static_cast<std::size_t>(std::floor(exact));
        assigned += quota[c];
        remainders.push_back({exact - std::floor(exact), c});
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; assigned < target && i < remainders.size(); ++i) {
        int c = remainders[i].second;
        if (quota[c] < by_class[c].size()) {
            ++quota[c];
            ++assigned;
        }
    }

    std::vector<std::size_t> poison_idx;
    std::vector<bool> is_poison(dataset.size(), false);
    for (int c = 0; c < k; ++c)
        for (std::size_t j = 0; j < quota[c]; ++j) is_poison[by_class[c][j]] = true;

    LabeledDataset benign, poison;
    benign.num_classes = poison.num_classes = k;
    benign.split_tag = SplitTag::benign_train;
    poison.split_tag = SplitTag::poison_source;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (is_poison[i])
            poison.samples.push_back(dataset.samples[i]);
        else
            benign.samples.push_back(dataset.samples[i]);
    }
    return {std::move(benign), std::move(poison)};
}

namespace {

double frac(double x) { return x - std::floor(x); }

// Class evidence is deliberately distributed: a whole-image oriented
// grating plus a local shape motif. Flipping the predicted class of such
// images takes a large-area perturbation, while a backdoor trigger stays a
// small local shortcut.
struct Motif {
    int shape;  // 0 disc, 1 square, 2 cross
    double cy, cx;
    double size;
    std::vector<double> intensity;
    double grating_angle, grating_freq, grating_phase;
};

Motif class_motif(int cls, int num_classes, int h, int w, int channels) {
    Motif m;
    m.shape = cls % 3;
    const double angle =
        2.0 * 3.141592653589793 * static_cast<double>(cls) / num_classes + 0.7;
    const double ring = 0.27 * std::min(h, w);
    m.cy = 0.5 * (h - 1) + ring * std::sin(angle);
    m.cx = 0.5 * (w - 1) + ring * std::cos(angle);
    m.size = std::max(1.3, 0.16 * std::min(h, w));
    m.intensity.resize(channels);
    for (int c = 0; c < channels; ++c)
        m.intensity[c] = 0.72 + 0.25 * frac(0.6180339887 * (cls + 1) + 0.27 * c);
    m.grating_angle = 3.141592653589793 * static_cast<double>(cls) / num_classes;
    m.grating_freq = 1.5 + 0.8 * static_cast<double>(cls % 3);
    m.grating_phase = 2.0 * frac(0.4142135624 * (cls + 1));
    return m;
}

double grating(const Motif& m, int y, int x, int c, int h, int w,
               double phase_jitter, double angle_jitter) {
    const double span = static_cast<double>(std::max(h, w));
    const double angle = m.grating_angle + angle_jitter;
    const double u = (std::cos(angle) * x + std::sin(angle) * y) / span;
    return 0.20 * std::sin(2.0 * 3.141592653589793 * m.grating_freq * u +
                           m.grating_phase + phase_jitter + 0.9 * c);
}

bool inside_shape(const Motif& m, double dy, double dx) {
    switch (m.shape) {
        case 0: return dy * dy + dx * dx <= m.size * m.size;
        case 1: return std::abs(dy) <= m.size && std::abs(dx) <= m.size * 0.8;
        default: {
            const double arm = m.size * 1.4, thick = std::max(0.7, m.size * 0.45);
            return (std::abs(dy) <= thick && std::abs(dx) <= arm) ||
                   (std::abs(dx) <= thick && std::abs(dy) <= arm);
        }
    }
}

}  // namespace

LabeledDataset generate_synthetic_dataset(int num_classes, int per_class,
                                          int height, int width, RngSeed seed,
                                          int channels) {
    if (num_classes < 2)
        throw std::invalid_argument("generate_synthetic_dataset: num_classes must be >= 2");
    if (per_class < 1)
        throw std::invalid_argument("generate_synthetic_dataset: per_class must be >= 1");
    if (height <= 0 || width <= 0 || channels <= 0)
        throw std::invalid_argument("generate_synthetic_dataset: dims must be positive");

    LabeledDataset out;
    out.num_classes = num_classes;
    out.split_tag = SplitTag::benign_train;
    out.samples.reserve(static_cast<std::size_t>(num_classes) * per_class);

    Rng root(seed);
    for (int cls = 0; cls < num_classes; ++cls) {
        const Motif motif = class_motif(cls, num_classes, height, width, channels);
        Rng class_rng = root.split(static_cast<std::uint64_t>(cls));
        for (int j = 0; j < per_class; ++j) {
            Rng rng = class_rng.split(static_cast<std::uint64_t>(j));
            const double jitter_y = rng.uniform(-1.0, 1.0);
            const double jitter_x = rng.uniform(-1.0, 1.0);
            const double gain = rng.uniform(-0.06, 0.06);
            const double base = 0.42 + gain;
            // jittering the grating stops the model from template-matching a
            // few pixels; the class has to be read from the whole structure
            const double phase_jitter = rng.uniform(-0.6, 0.6);
            const double angle_jitter = rng.uniform(-0.08, 0.08);

            ImageTensor img(height, width, channels);
            for (int y = 0; y < height; ++y) {
                for (int x = 0; x < width; ++x) {
                    const bool hit = inside_shape(motif, y - motif.cy - jitter_y,
                                                  x - motif.cx - jitter_x);
                    for (int c = 0; c < channels; ++c) {
                        double v = base + grating(motif, y, x, c, height, width,
                                                  phase_jitter, angle_jitter);
                        if (hit) v = motif.intensity[c] + gain;
                        v += rng.uniform(-0.05, 0.05);
                        img.at(y, x, c) = std::clamp(v, 0.0, 1.0);
                    }
                }
            }
            out.samples.push_back({std::move(img), SoftLabel::one_hot(num_classes, cls)});
        }
    }
    return out;
}

void save_dataset(const LabeledDataset& dataset, const std::filesystem::path& dir,
                  std::uint64_t seed) {
    if (dataset.empty()) throw std::invalid_argument("save_dataset: empty dataset");
    std::filesystem::create_directories(dir);

    const std::size_t n = dataset.size();
    const int h = dataset.height(), w = dataset.width(), c = dataset.channels();
    const int k = dataset.num_classes;

    std::vector<double> images;
    images.reserve(n * static_cast<std::size_t>(h) * w * c);
    std::vector<double> labels;
    labels.reserve(n * static_cast<std::size_t>(k));
    for (const auto& [img, label] : dataset.samples) {
        if (img.height != h || img.width != w || img.channels != c)
            throw std::invalid_argument("save_dataset: inconsistent image dims");
        images.insert(images.end(), img.data.begin(), img.data.end());
        labels.insert(labels.end(), label.probs.begin(), label.probs.end());
    }
    io::write_f32(dir / "images.f32", images);
    io::write_f32(dir / "labels.f32", labels);

    nlohmann::json manifest = {
        {"count", n},          {"height", h},
        {"width", w},          {"channels", c},
        {"num_classes", k},    {"split_tag", to_string(dataset.split_tag)},
        {"seed", seed},
    };
    io::write_json(dir / "manifest.json", manifest);
}

LabeledDataset load_dataset(const std::filesystem::path& dir) {
    nlohmann::json manifest = io::read_json(dir / "manifest.json");
    const std::size_t n = manifest.at("count").get<std::size_t>();
    const int h = manifest.at("height").get<int>();
    const int w = manifest.at("width").get<int>();
    const int c = manifest.at("channels").get<int>();
    const int k = manifest.at("num_classes").get<int>();

    std::vector<double> images = io::read_f32(dir / "images.f32");
    std::vector<double> labels = io::read_f32(dir / "labels.f32");
    const std::size_t pixels = static_cast<std::size_t>(h) * w * c;
    if (images.size() != n * pixels)
        throw std::runtime_error("load_dataset: images.f32 size mismatch");
    if (labels.size() != n * static_cast<std::size_t>(k))
        throw std::runtime_error("load_dataset: labels.f32 size mismatch");

    LabeledDataset out;
    out.num_classes = k;
    out.split_tag = split_tag_from_string(manifest.at("split_tag").get<std::string>());
    out.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        ImageTensor img(h, w, c);
        std::copy_n(images.begin() + static_cast<std::ptrdiff_t>(i * pixels), pixels,
                    img.data.begin());
        SoftLabel label;
        label.probs.assign(labels.begin() + static_cast<std::ptrdiff_t>(i * k),
                           labels.begin() + static_cast<std::ptrdiff_t>((i + 1) * k));
        // float32 storage can nudge the sum off 1; renormalize.
        double sum = std::accumulate(label.probs.begin(), label.probs.end(), 0.0);
        if (sum > 0.0)
            for (double& p : label.probs) p /= sum;
        out.samples.push_back({std::move(img), std::move(label)});
    }
    return out;
}

}  // namespace lsplab
