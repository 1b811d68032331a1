#include "lsplab/trigger.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lsplab/serialize.hpp"

namespace lsplab {

std::string to_string(TriggerKind kind) {
    switch (kind) {
        case TriggerKind::patch: return "patch";
        case TriggerKind::random_patch: return "random_patch";
        case TriggerKind::blend: return "blend";
        case TriggerKind::filter: return "filter";
    }
    throw std::logic_error("unknown trigger kind");
}

TriggerKind trigger_kind_from_string(const std::string& s) {
    if (s == "patch") return TriggerKind::patch;
    if (s == "random_patch") return TriggerKind::random_patch;
    if (s == "blend") return TriggerKind::blend;
    if (s == "filter") return TriggerKind::filter;
    throw std::invalid_argument("unknown trigger kind: " + s);
}

std::string to_string(Corner corner) {
    switch (corner) {
        case Corner::top_left: return "top_left";
        case Corner::top_right: return "top_right";
        case Corner::bottom_left: return "bottom_left";
        case Corner::bottom_right: return "bottom_right";
    }
    throw std::logic_error("unknown corner");
}

Corner corner_from_string(const std::string& s) {
    if (s == "top_left") return Corner::top_left;
    if (s == "top_right") return Corner::top_right;
    if (s == "bottom_left") return Corner::bottom_left;
    if (s == "bottom_right") return Corner::bottom_right;
    throw std::invalid_argument("unknown corner: " + s);
}

double TriggerSpec::mask_l1() const {
    double sum = 0.0;
    for (double m : mask) sum += std::abs(m);
    return sum;
}

int TriggerSpec::mask_support() const {
    int n = 0;
    for (double m : mask)
        if (m > 0.5) ++n;
    return n;
}

std::vector<double> TriggerSpec::ground_truth_mask() const {
    if (kind == TriggerKind::patch) return mask;
    if (kind == TriggerKind::random_patch) {
        std::vector<double> box(static_cast<std::size_t>(height) * width, 0.0);
        const int r_lo = std::max(0, base_row - position_jitter);
        const int r_hi = std::min(height - side, base_row + position_jitter);
        const int c_lo = std::max(0, base_col - position_jitter);
        const int c_hi = std::min(width - side, base_col + position_jitter);
        for (int y = r_lo; y < r_hi + side; ++y)
            for (int x = c_lo; x < c_hi + side; ++x)
                box[static_cast<std::size_t>(y) * width + x] = 1.0;
        return box;
    }
    throw std::logic_error("ground_truth_mask: trigger kind has no mask");
}

ImageTensor apply_patch(const ImageTensor& x, const std::vector<double>& mask,
                        const ImageTensor& pattern) {
    if (!x.same_shape(pattern))
        throw std::invalid_argument("apply_patch: pattern dims do not match image");
    if (mask.size() != static_cast<std::size_t>(x.height) * x.width)
        throw std::invalid_argument("apply_patch: mask dims do not match image");
    ImageTensor out = x;
    std::size_t i = 0;
    for (int y = 0; y < x.height; ++y) {
        for (int xx = 0; xx < x.width; ++xx) {
            const double m = mask[static_cast<std::size_t>(y) * x.width + xx];
            for (int c = 0; c < x.channels; ++c, ++i)
                out.data[i] = std::clamp((1.0 - m) * x.data[i] + m * pattern.data[i],
                                         0.0, 1.0);
        }
    }
    return out;
}

ImageTensor apply_blend(const ImageTensor& x, const ImageTensor& watermark,
                        double alpha) {
    if (!x.same_shape(watermark))
        throw std::invalid_argument("apply_blend: watermark dims do not match image");
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw std::invalid_argument("apply_blend: alpha must be in [0,1]");
    ImageTensor out = x;
    for (std::size_t i = 0; i < x.data.size(); ++i)
        out.data[i] =
            std::clamp((1.0 - alpha) * x.data[i] + alpha * watermark.data[i], 0.0, 1.0);
    return out;
}

ImageTensor apply_filter(const ImageTensor& x,
                         const std::vector<double>& channel_scale,
                         const std::vector<double>& channel_shift) {
    if (channel_scale.size() != static_cast<std::size_t>(x.channels) ||
        channel_shift.size() != static_cast<std::size_t>(x.channels))
        throw std::invalid_argument("apply_filter: coefficient length != channels");
    ImageTensor out = x;
    std::size_t i = 0;
    for (int p = 0; p < x.height * x.width; ++p) {
        (void)p;
        for (int c = 0; c < x.channels; ++c, ++i)
            out.data[i] =
                std::clamp(channel_scale[c] * x.data[i] + channel_shift[c], 0.0, 1.0);
    }
    return out;
}

namespace {

std::pair<int, int> corner_origin(Corner corner, int height, int width, int side) {
    switch (corner) {
        case Corner::top_left: return {0, 0};
        case Corner::top_right: return {0, width - side};
        case Corner::bottom_left: return {height - side, 0};
        case Corner::bottom_right: return {height - side, width - side};
    }
    throw std::logic_error("unknown corner");
}

int square_side(int size_pixels, int height, int width) {
    const int side = static_cast<int>(std::lround(std::sqrt(double(size_pixels))));
    if (side * side != size_pixels)
        throw std::invalid_argument("trigger size must be a perfect square");
    if (side > height || side > width)
        throw std::invalid_argument("trigger square does not fit in the image");
    return side;
}

void stamp_square(std::vector<double>& mask, int width, int row, int col, int side) {
    for (int y = row; y < row + side; ++y)
        for (int x = col; x < col + side; ++x)
            mask[static_cast<std::size_t>(y) * width + x] = 1.0;
}

}  // namespace

TriggerSpec make_badnets_spec(int height, int width, int channels, int size_pixels,
                              Corner corner, double value) {
    const int side = square_side(size_pixels, height, width);
    TriggerSpec spec;
    spec.kind = TriggerKind::patch;
    spec.height = height;
    spec.width = width;
    spec.channels = channels;
    spec.side = side;
    spec.value = value;
    auto [row, col] = corner_origin(corner, height, width, side);
    spec.base_row = row;
    spec.base_col = col;
    spec.mask.assign(static_cast<std::size_t>(height) * width, 0.0);
    stamp_square(spec.mask, width, row, col, side);
    spec.pattern = ImageTensor(height, width, channels, value);
    return spec;
}

TriggerSpec make_random_square_spec(int height, int width, int channels,
                                    int size_pixels, Corner corner, double value,
                                    int position_jitter, double color_jitter,
                                    std::uint64_t seed) {
    TriggerSpec spec = make_badnets_spec(height, width, channels, size_pixels,
                                         corner, value);
    spec.kind = TriggerKind::random_patch;
    spec.position_jitter = position_jitter;
    spec.color_jitter = color_jitter;
    spec.seed = seed;
    return spec;
}

TriggerSpec make_blend_spec(ImageTensor watermark, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw std::invalid_argument("make_blend_spec: alpha must be in [0,1]");
    TriggerSpec spec;
    spec.kind = TriggerKind::blend;
    spec.height = watermark.height;
    spec.width = watermark.width;
    spec.channels = watermark.channels;
    spec.alpha = alpha;
    spec.watermark = std::move(watermark);
    return spec;
}

TriggerSpec make_filter_spec(int height, int width, std::vector<double> channel_scale,
                             std::vector<double> channel_shift) {
    if (channel_scale.size() != channel_shift.size())
        throw std::invalid_argument("make_filter_spec: scale/shift length mismatch");
    TriggerSpec spec;
    spec.kind = TriggerKind::filter;
    spec.height = height;
    spec.width = width;
    spec.channels = static_cast<int>(channel_scale.size());
    spec.channel_scale = std::move(channel_scale);
    spec.channel_shift = std::move(channel_shift);
    return spec;
}

ImageTensor procedural_watermark(int height, int width, int channels,
                                 std::uint64_t seed) {
    // Sum of a few random sinusoid gratings, normalized to [0,1].
    Rng rng(seed);
    ImageTensor out(height, width, channels);
    for (int c = 0; c < channels; ++c) {
        const double fy = rng.uniform(0.5, 2.5), fx = rng.uniform(0.5, 2.5);
        const double phase = rng.uniform(0.0, 6.283185307179586);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                double v = std::sin(2.0 * 3.141592653589793 *
                                        (fy * y / height + fx * x / width) +
                                    phase);
                out.at(y, x, c) = 0.5 + 0.5 * v;
            }
    }
    return out;
}

ImageTensor apply_trigger(const ImageTensor& x, const TriggerSpec& spec, Rng* rng) {
    if (x.height != spec.height || x.width != spec.width ||
        x.channels != spec.channels)
        throw std::invalid_argument("apply_trigger: image dims do not match spec");
    switch (spec.kind) {
        case TriggerKind::patch:
            return apply_patch(x, spec.mask, spec.pattern);
        case TriggerKind::blend:
            return apply_blend(x, spec.watermark, spec.alpha);
        case TriggerKind::filter:
            return apply_filter(x, spec.channel_scale, spec.channel_shift);
        case TriggerKind::random_patch: {
            Rng local(spec.seed);
            Rng& r = rng ? *rng : local;
            // Sample uniformly over the in-bounds placement box so that
            // jitter never pushes the square outside the image.
            const int r_lo = std::max(0, spec.base_row - spec.position_jitter);
            const int r_hi = std::min(spec.height - spec.side,
                                      spec.base_row + spec.position_jitter);
            const int c_lo = std::max(0, spec.base_col - spec.position_jitter);
            const int c_hi = std::min(spec.width - spec.side,
                                      spec.base_col + spec.position_jitter);
            const int row = r.uniform_int(r_lo, r_hi);
            const int col = r.uniform_int(c_lo, c_hi);
            std::vector<double> mask(static_cast<std::size_t>(spec.height) * spec.width,
                                     0.0);
            stamp_square(mask, spec.width, row, col, spec.side);
            ImageTensor pattern(spec.height, spec.width, spec.channels);
            for (int c = 0; c < spec.channels; ++c) {
                const double v = std::clamp(
                    spec.value + r.uniform(-spec.color_jitter, spec.color_jitter), 0.0,
                    1.0);
                for (int p = 0; p < spec.height * spec.width; ++p)
                    pattern.data[static_cast<std::size_t>(p) * spec.channels + c] = v;
            }
            return apply_patch(x, mask, pattern);
        }
    }
    throw std::logic_error("unknown trigger kind");
}

namespace {

nlohmann::json image_to_json(const ImageTensor& img) {
    return {{"height", img.height},
            {"width", img.width},
            {"channels", img.channels},
            {"b64", io::encode_f32_base64(img.data)}};
}

ImageTensor image_from_json(const nlohmann::json& doc) {
    ImageTensor img(doc.at("height").get<int>(), doc.at("width").get<int>(),
                    doc.at("channels").get<int>());
    img.data = io::decode_f32_base64(doc.at("b64").get<std::string>());
    if (img.data.size() != static_cast<std::size_t>(img.height) * img.width * img.channels)
        throw std::runtime_error("trigger image payload size mismatch");
    return img;
}

}  // namespace

nlohmann::json trigger_to_json(const TriggerSpec& spec) {
    nlohmann::json doc = {
        {"kind", to_string(spec.kind)}, {"height", spec.height},
        {"width", spec.width},          {"channels", spec.channels},
    };
    switch (spec.kind) {
        case TriggerKind::random_patch:
            doc["position_jitter"] = spec.position_jitter;
            doc["color_jitter"] = spec.color_jitter;
            doc["seed"] = spec.seed;
            [[fallthrough]];
        case TriggerKind::patch:
            doc["mask_b64"] = io::encode_f32_base64(spec.mask);
            doc["pattern"] = image_to_json(spec.pattern);
            doc["side"] = spec.side;
            doc["base_row"] = spec.base_row;
            doc["base_col"] = spec.base_col;
            doc["value"] = spec.value;
            break;
        case TriggerKind::blend:
            doc["watermark"] = image_to_json(spec.watermark);
            doc["alpha"] = spec.alpha;
            break;
        case TriggerKind::filter:
            doc["channel_scale"] = spec.channel_scale;
            doc["channel_shift"] = spec.channel_shift;
            break;
    }
    return doc;
}

TriggerSpec trigger_from_json(const nlohmann::json& doc) {
    TriggerSpec spec;
    spec.kind = trigger_kind_from_string(doc.at("kind").get<std::string>());
    spec.height = doc.at("height").get<int>();
    spec.width = doc.at("width").get<int>();
    spec.channels = doc.at("channels").get<int>();
    switch (spec.kind) {
        case TriggerKind::random_patch:
            spec.position_jitter = doc.at("position_jitter").get<int>();
            spec.color_jitter = doc.at("color_jitter").get<double>();
            spec.seed = doc.at("seed").get<std::uint64_t>();
            [[fallthrough]];
        case TriggerKind::patch:
            spec.mask = io::decode_f32_base64(doc.at("mask_b64").get<std::string>());
            spec.pattern = image_from_json(doc.at("pattern"));
            spec.side = doc.at("side").get<int>();
            spec.base_row = doc.at("base_row").get<int>();
            spec.base_col = doc.at("base_col").get<int>();
            spec.value = doc.at("value").get<double>();
            break;
        case TriggerKind::blend:
            spec.watermark = image_from_json(doc.at("watermark"));
            spec.alpha = doc.at("alpha").get<double>();
            break;
        case TriggerKind::filter:
            spec.channel_scale = doc.at("channel_scale").get<std::vector<double>>();
            spec.channel_shift = doc.at("channel_shift").get<std::vector<double>>();
            break;
    }
    return spec;
}

}  // namespace lsplab
