#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "lsplab/rng.hpp"
#include "lsplab/tensor.hpp"

namespace lsplab {

enum class TriggerKind { patch, random_patch, blend, filter };

std::string to_string(TriggerKind kind);
TriggerKind trigger_kind_from_string(const std::string& s);

/// Parameterization of a trigger-injecting function. Patch kinds mix a
/// pattern into the image under a mask; blend mixes a whole-image
/// watermark; filter applies a per-channel affine map.
struct TriggerSpec {
    TriggerKind kind = TriggerKind::patch;
    int height = 0, width = 0, channels = 0;

    // patch / random_patch
    std::vector<double> mask;  // H*W, values in [0,1]
    ImageTensor pattern;
    int side = 0;
    int base_row = 0, base_col = 0;
    double value = 1.0;

    // random_patch only
    int position_jitter = 0;
    double color_jitter = 0.0;
    std::uint64_t seed = 0;

    // blend
    ImageTensor watermark;
    double alpha = 0.0;

    // filter
    std::vector<double> channel_scale;
    std::vector<double> channel_shift;

    double mask_l1() const;
    int mask_support() const;  // entries > 0.5

    /// Ground-truth mask for reattack bookkeeping. For random_patch this is
    /// the union of all jitter-reachable placements.
    std::vector<double> ground_truth_mask() const;
};

/// out = (1 - m) * x + m * pattern, elementwise, mask broadcast across
/// channels, result clamped to [0,1].
ImageTensor apply_patch(const ImageTensor& x, const std::vector<double>& mask,
                        const ImageTensor& pattern);

/// out = (1 - alpha) * x + alpha * watermark, clamped.
ImageTensor apply_blend(const ImageTensor& x, const ImageTensor& watermark,
                        double alpha);

/// out[c] = clamp(scale[c] * x[c] + shift[c], 0, 1).
ImageTensor apply_filter(const ImageTensor& x,
                         const std::vector<double>& channel_scale,
                         const std::vector<double>& channel_shift);

enum class Corner { top_left, top_right, bottom_left, bottom_right };

std::string to_string(Corner corner);
Corner corner_from_string(const std::string& s);

/// Square patch of sqrt(size) x sqrt(size) pixels at a fixed corner with a
/// constant pattern value. size_pixels must be a perfect square.
TriggerSpec make_badnets_spec(int height, int width, int channels,
                              int size_pixels, Corner corner = Corner::bottom_right,
                              double value = 1.0);

/// As make_badnets_spec, but position and color are redrawn per application
/// from a seeded stream within the given jitter ranges. Placements are
/// uniform over the in-bounds box.
TriggerSpec make_random_square_spec(int height, int width, int channels,
                                    int size_pixels, Corner corner,
                                    double value, int position_jitter,
                                    double color_jitter, std::uint64_t seed);

TriggerSpec make_blend_spec(ImageTensor watermark, double alpha);
TriggerSpec make_filter_spec(int height, int width,
                             std::vector<double> channel_scale,
                             std::vector<double> channel_shift);

/// Smooth low-frequency noise watermark for blend triggers.
ImageTensor procedural_watermark(int height, int width, int channels,
                                 std::uint64_t seed);

/// Applies the spec's injecting function. random_patch draws placement and
/// color from `rng` when given, else from a fresh stream seeded by the
/// spec's own seed (so repeated calls without an rng are identical).
ImageTensor apply_trigger(const ImageTensor& x, const TriggerSpec& spec,
                          Rng* rng = nullptr);

nlohmann::json trigger_to_json(const TriggerSpec& spec);
TriggerSpec trigger_from_json(const nlohmann::json& doc);

}  // namespace lsplab
