#pragma once

#include <vector>

#include "lsplab/tensor.hpp"

namespace lsplab {

/// Structural similarity over sliding 8x8 uniform windows (clamped to the
/// image when smaller), stride 1, averaged over windows and channels.
/// Constants C1 = (0.01*L)^2, C2 = (0.03*L)^2 with L = 1 for the [0,1]
/// pixel domain. Range (-1, 1]; ssim(x, x) == 1 exactly.
double ssim(const ImageTensor& x, const ImageTensor& y);

/// Same value, plus d(ssim)/dy written to grad_y (layout of y).
double ssim_with_gradient(const ImageTensor& x, const ImageTensor& y,
                          std::vector<double>& grad_y);

}  // namespace lsplab
