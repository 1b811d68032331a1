#include "lsplab/ssim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lsplab {

namespace {

constexpr double kC1 = 0.01 * 0.01;  // (0.01 * L)^2, L = 1
constexpr double kC2 = 0.03 * 0.03;

struct WindowStats {
    double mu_x, mu_y, var_x, var_y, cov;
};

}  // namespace

static double ssim_impl(const ImageTensor& x, const ImageTensor& y,
                        std::vector<double>* grad_y) {
    if (!x.same_shape(y))
        throw std::invalid_argument("ssim: image dims do not match");

    const int H = x.height, W = x.width, C = x.channels;
    const int wh = std::min(8, H), ww = std::min(8, W);
    const int ny = H - wh + 1, nx = W - ww + 1;
    const double inv_n = 1.0 / (static_cast<double>(wh) * ww);
    // Dividing by the window count at the end keeps ssim(x, x) == 1 exact.
    const double count = static_cast<double>(ny) * nx * C;

    if (grad_y) grad_y->assign(y.data.size(), 0.0);

    double total = 0.0;
    for (int c = 0; c < C; ++c) {
        for (int y0 = 0; y0 < ny; ++y0) {
            for (int x0 = 0; x0 < nx; ++x0) {
                WindowStats s{};
                double sum_x = 0, sum_y = 0, sum_xx = 0, sum_yy = 0, sum_xy = 0;
                for (int dy = 0; dy < wh; ++dy)
                    for (int dx = 0; dx < ww; ++dx) {
                        const double xv = x.at(y0 + dy, x0 + dx, c);
                        const double yv = y.at(y0 + dy, x0 + dx, c);
                        sum_x += xv;
                        sum_y += yv;
                        sum_xx += xv * xv;
                        sum_yy += yv * yv;
                        sum_xy += xv * yv;
                    }
                s.mu_x = sum_x * inv_n;
                s.mu_y = sum_y * inv_n;
                s.var_x = sum_xx * inv_n - s.mu_x * s.mu_x;
                s.var_y = sum_yy * inv_n - s.mu_y * s.mu_y;
                s.cov = sum_xy * inv_n - s.mu_x * s.mu_y;

                const double a1 = 2.0 * s.mu_x * s.mu_y + kC1;
                const double a2 = 2.0 * s.cov + kC2;
                const double b1 = s.mu_x * s.mu_x + s.mu_y * s.mu_y + kC1;
                const double b2 = s.var_x + s.var_y + kC2;
                const double value = (a1 * a2) / (b1 * b2);
                total += value;

                if (grad_y) {
                    // d(value)/dy_i through mu_y, var_y and cov; the x-side
                    // statistics are constants.
                    const double common = 2.0 * inv_n / (b1 * b2);
                    for (int dy = 0; dy < wh; ++dy)
                        for (int dx = 0; dx < ww; ++dx) {
                            const double xv = x.at(y0 + dy, x0 + dx, c);
                            const double yv = y.at(y0 + dy, x0 + dx, c);
                            const double d =
                                common * (s.mu_x * a2 + a1 * (xv - s.mu_x) -
                                          value * (s.mu_y * b2 + b1 * (yv - s.mu_y)));
                            (*grad_y)[(static_cast<std::size_t>(y0 + dy) * W +
                                       (x0 + dx)) *
                                          C +
                                      c] += d / count;
                        }
                }
            }
        }
    }
    return total / count;
}

double ssim(const ImageTensor& x, const ImageTensor& y) {
    return ssim_impl(x, y, nullptr);
}

double ssim_with_gradient(const ImageTensor& x, const ImageTensor& y,
                          std::vector<double>& grad_y) {
    return ssim_impl(x, y, &grad_y);
}

}  // namespace lsplab
