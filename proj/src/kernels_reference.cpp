#include "csg0/kernels.hpp"

#include <cstddef>

namespace csg0::kernels::reference {

namespace {

// Signed offset into the unpadded input; out of range means a zero tap.
inline bool tap(std::size_t out, std::size_t k, std::size_t pad, std::size_t extent,
                std::size_t& in) {
    const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(out + k) - static_cast<std::ptrdiff_t>(pad);
    if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(extent)) {
        return false;
    }
    in = static_cast<std::size_t>(pos);
    return true;
}

} // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y) {
    const std::size_t oh = g.out_height();
    const std::size_t ow = g.out_width();
    const std::size_t k = g.kernel;
    for (std::size_t n = 0; n < g.batch; ++n) {
        for (std::size_t co = 0; co < g.out_channels; ++co) {
            for (std::size_t i = 0; i < oh; ++i) {
                for (std::size_t j = 0; j < ow; ++j) {
                    double acc = b.empty() ? 0.0 : b[co];
                    for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
                        for (std::size_t p = 0; p < k; ++p) {
                            std::size_t ii = 0;
                            if (!tap(i, p, g.padding, g.height, ii)) {
                                continue;
                            }
                            for (std::size_t q = 0; q < k; ++q) {
                                std::size_t jj = 0;
                                if (!tap(j, q, g.padding, g.width, jj)) {
                                    continue;
                                }
                                acc += w[((co * g.in_channels + ci) * k + p) * k + q] *
                                       x[((n * g.in_channels + ci) * g.height + ii) * g.width + jj];
                            }
                        }
                    }
                    y[((n * g.out_channels + co) * oh + i) * ow + j] = acc;
                }
            }
        }
    }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> w,
                           std::span<const double> dy, std::span<double> dx) {
    const std::size_t oh = g.out_height();
    const std::size_t ow = g.out_width();
    const std::size_t k = g.kernel;
    for (std::size_t n = 0; n < g.batch; ++n) {
        for (std::size_t co = 0; co < g.out_channels; ++co) {
            for (std::size_t i = 0; i < oh; ++i) {
                for (std::size_t j = 0; j < ow; ++j) {
                    const double gy = dy[((n * g.out_channels + co) * oh + i) * ow + j];
                    for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
                        for (std::size_t p = 0; p < k; ++p) {
                            std::size_t ii = 0;
                            if (!tap(i, p, g.padding, g.height, ii)) {
                                continue;
                            }
                            for (std::size_t q = 0; q < k; ++q) {
                                std::size_t jj = 0;
                                if (!tap(j, q, g.padding, g.width, jj)) {
                                    continue;
                                }
                                dx[((n * g.in_channels + ci) * g.height + ii) * g.width + jj] +=
                                    gy * w[((co * g.in_channels + ci) * k + p) * k + q];
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_params(const ConvGeometry& g, std::span<const double> x,
                            std::span<const double> dy, std::span<double> dw,
                            std::span<double> db) {
    const std::size_t oh = g.out_height();
    const std::size_t ow = g.out_width();
    const std::size_t k = g.kernel;
    for (std::size_t n = 0; n < g.batch; ++n) {
        for (std::size_t co = 0; co < g.out_channels; ++co) {
            for (std::size_t i = 0; i < oh; ++i) {
                for (std::size_t j = 0; j < ow; ++j) {
                    const double gy = dy[((n * g.out_channels + co) * oh + i) * ow + j];
                    if (!db.empty()) {
                        db[co] += gy;
                    }
                    if (dw.empty()) {
                        continue;
                    }
                    for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
                        for (std::size_t p = 0; p < k; ++p) {
                            std::size_t ii = 0;
                            if (!tap(i, p, g.padding, g.height, ii)) {
                                continue;
                            }
                            for (std::size_t q = 0; q < k; ++q) {
                                std::size_t jj = 0;
                                if (!tap(j, q, g.padding, g.width, jj)) {
                                    continue;
                                }
                                dw[((co * g.in_channels + ci) * k + p) * k + q] +=
                                    gy * x[((n * g.in_channels + ci) * g.height + ii) * g.width + jj];
                            }
                        }
                    }
                }
            }
        }
    }
}

} // namespace csg0::kernels::reference
