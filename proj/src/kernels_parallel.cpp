#include "csg0/kernels.hpp"

#include <algorithm>
#include <cstddef>
#include <vector>

namespace csg0::kernels::parallel {

namespace {

constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kColBlock = 256;

void im2col(const ConvGeometry& g, const double* x, double* cols) {
    const std::size_t oh = g.out_height();
    const std::size_t ow = g.out_width();
    const std::size_t k = g.kernel;
    const auto rows = static_cast<std::ptrdiff_t>(g.in_channels * k * k);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < rows; ++r) {
        const std::size_t ci = static_cast<std::size_t>(r) / (k * k);
        const std::size_t p = (static_cast<std::size_t>(r) / k) % k;
        const std::size_t q = static_cast<std::size_t>(r) % k;
        double* out = cols + static_cast<std::size_t>(r) * oh * ow;
        const double* plane = x + ci * g.height * g.width;
        for (std::size_t i = 0; i < oh; ++i) {
            const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i + p) - static_cast<std::ptrdiff_t>(g.padding);
            double* row = out + i * ow;
            if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(g.height)) {
                std::fill(row, row + ow, 0.0);
                continue;
            }
            const double* src = plane + static_cast<std::size_t>(ii) * g.width;
            for (std::size_t j = 0; j < ow; ++j) {
                const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j + q) - static_cast<std::ptrdiff_t>(g.padding);
                row[j] = (jj < 0 || jj >= static_cast<std::ptrdiff_t>(g.width)) ? 0.0 : src[jj];
            }
        }
    }
}

// dx += col2im(cols); one thread per input channel keeps writes disjoint.
void col2im_accumulate(const ConvGeometry& g, const double* cols, double* dx) {
    const std::size_t oh = g.out_height();
    const std::size_t ow = g.out_width();
    const std::size_t k = g.kernel;
    const auto channels = static_cast<std::ptrdiff_t>(g.in_channels);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < channels; ++c) {
        double* plane = dx + static_cast<std::size_t>(c) * g.height * g.width;
        for (std::size_t p = 0; p < k; ++p) {
            for (std::size_t q = 0; q < k; ++q) {
                const double* src = cols + ((static_cast<std::size_t>(c) * k + p) * k + q) * oh * ow;
                for (std::size_t i = 0; i < oh; ++i) {
                    const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i + p) - static_cast<std::ptrdiff_t>(g.padding);
                    if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(g.height)) {
                        continue;
                    }
                    double* row = plane + static_cast<std::size_t>(ii) * g.width;
                    for (std::size_t j = 0; j < ow; ++j) {
                        const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j + q) - static_cast<std::ptrdiff_t>(g.padding);
                        if (jj >= 0 && jj < static_cast<std::ptrdiff_t>(g.width)) {
                            row[jj] += src[i * ow + j];
                        }
                    }
                }
            }
        }
    }
}

void transpose(std::size_t rows, std::size_t cols, const double* in, double* out) {
    const auto n = static_cast<std::ptrdiff_t>(cols);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < n; ++c) {
        for (std::size_t r = 0; r < rows; ++r) {
            out[static_cast<std::size_t>(c) * rows + r] = in[r * cols + static_cast<std::size_t>(c)];
        }
    }
}

bool is_pointwise(const ConvGeometry& g) { return g.kernel == 1 && g.padding == 0; }

} // namespace

void gemm_accumulate(std::size_t m, std::size_t n, std::size_t k, const double* a,
                     const double* b, double* c) {
    const auto blocks = static_cast<std::ptrdiff_t>((m + kRowBlock - 1) / kRowBlock);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
        const std::size_t i0 = static_cast<std::size_t>(blk) * kRowBlock;
        const std::size_t rows = std::min(kRowBlock, m - i0);
        for (std::size_t j0 = 0; j0 < n; j0 += kColBlock) {
            const std::size_t width = std::min(kColBlock, n - j0);
            if (rows == kRowBlock) {
                double* __restrict c0 = c + (i0 + 0) * n + j0;
                double* __restrict c1 = c + (i0 + 1) * n + j0;
                double* __restrict c2 = c + (i0 + 2) * n + j0;
                double* __restrict c3 = c + (i0 + 3) * n + j0;
                for (std::size_t p = 0; p < k; ++p) {
                    const double a0 = a[(i0 + 0) * k + p];
                    const double a1 = a[(i0 + 1) * k + p];
                    const double a2 = a[(i0 + 2) * k + p];
                    const double a3 = a[(i0 + 3) * k + p];
                    const double* __restrict brow = b + p * n + j0;
                    for (std::size_t j = 0; j < width; ++j) {
                        const double bv = brow[j];
                        c0[j] += a0 * bv;
                        c1[j] += a1 * bv;
                        c2[j] += a2 * bv;
                        c3[j] += a3 * bv;
                    }
                }
            } else {
                for (std::size_t r = 0; r < rows; ++r) {
                    double* __restrict crow = c + (i0 + r) * n + j0;
                    for (std::size_t p = 0; p < k; ++p) {
                        const double av = a[(i0 + r) * k + p];
                        const double* __restrict brow = b + p * n + j0;
                        for (std::size_t j = 0; j < width; ++j) {
                            crow[j] += av * brow[j];
                        }
                    }
                }
            }
        }
    }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y) {
    const std::size_t plane = g.out_height() * g.out_width();
    const std::size_t patch = g.in_channels * g.kernel * g.kernel;
    std::vector<double> cols(is_pointwise(g) ? 0 : patch * plane);
    for (std::size_t n = 0; n < g.batch; ++n) {
        const double* xn = x.data() + n * g.in_channels * g.height * g.width;
        double* yn = y.data() + n * g.out_channels * plane;
        for (std::size_t co = 0; co < g.out_channels; ++co) {
            std::fill(yn + co * plane, yn + (co + 1) * plane, b.empty() ? 0.0 : b[co]);
        }
        const double* rhs = xn;
        if (!is_pointwise(g)) {
            im2col(g, xn, cols.data());
            rhs = cols.data();
        }
        gemm_accumulate(g.out_channels, plane, patch, w.data(), rhs, yn);
    }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> w,
                           std::span<const double> dy, std::span<double> dx) {
    const std::size_t plane = g.out_height() * g.out_width();
    const std::size_t patch = g.in_channels * g.kernel * g.kernel;
    std::vector<double> wt(patch * g.out_channels);
    transpose(g.out_channels, patch, w.data(), wt.data());
    std::vector<double> cols(is_pointwise(g) ? 0 : patch * plane);
    for (std::size_t n = 0; n < g.batch; ++n) {
        const double* dyn = dy.data() + n * g.out_channels * plane;
        double* dxn = dx.data() + n * g.in_channels * g.height * g.width;
        if (is_pointwise(g)) {
            gemm_accumulate(patch, plane, g.out_channels, wt.data(), dyn, dxn);
            continue;
        }
        std::fill(cols.begin(), cols.end(), 0.0);
        gemm_accumulate(patch, plane, g.out_channels, wt.data(), dyn, cols.data());
        col2im_accumulate(g, cols.data(), dxn);
    }
}

void conv2d_backward_params(const ConvGeometry& g, std::span<const double> x,
                            std::span<const double> dy, std::span<double> dw,
                            std::span<double> db) {
    const std::size_t plane = g.out_height() * g.out_width();
    const std::size_t patch = g.in_channels * g.kernel * g.kernel;
    std::vector<double> cols;
    std::vector<double> cols_t;
    if (!dw.empty()) {
        cols.resize(is_pointwise(g) ? 0 : patch * plane);
        cols_t.resize(patch * plane);
    }
    for (std::size_t n = 0; n < g.batch; ++n) {
        const double* dyn = dy.data() + n * g.out_channels * plane;
        if (!db.empty()) {
            for (std::size_t co = 0; co < g.out_channels; ++co) {
                double acc = 0.0;
                for (std::size_t j = 0; j < plane; ++j) {
                    acc += dyn[co * plane + j];
                }
                db[co] += acc;
            }
        }
        if (dw.empty()) {
            continue;
        }
        const double* xn = x.data() + n * g.in_channels * g.height * g.width;
        const double* lhs = xn;
        if (!is_pointwise(g)) {
            im2col(g, xn, cols.data());
            lhs = cols.data();
        }
        transpose(patch, plane, lhs, cols_t.data());
        gemm_accumulate(g.out_channels, patch, plane, dyn, cols_t.data(), dw.data());
    }
}

} // namespace csg0::kernels::parallel
