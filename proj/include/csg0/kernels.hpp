#pragma once

#include <cstddef>
#include <span>

// Convolution kernels in two flavours:
//   reference::  direct nested loops, single-threaded, kept as the test oracle
//   parallel::   im2col + blocked GEMM, OpenMP over output rows
// Each output element of the parallel kernels is reduced by exactly one
// thread in a fixed order, so results do not depend on the thread count.
namespace csg0::kernels {

struct ConvGeometry {
    std::size_t batch = 1;
    std::size_t in_channels = 1;
    std::size_t height = 1;
    std::size_t width = 1;
    std::size_t out_channels = 1;
    std::size_t kernel = 1;
    std::size_t padding = 0;

    std::size_t out_height() const { return height + 2 * padding - kernel + 1; }
    std::size_t out_width() const { return width + 2 * padding - kernel + 1; }
    std::size_t input_size() const { return batch * in_channels * height * width; }
    std::size_t output_size() const { return batch * out_channels * out_height() * out_width(); }
    std::size_t weight_size() const { return out_channels * in_channels * kernel * kernel; }
};

namespace reference {

// y = conv(x, w) + b; b may be empty.
void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y);
// dx += conv_transpose(dy, w)
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> w,
                           std::span<const double> dy, std::span<double> dx);
// dw += corr(x, dy); db += sum(dy). Either output may be empty to skip it.
void conv2d_backward_params(const ConvGeometry& g, std::span<const double> x,
                            std::span<const double> dy, std::span<double> dw,
                            std::span<double> db);

} // namespace reference

namespace parallel {

void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> w,
                           std::span<const double> dy, std::span<double> dx);
void conv2d_backward_params(const ConvGeometry& g, std::span<const double> x,
                            std::span<const double> dy, std::span<double> dw,
                            std::span<double> db);

// C[M,N] += A[M,K] * B[K,N], all row-major and densely packed.
void gemm_accumulate(std::size_t m, std::size_t n, std::size_t k, const double* a,
                     const double* b, double* c);

} // namespace parallel

} // namespace csg0::kernels
