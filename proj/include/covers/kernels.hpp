#pragma once

#include <span>

// Dense numeric kernels used by the autodiff core. Every optimized kernel
// has a plain-loop reference twin; tests check them against each other and
// bench/ compares their speed.

namespace covers::kernels {

struct ConvGeometry {
    int batch = 1;
    int in_channels = 1;
    int height = 1;
    int width = 1;
    int out_channels = 1;
    int kernel_h = 1;
    int kernel_w = 1;
    int stride = 1;
    int pad = 0;

    int out_height() const { return (height + 2 * pad - kernel_h) / stride + 1; }
    int out_width() const { return (width + 2 * pad - kernel_w) / stride + 1; }
    bool valid() const;
};

// Cross-correlation. x: [N, C, H, W], k: [O, C, kh, kw], y: [N, O, H', W'].
void conv2d_forward_reference(const ConvGeometry& geo, std::span<const double> x, std::span<const double> k,
                              std::span<double> y);
void conv2d_forward(const ConvGeometry& geo, std::span<const double> x, std::span<const double> k,
                    std::span<double> y);

// Accumulates (+=) gradients for input and kernel given dy.
void conv2d_backward_reference(const ConvGeometry& geo, std::span<const double> x, std::span<const double> k,
                               std::span<const double> dy, std::span<double> dx, std::span<double> dk);
void conv2d_backward(const ConvGeometry& geo, std::span<const double> x, std::span<const double> k,
                     std::span<const double> dy, std::span<double> dx, std::span<double> dk);

// y[N, out] = x[N, in] * w[out, in]^T + b[out]
void affine_forward(int n, int in, int out, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y);
void affine_forward_reference(int n, int in, int out, std::span<const double> x, std::span<const double> w,
                              std::span<const double> b, std::span<double> y);

// Euclidean distance matrix d[i, l] = ||x_i - y_l||_2 for row-major point sets.
void pairwise_distances_reference(int n, int m, int dim, std::span<const double> x, std::span<const double> y,
                                  std::span<double> d);
void pairwise_distances(int n, int m, int dim, std::span<const double> x, std::span<const double> y,
                        std::span<double> d);

// Sets the OpenMP worker count from COVERS_WORKERS if present.
void configure_workers_from_env();

}  // namespace covers::kernels
