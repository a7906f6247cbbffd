#include "covers/kernels.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace covers::kernels {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using MapRowC = Eigen::Map<const RowMat>;

void check_sizes(const ConvGeometry& g, std::size_t x, std::size_t k, std::size_t y) {
    if (!g.valid()) throw std::invalid_argument("conv2d: kernel larger than padded input");
    const std::size_t nx = static_cast<std::size_t>(g.batch) * g.in_channels * g.height * g.width;
    const std::size_t nk = static_cast<std::size_t>(g.out_channels) * g.in_channels * g.kernel_h * g.kernel_w;
    const std::size_t ny = static_cast<std::size_t>(g.batch) * g.out_channels * g.out_height() * g.out_width();
    if (x != nx || k != nk || y != ny) throw std::invalid_argument("conv2d: buffer sizes do not match geometry");
}

// cols[(c*kh + u)*kw + v, oy*OW + ox] = x[c, oy*s + u - pad, ox*s + v - pad]
void im2col(const ConvGeometry& g, const double* x, double* cols) {
    const int oh = g.out_height();
    const int ow = g.out_width();
    for (int c = 0; c < g.in_channels; ++c)
        for (int u = 0; u < g.kernel_h; ++u)
            for (int v = 0; v < g.kernel_w; ++v) {
                double* row = cols + (static_cast<std::size_t>(c * g.kernel_h + u) * g.kernel_w + v) * oh * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * g.stride + u - g.pad;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * g.stride + v - g.pad;
                        row[oy * ow + ox] = (iy >= 0 && iy < g.height && ix >= 0 && ix < g.width)
                                                ? x[(static_cast<std::size_t>(c) * g.height + iy) * g.width + ix]
                                                : 0.0;
                    }
                }
            }
}

void col2im_add(const ConvGeometry& g, const double* cols, double* dx) {
    const int oh = g.out_height();
    const int ow = g.out_width();
    for (int c = 0; c < g.in_channels; ++c)
        for (int u = 0; u < g.kernel_h; ++u)
            for (int v = 0; v < g.kernel_w; ++v) {
                const double* row = cols + (static_cast<std::size_t>(c * g.kernel_h + u) * g.kernel_w + v) * oh * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * g.stride + u - g.pad;
                    if (iy < 0 || iy >= g.height) continue;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * g.stride + v - g.pad;
                        if (ix < 0 || ix >= g.width) continue;
                        dx[(static_cast<std::size_t>(c) * g.height + iy) * g.width + ix] += row[oy * ow + ox];
                    }
                }
            }
}

}  // namespace

bool ConvGeometry::valid() const {
    return batch >= 0 && in_channels > 0 && out_channels > 0 && kernel_h > 0 && kernel_w > 0 && stride > 0 &&
           pad >= 0 && kernel_h <= height + 2 * pad && kernel_w <= width + 2 * pad;
}

void conv2d_forward_reference(const ConvGeometry& g, std::span<const double> x, std::span<const double> k,
                              std::span<double> y) {
    check_sizes(g, x.size(), k.size(), y.size());
    const int oh = g.out_height();
    const int ow = g.out_width();
    for (int n = 0; n < g.batch; ++n)
        for (int o = 0; o < g.out_channels; ++o)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = 0.0;
                    for (int c = 0; c < g.in_channels; ++c)
                        for (int u = 0; u < g.kernel_h; ++u)
                            for (int v = 0; v < g.kernel_w; ++v) {
                                const int iy = oy * g.stride + u - g.pad;
                                const int ix = ox * g.stride + v - g.pad;
                                if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) continue;
                                acc += x[((static_cast<std::size_t>(n) * g.in_channels + c) * g.height + iy) * g.width +
                                         ix] *
                                       k[((static_cast<std::size_t>(o) * g.in_channels + c) * g.kernel_h + u) *
                                             g.kernel_w +
                                         v];
                            }
                    y[((static_cast<std::size_t>(n) * g.out_channels + o) * oh + oy) * ow + ox] = acc;
                }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> k,
                    std::span<double> y) {
    check_sizes(g, x.size(), k.size(), y.size());
    const int p = g.out_height() * g.out_width();
    const int rows = g.in_channels * g.kernel_h * g.kernel_w;
    const std::size_t x_stride = static_cast<std::size_t>(g.in_channels) * g.height * g.width;
    const std::size_t y_stride = static_cast<std::size_t>(g.out_channels) * p;
    const MapRowC kmat(k.data(), g.out_channels, rows);
#pragma omp parallel
    {
        std::vector<double> cols(static_cast<std::size_t>(rows) * p);
#pragma omp for schedule(static)
        for (int n = 0; n < g.batch; ++n) {
            im2col(g, x.data() + n * x_stride, cols.data());
            MapRow out(y.data() + n * y_stride, g.out_channels, p);
            out.noalias() = kmat * MapRowC(cols.data(), rows, p);
        }
    }
}

void conv2d_backward_reference(const ConvGeometry& g, std::span<const double> x, std::span<const double> k,
                               std::span<const double> dy, std::span<double> dx, std::span<double> dk) {
    check_sizes(g, x.size(), k.size(), dy.size());
    const int oh = g.out_height();
    const int ow = g.out_width();
    for (int n = 0; n < g.batch; ++n)
        for (int o = 0; o < g.out_channels; ++o)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    const double d = dy[((static_cast<std::size_t>(n) * g.out_channels + o) * oh + oy) * ow + ox];
                    for (int c = 0; c < g.in_channels; ++c)
                        for (int u = 0; u < g.kernel_h; ++u)
                            for (int v = 0; v < g.kernel_w; ++v) {
                                const int iy = oy * g.stride + u - g.pad;
                                const int ix = ox * g.stride + v - g.pad;
                                if (iy < 0 || iy >= g.height || ix < 0 || ix >= g.width) continue;
                                const std::size_t xi =
                                    ((static_cast<std::size_t>(n) * g.in_channels + c) * g.height + iy) * g.width + ix;
                                const std::size_t ki =
                                    ((static_cast<std::size_t>(o) * g.in_channels + c) * g.kernel_h + u) * g.kernel_w +
                                    v;
                                if (!dx.empty()) dx[xi] += d * k[ki];
                                if (!dk.empty()) dk[ki] += d * x[xi];
                            }
                }
}

void conv2d_backward(const ConvGeometry& g, std::span<const double> x, std::span<const double> k,
                     std::span<const double> dy, std::span<double> dx, std::span<double> dk) {
    check_sizes(g, x.size(), k.size(), dy.size());
    const int p = g.out_height() * g.out_width();
    const int rows = g.in_channels * g.kernel_h * g.kernel_w;
    const std::size_t x_stride = static_cast<std::size_t>(g.in_channels) * g.height * g.width;
    const std::size_t y_stride = static_cast<std::size_t>(g.out_channels) * p;
    const MapRowC kmat(k.data(), g.out_channels, rows);
    std::vector<double> cols(static_cast<std::size_t>(rows) * p);
    std::vector<double> dcols(static_cast<std::size_t>(rows) * p);
    RowMat dk_acc = RowMat::Zero(g.out_channels, rows);
    // Serial over the batch: the kernel gradient is a reduction across samples.
    for (int n = 0; n < g.batch; ++n) {
        const MapRowC dout(dy.data() + n * y_stride, g.out_channels, p);
        if (!dk.empty()) {
            im2col(g, x.data() + n * x_stride, cols.data());
            dk_acc.noalias() += dout * MapRowC(cols.data(), rows, p).transpose();
        }
        if (!dx.empty()) {
            MapRow(dcols.data(), rows, p).noalias() = kmat.transpose() * dout;
            col2im_add(g, dcols.data(), dx.data() + n * x_stride);
        }
    }
    if (!dk.empty()) {
        MapRow dkm(dk.data(), g.out_channels, rows);
        dkm += dk_acc;
    }
}

void affine_forward_reference(int n, int in, int out, std::span<const double> x, std::span<const double> w,
                              std::span<const double> b, std::span<double> y) {
    for (int r = 0; r < n; ++r)
        for (int o = 0; o < out; ++o) {
            double acc = b.empty() ? 0.0 : b[o];
            for (int i = 0; i < in; ++i) acc += x[static_cast<std::size_t>(r) * in + i] * w[static_cast<std::size_t>(o) * in + i];
            y[static_cast<std::size_t>(r) * out + o] = acc;
        }
}

void affine_forward(int n, int in, int out, std::span<const double> x, std::span<const double> w,
                    std::span<const double> b, std::span<double> y) {
    MapRow ym(y.data(), n, out);
    ym.noalias() = MapRowC(x.data(), n, in) * MapRowC(w.data(), out, in).transpose();
    if (!b.empty()) ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data(), out);
}

void pairwise_distances_reference(int n, int m, int dim, std::span<const double> x, std::span<const double> y,
                                  std::span<double> d) {
    for (int i = 0; i < n; ++i)
        for (int l = 0; l < m; ++l) {
            double s = 0.0;
            for (int c = 0; c < dim; ++c) {
                const double diff = x[static_cast<std::size_t>(i) * dim + c] - y[static_cast<std::size_t>(l) * dim + c];
                s += diff * diff;
            }
            d[static_cast<std::size_t>(i) * m + l] = std::sqrt(s);
        }
}

void pairwise_distances(int n, int m, int dim, std::span<const double> x, std::span<const double> y,
                        std::span<double> d) {
    // Direct differences rather than the |x|^2 + |y|^2 - 2xy expansion, which
    // loses the exact zero for coincident points.
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const double* xi = x.data() + static_cast<std::size_t>(i) * dim;
        for (int l = 0; l < m; ++l) {
            const double* yl = y.data() + static_cast<std::size_t>(l) * dim;
            double s = 0.0;
            for (int c = 0; c < dim; ++c) {
                const double diff = xi[c] - yl[c];
                s += diff * diff;
            }
            d[static_cast<std::size_t>(i) * m + l] = std::sqrt(s);
        }
    }
}

void configure_workers_from_env() {
#ifdef _OPENMP
    if (const char* env = std::getenv("COVERS_WORKERS")) {
        const int n = std::atoi(env);
        if (n > 0) omp_set_num_threads(n);
    }
#endif
}

}  // namespace covers::kernels
