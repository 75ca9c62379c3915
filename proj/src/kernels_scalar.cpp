// Scalar reference implementations of the dispatched kernels. These define
// the semantics the vector variants are tested against.

#include <pnkit/kernels.hpp>

namespace pnkit::simd {

namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double l2sq_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

void add_acc_scalar(double* acc, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) acc[i] += x[i];
}

void axpy_scalar(double* acc, double alpha, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) acc[i] += alpha * x[i];
}

void mac_outer_scalar(double* acc, const double* x, const double* w,
                      std::size_t in, std::size_t out) {
    for (std::size_t i = 0; i < in; ++i) {
        const double xi = x[i];
        const double* wi = w + i * out;
        for (std::size_t j = 0; j < out; ++j) acc[j] += xi * wi[j];
    }
}

void outer_acc_scalar(double* gw, const double* x, const double* dy,
                      std::size_t in, std::size_t out) {
    for (std::size_t i = 0; i < in; ++i) {
        const double xi = x[i];
        double* gwi = gw + i * out;
        for (std::size_t j = 0; j < out; ++j) gwi[j] += xi * dy[j];
    }
}

void matvec_acc_scalar(double* dx, const double* w, const double* dy,
                       std::size_t in, std::size_t out) {
    for (std::size_t i = 0; i < in; ++i) {
        const double* wi = w + i * out;
        double s = 0.0;
        for (std::size_t j = 0; j < out; ++j) s += wi[j] * dy[j];
        dx[i] += s;
    }
}

void mul_add_scalar(double* y, const double* x, const double* scale,
                    const double* shift, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * scale[i] + shift[i];
}

void sgdm_update_scalar(double* p, double* v, const double* g, double lr,
                        double momentum, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = momentum * v[i] - lr * g[i];
        p[i] += v[i];
    }
}

void conv_mac_scalar(double* acc, const double* x, std::size_t row_stride,
                     std::size_t col_stride, const double* w, std::size_t kh, std::size_t kw,
                     std::size_t in, std::size_t out) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
        for (std::size_t kx = 0; kx < kw; ++kx) {
            const double* xt = x + ky * row_stride + kx * col_stride;
            const double* wt = w + (ky * kw + kx) * in * out;
            for (std::size_t i = 0; i < in; ++i) {
                const double xi = xt[i];
                const double* wi = wt + i * out;
                for (std::size_t j = 0; j < out; ++j) acc[j] += xi * wi[j];
            }
        }
    }
}

void conv_grad_mac_scalar(double* dx, double* gw, const double* x, std::size_t row_stride,
                          std::size_t col_stride, const double* w, const double* dy,
                          std::size_t kh, std::size_t kw, std::size_t in, std::size_t out) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
        for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::size_t tap = (ky * kw + kx) * in * out;
            const double* xt = x + ky * row_stride + kx * col_stride;
            double* dxt = dx + ky * row_stride + kx * col_stride;
            for (std::size_t i = 0; i < in; ++i) {
                const double xi = xt[i];
                double* gwi = gw + tap + i * out;
                const double* wi = w + tap + i * out;
                double s = 0.0;
                for (std::size_t j = 0; j < out; ++j) {
                    gwi[j] += xi * dy[j];
                    s += wi[j] * dy[j];
                }
                dxt[i] += s;
            }
        }
    }
}

}  // namespace

const Kernels& scalar_kernels() {
    static const Kernels table = {
        "scalar",         dot_scalar,     l2sq_scalar,       add_acc_scalar,
        axpy_scalar,      mac_outer_scalar, outer_acc_scalar, matvec_acc_scalar,
        mul_add_scalar,   sgdm_update_scalar, conv_mac_scalar, conv_grad_mac_scalar,
    };
    return table;
}

}  // namespace pnkit::simd
