#pragma once

#include <cstddef>

namespace pnkit::simd {

/// Table of the arithmetic inner-loop kernels used by the filtering, CNN and
/// clustering code. Two implementations exist: a scalar reference and a
/// vector variant (std::experimental::simd, compiled with AVX2/FMA on x86-64,
/// NEON on aarch64). The vector table is selected at runtime only when the
/// CPU supports the instruction set the variant was built for; equivalence of
/// the two tables is covered by tests/test_kernels.cpp.
struct Kernels {
    const char* name;

    /// sum_i a[i]*b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);

    /// sum_i (a[i]-b[i])^2
    double (*l2sq)(const double* a, const double* b, std::size_t n);

    /// acc[i] += x[i]
    void (*add_acc)(double* acc, const double* x, std::size_t n);

    /// acc[i] += alpha * x[i]
    void (*axpy)(double* acc, double alpha, const double* x, std::size_t n);

    /// Convolution tap: acc[j] += sum_i x[i] * w[i*out + j]
    /// (w is row-major [in][out]; accumulates all output channels at once)
    void (*mac_outer)(double* acc, const double* x, const double* w,
                      std::size_t in, std::size_t out);

    /// Weight-gradient tap: gw[i*out + j] += x[i] * dy[j]
    void (*outer_acc)(double* gw, const double* x, const double* dy,
                      std::size_t in, std::size_t out);

    /// Input-gradient tap: dx[i] += sum_j w[i*out + j] * dy[j]
    void (*matvec_acc)(double* dx, const double* w, const double* dy,
                       std::size_t in, std::size_t out);

    /// y[i] = x[i]*scale[i] + shift[i]  (batch-norm style per-channel affine)
    void (*mul_add)(double* y, const double* x, const double* scale,
                    const double* shift, std::size_t n);

    /// SGDM update: v[i] = momentum*v[i] - lr*g[i]; p[i] += v[i]
    void (*sgdm_update)(double* p, double* v, const double* g, double lr,
                        double momentum, std::size_t n);

    /// Whole-window convolution MAC at one output position whose taps are
    /// all in bounds (x points at the first tap's channel slice):
    ///   acc[j] += sum_{ky,kx,i} x[ky*rs + kx*cs + i] * w[((ky*kw+kx)*in + i)*out + j]
    void (*conv_mac)(double* acc, const double* x, std::size_t row_stride,
                     std::size_t col_stride, const double* w, std::size_t kh,
                     std::size_t kw, std::size_t in, std::size_t out);

    /// Whole-window convolution backward at one output position (all taps
    /// in bounds): accumulates the weight gradient and the input gradient.
    ///   gw[((ky*kw+kx)*in + i)*out + j] += x[..i] * dy[j]
    ///   dx[ky*rs + kx*cs + i] += sum_j w[((ky*kw+kx)*in + i)*out + j] * dy[j]
    void (*conv_grad_mac)(double* dx, double* gw, const double* x,
                          std::size_t row_stride, std::size_t col_stride,
                          const double* w, const double* dy, std::size_t kh,
                          std::size_t kw, std::size_t in, std::size_t out);
};

const Kernels& scalar_kernels();
const Kernels& vector_kernels();

/// True when the vector table can run on this CPU.
bool vector_supported();

/// The runtime-selected table. Defaults to the vector table when supported;
/// the PNKIT_KERNELS environment variable (scalar|vector|auto) overrides.
const Kernels& active_kernels();

}  // namespace pnkit::simd
