// Vector variants of the dispatched kernels via std::experimental::simd.
// This translation unit is compiled with -mavx2 -mfma on x86-64 (NEON is
// baseline on aarch64), so nothing here may run before the dispatcher has
// checked CPU support.

#include <pnkit/kernels.hpp>

#include <experimental/simd>

namespace stdx = std::experimental;

namespace pnkit::simd {

namespace {

using vd = stdx::native_simd<double>;
constexpr std::size_t W = vd::size();

double dot_vec(const double* a, const double* b, std::size_t n) {
    vd acc = 0.0;
    std::size_t i = 0;
    for (; i + W <= n; i += W) {
        vd va(a + i, stdx::element_aligned);
        vd vb(b + i, stdx::element_aligned);
        acc += va * vb;
    }
    double s = stdx::reduce(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

double l2sq_vec(const double* a, const double* b, std::size_t n) {
    vd acc = 0.0;
    std::size_t i = 0;
    for (; i + W <= n; i += W) {
        vd d = vd(a + i, stdx::element_aligned) - vd(b + i, stdx::element_aligned);
        acc += d * d;
    }
    double s = stdx::reduce(acc);
    for (; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

void add_acc_vec(double* acc, const double* x, std::size_t n) {
    std::size_t i = 0;
    for (; i + W <= n; i += W) {
        vd va(acc + i, stdx::element_aligned);
        va += vd(x + i, stdx::element_aligned);
        va.copy_to(acc + i, stdx::element_aligned);
    }
    for (; i < n; ++i) acc[i] += x[i];
}

void axpy_vec(double* acc, double alpha, const double* x, std::size_t n) {
    const vd va = alpha;
    std::size_t i = 0;
    for (; i + W <= n; i += W) {
        vd v(acc + i, stdx::element_aligned);
        v += va * vd(x + i, stdx::element_aligned);
        v.copy_to(acc + i, stdx::element_aligned);
    }
    for (; i < n; ++i) acc[i] += alpha * x[i];
}

void mac_outer_vec(double* acc, const double* x, const double* w,
                   std::size_t in, std::size_t out) {
    for (std::size_t i = 0; i < in; ++i) {
        const vd xi = x[i];
        const double* wi = w + i * out;
        std::size_t j = 0;
        for (; j + W <= out; j += W) {
            vd v(acc + j, stdx::element_aligned);
            v += xi * vd(wi + j, stdx::element_aligned);
            v.copy_to(acc + j, stdx::element_aligned);
        }
        for (; j < out; ++j) acc[j] += x[i] * wi[j];
    }
}

void outer_acc_vec(double* gw, const double* x, const double* dy,
                   std::size_t in, std::size_t out) {
    for (std::size_t i = 0; i < in; ++i) {
        const vd xi = x[i];
        double* gwi = gw + i * out;
        std::size_t j = 0;
        for (; j + W <= out; j += W) {
            vd v(gwi + j, stdx::element_aligned);
            v += xi * vd(dy + j, stdx::element_aligned);
            v.copy_to(gwi + j, stdx::element_aligned);
        }
        for (; j < out; ++j) gwi[j] += x[i] * dy[j];
    }
}

void matvec_acc_vec(double* dx, const double* w, const double* dy,
                    std::size_t in, std::size_t out) {
    for (std::size_t i = 0; i < in; ++i) {
        const double* wi = w + i * out;
        vd acc = 0.0;
        std::size_t j = 0;
        for (; j + W <= out; j += W)
            acc += vd(wi + j, stdx::element_aligned) * vd(dy + j, stdx::element_aligned);
        double s = stdx::reduce(acc);
        for (; j < out; ++j) s += wi[j] * dy[j];
        dx[i] += s;
    }
}

void mul_add_vec(double* y, const double* x, const double* scale,
                 const double* shift, std::size_t n) {
    std::size_t i = 0;
    for (; i + W <= n; i += W) {
        vd v = vd(x + i, stdx::element_aligned) * vd(scale + i, stdx::element_aligned) +
               vd(shift + i, stdx::element_aligned);
        v.copy_to(y + i, stdx::element_aligned);
    }
    for (; i < n; ++i) y[i] = x[i] * scale[i] + shift[i];
}

void sgdm_update_vec(double* p, double* v, const double* g, double lr,
                     double momentum, std::size_t n) {
    const vd vlr = lr;
    const vd vmom = momentum;
    std::size_t i = 0;
    for (; i + W <= n; i += W) {
        vd vel(v + i, stdx::element_aligned);
        vel = vmom * vel - vlr * vd(g + i, stdx::element_aligned);
        vel.copy_to(v + i, stdx::element_aligned);
        vd par(p + i, stdx::element_aligned);
        par += vel;
        par.copy_to(p + i, stdx::element_aligned);
    }
    for (; i < n; ++i) {
        v[i] = momentum * v[i] - lr * g[i];
        p[i] += v[i];
    }
}

// Whole-window MAC: the accumulator tile lives in registers across every
// tap, so memory traffic is one load/store per output tile instead of one
// per tap.
void conv_mac_vec(double* acc, const double* x, std::size_t row_stride, std::size_t col_stride,
                  const double* w, std::size_t kh, std::size_t kw, std::size_t in,
                  std::size_t out) {
    std::size_t j = 0;
    for (; j + W <= out; j += W) {
        vd acc_v(acc + j, stdx::element_aligned);
        for (std::size_t ky = 0; ky < kh; ++ky) {
            for (std::size_t kx = 0; kx < kw; ++kx) {
                const double* xt = x + ky * row_stride + kx * col_stride;
                const double* wt = w + (ky * kw + kx) * in * out + j;
                for (std::size_t i = 0; i < in; ++i)
                    acc_v += vd(xt[i]) * vd(wt + i * out, stdx::element_aligned);
            }
        }
        acc_v.copy_to(acc + j, stdx::element_aligned);
    }
    for (; j < out; ++j) {
        double s = acc[j];
        for (std::size_t ky = 0; ky < kh; ++ky)
            for (std::size_t kx = 0; kx < kw; ++kx) {
                const double* xt = x + ky * row_stride + kx * col_stride;
                const double* wt = w + (ky * kw + kx) * in * out + j;
                for (std::size_t i = 0; i < in; ++i) s += xt[i] * wt[i * out];
            }
        acc[j] = s;
    }
}

void conv_grad_mac_vec(double* dx, double* gw, const double* x, std::size_t row_stride,
                       std::size_t col_stride, const double* w, const double* dy, std::size_t kh,
                       std::size_t kw, std::size_t in, std::size_t out) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
        for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::size_t tap = (ky * kw + kx) * in * out;
            const double* xt = x + ky * row_stride + kx * col_stride;
            double* dxt = dx + ky * row_stride + kx * col_stride;
            for (std::size_t i = 0; i < in; ++i) {
                const vd xi = xt[i];
                double* gwi = gw + tap + i * out;
                const double* wi = w + tap + i * out;
                vd dots = 0.0;
                std::size_t j = 0;
                for (; j + W <= out; j += W) {
                    const vd dyv(dy + j, stdx::element_aligned);
                    vd g(gwi + j, stdx::element_aligned);
                    g += xi * dyv;
                    g.copy_to(gwi + j, stdx::element_aligned);
                    dots += vd(wi + j, stdx::element_aligned) * dyv;
                }
                double s = stdx::reduce(dots);
                for (; j < out; ++j) {
                    gwi[j] += xt[i] * dy[j];
                    s += wi[j] * dy[j];
                }
                dxt[i] += s;
            }
        }
    }
}

}  // namespace

const Kernels& vector_kernels() {
    static const Kernels table = {
        "vector",      dot_vec,      l2sq_vec,       add_acc_vec,
        axpy_vec,      mac_outer_vec, outer_acc_vec, matvec_acc_vec,
        mul_add_vec,   sgdm_update_vec, conv_mac_vec, conv_grad_mac_vec,
    };
    return table;
}

}  // namespace pnkit::simd
