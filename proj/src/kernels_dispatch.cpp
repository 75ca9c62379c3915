#include <pnkit/kernels.hpp>

#include <cstdlib>
#include <cstring>

namespace pnkit::simd {

bool vector_supported() {
#if defined(__x86_64__) || defined(_M_X64)
    // kernels_vector.cpp is built with -mavx2 -mfma on this arch.
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    // On other targets the vector TU is built with baseline flags.
    return true;
#endif
}

namespace {

const Kernels& select() {
    const char* pref = std::getenv("PNKIT_KERNELS");
    if (pref != nullptr) {
        if (std::strcmp(pref, "scalar") == 0) return scalar_kernels();
        if (std::strcmp(pref, "vector") == 0 && vector_supported()) return vector_kernels();
    }
    return vector_supported() ? vector_kernels() : scalar_kernels();
}

}  // namespace

const Kernels& active_kernels() {
    static const Kernels& chosen = select();
    return chosen;
}

}  // namespace pnkit::simd
