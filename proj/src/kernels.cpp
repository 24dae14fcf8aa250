#include "leaps/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>

namespace leaps::kernels {

bool avx2_supported() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

namespace {

const KernelTable* g_active = nullptr;
const char* g_name = "scalar";

const KernelTable* pick_default() {
    if (const char* env = std::getenv("LEAPS_SIMD")) {
        if (std::strcmp(env, "scalar") == 0) {
            g_name = "scalar";
            return &kScalar;
        }
        if (std::strcmp(env, "avx2") == 0 && avx2_supported()) {
            g_name = "avx2";
            return &kAvx2;
        }
    }
    if (avx2_supported()) {
        g_name = "avx2";
        return &kAvx2;
    }
    g_name = "scalar";
    return &kScalar;
}

}  // namespace

const KernelTable& active() {
    if (!g_active) g_active = pick_default();
    return *g_active;
}

const char* active_name() {
    active();
    return g_name;
}

void force(const char* name) {
    if (std::strcmp(name, "scalar") == 0) {
        g_active = &kScalar;
        g_name = "scalar";
        return;
    }
    if (std::strcmp(name, "avx2") == 0) {
        if (!avx2_supported())
            throw std::runtime_error("avx2 kernels requested but CPU lacks AVX2/FMA");
        g_active = &kAvx2;
        g_name = "avx2";
        return;
    }
    throw std::runtime_error("unknown kernel variant: " + std::string(name));
}

}  // namespace leaps::kernels
