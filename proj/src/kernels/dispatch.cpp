#include <cstdlib>
#include <cstring>

#include "signsplat/kernels/kernels.hpp"

namespace signsplat::kernels {

const KernelTable* avx2_table_impl();

const KernelTable* avx2_table() {
#if defined(__x86_64__) || defined(__i386__)
  static const bool supported = __builtin_cpu_supports("avx2");
  return supported ? avx2_table_impl() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() {
  static const KernelTable* chosen = [] {
    const char* force = std::getenv("SIGNSPLAT_KERNELS");
    if (force != nullptr && std::strcmp(force, "scalar") == 0) return &scalar_table();
    const KernelTable* vec = avx2_table();
    return vec != nullptr ? vec : &scalar_table();
  }();
  return *chosen;
}

}  // namespace signsplat::kernels
