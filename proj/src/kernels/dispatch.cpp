#include <atomic>
#include <string>

#include "tplreg/error.hpp"
#include "tplreg/kernels.hpp"

namespace tplreg::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* table_for(Backend b) {
  switch (b) {
    case Backend::Scalar: return &scalar_table();
    case Backend::Avx2: return cpu_has_avx2() ? avx2_table() : nullptr;
    case Backend::Neon: return neon_table();
  }
  return nullptr;
}

const KernelTable* detect() {
  if (const KernelTable* t = table_for(Backend::Avx2)) return t;
  if (const KernelTable* t = table_for(Backend::Neon)) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{detect()};
  return table;
}

}  // namespace

bool backend_supported(Backend b) { return table_for(b) != nullptr; }

std::vector<Backend> supported_backends() {
  std::vector<Backend> out;
  for (Backend b : {Backend::Scalar, Backend::Avx2, Backend::Neon}) {
    if (backend_supported(b)) out.push_back(b);
  }
  return out;
}

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

Backend active_backend() { return active().backend; }

void set_backend(Backend b) {
  const KernelTable* t = table_for(b);
  if (!t) {
    throw Error(ErrorCode::InvalidArgument,
                "kernel backend " + std::string(backend_name(b)) + " is not available");
  }
  current().store(t, std::memory_order_relaxed);
}

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
    case Backend::Neon: return "neon";
  }
  return "unknown";
}

}  // namespace tplreg::kernels
