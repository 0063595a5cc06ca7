#include <atomic>
#include <cstdlib>
#include <string>

#include "copic/kernels/kernels.hpp"

namespace copic::kernels {

const KernelTable* avx2_table_impl();

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* pick_default() {
  const char* forced = std::getenv("COPIC_KERNELS");
  if (forced != nullptr && std::string(forced) == "scalar") return &scalar_table();
  if (const KernelTable* t = avx2_table(); t != nullptr) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{pick_default()};
  return slot;
}

}  // namespace

bool avx2_available() { return avx2_table_impl() != nullptr && cpu_has_avx2(); }

const KernelTable* avx2_table() { return avx2_available() ? avx2_table_impl() : nullptr; }

const KernelTable& active() { return *active_slot().load(std::memory_order_acquire); }

void set_active(Isa isa) {
  const KernelTable* t = &scalar_table();
  if (isa == Isa::kAvx2 && avx2_table() != nullptr) t = avx2_table();
  active_slot().store(t, std::memory_order_release);
}

std::string_view isa_name(Isa isa) { return isa == Isa::kAvx2 ? "avx2" : "scalar"; }

}  // namespace copic::kernels
