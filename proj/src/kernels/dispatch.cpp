#include <atomic>
#include <cstdlib>
#include <string_view>

#include "magc/kernels/kernels.hpp"

namespace magc::kernels {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
    case Isa::kNeon: return "neon";
  }
  return "unknown";
}

const KernelTable& scalar_table() { return detail::scalar_impl(); }
const KernelTable* avx2_table() { return detail::avx2_impl(); }
const KernelTable* neon_table() { return detail::neon_impl(); }

namespace {

const KernelTable* table_for(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return &scalar_table();
    case Isa::kAvx2: return avx2_table();
    case Isa::kNeon: return neon_table();
  }
  return nullptr;
}

const KernelTable* pick_default() {
  if (const char* env = std::getenv("MAGC_SIMD")) {
    const std::string_view want(env);
    for (Isa isa : {Isa::kScalar, Isa::kAvx2, Isa::kNeon}) {
      if (want == isa_name(isa)) {
        const KernelTable* t = table_for(isa);
        return t ? t : &scalar_table();
      }
    }
  }
  if (const KernelTable* t = avx2_table()) return t;
  if (const KernelTable* t = neon_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{pick_default()};
  return table;
}

}  // namespace

const KernelTable& active() {
  return *current().load(std::memory_order_relaxed);
}

bool select(Isa isa) {
  const KernelTable* t = table_for(isa);
  if (!t) return false;
  current().store(t, std::memory_order_relaxed);
  return true;
}

}  // namespace magc::kernels
