#pragma once

#include <cstddef>
#include <cstdlib>
#include <new>
#include <vector>

namespace specgd::detail {

template <class T, std::size_t Align = 64>
struct AlignedAllocator {
  using value_type = T;

  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U, Align>&) noexcept {}

  template <class U>
  struct rebind {
    using other = AlignedAllocator<U, Align>;
  };

  T* allocate(std::size_t n) {
    const std::size_t bytes = (n * sizeof(T) + Align - 1) / Align * Align;
    void* p = std::aligned_alloc(Align, bytes == 0 ? Align : bytes);
    if (p == nullptr) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) noexcept { std::free(p); }

  friend bool operator==(const AlignedAllocator&, const AlignedAllocator&) noexcept { return true; }
};

using AlignedDoubles = std::vector<double, AlignedAllocator<double>>;

/// Row stride used for feature storage: dimension rounded up to 8 doubles.
constexpr std::size_t padded_dim(std::size_t d) noexcept { return (d + 7) / 8 * 8; }

}  // namespace specgd::detail
