#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <new>

namespace gpc {

/// Process-wide byte counter for buffers owned by library containers.
/// Peak is a high-water mark since the last reset_peak().
class AllocationLedger {
 public:
  static AllocationLedger& instance() noexcept;

  void on_allocate(std::size_t bytes) noexcept;
  void on_deallocate(std::size_t bytes) noexcept;

  std::int64_t current_bytes() const noexcept { return current_.load(std::memory_order_relaxed); }
  std::int64_t peak_bytes() const noexcept { return peak_.load(std::memory_order_relaxed); }
  std::int64_t allocation_count() const noexcept { return allocations_.load(std::memory_order_relaxed); }
  std::int64_t deallocation_count() const noexcept { return deallocations_.load(std::memory_order_relaxed); }

  /// Sets peak to the current value; returns the new baseline.
  std::int64_t reset_peak() noexcept;

 private:
  AllocationLedger() = default;
  std::atomic<std::int64_t> current_{0};
  std::atomic<std::int64_t> peak_{0};
  std::atomic<std::int64_t> allocations_{0};
  std::atomic<std::int64_t> deallocations_{0};
};

/// Peak bytes allocated above the baseline while the scope was alive.
class PeakScope {
 public:
  PeakScope() noexcept : baseline_(AllocationLedger::instance().reset_peak()) {}
  std::int64_t extra_peak() const noexcept {
    return AllocationLedger::instance().peak_bytes() - baseline_;
  }

 private:
  std::int64_t baseline_;
};

template <class T>
struct TrackedAllocator {
  using value_type = T;

  TrackedAllocator() noexcept = default;
  template <class U>
  TrackedAllocator(const TrackedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    const std::size_t bytes = n * sizeof(T);
    T* p = static_cast<T*>(::operator new(bytes, std::align_val_t{64}));
    AllocationLedger::instance().on_allocate(bytes);
    return p;
  }

  void deallocate(T* p, std::size_t n) noexcept {
    AllocationLedger::instance().on_deallocate(n * sizeof(T));
    ::operator delete(p, std::align_val_t{64});
  }

  template <class U>
  bool operator==(const TrackedAllocator<U>&) const noexcept {
    return true;
  }
};

}  // namespace gpc
