#pragma once

#include <cstdint>

namespace corrnet {

/// Per-thread multiply counter for conv, correlation and fc kernels.
///
/// Kernels add the dense product-term count of the work they perform
/// (zero-padded positions included), which is the quantity the analytic
/// cost model reports.
struct MultiplyCounter {
  bool enabled = false;
  std::uint64_t multiplies = 0;
};

MultiplyCounter& multiply_counter();

inline void count_multiplies(std::uint64_t n) {
  auto& c = multiply_counter();
  if (c.enabled) c.multiplies += n;
}

/// Enables counting for its lifetime and restores the previous state after.
class ScopedMultiplyCount {
 public:
  ScopedMultiplyCount();
  ~ScopedMultiplyCount();
  ScopedMultiplyCount(const ScopedMultiplyCount&) = delete;
  ScopedMultiplyCount& operator=(const ScopedMultiplyCount&) = delete;

  [[nodiscard]] std::uint64_t count() const;

 private:
  MultiplyCounter saved_;
};

}  // namespace corrnet
