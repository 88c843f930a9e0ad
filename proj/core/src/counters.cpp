#include "corrnet/counters.hpp"

namespace corrnet {

MultiplyCounter& multiply_counter() {
  thread_local MultiplyCounter counter;
  return counter;
}

ScopedMultiplyCount::ScopedMultiplyCount() : saved_(multiply_counter()) {
  multiply_counter() = MultiplyCounter{true, 0};
}

ScopedMultiplyCount::~ScopedMultiplyCount() { multiply_counter() = saved_; }

std::uint64_t ScopedMultiplyCount::count() const { return multiply_counter().multiplies; }

}  // namespace corrnet
