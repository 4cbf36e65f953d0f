#include "ravit/numerics.hpp"

namespace ravit {

namespace {
thread_local MacCounter* active_counter = nullptr;
}

MacCounter::MacCounter() : previous_(active_counter) { active_counter = this; }

MacCounter::~MacCounter() { active_counter = previous_; }

CountingPause::CountingPause() : saved_(active_counter) { active_counter = nullptr; }

CountingPause::~CountingPause() { active_counter = saved_; }

void record_macs(std::uint64_t m, std::uint64_t k, std::uint64_t n) {
  if (active_counter != nullptr) active_counter->add(m * k * n);
}

}  // namespace ravit
