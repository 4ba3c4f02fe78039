#pragma once

#include <atomic>
#include <cstdint>

namespace unicornn {

// Instrumentation counter for hidden-state storage, in units of doubles.
// Scope: y/z trajectory buffers (stored mode), live reconstruction states and
// adjoint accumulators. Input caches, the precomputed input transform and
// gradient buffers are deliberately outside the meter: the memory contract
// being certified is about hidden-state retention only.
class StateMeter {
 public:
  static StateMeter& instance() {
    static StateMeter m;
    return m;
  }

  void add(std::int64_t n) {
    const std::int64_t now = current_.fetch_add(n) + n;
    std::int64_t prev = peak_.load();
    while (now > prev && !peak_.compare_exchange_weak(prev, now)) {
    }
  }

  void sub(std::int64_t n) { current_.fetch_sub(n); }

  void reset() {
    current_.store(0);
    peak_.store(0);
  }

  std::int64_t current() const { return current_.load(); }
  std::int64_t peak() const { return peak_.load(); }

 private:
  std::atomic<std::int64_t> current_{0};
  std::atomic<std::int64_t> peak_{0};
};

// RAII registration of one hidden-state allocation with the meter.
class StateAlloc {
 public:
  StateAlloc() = default;
  explicit StateAlloc(std::int64_t n) : n_(n) { StateMeter::instance().add(n_); }
  StateAlloc(const StateAlloc&) = delete;
  StateAlloc& operator=(const StateAlloc&) = delete;
  StateAlloc(StateAlloc&& other) noexcept : n_(other.n_) { other.n_ = 0; }
  StateAlloc& operator=(StateAlloc&& other) noexcept {
    release();
    n_ = other.n_;
    other.n_ = 0;
    return *this;
  }
  ~StateAlloc() { release(); }

 private:
  void release() {
    if (n_ != 0) StateMeter::instance().sub(n_);
    n_ = 0;
  }
  std::int64_t n_ = 0;
};

}  // namespace unicornn
