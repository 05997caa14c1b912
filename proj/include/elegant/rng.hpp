#pragma once

// Counter-based random streams: every draw is a pure function of
// (master seed, stream index, draw index), so batches are reproducible
// regardless of evaluation order and trajectories can run concurrently.

#include <cmath>
#include <cstdint>

namespace elegant {

namespace detail {

inline uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

struct RngStream {
  uint64_t master = 0;
  uint64_t stream = 0;

  RngStream() = default;
  RngStream(uint64_t master_seed, uint64_t stream_index)
      : master(master_seed), stream(stream_index) {
    key_ = detail::mix64(detail::mix64(master_seed) ^ detail::mix64(stream_index * 0x9e3779b97f4a7c15ULL + 1));
  }

  // Uniform in (0, 1).
  double uniform(uint64_t index) const {
    const uint64_t bits = detail::mix64(key_ + index * 0x9e3779b97f4a7c15ULL);
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal; draw i consumes uniform counters 2i and 2i+1.
  double normal(uint64_t index) const {
    const double u1 = uniform(2 * index);
    const double u2 = uniform(2 * index + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  uint64_t key_ = 0;
};

// Sequential convenience wrapper for places where draw order is naturally
// serial (parameter init, data shuffles).
struct SeqRng {
  explicit SeqRng(uint64_t seed, uint64_t stream = 0) : s_(seed, stream) {}
  double uniform() { return s_.uniform(n_++); }
  double normal() {
    const double u1 = s_.uniform(n_++);
    const double u2 = s_.uniform(n_++);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
  uint64_t index(uint64_t bound) {
    return static_cast<uint64_t>(uniform() * static_cast<double>(bound)) % bound;
  }

 private:
  RngStream s_;
  uint64_t n_ = 0;
};

}  // namespace elegant
