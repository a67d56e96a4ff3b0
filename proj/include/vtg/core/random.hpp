#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace vtg {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
struct Philox4x32 {
  using Counter = std::array<uint32_t, 4>;
  using Key = std::array<uint32_t, 2>;

  static Counter generate(Counter counter, Key key) noexcept;
};

// What a stream is used for. The numeric value is part of the counter, so
// reordering this enum changes every generated stream.
enum class Purpose : uint32_t {
  synth = 1,
  init = 2,
  data_order = 3,
  timestep = 4,
  noise = 5,
  cond_drop = 6,
  sampling = 7,
  bank_init = 8,
  test = 9,
};

// Sequential draws from the Philox block sequence keyed by
// (seed, purpose, step, lane). Two streams with different keys never share
// blocks, so consumers can be reordered or parallelised freely.
class RandomStream {
 public:
  RandomStream(uint64_t seed, Purpose purpose, uint64_t step = 0, uint32_t lane = 0) noexcept;

  uint32_t next_u32() noexcept;
  uint64_t next_u64() noexcept;
  // Uniform on the open interval (0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  // Standard normal via Box-Muller.
  double normal() noexcept;
  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) noexcept;

  template <typename T>
  void fill_normal(std::span<T> out) noexcept {
    for (auto& v : out) v = static_cast<T>(normal());
  }
  template <typename T>
  void fill_uniform(std::span<T> out, double lo, double hi) noexcept {
    for (auto& v : out) v = static_cast<T>(lo + (hi - lo) * uniform());
  }

  uint64_t blocks_consumed() const noexcept { return block_; }

 private:
  void refill() noexcept;

  Philox4x32::Key key_{};
  uint32_t step_lo_ = 0;
  uint32_t tag_ = 0;
  uint64_t block_ = 0;
  Philox4x32::Counter buffer_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace vtg
