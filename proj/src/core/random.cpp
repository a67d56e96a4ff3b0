#include "vtg/core/random.hpp"

#include <cmath>
#include <numbers>

namespace vtg {
namespace {

constexpr uint32_t kPhiloxM0 = 0xD2511F53;
constexpr uint32_t kPhiloxM1 = 0xCD9E8D57;
constexpr uint32_t kPhiloxW0 = 0x9E3779B9;
constexpr uint32_t kPhiloxW1 = 0xBB67AE85;

inline void mulhilo(uint32_t a, uint32_t b, uint32_t& hi, uint32_t& lo) noexcept {
  const uint64_t product = static_cast<uint64_t>(a) * b;
  hi = static_cast<uint32_t>(product >> 32);
  lo = static_cast<uint32_t>(product);
}

}  // namespace

Philox4x32::Counter Philox4x32::generate(Counter ctr, Key key) noexcept {
  for (int round = 0; round < 10; ++round) {
    uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
    mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return ctr;
}

RandomStream::RandomStream(uint64_t seed, Purpose purpose, uint64_t step, uint32_t lane) noexcept
    : key_{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32)},
      step_lo_(static_cast<uint32_t>(step)),
      tag_((static_cast<uint32_t>(purpose) << 24) ^ (lane & 0x00FFFFFFu) ^ (static_cast<uint32_t>(step >> 32) * 0x9E3779B9u)) {}

void RandomStream::refill() noexcept {
  buffer_ = Philox4x32::generate({static_cast<uint32_t>(block_), static_cast<uint32_t>(block_ >> 32), step_lo_, tag_}, key_);
  ++block_;
  used_ = 0;
}

uint32_t RandomStream::next_u32() noexcept {
  if (used_ == 4) refill();
  return buffer_[static_cast<size_t>(used_++)];
}

uint64_t RandomStream::next_u64() noexcept {
  const uint64_t hi = next_u32();
  return (hi << 32) | next_u32();
}

double RandomStream::uniform() noexcept {
  // 53 random bits, offset by half an ulp so 0 and 1 are never produced.
  const uint64_t bits = next_u64() >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double RandomStream::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

uint64_t RandomStream::below(uint64_t n) noexcept {
  // Lemire-style rejection keeps the result unbiased.
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

}  // namespace vtg
