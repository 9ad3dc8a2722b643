#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace tailopt {

// Mixes two 64-bit words into one; used to derive stream ids from (grid, run)
// pairs and role tags.
std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept;
std::uint64_t hash_string(std::string_view s) noexcept;

/// Counter-based generator (Philox4x32-10) keyed by (seed, stream_id).
///
/// The stream is a plain value: copying it forks an identical sequence, which
/// is how correlated draws (the same sample evaluated at two points) are made.
/// Distinct (seed, stream_id) keys give independent sequences; the position in
/// a sequence is the 64-bit block counter.
class RngStream {
 public:
  RngStream() = default;
  RngStream(std::uint64_t seed, std::uint64_t stream_id) noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  /// Child stream for a named role; independent of the parent and of siblings.
  RngStream fork(std::uint64_t role) const noexcept;
  RngStream fork(std::string_view role) const noexcept { return fork(hash_string(role)); }

  std::uint32_t next_u32() noexcept;
  std::uint64_t next_u64() noexcept;
  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform() noexcept;
  double normal() noexcept;
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;

  friend bool operator==(const RngStream&, const RngStream&) = default;

 private:
  void refill() noexcept;

  std::uint64_t seed_ = 0;
  std::uint64_t stream_id_ = 0;
  std::array<std::uint32_t, 2> key_{};
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace tailopt
