#pragma once

// Counter-based random stream.
//
// Draws come from Philox4x32-10 (Salmon et al., Random123) keyed by the
// 64-bit seed. The 128-bit counter is split into a 64-bit stream word and a
// 64-bit draw index, so two streams with different stream words can never
// produce overlapping blocks for fewer than 2^64 draws each. Gaussians use
// the Box–Muller transform; both outputs of a pair are consumed in order.

#include <array>
#include <cstdint>
#include <optional>

#include "mars/numkit.hpp"

namespace mars {

/// One Philox4x32-10 block. Exposed for known-answer tests.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key) noexcept;

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : seed_(seed), stream_(stream) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Uniform on (0, 1].
  double uniform_positive() noexcept;
  /// Unbiased integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n) noexcept;
  double gaussian() noexcept;

  /// Child stream for `id`. Depends only on (seed, stream word, id), never on
  /// how many draws the parent has made; distinct ids of one parent map to
  /// distinct stream words.
  RngStream substream(std::uint64_t id) const noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 2> block_{};
  int block_left_ = 0;
  std::optional<double> spare_gaussian_;
};

/// n i.i.d. standard normals.
Vector gauss_draw(RngStream& rng, std::size_t n);

inline RngStream substream(const RngStream& rng, std::uint64_t id) noexcept {
  return rng.substream(id);
}

}  // namespace mars
