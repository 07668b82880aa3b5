#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>

namespace pic {

/// Identifies a cell by refinement level and an index unique within that level.
///
/// The index packs the coarse cell id and the quadrant path inside its tree:
/// `index = coarse_id * 4^level + interleave(ix, iy)` where (ix, iy) are the
/// integer coordinates of the cell inside its coarse cell at `level`. Keys
/// compare lexicographically by (level, index).
struct CellKey {
  std::uint32_t level = 0;
  std::uint64_t index = 0;

  friend constexpr auto operator<=>(const CellKey&, const CellKey&) = default;
};

struct CellKeyHash {
  std::size_t operator()(const CellKey& k) const noexcept {
    std::uint64_t h = k.index * 0x9E3779B97F4A7C15ull;
    h ^= (static_cast<std::uint64_t>(k.level) + 0x632BE59BD9B4E019ull) + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h ^ (h >> 31));
  }
};

inline constexpr std::uint32_t kMaxLevel = 20;

/// Spreads the low 32 bits of v into the even bit positions.
constexpr std::uint64_t spread_bits(std::uint64_t v) {
  v &= 0xFFFFFFFFull;
  v = (v | (v << 16)) & 0x0000FFFF0000FFFFull;
  v = (v | (v << 8)) & 0x00FF00FF00FF00FFull;
  v = (v | (v << 4)) & 0x0F0F0F0F0F0F0F0Full;
  v = (v | (v << 2)) & 0x3333333333333333ull;
  v = (v | (v << 1)) & 0x5555555555555555ull;
  return v;
}

constexpr std::uint64_t compact_bits(std::uint64_t v) {
  v &= 0x5555555555555555ull;
  v = (v | (v >> 1)) & 0x3333333333333333ull;
  v = (v | (v >> 2)) & 0x0F0F0F0F0F0F0F0Full;
  v = (v | (v >> 4)) & 0x00FF00FF00FF00FFull;
  v = (v | (v >> 8)) & 0x0000FFFF0000FFFFull;
  v = (v | (v >> 16)) & 0x00000000FFFFFFFFull;
  return v;
}

/// Z-order code with x in the even bits: (0,0),(1,0),(0,1),(1,1) -> 0,1,2,3.
constexpr std::uint64_t morton_encode(std::uint64_t x, std::uint64_t y) {
  return spread_bits(x) | (spread_bits(y) << 1);
}

constexpr std::uint64_t pow4(std::uint32_t level) { return std::uint64_t{1} << (2 * level); }

constexpr std::uint64_t coarse_id_of(const CellKey& k) { return k.index >> (2 * k.level); }
constexpr std::uint64_t path_of(const CellKey& k) { return k.index & (pow4(k.level) - 1); }

constexpr CellKey parent_key(const CellKey& k) {
  return {k.level - 1, (coarse_id_of(k) << (2 * (k.level - 1))) | (path_of(k) >> 2)};
}

/// Child c in Z order: bit 0 selects the upper half in x, bit 1 in y.
constexpr CellKey child_key(const CellKey& k, unsigned c) {
  return {k.level + 1, (k.index << 2) | c};
}

constexpr unsigned child_position(const CellKey& k) { return static_cast<unsigned>(k.index & 3u); }

}  // namespace pic
