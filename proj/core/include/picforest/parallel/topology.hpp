#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include "picforest/mesh/forest.hpp"

namespace pic {

/// Contiguous ownership ranges of the Morton leaf sequence:
/// rank r owns leaves [starts[r], starts[r+1]).
struct Partition {
  std::vector<std::uint32_t> starts;

  int ranks() const { return static_cast<int>(starts.size()) - 1; }
  int owner(std::uint32_t leaf) const;
  std::uint32_t begin(int rank) const { return starts[static_cast<std::size_t>(rank)]; }
  std::uint32_t end(int rank) const { return starts[static_cast<std::size_t>(rank) + 1]; }

  /// Equal-cost split of `leaves` leaves.
  static Partition uniform(std::size_t leaves, int ranks);

  friend bool operator==(const Partition&, const Partition&) = default;
};

/// Leaf i goes to rank min(P-1, floor((prefix_before_i + cost_i/2) / ideal))
/// with ideal = total/P. Costs are taken in Morton order.
Partition partition_by_cost(std::span<const double> costs, int ranks);

/// One rank's view: owned range, ghost layer, and neighbor ranks.
class RankTopology {
 public:
  RankTopology(const Forest& forest, const Partition& partition, int rank);

  int rank() const { return rank_; }
  const Partition& partition() const { return partition_; }
  std::uint32_t begin() const { return partition_.begin(rank_); }
  std::uint32_t end() const { return partition_.end(rank_); }
  bool owns(std::uint32_t leaf) const { return leaf >= begin() && leaf < end(); }
  bool is_ghost(std::uint32_t leaf) const;
  int owner(std::uint32_t leaf) const { return partition_.owner(leaf); }

  /// Non-owned leaves that share a point with an owned leaf, ascending.
  const std::vector<std::uint32_t>& ghost_leaves() const { return ghosts_; }
  /// Ranks owning at least one ghost leaf, ascending. The relation is symmetric.
  const std::vector<int>& neighbors() const { return neighbors_; }
  /// Owned leaves that are ghosts of the given neighbor rank, ascending.
  const std::vector<std::uint32_t>& boundary_for(int neighbor) const;

  /// Axis-aligned box around all owned leaves.
  const BoundingBox& owned_box() const { return owned_box_; }

 private:
  int rank_;
  Partition partition_;
  std::vector<std::uint32_t> ghosts_;
  std::vector<int> neighbors_;
  std::map<int, std::vector<std::uint32_t>> boundary_;
  BoundingBox owned_box_;
};

}  // namespace pic
