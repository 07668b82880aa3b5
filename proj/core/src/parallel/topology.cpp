#include "picforest/parallel/topology.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pic {

int Partition::owner(std::uint32_t leaf) const {
  const auto it = std::upper_bound(starts.begin(), starts.end(), leaf);
  return static_cast<int>(it - starts.begin()) - 1;
}

Partition Partition::uniform(std::size_t leaves, int ranks) {
  const std::vector<double> ones(leaves, 1.0);
  return partition_by_cost(ones, ranks);
}

Partition partition_by_cost(std::span<const double> costs, int ranks) {
  if (ranks < 1) throw ConfigError("partition needs at least one rank");
  double total = 0.0;
  for (double c : costs) {
    if (!(c >= 0.0)) throw ConfigError("leaf costs must be non-negative");
    total += c;
  }
  Partition p;
  p.starts.assign(static_cast<std::size_t>(ranks) + 1, static_cast<std::uint32_t>(costs.size()));
  p.starts[0] = 0;
  const double ideal = total / ranks;
  double prefix = 0.0;
  int current = 0;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    int r = 0;
    if (ideal > 0.0) {
      const double pos = std::floor((prefix + 0.5 * costs[i]) / ideal);
      r = pos >= ranks - 1 ? ranks - 1 : static_cast<int>(pos);
    }
    r = std::max(r, current);
    while (current < r) p.starts[static_cast<std::size_t>(++current)] = static_cast<std::uint32_t>(i);
    prefix += costs[i];
  }
  return p;
}

RankTopology::RankTopology(const Forest& forest, const Partition& partition, int rank)
    : rank_(rank), partition_(partition) {
  if (partition.starts.back() != forest.size())
    throw ConfigError("partition does not cover the forest");
  const double inf = std::numeric_limits<double>::infinity();
  owned_box_ = {{inf, inf}, {-inf, -inf}};
  std::map<int, std::vector<std::uint32_t>> boundary;
  for (std::uint32_t i = begin(); i < end(); ++i) {
    const Cell& c = forest.leaf(i);
    owned_box_.lower.x = std::min(owned_box_.lower.x, c.box.lower.x);
    owned_box_.lower.y = std::min(owned_box_.lower.y, c.box.lower.y);
    owned_box_.upper.x = std::max(owned_box_.upper.x, c.box.upper.x);
    owned_box_.upper.y = std::max(owned_box_.upper.y, c.box.upper.y);
    for (std::uint32_t n : forest.vertex_neighbors(i)) {
      if (owns(n)) continue;
      ghosts_.push_back(n);
      auto& list = boundary[partition_.owner(n)];
      if (list.empty() || list.back() != i) list.push_back(i);
    }
  }
  std::sort(ghosts_.begin(), ghosts_.end());
  ghosts_.erase(std::unique(ghosts_.begin(), ghosts_.end()), ghosts_.end());
  for (auto& [r, list] : boundary) neighbors_.push_back(r);
  boundary_ = std::move(boundary);
}

bool RankTopology::is_ghost(std::uint32_t leaf) const {
  return std::binary_search(ghosts_.begin(), ghosts_.end(), leaf);
}

const std::vector<std::uint32_t>& RankTopology::boundary_for(int neighbor) const {
  static const std::vector<std::uint32_t> empty;
  auto it = boundary_.find(neighbor);
  return it == boundary_.end() ? empty : it->second;
}

}  // namespace pic
