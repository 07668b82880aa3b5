#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <unordered_map>
#include <variant>
#include <vector>

#include "picforest/mesh/cell_key.hpp"
#include "picforest/mesh/mapping.hpp"
#include "picforest/types.hpp"

namespace pic {

struct RectangleDomain {
  Vec2 lower{0.0, 0.0};
  Vec2 upper{1.0, 1.0};
};

/// Annulus split into nx angular by ny radial coarse cells. Coarse cells are
/// bilinear patches through points on the two circles. The reference x axis
/// runs clockwise in angle and the y axis outward in radius, which keeps the
/// Jacobian determinant positive.
struct AnnulusDomain {
  double r_inner = 0.5;
  double r_outer = 1.0;
  Vec2 center{0.0, 0.0};
};

using DomainGeometry = std::variant<RectangleDomain, AnnulusDomain>;

struct Cell {
  CellKey key;
  Quad vertices;
  std::array<std::uint32_t, 4> vertex_ids{};
  Vec2 center;
  BoundingBox box;
  double diameter = 0.0;

  double area() const { return quad_area(vertices); }
};

/// A located point: leaf position in Morton order plus its reference coordinates.
struct Location {
  std::uint32_t leaf = 0;
  Vec2 reference;
};

/// Old leaf and the new leaves that now cover it: itself, its descendants, or
/// its (single) coarsened ancestor.
struct LeafChange {
  CellKey old_key;
  std::vector<CellKey> new_keys;
};

class Forest;

struct Adaptation;

/// Adaptive quadtree forest over a structured coarse grid. Leaves are stored
/// in Morton order: coarse trees ordered by the Z-order code of their (i, j)
/// grid position, leaves inside a tree by their quadrant path. The forest is
/// immutable; refinement and coarsening produce a new forest.
class Forest {
 public:
  static Forest build(const DomainGeometry& geometry, int nx, int ny, unsigned uniform_levels = 0);
  static Forest from_leaves(const DomainGeometry& geometry, int nx, int ny,
                            std::vector<CellKey> leaves);

  const DomainGeometry& geometry() const { return geometry_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  std::size_t size() const { return leaves_.size(); }
  unsigned max_level() const { return max_level_; }

  const Cell& leaf(std::size_t i) const { return leaves_[i]; }
  std::span<const Cell> leaves() const { return leaves_; }

  std::optional<std::uint32_t> find(const CellKey& key) const;
  bool is_leaf(const CellKey& key) const { return index_of_.contains(key); }

  /// Leaves sharing at least one point with the given leaf, sorted by position.
  std::span<const std::uint32_t> vertex_neighbors(std::size_t leaf) const {
    return {neighbor_list_.data() + neighbor_offsets_[leaf],
            neighbor_offsets_[leaf + 1] - neighbor_offsets_[leaf]};
  }

  /// Tree descent from the coarse cell; on faces the lowest CellKey wins.
  std::optional<Location> locate(Vec2 point) const;
  /// Exhaustive scan over leaves with the same tie rule.
  std::optional<Location> locate_linear(Vec2 point) const;

  std::size_t vertex_count() const { return vertex_positions_.size(); }
  Vec2 vertex_position(std::uint32_t id) const { return vertex_positions_[id]; }

  /// Geometry of any cell in the tree hierarchy, leaf or not.
  Quad cell_vertices(const CellKey& key) const;
  Quad coarse_vertices(std::uint64_t coarse_id) const;
  std::uint64_t coarse_count() const { return static_cast<std::uint64_t>(nx_) * ny_; }

  double total_area() const;
  bool periodic_x() const { return std::holds_alternative<AnnulusDomain>(geometry_); }

  /// Global integer coordinates of a cell at its own level.
  struct GridCoord {
    std::uint32_t level;
    std::int64_t gx;
    std::int64_t gy;
  };
  GridCoord grid_coord(const CellKey& key) const;
  /// Key for grid coordinates, wrapping periodic directions; nullopt outside.
  std::optional<CellKey> key_at(std::uint32_t level, std::int64_t gx, std::int64_t gy) const;

  /// Leaf at or above the given same-level region, if that region is not refined.
  std::optional<CellKey> covering_leaf(std::uint32_t level, std::int64_t gx, std::int64_t gy) const;

  /// True if the closed cell `leaf` contains vertex v of cell `other`.
  bool touches_vertex(std::uint32_t leaf, std::uint32_t other, int v) const;

  /// Text dump: geometry header lines then `level index v0x v0y ... v3y owner`.
  void dump(std::ostream& out, std::span<const int> owners = {}) const;
  static Forest restore(std::istream& in, std::vector<int>* owners = nullptr);

 private:
  Forest() = default;
  void finalize(std::vector<CellKey> leaves);
  void build_neighbors();
  void build_vertices();
  Cell make_cell(const CellKey& key) const;
  std::vector<std::uint64_t> coarse_candidates(Vec2 point) const;
  void descend(const CellKey& key, Vec2 ref, std::optional<Location>& best) const;

  DomainGeometry geometry_;
  int nx_ = 1;
  int ny_ = 1;
  unsigned max_level_ = 0;
  std::vector<Cell> leaves_;
  std::unordered_map<CellKey, std::uint32_t, CellKeyHash> index_of_;
  std::vector<std::uint32_t> neighbor_offsets_;
  std::vector<std::uint32_t> neighbor_list_;
  std::vector<Vec2> vertex_positions_;
  std::vector<std::uint64_t> coarse_rank_;
};

struct Adaptation {
  Forest forest;
  std::vector<LeafChange> correspondence;
  /// Sibling groups left refined because merging them would break 2:1 balance.
  std::vector<CellKey> skipped_parents;
};

/// Refines the given leaves, then refines further until edge neighbors differ
/// by at most one level.
Adaptation refine(const Forest& forest, std::span<const CellKey> keys);

/// Merges complete sibling groups. Every key must be a leaf and all four
/// siblings of each key must be listed; throws MeshError otherwise.
Adaptation coarsen(const Forest& forest, std::span<const CellKey> keys);

}  // namespace pic
