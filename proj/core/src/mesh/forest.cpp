#include "picforest/mesh/forest.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <iomanip>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_set>

namespace pic {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

using KeySet = std::unordered_set<CellKey, CellKeyHash>;

constexpr std::array<std::array<int, 2>, 4> kEdgeDirections{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};

/// Integer addressing shared by the forest and the adaptation routines.
struct Grid {
  int nx;
  int ny;
  bool periodic;

  Forest::GridCoord coord(const CellKey& key) const {
    const std::uint64_t cid = coarse_id_of(key);
    const std::uint64_t path = path_of(key);
    const std::int64_t ci = static_cast<std::int64_t>(cid % static_cast<std::uint64_t>(nx));
    const std::int64_t cj = static_cast<std::int64_t>(cid / static_cast<std::uint64_t>(nx));
    const std::int64_t ix = static_cast<std::int64_t>(compact_bits(path));
    const std::int64_t iy = static_cast<std::int64_t>(compact_bits(path >> 1));
    return {key.level, (ci << key.level) + ix, (cj << key.level) + iy};
  }

  std::optional<CellKey> key_at(std::uint32_t level, std::int64_t gx, std::int64_t gy) const {
    const std::int64_t ncols = static_cast<std::int64_t>(nx) << level;
    const std::int64_t nrows = static_cast<std::int64_t>(ny) << level;
    if (periodic) {
      gx %= ncols;
      if (gx < 0) gx += ncols;
    } else if (gx < 0 || gx >= ncols) {
      return std::nullopt;
    }
    if (gy < 0 || gy >= nrows) return std::nullopt;
    const std::int64_t mask = (std::int64_t{1} << level) - 1;
    const std::uint64_t cid =
        static_cast<std::uint64_t>((gy >> level) * nx + (gx >> level));
    const std::uint64_t path = morton_encode(static_cast<std::uint64_t>(gx & mask),
                                             static_cast<std::uint64_t>(gy & mask));
    return CellKey{level, (cid << (2 * level)) | path};
  }

  template <class IsLeaf>
  std::optional<CellKey> covering(CellKey key, IsLeaf&& is_leaf) const {
    while (true) {
      if (is_leaf(key)) return key;
      if (key.level == 0) return std::nullopt;
      key = parent_key(key);
    }
  }
};

Grid grid_of(const Forest& f) { return {f.nx(), f.ny(), f.periodic_x()}; }

double lerp_coord(double lo, double hi, int i, int n) {
  if (i == 0) return lo;
  if (i == n) return hi;
  return lo + (hi - lo) * (static_cast<double>(i) / n);
}

void validate_geometry(const DomainGeometry& g, int nx, int ny) {
  if (nx < 1 || ny < 1) throw MeshError("coarse grid needs nx, ny >= 1");
  std::visit(overloaded{[](const RectangleDomain& r) {
                          if (!(r.upper.x > r.lower.x) || !(r.upper.y > r.lower.y))
                            throw MeshError("rectangle extents must satisfy lower < upper");
                        },
                        [nx](const AnnulusDomain& a) {
                          if (!(a.r_inner > 0.0) || !(a.r_outer > a.r_inner))
                            throw MeshError("annulus radii must satisfy 0 < r_inner < r_outer");
                          if (nx < 3) throw MeshError("annulus needs at least 3 angular cells");
                        }},
             g);
}

std::vector<std::uint64_t> coarse_morton_ranks(int nx, int ny) {
  std::vector<std::uint64_t> order(static_cast<std::size_t>(nx) * ny);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto code = [nx](std::uint64_t id) {
    return morton_encode(id % static_cast<std::uint64_t>(nx), id / static_cast<std::uint64_t>(nx));
  };
  std::sort(order.begin(), order.end(),
            [&](std::uint64_t a, std::uint64_t b) { return code(a) < code(b); });
  std::vector<std::uint64_t> rank(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r;
  return rank;
}

std::vector<CellKey> collect_descendants(const CellKey& key, const KeySet& leaves,
                                         std::uint32_t max_level) {
  std::vector<CellKey> out;
  std::vector<CellKey> stack{key};
  while (!stack.empty()) {
    const CellKey k = stack.back();
    stack.pop_back();
    if (leaves.contains(k)) {
      out.push_back(k);
    } else if (k.level < max_level) {
      for (unsigned c = 4; c-- > 0;) stack.push_back(child_key(k, c));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<LeafChange> correspondence(const Forest& old_forest, const KeySet& new_leaves,
                                       std::uint32_t new_max_level) {
  std::vector<LeafChange> out;
  out.reserve(old_forest.size());
  for (const Cell& c : old_forest.leaves()) {
    LeafChange change{c.key, {}};
    if (new_leaves.contains(c.key)) {
      change.new_keys.push_back(c.key);
    } else {
      CellKey k = c.key;
      bool found = false;
      while (k.level > 0) {
        k = parent_key(k);
        if (new_leaves.contains(k)) {
          change.new_keys.push_back(k);
          found = true;
          break;
        }
      }
      if (!found) change.new_keys = collect_descendants(c.key, new_leaves, new_max_level);
    }
    out.push_back(std::move(change));
  }
  return out;
}

std::uint32_t max_level_of(const KeySet& s) {
  std::uint32_t m = 0;
  for (const CellKey& k : s) m = std::max(m, k.level);
  return m;
}

}  // namespace

Forest Forest::build(const DomainGeometry& geometry, int nx, int ny, unsigned uniform_levels) {
  validate_geometry(geometry, nx, ny);
  if (uniform_levels > kMaxLevel) throw MeshError("refinement level exceeds maximum");
  Forest f;
  f.geometry_ = geometry;
  f.nx_ = nx;
  f.ny_ = ny;
  std::vector<CellKey> keys;
  const std::uint64_t per_tree = pow4(uniform_levels);
  keys.reserve(f.coarse_count() * per_tree);
  for (std::uint64_t cid = 0; cid < f.coarse_count(); ++cid)
    for (std::uint64_t p = 0; p < per_tree; ++p)
      keys.push_back({uniform_levels, (cid << (2 * uniform_levels)) | p});
  f.finalize(std::move(keys));
  return f;
}

Forest Forest::from_leaves(const DomainGeometry& geometry, int nx, int ny,
                           std::vector<CellKey> leaves) {
  validate_geometry(geometry, nx, ny);
  Forest f;
  f.geometry_ = geometry;
  f.nx_ = nx;
  f.ny_ = ny;

  // Leaves must tile every coarse cell exactly once.
  KeySet set;
  std::uint32_t lmax = 0;
  for (const CellKey& k : leaves) {
    if (k.level > kMaxLevel) throw MeshError("leaf level exceeds maximum");
    if (coarse_id_of(k) >= f.coarse_count()) throw MeshError("leaf outside coarse grid");
    if (!set.insert(k).second) throw MeshError("duplicate leaf key");
    lmax = std::max(lmax, k.level);
  }
  std::vector<std::uint64_t> measure(f.coarse_count(), 0);
  for (const CellKey& k : leaves) {
    CellKey a = k;
    while (a.level > 0) {
      a = parent_key(a);
      if (set.contains(a)) throw MeshError("leaf set contains an ancestor of another leaf");
    }
    measure[coarse_id_of(k)] += pow4(lmax - k.level);
  }
  for (std::uint64_t m : measure)
    if (m != pow4(lmax)) throw MeshError("leaves do not tile the coarse grid");
  f.finalize(std::move(leaves));
  return f;
}

void Forest::finalize(std::vector<CellKey> keys) {
  if (coarse_count() > (std::uint64_t{1} << 22)) throw MeshError("too many coarse cells");
  coarse_rank_ = coarse_morton_ranks(nx_, ny_);
  max_level_ = 0;
  for (const CellKey& k : keys) max_level_ = std::max(max_level_, k.level);

  const Grid g = grid_of(*this);
  auto sort_key = [&](const CellKey& k) {
    const GridCoord c = g.coord(k);
    const std::uint64_t mask = (std::uint64_t{1} << k.level) - 1;
    const std::uint64_t local = morton_encode(static_cast<std::uint64_t>(c.gx) & mask,
                                              static_cast<std::uint64_t>(c.gy) & mask);
    return (coarse_rank_[coarse_id_of(k)] << 42) | (local << (2 * (max_level_ - k.level)));
  };
  std::vector<std::pair<std::uint64_t, CellKey>> order;
  order.reserve(keys.size());
  for (const CellKey& k : keys) order.emplace_back(sort_key(k), k);
  std::sort(order.begin(), order.end());

  leaves_.clear();
  leaves_.reserve(order.size());
  index_of_.clear();
  index_of_.reserve(order.size() * 2);
  for (const auto& [sk, k] : order) {
    index_of_.emplace(k, static_cast<std::uint32_t>(leaves_.size()));
    leaves_.push_back(make_cell(k));
    const Cell& c = leaves_.back();
    if (!(jacobian(c.vertices, {0.0, 0.0}).det() > 0.0) ||
        !(jacobian(c.vertices, {1.0, 1.0}).det() > 0.0) ||
        !(jacobian(c.vertices, {1.0, 0.0}).det() > 0.0) ||
        !(jacobian(c.vertices, {0.0, 1.0}).det() > 0.0)) {
      throw MeshError("cell mapping has non-positive Jacobian");
    }
  }
  build_vertices();
  build_neighbors();
}

Quad Forest::coarse_vertices(std::uint64_t coarse_id) const {
  const int i = static_cast<int>(coarse_id % static_cast<std::uint64_t>(nx_));
  const int j = static_cast<int>(coarse_id / static_cast<std::uint64_t>(nx_));
  return std::visit(
      overloaded{[&](const RectangleDomain& r) {
                   auto v = [&](int a, int b) {
                     return Vec2{lerp_coord(r.lower.x, r.upper.x, a, nx_),
                                 lerp_coord(r.lower.y, r.upper.y, b, ny_)};
                   };
                   return Quad{v(i, j), v(i + 1, j), v(i, j + 1), v(i + 1, j + 1)};
                 },
                 [&](const AnnulusDomain& an) {
                   // Radii are scaled so the polygonal rings enclose the same
                   // area as the circular ones.
                   const double wedge = 2.0 * std::numbers::pi / nx_;
                   const double scale = std::sqrt(wedge / std::sin(wedge));
                   auto v = [&](int a, int b) {
                     const double theta =
                         -2.0 * std::numbers::pi * (static_cast<double>(a % nx_) / nx_);
                     const double r = scale * lerp_coord(an.r_inner, an.r_outer, b, ny_);
                     return Vec2{an.center.x + r * std::cos(theta),
                                 an.center.y + r * std::sin(theta)};
                   };
                   return Quad{v(i, j), v(i + 1, j), v(i, j + 1), v(i + 1, j + 1)};
                 }},
      geometry_);
}

Quad Forest::cell_vertices(const CellKey& key) const {
  const Quad coarse = coarse_vertices(coarse_id_of(key));
  if (key.level == 0) return coarse;
  const std::uint64_t path = path_of(key);
  const double n = static_cast<double>(std::uint64_t{1} << key.level);
  const double ix = static_cast<double>(compact_bits(path));
  const double iy = static_cast<double>(compact_bits(path >> 1));
  Quad q;
  for (int v = 0; v < 4; ++v) {
    const Vec2 ref{(ix + (v & 1)) / n, (iy + (v >> 1)) / n};
    q[v] = map_to_real(coarse, ref);
  }
  return q;
}

Cell Forest::make_cell(const CellKey& key) const {
  Cell c;
  c.key = key;
  c.vertices = cell_vertices(key);
  c.center = quad_center(c.vertices);
  c.box = quad_bounding_box(c.vertices);
  c.diameter = quad_diameter(c.vertices);
  return c;
}

void Forest::build_vertices() {
  const Grid g = grid_of(*this);
  const std::int64_t ncols = static_cast<std::int64_t>(nx_) << max_level_;
  std::unordered_map<std::uint64_t, std::uint32_t> ids;
  ids.reserve(leaves_.size() * 2);
  vertex_positions_.clear();
  for (Cell& c : leaves_) {
    const GridCoord gc = g.coord(c.key);
    const unsigned shift = max_level_ - c.key.level;
    for (int v = 0; v < 4; ++v) {
      std::int64_t vx = (gc.gx + (v & 1)) << shift;
      const std::int64_t vy = (gc.gy + (v >> 1)) << shift;
      if (g.periodic) vx %= ncols;
      const std::uint64_t code =
          static_cast<std::uint64_t>(vy) * static_cast<std::uint64_t>(ncols + 1) +
          static_cast<std::uint64_t>(vx);
      auto [it, inserted] = ids.emplace(code, static_cast<std::uint32_t>(vertex_positions_.size()));
      if (inserted) vertex_positions_.push_back(c.vertices[v]);
      c.vertex_ids[v] = it->second;
    }
  }
}

void Forest::build_neighbors() {
  const Grid g = grid_of(*this);
  auto leaf_pred = [this](const CellKey& k) { return index_of_.contains(k); };
  neighbor_offsets_.assign(leaves_.size() + 1, 0);
  neighbor_list_.clear();
  neighbor_list_.reserve(leaves_.size() * 8);
  std::vector<std::uint32_t> found;
  std::vector<CellKey> stack;
  for (std::size_t li = 0; li < leaves_.size(); ++li) {
    found.clear();
    const GridCoord gc = g.coord(leaves_[li].key);
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const auto nk = g.key_at(gc.level, gc.gx + dx, gc.gy + dy);
        if (!nk) continue;
        if (auto cover = g.covering(*nk, leaf_pred)) {
          found.push_back(index_of_.at(*cover));
          continue;
        }
        // Neighbor region is refined: collect the descendants touching us.
        stack.assign(1, *nk);
        while (!stack.empty()) {
          const CellKey k = stack.back();
          stack.pop_back();
          if (auto it = index_of_.find(k); it != index_of_.end()) {
            found.push_back(it->second);
            continue;
          }
          if (k.level >= max_level_) continue;
          for (unsigned c = 0; c < 4; ++c) {
            const int cx = static_cast<int>(c & 1u);
            const int cy = static_cast<int>(c >> 1);
            if ((dx == 1 && cx != 0) || (dx == -1 && cx != 1)) continue;
            if ((dy == 1 && cy != 0) || (dy == -1 && cy != 1)) continue;
            stack.push_back(child_key(k, c));
          }
        }
      }
    }
    std::sort(found.begin(), found.end());
    found.erase(std::unique(found.begin(), found.end()), found.end());
    found.erase(std::remove(found.begin(), found.end(), static_cast<std::uint32_t>(li)),
                found.end());
    neighbor_list_.insert(neighbor_list_.end(), found.begin(), found.end());
    neighbor_offsets_[li + 1] = static_cast<std::uint32_t>(neighbor_list_.size());
  }
}

std::optional<std::uint32_t> Forest::find(const CellKey& key) const {
  if (auto it = index_of_.find(key); it != index_of_.end()) return it->second;
  return std::nullopt;
}

Forest::GridCoord Forest::grid_coord(const CellKey& key) const { return grid_of(*this).coord(key); }

std::optional<CellKey> Forest::key_at(std::uint32_t level, std::int64_t gx, std::int64_t gy) const {
  return grid_of(*this).key_at(level, gx, gy);
}

std::optional<CellKey> Forest::covering_leaf(std::uint32_t level, std::int64_t gx,
                                             std::int64_t gy) const {
  const Grid g = grid_of(*this);
  const auto k = g.key_at(level, gx, gy);
  if (!k) return std::nullopt;
  return g.covering(*k, [this](const CellKey& c) { return index_of_.contains(c); });
}

bool Forest::touches_vertex(std::uint32_t leaf, std::uint32_t other, int v) const {
  const Grid g = grid_of(*this);
  const GridCoord o = g.coord(leaves_[other].key);
  const GridCoord c = g.coord(leaves_[leaf].key);
  const std::int64_t so = std::int64_t{1} << (max_level_ - o.level);
  const std::int64_t sc = std::int64_t{1} << (max_level_ - c.level);
  const std::int64_t vx = (o.gx + (v & 1)) * so;
  const std::int64_t vy = (o.gy + (v >> 1)) * so;
  const std::int64_t x0 = c.gx * sc;
  const std::int64_t y0 = c.gy * sc;
  if (vy < y0 || vy > y0 + sc) return false;
  if (!g.periodic) return vx >= x0 && vx <= x0 + sc;
  const std::int64_t width = static_cast<std::int64_t>(nx_) << max_level_;
  const std::int64_t d = ((vx - x0) % width + width) % width;
  return d <= sc;
}

double Forest::total_area() const {
  double a = 0.0;
  for (const Cell& c : leaves_) a += c.area();
  return a;
}

std::vector<std::uint64_t> Forest::coarse_candidates(Vec2 p) const {
  std::int64_t ci = 0;
  std::int64_t cj = 0;
  std::visit(overloaded{[&](const RectangleDomain& r) {
                          const double fx = (p.x - r.lower.x) / (r.upper.x - r.lower.x);
                          const double fy = (p.y - r.lower.y) / (r.upper.y - r.lower.y);
                          ci = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(fx * nx_)), 0, nx_ - 1);
                          cj = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(fy * ny_)), 0, ny_ - 1);
                        },
                        [&](const AnnulusDomain& a) {
                          const Vec2 d = p - a.center;
                          const double theta = std::atan2(d.y, d.x);
                          double frac = -theta / (2.0 * std::numbers::pi);
                          frac -= std::floor(frac);
                          ci = static_cast<std::int64_t>(std::floor(frac * nx_)) % nx_;
                          const double fr = (norm(d) - a.r_inner) / (a.r_outer - a.r_inner);
                          cj = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(fr * ny_)), 0, ny_ - 1);
                        }},
             geometry_);
  const Grid g = grid_of(*this);
  std::vector<std::uint64_t> out;
  out.reserve(9);
  for (int dj = -1; dj <= 1; ++dj)
    for (int di = -1; di <= 1; ++di)
      if (auto k = g.key_at(0, ci + di, cj + dj)) out.push_back(k->index);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void Forest::descend(const CellKey& key, Vec2 ref, std::optional<Location>& best) const {
  if (auto it = index_of_.find(key); it != index_of_.end()) {
    if (!best || key < leaves_[best->leaf].key) best = Location{it->second, ref};
    return;
  }
  if (key.level >= max_level_) return;
  for (unsigned c = 0; c < 4; ++c) {
    const Vec2 child_ref{2.0 * ref.x - static_cast<double>(c & 1u),
                         2.0 * ref.y - static_cast<double>(c >> 1)};
    if (reference_inside(child_ref)) descend(child_key(key, c), child_ref, best);
  }
}

std::optional<Location> Forest::locate(Vec2 point) const {
  std::optional<Location> best;
  const auto candidates = coarse_candidates(point);
  for (std::uint64_t cid : candidates) {
    if (auto ref = map_to_reference(coarse_vertices(cid), point))
      descend(CellKey{0, cid}, *ref, best);
  }
  if (best) return best;
  for (std::uint64_t cid = 0; cid < coarse_count(); ++cid) {
    if (std::binary_search(candidates.begin(), candidates.end(), cid)) continue;
    if (auto ref = map_to_reference(coarse_vertices(cid), point))
      descend(CellKey{0, cid}, *ref, best);
  }
  return best;
}

std::optional<Location> Forest::locate_linear(Vec2 point) const {
  std::optional<Location> best;
  for (std::size_t i = 0; i < leaves_.size(); ++i) {
    if (auto ref = map_to_reference(leaves_[i].vertices, point)) {
      if (!best || leaves_[i].key < leaves_[best->leaf].key)
        best = Location{static_cast<std::uint32_t>(i), *ref};
    }
  }
  return best;
}

void Forest::dump(std::ostream& out, std::span<const int> owners) const {
  out << "# picforest-forest 1\n";
  std::visit(overloaded{[&](const RectangleDomain& r) {
                          out << "# geometry rectangle " << std::setprecision(17) << r.lower.x << ' '
                              << r.lower.y << ' ' << r.upper.x << ' ' << r.upper.y << '\n';
                        },
                        [&](const AnnulusDomain& a) {
                          out << "# geometry annulus " << std::setprecision(17) << a.r_inner << ' '
                              << a.r_outer << ' ' << a.center.x << ' ' << a.center.y << '\n';
                        }},
             geometry_);
  out << "# coarse " << nx_ << ' ' << ny_ << '\n';
  out << std::setprecision(17);
  for (std::size_t i = 0; i < leaves_.size(); ++i) {
    const Cell& c = leaves_[i];
    out << c.key.level << ' ' << c.key.index;
    for (const Vec2& v : c.vertices) out << ' ' << v.x << ' ' << v.y;
    out << ' ' << (owners.empty() ? 0 : owners[i]) << '\n';
  }
}

Forest Forest::restore(std::istream& in, std::vector<int>* owners) {
  std::optional<DomainGeometry> geometry;
  int nx = 0;
  int ny = 0;
  struct Row {
    CellKey key;
    Quad vertices;
    int owner;
  };
  std::vector<Row> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (line[0] == '#') {
      std::string hash, word;
      ls >> hash >> word;
      if (word == "geometry") {
        std::string kind;
        ls >> kind;
        if (kind == "rectangle") {
          RectangleDomain r;
          ls >> r.lower.x >> r.lower.y >> r.upper.x >> r.upper.y;
          geometry = r;
        } else if (kind == "annulus") {
          AnnulusDomain a;
          ls >> a.r_inner >> a.r_outer >> a.center.x >> a.center.y;
          geometry = a;
        } else {
          throw MeshError("unknown geometry in forest dump: " + kind);
        }
      } else if (word == "coarse") {
        ls >> nx >> ny;
      }
      continue;
    }
    Row r;
    ls >> r.key.level >> r.key.index;
    for (Vec2& v : r.vertices) ls >> v.x >> v.y;
    ls >> r.owner;
    if (!ls) throw MeshError("malformed forest dump line: " + line);
    rows.push_back(r);
  }
  if (!geometry || nx < 1 || ny < 1) throw MeshError("forest dump lacks geometry header");
  std::vector<CellKey> keys;
  keys.reserve(rows.size());
  for (const Row& r : rows) keys.push_back(r.key);
  Forest f = from_leaves(*geometry, nx, ny, std::move(keys));
  if (owners) owners->assign(f.size(), 0);
  for (const Row& r : rows) {
    const std::uint32_t idx = f.index_of_.at(r.key);
    const Cell& c = f.leaves_[idx];
    for (int v = 0; v < 4; ++v) {
      const double scale = std::max(1.0, norm(c.vertices[v]));
      if (norm(c.vertices[v] - r.vertices[v]) > 1e-12 * scale)
        throw MeshError("forest dump vertices disagree with the geometry header");
    }
    if (owners) (*owners)[idx] = r.owner;
  }
  return f;
}

Adaptation refine(const Forest& forest, std::span<const CellKey> keys) {
  const Grid g = grid_of(forest);
  KeySet set;
  set.reserve(forest.size() + 4 * keys.size());
  for (const Cell& c : forest.leaves()) set.insert(c.key);

  std::deque<CellKey> work;
  auto split = [&](const CellKey& k) {
    if (k.level + 1 > kMaxLevel) throw MeshError("refinement exceeds maximum level");
    set.erase(k);
    for (unsigned c = 0; c < 4; ++c) {
      set.insert(child_key(k, c));
      work.push_back(child_key(k, c));
    }
  };
  for (const CellKey& k : keys) {
    if (!set.contains(k)) {
      if (!forest.is_leaf(k)) throw MeshError("refine: key is not a leaf");
      continue;  // listed twice
    }
    split(k);
  }
  auto pred = [&](const CellKey& k) { return set.contains(k); };
  while (!work.empty()) {
    const CellKey k = work.front();
    work.pop_front();
    if (!set.contains(k)) continue;
    const auto gc = g.coord(k);
    for (const auto& d : kEdgeDirections) {
      const auto nk = g.key_at(gc.level, gc.gx + d[0], gc.gy + d[1]);
      if (!nk) continue;
      const auto cover = g.covering(*nk, pred);
      if (cover && cover->level + 1 < k.level) {
        split(*cover);
        work.push_back(k);
      }
    }
  }
  const std::uint32_t lmax = max_level_of(set);
  auto changes = correspondence(forest, set, lmax);
  std::vector<CellKey> leaves(set.begin(), set.end());
  return Adaptation{Forest::from_leaves(forest.geometry(), forest.nx(), forest.ny(), std::move(leaves)),
                    std::move(changes), {}};
}

Adaptation coarsen(const Forest& forest, std::span<const CellKey> keys) {
  const Grid g = grid_of(forest);
  std::map<CellKey, unsigned> families;
  for (const CellKey& k : keys) {
    if (!forest.is_leaf(k)) throw MeshError("coarsen: key is not a leaf");
    if (k.level == 0) throw MeshError("coarsen: level-0 cells have no parent");
    families[parent_key(k)] |= 1u << child_position(k);
  }
  for (const auto& [parent, mask] : families)
    if (mask != 0xFu) throw MeshError("coarsen: incomplete sibling set");

  KeySet set;
  for (const Cell& c : forest.leaves()) set.insert(c.key);
  std::vector<CellKey> merged;
  for (const auto& [parent, mask] : families) {
    for (unsigned c = 0; c < 4; ++c) set.erase(child_key(parent, c));
    set.insert(parent);
    merged.push_back(parent);
  }

  auto pred = [&](const CellKey& k) { return set.contains(k); };
  std::vector<CellKey> skipped;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const CellKey& p : merged) {
      if (!set.contains(p)) continue;
      const auto gc = g.coord(p);
      bool violates = false;
      for (const auto& d : kEdgeDirections) {
        const auto nk = g.key_at(gc.level, gc.gx + d[0], gc.gy + d[1]);
        if (!nk || g.covering(*nk, pred)) continue;
        for (unsigned c = 0; c < 4 && !violates; ++c) {
          const int cx = static_cast<int>(c & 1u);
          const int cy = static_cast<int>(c >> 1);
          if ((d[0] == 1 && cx != 0) || (d[0] == -1 && cx != 1)) continue;
          if ((d[1] == 1 && cy != 0) || (d[1] == -1 && cy != 1)) continue;
          if (!set.contains(child_key(*nk, c))) violates = true;
        }
        if (violates) break;
      }
      if (violates) {
        set.erase(p);
        for (unsigned c = 0; c < 4; ++c) set.insert(child_key(p, c));
        skipped.push_back(p);
        changed = true;
      }
    }
  }
  const std::uint32_t lmax = max_level_of(set);
  auto changes = correspondence(forest, set, lmax);
  std::vector<CellKey> leaves(set.begin(), set.end());
  std::sort(skipped.begin(), skipped.end());
  return Adaptation{Forest::from_leaves(forest.geometry(), forest.nx(), forest.ny(), std::move(leaves)),
                    std::move(changes), std::move(skipped)};
}

}  // namespace pic
