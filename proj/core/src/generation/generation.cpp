#include "picforest/generation/generation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <istream>
#include <numeric>
#include <string>

namespace pic {
namespace {

double unit(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

void check_weight(double w, std::uint32_t leaf) {
  if (!(w >= 0.0) || !std::isfinite(w))
    throw GenerationError("density gives weight " + std::to_string(w) + " in leaf " + std::to_string(leaf));
}

// Runs the initializer, then inserts. Batches come in Morton order, which
// differs from key order once levels are mixed.
void insert_batch(ParticleStore& store, std::vector<std::pair<CellKey, Particle>>& batch,
                  const ParticleInit& init) {
  if (init)
    for (auto& [key, p] : batch) init(key, p, store.properties(p));
  std::stable_sort(batch.begin(), batch.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  store.owned().bulk_insert_sorted(batch);
}

}  // namespace

Rng make_rank_rng(std::uint64_t seed, int rank) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(rank)};
  return Rng(seq);
}

std::vector<std::uint64_t> distribute_counts(std::uint64_t n, std::span<const double> weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) throw GenerationError("total generation weight is zero");
  std::vector<std::uint64_t> counts(weights.size());
  std::vector<double> frac(weights.size());
  std::uint64_t assigned = 0;
  for (std::size_t r = 0; r < weights.size(); ++r) {
    if (weights[r] < 0.0) throw GenerationError("negative rank weight");
    const double share = static_cast<double>(n) * (weights[r] / total);
    const double whole = std::floor(share);
    counts[r] = static_cast<std::uint64_t>(whole);
    frac[r] = share - whole;
    assigned += counts[r];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  // Rounding can overshoot by a unit in pathological cases; take it back from
  // the smallest fractional parts.
  for (auto it = order.rbegin(); assigned > n && it != order.rend(); ++it) {
    if (counts[*it] == 0) continue;
    --counts[*it];
    --assigned;
  }
  for (std::size_t k = 0; assigned < n; k = (k + 1) % order.size()) {
    if (weights[order[k]] == 0.0) continue;
    ++counts[order[k]];
    ++assigned;
  }
  return counts;
}

GenerationPlan plan_from_weights(std::span<const double> rank_weights, int rank,
                                 std::uint64_t n_global) {
  const auto counts = distribute_counts(n_global, rank_weights);
  GenerationPlan plan;
  plan.global_count = n_global;
  plan.global_weight = std::accumulate(rank_weights.begin(), rank_weights.end(), 0.0);
  plan.local_weight = rank_weights[static_cast<std::size_t>(rank)];
  plan.local_count = counts[static_cast<std::size_t>(rank)];
  plan.local_start_id = std::accumulate(counts.begin(), counts.begin() + rank, std::uint64_t{0});
  return plan;
}

GenerationPlan plan_generation(Comm& comm, const Forest& forest, const RankTopology& topology,
                               const Density& rho, std::uint64_t n_global) {
  std::vector<std::uint32_t> cells;
  std::vector<double> accumulated;
  double local = 0.0;
  for (std::uint32_t i = topology.begin(); i < topology.end(); ++i) {
    const Cell& c = forest.leaf(i);
    const double w = rho(c.center) * c.area();
    check_weight(w, i);
    local += w;
    cells.push_back(i);
    accumulated.push_back(local);
  }
  const auto weights = comm.allgather(local);
  GenerationPlan plan = plan_from_weights(weights, comm.rank(), n_global);
  plan.local_start_id = comm.exclusive_scan(plan.local_count);
  plan.cells = std::move(cells);
  plan.accumulated = std::move(accumulated);
  return plan;
}

std::uint32_t draw_cell(const GenerationPlan& plan, Rng& rng) {
  if (plan.cells.empty() || !(plan.local_weight > 0.0))
    throw GenerationError("draw_cell on a rank without weight");
  const double target = plan.local_weight * unit(rng);
  auto it = std::upper_bound(plan.accumulated.begin(), plan.accumulated.end(), target);
  if (it == plan.accumulated.end()) {
    // target == local_weight after rounding: the last cell with positive weight.
    it = std::lower_bound(plan.accumulated.begin(), plan.accumulated.end(), plan.accumulated.back());
  }
  return plan.cells[static_cast<std::size_t>(it - plan.accumulated.begin())];
}

CellSample sample_in_cell_rejection(const Quad& cell, Rng& rng) {
  const BoundingBox box = quad_bounding_box(cell);
  for (int attempt = 0; attempt < kRejectionAttemptCap; ++attempt) {
    const Vec2 p{box.lower.x + (box.upper.x - box.lower.x) * unit(rng),
                 box.lower.y + (box.upper.y - box.lower.y) * unit(rng)};
    const auto ref = map_to_reference(cell, p);
    if (ref && reference_inside(*ref, 0.0)) return {p, *ref};
  }
  throw GenerationError("rejection sampling gave up after " + std::to_string(kRejectionAttemptCap) +
                        " draws; the cell fills too little of its bounding box");
}

std::vector<CellSample> sample_in_cell_mh(const Quad& cell, const Density& rho, std::size_t count,
                                          Rng& rng, const MhOptions& options) {
  std::vector<CellSample> out;
  if (count == 0) return out;

  struct State {
    Vec2 ref;
    Vec2 location;
    double density;
    double jac;
    double target() const { return density * jac; }
  };
  const auto evaluate = [&](Vec2 ref) {
    const Vec2 x = map_to_real(cell, ref);
    const double d = rho(x);
    if (!(d >= 0.0)) throw GenerationError("density is negative or NaN inside the cell");
    const double j = options.jacobian_weight ? std::abs(jacobian(cell, ref).det()) : 1.0;
    return State{ref, x, d, j};
  };
  // One proposal; the uniform for the test is always drawn so the random
  // stream does not depend on the densities.
  const auto step = [&](State& cur) {
    const State next = evaluate({unit(rng), unit(rng)});
    const double u = unit(rng);
    bool accept;
    if (cur.target() == 0.0)
      accept = next.target() > 0.0;
    else
      accept = u < (next.density / cur.density) * (next.jac / cur.jac);
    if (accept) cur = next;
    return accept;
  };

  State cur = evaluate({unit(rng), unit(rng)});
  int zero_rejections = 0;
  for (int i = 0; i < options.burn_in; ++i) {
    const bool was_zero = cur.target() == 0.0;
    const bool accepted = step(cur);
    zero_rejections = (was_zero && !accepted) ? zero_rejections + 1 : 0;
    if (zero_rejections >= options.max_zero_rejections)
      throw GenerationError("Metropolis-Hastings chain is stuck where the density vanishes");
  }
  if (cur.target() == 0.0)
    throw GenerationError("Metropolis-Hastings chain did not reach the support of the density");

  std::vector<State> chain{cur};
  std::size_t longest = 1;
  std::size_t run = 1;
  while (chain.size() < (count - 1) * longest + 1) {
    const bool accepted = step(cur);
    if (options.acceptance_log) options.acceptance_log->push_back(accepted);
    run = accepted ? 1 : run + 1;
    longest = std::max(longest, run);
    chain.push_back(cur);
  }
  if (options.stride) *options.stride = static_cast<int>(longest);
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const State& s = chain[k * longest];
    out.push_back({s.location, s.ref});
  }
  return out;
}

GenerationPlan generate_random(Comm& comm, ParticleStore& store, const Forest& forest,
                               const RankTopology& topology, const Density& rho,
                               std::uint64_t n_global, InCellSampler sampler, std::uint64_t seed,
                               const ParticleInit& init) {
  GenerationPlan plan = plan_generation(comm, forest, topology, rho, n_global);
  if (plan.local_count == 0) return plan;
  Rng rng = make_rank_rng(seed, comm.rank());

  std::vector<std::uint64_t> per_cell(plan.cells.size(), 0);
  for (std::uint64_t k = 0; k < plan.local_count; ++k)
    ++per_cell[draw_cell(plan, rng) - topology.begin()];

  std::vector<std::pair<CellKey, Particle>> batch;
  batch.reserve(plan.local_count);
  ParticleId next_id = plan.local_start_id;
  for (std::size_t c = 0; c < plan.cells.size(); ++c) {
    if (per_cell[c] == 0) continue;
    const Cell& cell = forest.leaf(plan.cells[c]);
    if (sampler == InCellSampler::metropolis_hastings) {
      for (const CellSample& s : sample_in_cell_mh(cell.vertices, rho, per_cell[c], rng))
        batch.emplace_back(cell.key, store.make_particle(next_id++, s.location, s.reference));
    } else {
      for (std::uint64_t k = 0; k < per_cell[c]; ++k) {
        const CellSample s = sample_in_cell_rejection(cell.vertices, rng);
        batch.emplace_back(cell.key, store.make_particle(next_id++, s.location, s.reference));
      }
    }
  }
  insert_batch(store, batch, init);
  return plan;
}

PrescribedResult insert_prescribed(Comm& comm, ParticleStore& store, const Forest& forest,
                                   const RankTopology& topology, std::span<const Vec2> points,
                                   const ParticleInit& init) {
  PrescribedResult result;
  std::vector<std::pair<CellKey, Particle>> batch;
  if (topology.begin() < topology.end()) {
    BoundingBox box = topology.owned_box();
    const double slack = 1e-9 * std::max(box.upper.x - box.lower.x, box.upper.y - box.lower.y);
    box.lower -= Vec2{slack, slack};
    box.upper += Vec2{slack, slack};
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!box.contains(points[i])) continue;
      const auto loc = forest.locate(points[i]);
      if (!loc || !topology.owns(loc->leaf)) continue;
      batch.emplace_back(forest.leaf(loc->leaf).key,
                         store.make_particle(i, points[i], loc->reference));
    }
  }
  result.inserted_local = batch.size();
  insert_batch(store, batch, init);
  result.skipped_global = points.size() - comm.allreduce_sum(result.inserted_local);
  return result;
}

void insert_reference_per_cell(Comm& comm, ParticleStore& store, const Forest& forest,
                               const RankTopology& topology, std::span<const Vec2> references,
                               const ParticleInit& init) {
  for (const Vec2& r : references)
    if (!reference_inside(r, 0.0))
      throw GenerationError("reference coordinate (" + std::to_string(r.x) + ", " +
                            std::to_string(r.y) + ") is outside the unit square");
  const std::uint64_t local = static_cast<std::uint64_t>(topology.end() - topology.begin()) * references.size();
  ParticleId next_id = comm.exclusive_scan(local);
  std::vector<std::pair<CellKey, Particle>> batch;
  batch.reserve(local);
  for (std::uint32_t i = topology.begin(); i < topology.end(); ++i) {
    const Cell& c = forest.leaf(i);
    for (const Vec2& r : references)
      batch.emplace_back(c.key, store.make_particle(next_id++, map_to_real(c.vertices, r), r));
  }
  insert_batch(store, batch, init);
}

std::vector<Vec2> read_points_csv(std::istream& in) {
  std::vector<Vec2> points;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    char* end_x = nullptr;
    char* end_y = nullptr;
    const double x = std::strtod(line.c_str(), &end_x);
    const double y = comma == std::string::npos ? 0.0 : std::strtod(line.c_str() + comma + 1, &end_y);
    const bool ok = comma != std::string::npos && end_x == line.c_str() + comma && end_y != line.c_str() + comma + 1;
    if (!ok) {
      if (line_no == 1 && points.empty()) continue;  // header
      throw ConfigError("points file line " + std::to_string(line_no) + ": expected `x,y`");
    }
    points.push_back({x, y});
  }
  return points;
}

}  // namespace pic
