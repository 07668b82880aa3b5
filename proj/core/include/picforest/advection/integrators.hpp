#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "picforest/field/velocity_field.hpp"
#include "picforest/mesh/forest.hpp"
#include "picforest/parallel/runtime.hpp"
#include "picforest/parallel/topology.hpp"
#include "picforest/particles/particle_store.hpp"
#include "picforest/transport/transport.hpp"

namespace pic {

enum class Scheme { euler, rk2, rk4 };

/// Throws ConfigError for unknown names.
Scheme parse_scheme(std::string_view name);
std::string_view scheme_name(Scheme s);

/// Reals of integrator state kept in each particle's property slot:
/// euler 0, rk2 2 (x^n), rk4 4 (x^n and the running k sum).
std::size_t scratch_size(Scheme s);
int substep_count(Scheme s);
/// Time offset of each stage's velocity evaluation as a fraction of dt.
double stage_time_fraction(Scheme s, int stage);

/// cfl * min over leaves of diameter / (largest vertex speed in the leaf).
/// Leaves where the field vanishes at every vertex impose no limit; throws
/// FieldError if that is every leaf. Local to the given leaf range.
double compute_cfl_dt(const VelocityField& field, const Forest& forest, double cfl,
                      double t = 0.0, std::uint32_t begin = 0,
                      std::uint32_t end = static_cast<std::uint32_t>(-1));

/// Collective version over all ranks' owned leaves.
double compute_cfl_dt(Comm& comm, const VelocityField& field, const Forest& forest,
                      const RankTopology& topology, double cfl, double t = 0.0);

/// Applies one stage to every owned particle. Velocities are evaluated from
/// the particle's cell and reference location. The caller must re-sort the
/// particles into cells before the next stage.
void advect_substep(ParticleStore& store, const Forest& forest, const VelocityField& field,
                    Scheme scheme, int stage, double t, double dt, std::size_t scratch_offset);

/// Full step: every stage followed by transport. `after_stage` runs after
/// each transport with the stage index.
SortStats advance_particles(Comm& comm, ParticleStore& store, const Forest& forest,
                            const RankTopology& topology, const VelocityField& field, Scheme scheme,
                            double t, double dt, std::size_t scratch_offset,
                            std::vector<DiscardRecord>& discarded,
                            const std::function<void(int)>& after_stage = {});

/// Least-squares slope of log(error) against log(dt) over the points whose
/// error is above `floor`. Empty if fewer than two such points remain, which
/// means the scheme is exact for the problem.
std::optional<double> fit_order(std::span<const double> dts, std::span<const double> errors,
                                double floor = 1e-13);

}  // namespace pic
