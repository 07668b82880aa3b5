#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "picforest/mesh/cell_key.hpp"
#include "picforest/parallel/runtime.hpp"
#include "picforest/particles/particle_store.hpp"

namespace pic {

/// Little-endian particle record:
/// id u64 | location 2 x f64 | reference 2 x f64 | level u32 | index u64 |
/// n_properties x f64.
struct WireParticle {
  ParticleId id = 0;
  Vec2 location;
  Vec2 reference_location;
  CellKey destination;
  std::vector<double> properties;

  friend bool operator==(const WireParticle&, const WireParticle&) = default;
};

constexpr std::size_t wire_record_size(std::size_t n_properties) { return 52 + 8 * n_properties; }

void append_wire(Bytes& out, const Particle& p, std::span<const double> properties,
                 const CellKey& destination);
void append_wire(Bytes& out, const WireParticle& w);

/// Decodes `count` records; throws ProtocolError if the buffer length differs.
std::vector<WireParticle> decode_wire(std::span<const std::byte> in, std::size_t n_properties);

void append_u64(Bytes& out, std::uint64_t v);
std::uint64_t read_u64(std::span<const std::byte> in, std::size_t offset);

}  // namespace pic
