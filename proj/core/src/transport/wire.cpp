#include "picforest/transport/wire.hpp"

#include <bit>
#include <cstring>
#include <string>

namespace pic {
namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
void put(Bytes& out, T v) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  std::byte b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
  out.insert(out.end(), b, b + sizeof(T));
}

template <class T>
T get(std::span<const std::byte> in, std::size_t& offset) {
  std::byte b[sizeof(T)];
  std::memcpy(b, in.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
  offset += sizeof(T);
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

}  // namespace

void append_wire(Bytes& out, const Particle& p, std::span<const double> properties,
                 const CellKey& destination) {
  put(out, p.id);
  put(out, p.location.x);
  put(out, p.location.y);
  put(out, p.reference_location.x);
  put(out, p.reference_location.y);
  put(out, destination.level);
  put(out, destination.index);
  for (double v : properties) put(out, v);
}

void append_wire(Bytes& out, const WireParticle& w) {
  append_wire(out, Particle{w.id, w.location, w.reference_location, 0}, w.properties, w.destination);
}

std::vector<WireParticle> decode_wire(std::span<const std::byte> in, std::size_t n_properties) {
  const std::size_t rec = wire_record_size(n_properties);
  if (in.size() % rec != 0)
    throw ProtocolError("payload of " + std::to_string(in.size()) +
                        " bytes is not a whole number of " + std::to_string(rec) + "-byte records");
  std::vector<WireParticle> out(in.size() / rec);
  std::size_t off = 0;
  for (WireParticle& w : out) {
    w.id = get<std::uint64_t>(in, off);
    w.location.x = get<double>(in, off);
    w.location.y = get<double>(in, off);
    w.reference_location.x = get<double>(in, off);
    w.reference_location.y = get<double>(in, off);
    w.destination.level = get<std::uint32_t>(in, off);
    w.destination.index = get<std::uint64_t>(in, off);
    w.properties.resize(n_properties);
    for (double& v : w.properties) v = get<double>(in, off);
  }
  return out;
}

void append_u64(Bytes& out, std::uint64_t v) { put(out, v); }

std::uint64_t read_u64(std::span<const std::byte> in, std::size_t offset) {
  if (offset + 8 > in.size()) throw ProtocolError("truncated count message");
  return get<std::uint64_t>(in, offset);
}

}  // namespace pic
