#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "picforest/particles/particle_store.hpp"

namespace pic {

struct ParticleRecord {
  ParticleId id = 0;
  Vec2 location;
  std::vector<double> values;

  friend bool operator==(const ParticleRecord&, const ParticleRecord&) = default;
};

/// Owned particles in store order with the first `n_values` property reals.
std::vector<ParticleRecord> collect_records(const ParticleStore& store, std::size_t n_values);

void sort_by_id(std::vector<ParticleRecord>& records);

/// File group of a rank: floor(rank * G / P) with G = min(groups, ranks), so
/// groups are contiguous rank blocks whose sizes differ by at most one rank.
int output_group(int rank, int ranks, int groups);
int effective_groups(int ranks, int groups);

/// CSV header `id,x,y,<columns>` then one line per record.
void write_records_csv(std::ostream& out, std::span<const ParticleRecord> records,
                       std::span<const std::string> columns);
std::vector<ParticleRecord> read_records_csv(std::istream& in);

/// Binary layout, little-endian: "PICP", u32 version 1, u32 value count V,
/// u64 record count, then per record u64 id, f64 x, f64 y, V x f64.
void write_records_binary(std::ostream& out, std::span<const ParticleRecord> records,
                          std::size_t n_values);
std::vector<ParticleRecord> read_records_binary(std::istream& in);

/// particles_<step>_<group>.<ext>
std::filesystem::path particle_file(const std::filesystem::path& dir, int step, int group,
                                    bool binary);

/// Writes one file per group from per-rank record lists (index = rank).
/// `format` is csv, binary or both. Returns the files written.
std::vector<std::filesystem::path> write_particle_groups(
    const std::filesystem::path& dir, int step, std::span<const std::vector<ParticleRecord>> per_rank,
    int groups, const std::string& format, std::span<const std::string> columns);

/// Reads every group file of a step (binary if present, else CSV).
std::vector<ParticleRecord> read_particle_step(const std::filesystem::path& dir, int step);

}  // namespace pic
