#include "picforest/sim/output.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace pic {
namespace {

static_assert(std::endian::native == std::endian::little, "binary dumps assume a little-endian host");

constexpr char kMagic[4] = {'P', 'I', 'C', 'P'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw Error("truncated particle dump");
  return v;
}

double parse_field(std::string_view s) {
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) throw Error("bad number in particle CSV: " + std::string(s));
  return v;
}

}  // namespace

std::vector<ParticleRecord> collect_records(const ParticleStore& store, std::size_t n_values) {
  std::vector<ParticleRecord> out;
  out.reserve(store.owned().size());
  store.owned().for_each([&](const CellKey&, const Particle& p) {
    const auto v = store.properties(p).first(n_values);
    out.push_back({p.id, p.location, {v.begin(), v.end()}});
  });
  return out;
}

void sort_by_id(std::vector<ParticleRecord>& records) {
  std::sort(records.begin(), records.end(),
            [](const ParticleRecord& a, const ParticleRecord& b) { return a.id < b.id; });
}

int effective_groups(int ranks, int groups) { return std::max(1, std::min(groups, ranks)); }

int output_group(int rank, int ranks, int groups) {
  return static_cast<int>(static_cast<std::int64_t>(rank) * effective_groups(ranks, groups) / ranks);
}

void write_records_csv(std::ostream& out, std::span<const ParticleRecord> records,
                       std::span<const std::string> columns) {
  out << "id,x,y";
  for (const std::string& c : columns) out << ',' << c;
  out << '\n';
  char buf[32];
  const auto num = [&](double v) {
    // Shortest representation that parses back to the same double.
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    out.write(buf, r.ptr - buf);
  };
  for (const ParticleRecord& r : records) {
    out << r.id << ',';
    num(r.location.x);
    out << ',';
    num(r.location.y);
    for (double v : r.values) {
      out << ',';
      num(v);
    }
    out << '\n';
  }
}

std::vector<ParticleRecord> read_records_csv(std::istream& in) {
  std::vector<ParticleRecord> out;
  std::string line;
  if (!std::getline(in, line) || line.rfind("id,x,y", 0) != 0) throw Error("particle CSV lacks the id,x,y header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::size_t start = 0;
    while (true) {
      const auto c = line.find(',', start);
      f.emplace_back(std::string_view(line).substr(start, c - start));
      if (c == std::string::npos) break;
      start = c + 1;
    }
    if (f.size() < 3) throw Error("particle CSV line has fewer than 3 fields");
    ParticleRecord r;
    const auto [end, ec] = std::from_chars(f[0].data(), f[0].data() + f[0].size(), r.id);
    if (ec != std::errc{} || end != f[0].data() + f[0].size()) throw Error("bad particle id in CSV");
    r.location = {parse_field(f[1]), parse_field(f[2])};
    for (std::size_t i = 3; i < f.size(); ++i) r.values.push_back(parse_field(f[i]));
    out.push_back(std::move(r));
  }
  return out;
}

void write_records_binary(std::ostream& out, std::span<const ParticleRecord> records,
                          std::size_t n_values) {
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(n_values));
  put<std::uint64_t>(out, records.size());
  for (const ParticleRecord& r : records) {
    if (r.values.size() != n_values) throw Error("particle record has the wrong number of values");
    put<std::uint64_t>(out, r.id);
    put<double>(out, r.location.x);
    put<double>(out, r.location.y);
    for (double v : r.values) put<double>(out, v);
  }
}

std::vector<ParticleRecord> read_records_binary(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw Error("not a particle dump");
  if (get<std::uint32_t>(in) != kVersion) throw Error("unsupported particle dump version");
  const auto nv = get<std::uint32_t>(in);
  const auto n = get<std::uint64_t>(in);
  std::vector<ParticleRecord> out(n);
  for (ParticleRecord& r : out) {
    r.id = get<std::uint64_t>(in);
    r.location.x = get<double>(in);
    r.location.y = get<double>(in);
    r.values.resize(nv);
    for (double& v : r.values) v = get<double>(in);
  }
  return out;
}

std::filesystem::path particle_file(const std::filesystem::path& dir, int step, int group,
                                    bool binary) {
  return dir / ("particles_" + std::to_string(step) + "_" + std::to_string(group) +
                (binary ? ".bin" : ".csv"));
}

std::vector<std::filesystem::path> write_particle_groups(
    const std::filesystem::path& dir, int step, std::span<const std::vector<ParticleRecord>> per_rank,
    int groups, const std::string& format, std::span<const std::string> columns) {
  std::vector<std::filesystem::path> written;
  if (format == "none") return written;
  const int ranks = static_cast<int>(per_rank.size());
  const int g_eff = effective_groups(ranks, groups);
  for (int g = 0; g < g_eff; ++g) {
    std::vector<ParticleRecord> records;
    for (int r = 0; r < ranks; ++r)
      if (output_group(r, ranks, groups) == g)
        records.insert(records.end(), per_rank[static_cast<std::size_t>(r)].begin(),
                       per_rank[static_cast<std::size_t>(r)].end());
    for (const bool binary : {false, true}) {
      if ((binary && format == "csv") || (!binary && format == "binary")) continue;
      const auto path = particle_file(dir, step, g, binary);
      std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
      if (!out) throw Error("cannot write " + path.string());
      if (binary)
        write_records_binary(out, records, columns.size());
      else
        write_records_csv(out, records, columns);
      if (!out) throw Error("write failed: " + path.string());
      written.push_back(path);
    }
  }
  return written;
}

std::vector<ParticleRecord> read_particle_step(const std::filesystem::path& dir, int step) {
  std::vector<ParticleRecord> out;
  for (int g = 0;; ++g) {
    const auto bin = particle_file(dir, step, g, true);
    const auto csv = particle_file(dir, step, g, false);
    std::vector<ParticleRecord> part;
    if (std::filesystem::exists(bin)) {
      std::ifstream in(bin, std::ios::binary);
      part = read_records_binary(in);
    } else if (std::filesystem::exists(csv)) {
      std::ifstream in(csv);
      part = read_records_csv(in);
    } else {
      break;
    }
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

}  // namespace pic
