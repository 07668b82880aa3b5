#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <deque>
#include <exception>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "picforest/types.hpp"

namespace pic {

using Bytes = std::vector<std::byte>;

/// Thrown out of World::run when a rank worker failed; carries the rank id.
class RankFailure : public Error {
 public:
  RankFailure(int rank, const std::string& what, std::exception_ptr cause)
      : Error("rank " + std::to_string(rank) + ": " + what), rank_(rank), cause_(std::move(cause)) {}
  int rank() const { return rank_; }
  const std::exception_ptr& cause() const { return cause_; }

 private:
  int rank_;
  std::exception_ptr cause_;
};

/// One line of the protocol trace: `step,phase,src,dst,count,bytes`.
struct TraceRecord {
  std::int64_t step;
  std::string phase;
  int src;
  int dst;
  std::uint64_t count;
  std::uint64_t bytes;
};

class World;

/// Per-rank handle to the in-process message-passing runtime. Point-to-point
/// messages are FIFO per (sender, receiver) pair; sends never block.
class Comm {
 public:
  int rank() const { return rank_; }
  int size() const;

  void send(int dst, int tag, Bytes payload, std::uint64_t record_count = 0);
  /// Blocks for the next message from src; throws ProtocolError on a tag mismatch.
  Bytes recv(int src, int tag);

  void barrier();

  std::vector<Bytes> allgather_bytes(std::span<const std::byte> mine);

  template <class T>
  std::vector<T> allgather(const T& value) {
    static_assert(std::is_trivially_copyable_v<T>);
    Bytes b(sizeof(T));
    std::memcpy(b.data(), &value, sizeof(T));
    const auto all = allgather_bytes(b);
    std::vector<T> out(all.size());
    for (std::size_t r = 0; r < all.size(); ++r) std::memcpy(&out[r], all[r].data(), sizeof(T));
    return out;
  }

  /// Sums in rank order, so results are identical on every rank and run.
  double allreduce_sum(double v);
  std::uint64_t allreduce_sum(std::uint64_t v);
  double allreduce_max(double v);
  double allreduce_min(double v);
  std::uint64_t exclusive_scan(std::uint64_t v);

  /// Labels subsequent trace records.
  void set_trace_context(std::int64_t step, std::string phase);

 private:
  friend class World;
  Comm(World& world, int rank) : world_(&world), rank_(rank) {}

  World* world_;
  int rank_;
  std::int64_t trace_step_ = -1;
  std::string trace_phase_;
  std::vector<TraceRecord> trace_;
};

/// Runs P rank workers as threads.
class World {
 public:
  explicit World(int ranks, bool record_trace = false);
  ~World();
  World(const World&) = delete;
  World& operator=(const World&) = delete;

  int size() const { return size_; }

  /// Runs fn on every rank and joins. If any rank throws, the others are
  /// released from blocking calls and the first failure is rethrown as
  /// RankFailure.
  void run(const std::function<void(Comm&)>& fn);

  /// Trace records of all runs so far, ordered by rank then send order.
  const std::vector<TraceRecord>& trace() const { return trace_; }
  void write_trace_csv(std::ostream& out) const;

 private:
  friend class Comm;
  struct Inbox {
    std::mutex mutex;
    std::condition_variable cv;
    std::vector<std::deque<std::pair<int, Bytes>>> from;
  };

  void barrier_wait();
  void check_abort() const;
  void abort();

  int size_;
  bool record_trace_;
  std::vector<std::unique_ptr<Inbox>> inboxes_;

  std::mutex barrier_mutex_;
  std::condition_variable barrier_cv_;
  int barrier_count_ = 0;
  std::uint64_t barrier_generation_ = 0;
  std::atomic<bool> aborted_{false};

  std::vector<Bytes> slots_;
  std::vector<TraceRecord> trace_;
};

}  // namespace pic
