#include "picforest/parallel/runtime.hpp"

#include <algorithm>
#include <ostream>
#include <thread>

namespace pic {
namespace {

/// Unwinds a rank that was released because another rank failed.
struct RankAborted {};

}  // namespace

World::World(int ranks, bool record_trace) : size_(ranks), record_trace_(record_trace) {
  if (ranks < 1) throw ConfigError("rank count must be >= 1");
  for (int r = 0; r < ranks; ++r) {
    inboxes_.push_back(std::make_unique<Inbox>());
    inboxes_.back()->from.resize(static_cast<std::size_t>(ranks));
  }
  slots_.resize(static_cast<std::size_t>(ranks));
}

World::~World() = default;

void World::check_abort() const {
  if (aborted_.load()) throw RankAborted{};
}

void World::abort() {
  aborted_.store(true);
  {
    std::lock_guard lock(barrier_mutex_);
  }
  barrier_cv_.notify_all();
  for (auto& inbox : inboxes_) {
    std::lock_guard lock(inbox->mutex);
    inbox->cv.notify_all();
  }
}

void World::barrier_wait() {
  std::unique_lock lock(barrier_mutex_);
  check_abort();
  const std::uint64_t gen = barrier_generation_;
  if (++barrier_count_ == size_) {
    barrier_count_ = 0;
    ++barrier_generation_;
    barrier_cv_.notify_all();
    return;
  }
  barrier_cv_.wait(lock, [&] { return barrier_generation_ != gen || aborted_.load(); });
  if (barrier_generation_ == gen) throw RankAborted{};
}

void World::run(const std::function<void(Comm&)>& fn) {
  aborted_.store(false);
  barrier_count_ = 0;
  for (auto& inbox : inboxes_)
    for (auto& q : inbox->from) q.clear();

  std::vector<std::unique_ptr<Comm>> comms;
  for (int r = 0; r < size_; ++r) comms.push_back(std::unique_ptr<Comm>(new Comm(*this, r)));

  std::mutex failure_mutex;
  int failed_rank = -1;
  std::exception_ptr failure;
  std::string failure_what;

  auto body = [&](int r) {
    try {
      fn(*comms[static_cast<std::size_t>(r)]);
    } catch (const RankAborted&) {
      // Another rank failed first.
    } catch (const std::exception& e) {
      {
        std::lock_guard lock(failure_mutex);
        if (!failure) {
          failure = std::current_exception();
          failed_rank = r;
          failure_what = e.what();
        }
      }
      abort();
    } catch (...) {
      {
        std::lock_guard lock(failure_mutex);
        if (!failure) {
          failure = std::current_exception();
          failed_rank = r;
          failure_what = "unknown exception";
        }
      }
      abort();
    }
  };

  if (size_ == 1) {
    body(0);
  } else {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(size_));
    for (int r = 0; r < size_; ++r) threads.emplace_back(body, r);
    for (auto& t : threads) t.join();
  }

  if (record_trace_)
    for (auto& c : comms) trace_.insert(trace_.end(), c->trace_.begin(), c->trace_.end());
  if (failure) throw RankFailure(failed_rank, failure_what, failure);
}

void World::write_trace_csv(std::ostream& out) const {
  out << "step,phase,src,dst,count,bytes\n";
  for (const TraceRecord& t : trace_)
    out << t.step << ',' << t.phase << ',' << t.src << ',' << t.dst << ',' << t.count << ','
        << t.bytes << '\n';
}

int Comm::size() const { return world_->size_; }

void Comm::send(int dst, int tag, Bytes payload, std::uint64_t record_count) {
  if (dst < 0 || dst >= size()) throw ProtocolError("send to invalid rank " + std::to_string(dst));
  world_->check_abort();
  if (world_->record_trace_)
    trace_.push_back({trace_step_, trace_phase_, rank_, dst, record_count, payload.size()});
  World::Inbox& inbox = *world_->inboxes_[static_cast<std::size_t>(dst)];
  {
    std::lock_guard lock(inbox.mutex);
    inbox.from[static_cast<std::size_t>(rank_)].emplace_back(tag, std::move(payload));
  }
  inbox.cv.notify_all();
}

Bytes Comm::recv(int src, int tag) {
  if (src < 0 || src >= size()) throw ProtocolError("receive from invalid rank " + std::to_string(src));
  World::Inbox& inbox = *world_->inboxes_[static_cast<std::size_t>(rank_)];
  auto& queue = inbox.from[static_cast<std::size_t>(src)];
  std::unique_lock lock(inbox.mutex);
  inbox.cv.wait(lock, [&] { return !queue.empty() || world_->aborted_.load(); });
  if (queue.empty()) throw RankAborted{};
  auto [got_tag, payload] = std::move(queue.front());
  queue.pop_front();
  if (got_tag != tag)
    throw ProtocolError("expected tag " + std::to_string(tag) + " from rank " + std::to_string(src) +
                        ", got " + std::to_string(got_tag));
  return payload;
}

void Comm::barrier() { world_->barrier_wait(); }

std::vector<Bytes> Comm::allgather_bytes(std::span<const std::byte> mine) {
  world_->slots_[static_cast<std::size_t>(rank_)].assign(mine.begin(), mine.end());
  world_->barrier_wait();
  std::vector<Bytes> out = world_->slots_;
  world_->barrier_wait();
  return out;
}

double Comm::allreduce_sum(double v) {
  double s = 0.0;
  for (double x : allgather(v)) s += x;
  return s;
}

std::uint64_t Comm::allreduce_sum(std::uint64_t v) {
  std::uint64_t s = 0;
  for (std::uint64_t x : allgather(v)) s += x;
  return s;
}

double Comm::allreduce_max(double v) {
  const auto all = allgather(v);
  return *std::max_element(all.begin(), all.end());
}

double Comm::allreduce_min(double v) {
  const auto all = allgather(v);
  return *std::min_element(all.begin(), all.end());
}

std::uint64_t Comm::exclusive_scan(std::uint64_t v) {
  const auto all = allgather(v);
  std::uint64_t s = 0;
  for (int r = 0; r < rank_; ++r) s += all[static_cast<std::size_t>(r)];
  return s;
}

void Comm::set_trace_context(std::int64_t step, std::string phase) {
  trace_step_ = step;
  trace_phase_ = std::move(phase);
}

}  // namespace pic
