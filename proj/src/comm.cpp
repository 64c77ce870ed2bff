#include "hgnn/comm.hpp"

#include <algorithm>
#include <cstring>
#include <exception>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "hgnn/error.hpp"

namespace hgnn {

const char* to_string(ExchangeMode mode) {
  switch (mode) {
    case ExchangeMode::None: return "none";
    case ExchangeMode::AllToAll: return "a2a";
    case ExchangeMode::NeighborAllToAll: return "na2a";
  }
  return "?";
}

ExchangeMode exchange_mode_from_string(const std::string& s) {
  if (s == "none") return ExchangeMode::None;
  if (s == "a2a") return ExchangeMode::AllToAll;
  if (s == "na2a") return ExchangeMode::NeighborAllToAll;
  throw ConfigError("unknown exchange mode '" + s + "' (expected none|a2a|na2a)");
}

// ---------------------------------------------------------------------------
// RankRuntime
// ---------------------------------------------------------------------------

RankRuntime::RankRuntime(int64_t num_ranks, int threads_per_rank)
    : num_ranks_(num_ranks), threads_per_rank_(threads_per_rank) {
  if (num_ranks < 1) throw ConfigError("RankRuntime: need at least one rank");
  slots_.resize(static_cast<size_t>(num_ranks));
  retired_.assign(static_cast<size_t>(num_ranks), 0);
  counters_.assign(static_cast<size_t>(num_ranks), {});
}

void RankRuntime::poison_locked(const std::string& msg) {
  if (!poisoned_) {
    poisoned_ = true;
    poison_msg_ = msg;
  }
  cv_.notify_all();
}

void RankRuntime::retire(int32_t rank) {
  std::lock_guard<std::mutex> lk(mu_);
  retired_[static_cast<size_t>(rank)] = 1;
  if (active_)
    poison_locked("rank " + std::to_string(rank) + " exited while a collective was pending");
}

void RankRuntime::run(const std::function<void(RankComm&)>& body) {
  {
    std::lock_guard<std::mutex> lk(mu_);
    poisoned_ = false;
    poison_msg_.clear();
    active_ = false;
    arrived_ = 0;
    std::fill(retired_.begin(), retired_.end(), 0);
  }
  std::vector<std::exception_ptr> errors(static_cast<size_t>(num_ranks_));
  std::vector<std::thread> threads;
  threads.reserve(static_cast<size_t>(num_ranks_));
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const int omp_threads = threads_per_rank_ > 0
                              ? threads_per_rank_
                              : std::max(1, static_cast<int>(hw / static_cast<unsigned>(num_ranks_)));
  for (int32_t r = 0; r < num_ranks_; ++r) {
    threads.emplace_back([&, r]() {
#ifdef _OPENMP
      omp_set_num_threads(omp_threads);
#else
      (void)omp_threads;
#endif
      RankComm comm(this, r);
      try {
        body(comm);
      } catch (...) {
        errors[static_cast<size_t>(r)] = std::current_exception();
      }
      retire(r);
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void RankRuntime::combine_locked(CollectiveKind kind, OpCode op, ExchangeMode mode) {
  const int64_t R = num_ranks_;
  switch (op) {
    case OpCode::ScalarSum: {
      double sum = 0.0;
      for (int64_t r = 0; r < R; ++r) sum += *slots_[static_cast<size_t>(r)].scalar;
      for (int64_t r = 0; r < R; ++r) {
        *slots_[static_cast<size_t>(r)].scalar = sum;
        auto& c = counters_[static_cast<size_t>(r)][static_cast<size_t>(kind)];
        c.calls += 1;
        c.bytes += sizeof(double);
      }
      break;
    }
    case OpCode::TensorSum: {
      Tensor2D* first = slots_[0].tensor;
      for (int64_t r = 1; r < R; ++r)
        if (!slots_[static_cast<size_t>(r)].tensor->same_shape(*first))
          throw CollectiveError("all_reduce_sum: tensor shape mismatch across ranks");
      Tensor2D sum = *first;
      for (int64_t r = 1; r < R; ++r) {
        const Tensor2D& t = *slots_[static_cast<size_t>(r)].tensor;
        for (int64_t i = 0; i < sum.size(); ++i) sum.data()[i] += t.data()[i];
      }
      for (int64_t r = 0; r < R; ++r) {
        *slots_[static_cast<size_t>(r)].tensor = sum;
        auto& c = counters_[static_cast<size_t>(r)][static_cast<size_t>(kind)];
        c.calls += 1;
        c.bytes += static_cast<uint64_t>(sum.size()) * sizeof(double);
      }
      break;
    }
    case OpCode::AllToAll: {
      for (int64_t r = 0; r < R; ++r)
        if (static_cast<int64_t>(slots_[static_cast<size_t>(r)].send->size()) != R)
          throw CollectiveError("all_to_all: send buffer list must have one entry per rank");
      if (mode == ExchangeMode::AllToAll) {
        // uniform (padded) buffer sizes across the whole system
        const size_t expect = (*slots_[0].send)[0].size();
        for (int64_t r = 0; r < R; ++r)
          for (int64_t d = 0; d < R; ++d)
            if ((*slots_[static_cast<size_t>(r)].send)[static_cast<size_t>(d)].size() != expect)
              throw CollectiveError(
                  "all_to_all (A2A): buffers must be padded to one common size");
      }
      for (int64_t r = 0; r < R; ++r) {
        auto& recv = *slots_[static_cast<size_t>(r)].recv;
        recv.resize(static_cast<size_t>(R));
        uint64_t sent = 0;
        for (int64_t d = 0; d < R; ++d) {
          recv[static_cast<size_t>(d)] = (*slots_[static_cast<size_t>(d)].send)[static_cast<size_t>(r)];
          sent += (*slots_[static_cast<size_t>(r)].send)[static_cast<size_t>(d)].size();
        }
        auto& c = counters_[static_cast<size_t>(r)][static_cast<size_t>(kind)];
        c.calls += 1;
        c.bytes += sent * sizeof(double);
      }
      break;
    }
    case OpCode::GatherU64: {
      std::vector<uint64_t> all(static_cast<size_t>(R));
      for (int64_t r = 0; r < R; ++r) all[static_cast<size_t>(r)] = *slots_[static_cast<size_t>(r)].u64;
      for (int64_t r = 0; r < R; ++r) {
        *slots_[static_cast<size_t>(r)].u64_out = all;
        auto& c = counters_[static_cast<size_t>(r)][static_cast<size_t>(kind)];
        c.calls += 1;
        c.bytes += sizeof(uint64_t);
      }
      break;
    }
  }
}

void RankRuntime::collective(int32_t rank, CollectiveKind kind, OpCode op, ExchangeMode mode,
                             Payload payload) {
  std::unique_lock<std::mutex> lk(mu_);
  if (poisoned_) throw CollectiveError("collective aborted: " + poison_msg_);
  for (int64_t r = 0; r < num_ranks_; ++r)
    if (retired_[static_cast<size_t>(r)]) {
      poison_locked("rank " + std::to_string(rank) + " entered a collective after rank " +
                    std::to_string(r) + " already finished (mismatched collective sequences)");
      throw CollectiveError("collective aborted: " + poison_msg_);
    }
  if (!active_) {
    active_ = true;
    pending_kind_ = kind;
    pending_op_ = op;
    pending_mode_ = mode;
    arrived_ = 0;
  } else if (pending_kind_ != kind || pending_op_ != op || pending_mode_ != mode) {
    poison_locked("mismatched collective sequence: rank " + std::to_string(rank) +
                  " posted a different collective than its peers");
    throw CollectiveError("collective aborted: " + poison_msg_);
  }
  slots_[static_cast<size_t>(rank)] = payload;
  arrived_ += 1;
  if (arrived_ == num_ranks_) {
    try {
      combine_locked(kind, op, mode);
    } catch (const std::exception& e) {
      active_ = false;
      poison_locked(e.what());
      throw CollectiveError("collective aborted: " + poison_msg_);
    }
    active_ = false;
    generation_ += 1;
    cv_.notify_all();
    return;
  }
  const uint64_t my_gen = generation_;
  cv_.wait(lk, [&] { return generation_ > my_gen || poisoned_; });
  if (generation_ == my_gen && poisoned_)
    throw CollectiveError("collective aborted: " + poison_msg_);
}

CommReport RankRuntime::report() const {
  std::lock_guard<std::mutex> lk(mu_);
  CommReport rep;
  rep.num_ranks = num_ranks_;
  rep.per_rank = counters_;
  return rep;
}

void RankRuntime::reset_counters() {
  std::lock_guard<std::mutex> lk(mu_);
  counters_.assign(static_cast<size_t>(num_ranks_), {});
}

// ---------------------------------------------------------------------------
// RankComm
// ---------------------------------------------------------------------------

int64_t RankComm::num_ranks() const { return rt_->num_ranks(); }

double RankComm::all_reduce_sum(double value) {
  RankRuntime::Payload p;
  p.scalar = &value;
  rt_->collective(rank_, CollectiveKind::AllReduce, RankRuntime::OpCode::ScalarSum,
                  ExchangeMode::None, p);
  return value;
}

void RankComm::all_reduce_sum(Tensor2D& value) {
  RankRuntime::Payload p;
  p.tensor = &value;
  rt_->collective(rank_, CollectiveKind::AllReduce, RankRuntime::OpCode::TensorSum,
                  ExchangeMode::None, p);
}

std::vector<std::vector<double>> RankComm::all_to_all(
    ExchangeMode mode, const std::vector<std::vector<double>>& send) {
  if (mode == ExchangeMode::None)
    throw CollectiveError("all_to_all: ExchangeMode::None is not a communication mode");
  std::vector<std::vector<double>> recv;
  RankRuntime::Payload p;
  p.send = &send;
  p.recv = &recv;
  const CollectiveKind kind =
      mode == ExchangeMode::AllToAll ? CollectiveKind::AllToAll : CollectiveKind::NeighborAllToAll;
  rt_->collective(rank_, kind, RankRuntime::OpCode::AllToAll, mode, p);
  return recv;
}

std::vector<uint64_t> RankComm::all_gather_u64(uint64_t value) {
  std::vector<uint64_t> out;
  RankRuntime::Payload p;
  p.u64 = &value;
  p.u64_out = &out;
  rt_->collective(rank_, CollectiveKind::AllReduce, RankRuntime::OpCode::GatherU64,
                  ExchangeMode::None, p);
  return out;
}

// ---------------------------------------------------------------------------
// halo exchange
// ---------------------------------------------------------------------------

namespace {

void check_mode(ExchangeMode mode) {
  if (mode == ExchangeMode::None)
    throw CollectiveError("halo_exchange: invoked with ExchangeMode::None (caller must skip)");
}

}  // namespace

void halo_exchange(RankComm& comm, ExchangeMode mode, const HaloMap& halo, Tensor2D& values) {
  check_mode(mode);
  const int64_t R = comm.num_ranks();
  const int64_t width = values.cols();
  const size_t padded = static_cast<size_t>(halo.max_buffer_rows * width);

  std::vector<std::vector<double>> send(static_cast<size_t>(R));
  for (size_t n = 0; n < halo.neighbors.size(); ++n) {
    const auto& mask = halo.send_masks[n];
    auto& buf = send[static_cast<size_t>(halo.neighbors[n])];
    buf.resize(mask.size() * static_cast<size_t>(width));
    for (size_t t = 0; t < mask.size(); ++t)
      std::memcpy(buf.data() + t * static_cast<size_t>(width), values.row(mask[t]),
                  sizeof(double) * static_cast<size_t>(width));
    if (mode == ExchangeMode::AllToAll) buf.resize(padded, 0.0);
  }
  if (mode == ExchangeMode::AllToAll)
    for (auto& buf : send) buf.resize(padded, 0.0);

  const auto recv = comm.all_to_all(mode, send);

  for (size_t n = 0; n < halo.neighbors.size(); ++n) {
    const auto& mask = halo.recv_masks[n];
    const auto& buf = recv[static_cast<size_t>(halo.neighbors[n])];
    const size_t expect = mask.size() * static_cast<size_t>(width);
    if (buf.size() < expect)
      throw CollectiveError("halo_exchange: buffer from rank " +
                            std::to_string(halo.neighbors[n]) + " has " +
                            std::to_string(buf.size()) + " values, expected " +
                            std::to_string(expect));
    for (size_t t = 0; t < mask.size(); ++t)
      std::memcpy(values.row(mask[t]), buf.data() + t * static_cast<size_t>(width),
                  sizeof(double) * static_cast<size_t>(width));
  }
}

void halo_exchange_adjoint(RankComm& comm, ExchangeMode mode, const HaloMap& halo, Tensor2D& adj) {
  check_mode(mode);
  const int64_t R = comm.num_ranks();
  const int64_t width = adj.cols();
  const size_t padded = static_cast<size_t>(halo.max_buffer_rows * width);

  // reverse roles: halo rows travel back to their owners
  std::vector<std::vector<double>> send(static_cast<size_t>(R));
  for (size_t n = 0; n < halo.neighbors.size(); ++n) {
    const auto& mask = halo.recv_masks[n];
    auto& buf = send[static_cast<size_t>(halo.neighbors[n])];
    buf.resize(mask.size() * static_cast<size_t>(width));
    for (size_t t = 0; t < mask.size(); ++t)
      std::memcpy(buf.data() + t * static_cast<size_t>(width), adj.row(mask[t]),
                  sizeof(double) * static_cast<size_t>(width));
    if (mode == ExchangeMode::AllToAll) buf.resize(padded, 0.0);
  }
  if (mode == ExchangeMode::AllToAll)
    for (auto& buf : send) buf.resize(padded, 0.0);

  const auto recv = comm.all_to_all(mode, send);

  // the overwritten pre-exchange halo rows contribute nothing upstream
  for (size_t n = 0; n < halo.neighbors.size(); ++n)
    for (const int32_t row : halo.recv_masks[n])
      std::memset(adj.row(row), 0, sizeof(double) * static_cast<size_t>(width));

  for (size_t n = 0; n < halo.neighbors.size(); ++n) {
    const auto& mask = halo.send_masks[n];
    const auto& buf = recv[static_cast<size_t>(halo.neighbors[n])];
    const size_t expect = mask.size() * static_cast<size_t>(width);
    if (buf.size() < expect)
      throw CollectiveError("halo_exchange_adjoint: short buffer from rank " +
                            std::to_string(halo.neighbors[n]));
    for (size_t t = 0; t < mask.size(); ++t) {
      double* dst = adj.row(mask[t]);
      const double* src = buf.data() + t * static_cast<size_t>(width);
      for (int64_t c = 0; c < width; ++c) dst[c] += src[c];
    }
  }
}

}  // namespace hgnn
