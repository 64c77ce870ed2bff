#pragma once

#include <array>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "hgnn/graph.hpp"
#include "hgnn/tensor.hpp"

namespace hgnn {

enum class ExchangeMode { None, AllToAll, NeighborAllToAll };

const char* to_string(ExchangeMode mode);
ExchangeMode exchange_mode_from_string(const std::string& s);

enum class CollectiveKind : int { AllReduce = 0, AllToAll = 1, NeighborAllToAll = 2 };

struct CommCounters {
  uint64_t calls = 0;
  uint64_t bytes = 0;
};

struct CommReport {
  int64_t num_ranks = 0;
  std::vector<std::array<CommCounters, 3>> per_rank;  // [rank][kind]

  const CommCounters& get(int64_t rank, CollectiveKind kind) const {
    return per_rank[static_cast<size_t>(rank)][static_cast<size_t>(kind)];
  }
  CommCounters total(CollectiveKind kind) const {
    CommCounters t;
    for (const auto& row : per_rank) {
      t.calls += row[static_cast<size_t>(kind)].calls;
      t.bytes += row[static_cast<size_t>(kind)].bytes;
    }
    return t;
  }
};

class RankRuntime;

// Per-rank handle passed to rank bodies. All collectives are blocking
// rendezvous over every rank; results are combined in ascending rank order so
// repeated runs are bitwise identical regardless of thread scheduling.
class RankComm {
 public:
  int32_t rank() const { return rank_; }
  int64_t num_ranks() const;

  double all_reduce_sum(double value);
  void all_reduce_sum(Tensor2D& value);  // in place, same shape on every rank

  // send[d] is the payload for destination rank d (empty vectors allowed).
  // Returns recv where recv[s] is the payload sent by rank s to this rank.
  // AllToAll mode requires every buffer in the system to have one common
  // (padded) size; NeighborAllToAll transmits only non-empty buffers. Byte
  // counters account exactly the doubles transmitted by this rank.
  std::vector<std::vector<double>> all_to_all(ExchangeMode mode,
                                              const std::vector<std::vector<double>>& send);

  // Gathers one value from every rank (parameter-audit helper). Counted as an
  // AllReduce of 8 bytes.
  std::vector<uint64_t> all_gather_u64(uint64_t value);

 private:
  friend class RankRuntime;
  RankComm(RankRuntime* rt, int32_t rank) : rt_(rt), rank_(rank) {}
  RankRuntime* rt_;
  int32_t rank_;
};

// In-process simulation of R ranks. run() executes the body once per rank on
// its own thread; ranks interact only through RankComm collectives
// (superstep discipline). Mismatched collective sequences, cross-rank shape
// disagreements, and ranks exiting mid-collective poison the runtime and
// raise CollectiveError everywhere instead of deadlocking.
class RankRuntime {
 public:
  // threads_per_rank = 0 picks hardware_concurrency / num_ranks for the
  // OpenMP kernels inside each rank body.
  explicit RankRuntime(int64_t num_ranks, int threads_per_rank = 0);

  int64_t num_ranks() const { return num_ranks_; }

  void run(const std::function<void(RankComm&)>& body);

  CommReport report() const;
  void reset_counters();

 private:
  friend class RankComm;

  enum class OpCode : int { ScalarSum = 0, TensorSum = 1, AllToAll = 2, GatherU64 = 3 };

  struct Payload {
    double* scalar = nullptr;
    Tensor2D* tensor = nullptr;
    const std::vector<std::vector<double>>* send = nullptr;
    std::vector<std::vector<double>>* recv = nullptr;
    uint64_t* u64 = nullptr;
    std::vector<uint64_t>* u64_out = nullptr;
  };

  void collective(int32_t rank, CollectiveKind kind, OpCode op, ExchangeMode mode, Payload payload);
  void combine_locked(CollectiveKind kind, OpCode op, ExchangeMode mode);
  void poison_locked(const std::string& msg);
  void retire(int32_t rank);

  int64_t num_ranks_;
  int threads_per_rank_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  uint64_t generation_ = 0;
  bool active_ = false;
  CollectiveKind pending_kind_{};
  OpCode pending_op_{};
  ExchangeMode pending_mode_{};
  int64_t arrived_ = 0;
  std::vector<Payload> slots_;
  std::vector<char> retired_;
  bool poisoned_ = false;
  std::string poison_msg_;
  std::vector<std::array<CommCounters, 3>> counters_;
};

// Copies the coincident rows named by the halo map into the matching halo
// rows on the neighboring ranks. values holds num_local+num_halo rows; local
// rows are untouched. Invoking with ExchangeMode::None is a contract
// violation and throws CollectiveError.
void halo_exchange(RankComm& comm, ExchangeMode mode, const HaloMap& halo, Tensor2D& values);

// Adjoint: halo-row adjoints travel back to the source rank and accumulate
// onto the matching coincident local rows (ascending neighbor order); halo
// adjoint rows are zeroed. Costs one all_to_all, like the forward exchange.
void halo_exchange_adjoint(RankComm& comm, ExchangeMode mode, const HaloMap& halo, Tensor2D& adj);

}  // namespace hgnn
