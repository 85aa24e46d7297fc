#pragma once

#include <cstdint>
#include <unordered_set>
#include <vector>

#include "iamcf/types.hpp"

namespace iamcf {

// Leakage instrumentation. Evaluation-set (user,item) pairs are registered as
// forbidden; every code path that feeds ratings into a model as input checks
// against the set. Trainers additionally verify, per visited rating, that the
// target item's own translation is absent from the representation they used.
class LeakAudit {
 public:
  void forbid(int user, int item) { forbidden_.insert(key(user, item)); }

  void forbid_evaluation_sets(const DatasetSplit& split) {
    for (int u = 0; u < split.num_users; ++u)
      for (const auto& [item, value] : split.evaluation[static_cast<std::size_t>(u)])
        forbid(u, item);
  }

  // Called for every rating consumed as a model input.
  void check_input(int user, int item) {
    if (forbidden_.count(key(user, item))) ++forbidden_reads_;
  }

  void record_self_contribution() { ++self_contributions_; }
  void record_cache_mismatch() { ++cache_mismatches_; }

  std::int64_t forbidden_reads() const { return forbidden_reads_; }
  std::int64_t self_contributions() const { return self_contributions_; }
  std::int64_t cache_mismatches() const { return cache_mismatches_; }

  bool clean() const {
    return forbidden_reads_ == 0 && self_contributions_ == 0 &&
           cache_mismatches_ == 0;
  }

 private:
  static std::uint64_t key(int user, int item) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(user)) << 32) |
           static_cast<std::uint32_t>(item);
  }

  std::unordered_set<std::uint64_t> forbidden_;
  std::int64_t forbidden_reads_ = 0;
  std::int64_t self_contributions_ = 0;
  std::int64_t cache_mismatches_ = 0;
};

// One lazy-L1 clipping event: value before the gradient step, after it, the
// penalty applied, and the clipped result.
struct ClipRecord {
  double alpha_old;
  double stepped;
  double penalty;
  double result;
};

struct TrainHooks {
  LeakAudit* audit = nullptr;
  // When set, every l1_clip_step application during training is appended.
  std::vector<ClipRecord>* clip_log = nullptr;
  // Count of clips that snapped a weight to exact zero.
  std::int64_t clips_to_zero = 0;
};

}  // namespace iamcf
