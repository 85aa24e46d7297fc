#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "iamcf/errors.hpp"

namespace iamcf {

// One observed rating. `raw` keeps the original dataset-scale value, `value`
// is the binarized like/dislike in {-1, +1}.
struct RatingTriple {
  int user = 0;
  int item = 0;
  double raw = 0.0;
  int value = 0;
};

// The observed set O with per-user and per-item adjacency views. Immutable
// after construction; safe to share read-only across threads.
struct SparseRatings {
  int num_users = 0;
  int num_items = 0;
  std::vector<RatingTriple> triples;
  // (item, value) per user and (user, value) per item, ascending by index
  std::vector<std::vector<std::pair<int, int>>> by_user;
  std::vector<std::vector<std::pair<int, int>>> by_item;

  static SparseRatings from_triples(int num_users, int num_items,
                                    std::vector<RatingTriple> triples) {
    SparseRatings out;
    out.num_users = num_users;
    out.num_items = num_items;
    out.triples = std::move(triples);
    out.rebuild_index();
    return out;
  }

  void rebuild_index() {
    by_user.assign(static_cast<std::size_t>(num_users), {});
    by_item.assign(static_cast<std::size_t>(num_items), {});
    for (const RatingTriple& t : triples) {
      if (t.user < 0 || t.user >= num_users)
        throw IndexError("user index out of range: " + std::to_string(t.user));
      if (t.item < 0 || t.item >= num_items)
        throw IndexError("item index out of range: " + std::to_string(t.item));
      by_user[static_cast<std::size_t>(t.user)].emplace_back(t.item, t.value);
      by_item[static_cast<std::size_t>(t.item)].emplace_back(t.user, t.value);
    }
    for (auto& v : by_user) std::sort(v.begin(), v.end());
    for (auto& v : by_item) std::sort(v.begin(), v.end());
    for (int u = 0; u < num_users; ++u) {
      const auto& v = by_user[static_cast<std::size_t>(u)];
      for (std::size_t k = 1; k < v.size(); ++k)
        if (v[k].first == v[k - 1].first)
          throw ParseError("duplicate (user,item) pair: user " +
                           std::to_string(u) + " item " +
                           std::to_string(v[k].first));
    }
  }
};

// Training hyperparameters shared by every gradient-descent model.
struct Hyperparams {
  int latent_dim = 10;       // N
  double learning_rate = 0.05;
  double lambda1 = 1e-4;     // L2 coefficient
  double lambda2 = 0.0;      // L1 coefficient (CS-IAM / CSW phase 2)
  int epochs = 20;
  std::uint64_t seed = 1;

  void validate() const {
    if (latent_dim < 1) throw RangeError("latent_dim must be >= 1");
    if (!(learning_rate > 0)) throw RangeError("learning_rate must be > 0");
    if (lambda1 < 0) throw RangeError("lambda1 must be >= 0");
    if (lambda2 < 0) throw RangeError("lambda2 must be >= 0");
    if (epochs < 1) throw RangeError("epochs must be >= 1");
  }
};

// Interview answers of one user: unique items, values in {-1, +1}.
struct AnswerEntry {
  int item = 0;
  int value = 0;
};

struct AnswerList {
  std::vector<AnswerEntry> entries;

  bool contains(int item) const {
    for (const AnswerEntry& e : entries)
      if (e.item == item) return true;
    return false;
  }
};

enum class InterviewSource { learned_alpha, pop, helf, manual };

inline const char* to_string(InterviewSource s) {
  switch (s) {
    case InterviewSource::learned_alpha: return "alpha";
    case InterviewSource::pop: return "pop";
    case InterviewSource::helf: return "helf";
    case InterviewSource::manual: return "manual";
  }
  return "?";
}

// Ordered set of interview items. For learned interviews, `weights` carries
// the alpha value per item (same order); for pop/helf it carries the score.
struct Interview {
  std::vector<int> items;
  InterviewSource source = InterviewSource::manual;
  std::vector<double> weights;

  Interview truncated(std::size_t k) const {
    Interview out = *this;
    if (out.items.size() > k) out.items.resize(k);
    if (out.weights.size() > k) out.weights.resize(k);
    return out;
  }
};

enum class UserRole : std::uint8_t { train = 0, valid = 1, test = 2 };

// User partition plus per-evaluation-user Answer/Evaluation sets.
// answers/evaluation are indexed by user and empty for training users;
// entry lists are stored ascending by item.
struct DatasetSplit {
  int num_users = 0;
  std::uint64_t seed = 0;
  std::vector<int> train_users, valid_users, test_users;  // ascending
  std::vector<UserRole> role;
  std::vector<std::vector<std::pair<int, int>>> answers;     // (item, value)
  std::vector<std::vector<std::pair<int, int>>> evaluation;  // (item, value)
};

enum class UserSet { valid, test };

inline const char* to_string(UserSet s) {
  return s == UserSet::valid ? "valid" : "test";
}

struct MetricsReport {
  double rmse = 0.0;
  double accuracy = 0.0;
  int interview_size = 0;
  int users_evaluated = 0;
  std::string method;
  Hyperparams hyper;
  std::vector<std::uint64_t> seeds;
};

}  // namespace iamcf
