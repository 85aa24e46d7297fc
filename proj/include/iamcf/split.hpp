#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "iamcf/errors.hpp"
#include "iamcf/rng.hpp"
#include "iamcf/types.hpp"

namespace iamcf {

// Seeded user partition: floor(f0*U) train, floor(f1*U) valid, remainder
// test. Membership comes from one Fisher-Yates shuffle of [0, U); the stored
// per-role lists are sorted ascending.
inline DatasetSplit split_users(const SparseRatings& data, std::uint64_t seed,
                                std::array<double, 3> fractions = {0.5, 0.25,
                                                                   0.25}) {
  const int num_users = data.num_users;
  if (num_users < 4)
    throw TooFewUsersError("need at least 4 users, got " +
                           std::to_string(num_users));
  if (!(fractions[0] > 0) || !(fractions[1] > 0) ||
      fractions[0] + fractions[1] >= 1.0)
    throw RangeError("invalid split fractions");

  std::vector<int> order(static_cast<std::size_t>(num_users));
  for (int u = 0; u < num_users; ++u) order[static_cast<std::size_t>(u)] = u;
  Rng rng(derive_seed(seed, seed_tag::user_split));
  rng.shuffle(order);

  const auto n_train =
      static_cast<std::size_t>(std::floor(fractions[0] * num_users));
  const auto n_valid =
      static_cast<std::size_t>(std::floor(fractions[1] * num_users));

  DatasetSplit split;
  split.num_users = num_users;
  split.seed = seed;
  split.role.assign(static_cast<std::size_t>(num_users), UserRole::train);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const UserRole r = k < n_train                      ? UserRole::train
                       : k < n_train + n_valid          ? UserRole::valid
                                                        : UserRole::test;
    split.role[static_cast<std::size_t>(order[k])] = r;
  }
  for (int u = 0; u < num_users; ++u) {
    switch (split.role[static_cast<std::size_t>(u)]) {
      case UserRole::train: split.train_users.push_back(u); break;
      case UserRole::valid: split.valid_users.push_back(u); break;
      case UserRole::test: split.test_users.push_back(u); break;
    }
  }
  split.answers.assign(static_cast<std::size_t>(num_users), {});
  split.evaluation.assign(static_cast<std::size_t>(num_users), {});
  return split;
}

// For each valid/test user, a seeded shuffle of that user's ratings is cut at
// ceil(fraction * n_u): first part Answer Set, rest Evaluation Set. Users
// with fewer than 2 ratings get an empty Answer Set. Both halves are stored
// sorted ascending by item. The per-user stream is derived from (seed, user),
// so results do not depend on iteration order.
inline DatasetSplit split_answers(const SparseRatings& data, DatasetSplit split,
                                  std::uint64_t seed, double fraction = 0.5) {
  if (!(fraction > 0.0) || !(fraction >= 0.0 && fraction < 1.0 + 1e-12))
    throw RangeError("answer fraction must be in (0, 1]");
  for (int u = 0; u < split.num_users; ++u) {
    if (split.role[static_cast<std::size_t>(u)] == UserRole::train) continue;
    auto ratings = data.by_user[static_cast<std::size_t>(u)];
    auto& ans = split.answers[static_cast<std::size_t>(u)];
    auto& ev = split.evaluation[static_cast<std::size_t>(u)];
    ans.clear();
    ev.clear();
    if (ratings.size() < 2) {
      ev = ratings;
      continue;
    }
    Rng rng(derive_seed(seed, seed_tag::answer_split,
                        static_cast<std::uint64_t>(u)));
    rng.shuffle(ratings);
    const auto cut = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(ratings.size())));
    ans.assign(ratings.begin(), ratings.begin() + static_cast<std::ptrdiff_t>(cut));
    ev.assign(ratings.begin() + static_cast<std::ptrdiff_t>(cut), ratings.end());
    std::sort(ans.begin(), ans.end());
    std::sort(ev.begin(), ev.end());
  }
  return split;
}

inline DatasetSplit make_split(const SparseRatings& data, std::uint64_t seed) {
  return split_answers(data, split_users(data, seed), seed);
}

// ---- manifest (plain text, replayable) ----

inline void save_split_manifest(const DatasetSplit& split,
                                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FileError("cannot write split manifest: " + path);
  out << "# iamcf split manifest v1\n";
  out << "# seed " << split.seed << "\n";
  out << "# users " << split.num_users << "\n";
  for (int u : split.train_users) out << "train\t" << u << '\n';
  for (int u : split.valid_users) out << "valid\t" << u << '\n';
  for (int u : split.test_users) out << "test\t" << u << '\n';
  for (int u = 0; u < split.num_users; ++u) {
    for (const auto& [item, value] : split.answers[static_cast<std::size_t>(u)])
      out << "answer\t" << u << '\t' << item << '\t' << value << '\n';
    for (const auto& [item, value] : split.evaluation[static_cast<std::size_t>(u)])
      out << "eval\t" << u << '\t' << item << '\t' << value << '\n';
  }
}

inline DatasetSplit load_split_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open split manifest: " + path);
  DatasetSplit split;
  std::string line;
  std::size_t line_no = 0;
  bool sized = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string key;
      hs >> key;
      if (key == "seed") hs >> split.seed;
      if (key == "users") {
        hs >> split.num_users;
        split.role.assign(static_cast<std::size_t>(split.num_users),
                          UserRole::train);
        split.answers.assign(static_cast<std::size_t>(split.num_users), {});
        split.evaluation.assign(static_cast<std::size_t>(split.num_users), {});
        sized = true;
      }
      continue;
    }
    if (!sized)
      throw FormatError("split manifest missing '# users' header: " + path);
    std::istringstream ls(line);
    std::string kind;
    int u = -1;
    ls >> kind >> u;
    if (!ls || u < 0 || u >= split.num_users)
      throw FormatError("split manifest line " + std::to_string(line_no) +
                        ": bad record");
    const auto uz = static_cast<std::size_t>(u);
    if (kind == "train") {
      split.role[uz] = UserRole::train;
      split.train_users.push_back(u);
    } else if (kind == "valid") {
      split.role[uz] = UserRole::valid;
      split.valid_users.push_back(u);
    } else if (kind == "test") {
      split.role[uz] = UserRole::test;
      split.test_users.push_back(u);
    } else if (kind == "answer" || kind == "eval") {
      int item = -1, value = 0;
      ls >> item >> value;
      if (!ls || item < 0 || (value != 1 && value != -1))
        throw FormatError("split manifest line " + std::to_string(line_no) +
                          ": bad " + kind + " record");
      (kind == "answer" ? split.answers[uz] : split.evaluation[uz])
          .emplace_back(item, value);
    } else {
      throw FormatError("split manifest line " + std::to_string(line_no) +
                        ": unknown record '" + kind + "'");
    }
  }
  const std::size_t total = split.train_users.size() +
                            split.valid_users.size() +
                            split.test_users.size();
  if (!sized || total != static_cast<std::size_t>(split.num_users))
    throw FormatError("split manifest does not cover every user: " + path);
  return split;
}

}  // namespace iamcf
