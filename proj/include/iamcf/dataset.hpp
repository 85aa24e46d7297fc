#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "iamcf/audit.hpp"
#include "iamcf/errors.hpp"
#include "iamcf/types.hpp"

namespace iamcf {

// Ratings plus the original<->dense id mapping produced at ingestion.
struct Dataset {
  SparseRatings ratings;
  std::vector<std::string> user_ids;  // dense index -> original id
  std::vector<std::string> item_ids;
};

namespace detail {

inline std::vector<std::string_view> split_line(std::string_view line,
                                                std::string_view sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = line.find(sep, pos);
    if (next == std::string_view::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + sep.size();
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Detects the separator from the first data line: "::", then comma, then tab.
inline std::string sniff_separator(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open dataset file: " + path);
  std::string line;
  while (std::getline(in, line)) {
    std::string_view v = trim(line);
    if (v.empty() || v.front() == '#') continue;
    if (v.find("::") != std::string_view::npos) return "::";
    if (v.find(',') != std::string_view::npos) return ",";
    return "\t";
  }
  return "\t";
}

}  // namespace detail

// Reads `user<sep>item<sep>rating[<sep>timestamp]` lines. Raw ids are
// remapped to dense 0-based indices in first-appearance order; duplicate
// (user,item) pairs keep the last occurrence. Lines starting with '#' and
// blank lines are ignored. `sep` is "\t", ",", "::" or "auto".
inline Dataset load_dataset(const std::string& path, std::string sep = "\t") {
  if (sep == "auto") sep = detail::sniff_separator(path);
  std::ifstream in(path);
  if (!in) throw FileError("cannot open dataset file: " + path);

  Dataset ds;
  std::unordered_map<std::string, int> user_index, item_index;
  std::vector<RatingTriple> triples;
  std::unordered_map<std::uint64_t, std::size_t> seen;  // (u,i) -> triple slot

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view v = detail::trim(line);
    if (v.empty() || v.front() == '#') continue;
    const auto fields = detail::split_line(v, sep);
    if (fields.size() < 3)
      throw ParseError("line " + std::to_string(line_no) +
                       ": expected user" + sep + "item" + sep +
                       "rating, got '" + std::string(v) + "'");
    const std::string user_key(detail::trim(fields[0]));
    const std::string item_key(detail::trim(fields[1]));
    double raw = 0.0;
    if (user_key.empty() || item_key.empty() ||
        !detail::parse_double(detail::trim(fields[2]), raw))
      throw ParseError("line " + std::to_string(line_no) +
                       ": malformed record '" + std::string(v) + "'");

    auto [uit, unew] = user_index.try_emplace(user_key, static_cast<int>(ds.user_ids.size()));
    if (unew) ds.user_ids.push_back(user_key);
    auto [iit, inew] = item_index.try_emplace(item_key, static_cast<int>(ds.item_ids.size()));
    if (inew) ds.item_ids.push_back(item_key);
    const int u = uit->second;
    const int i = iit->second;

    const std::uint64_t key =
        (static_cast<std::uint64_t>(static_cast<std::uint32_t>(u)) << 32) |
        static_cast<std::uint32_t>(i);
    const int value = raw > 0.0 ? 1 : -1;  // provisional; binarize() re-derives
    auto [sit, fresh] = seen.try_emplace(key, triples.size());
    if (fresh) {
      triples.push_back(RatingTriple{u, i, raw, value});
    } else {
      triples[sit->second].raw = raw;  // last occurrence wins
      triples[sit->second].value = value;
    }
  }
  if (triples.empty()) throw EmptyDatasetError("no ratings in " + path);

  ds.ratings = SparseRatings::from_triples(
      static_cast<int>(ds.user_ids.size()),
      static_cast<int>(ds.item_ids.size()), std::move(triples));
  return ds;
}

// value = +1 iff raw > threshold, else -1 (strict inequality). raw preserved.
// Idempotent for a fixed threshold.
inline SparseRatings binarize(const SparseRatings& data, double threshold) {
  std::vector<RatingTriple> triples = data.triples;
  for (RatingTriple& t : triples) t.value = t.raw > threshold ? 1 : -1;
  return SparseRatings::from_triples(data.num_users, data.num_items,
                                     std::move(triples));
}

// Keeps only the triples of the given users. Dimensions are preserved so
// dense indices stay valid across the split.
inline SparseRatings restrict_to_users(const SparseRatings& data,
                                       const std::vector<UserRole>& role,
                                       UserRole keep) {
  std::vector<RatingTriple> triples;
  for (const RatingTriple& t : data.triples)
    if (role[static_cast<std::size_t>(t.user)] == keep) triples.push_back(t);
  return SparseRatings::from_triples(data.num_users, data.num_items,
                                     std::move(triples));
}

inline SparseRatings merge_triples(const SparseRatings& base,
                                   std::vector<RatingTriple> extra) {
  std::vector<RatingTriple> triples = base.triples;
  triples.insert(triples.end(), extra.begin(), extra.end());
  return SparseRatings::from_triples(base.num_users, base.num_items,
                                     std::move(triples));
}

// Optional ingestion filter: drops users with fewer than `k` ratings and
// re-densifies both index spaces. No-op for k <= 1.
inline Dataset filter_min_user_ratings(const Dataset& ds, int k) {
  if (k <= 1) return ds;
  Dataset out;
  std::vector<int> user_map(static_cast<std::size_t>(ds.ratings.num_users), -1);
  std::vector<int> item_map(static_cast<std::size_t>(ds.ratings.num_items), -1);
  for (int u = 0; u < ds.ratings.num_users; ++u) {
    if (ds.ratings.by_user[static_cast<std::size_t>(u)].size() >=
        static_cast<std::size_t>(k)) {
      user_map[static_cast<std::size_t>(u)] = static_cast<int>(out.user_ids.size());
      out.user_ids.push_back(ds.user_ids[static_cast<std::size_t>(u)]);
    }
  }
  std::vector<RatingTriple> triples;
  for (const RatingTriple& t : ds.ratings.triples) {
    const int u = user_map[static_cast<std::size_t>(t.user)];
    if (u < 0) continue;
    int& i = item_map[static_cast<std::size_t>(t.item)];
    if (i < 0) {
      i = static_cast<int>(out.item_ids.size());
      out.item_ids.push_back(ds.item_ids[static_cast<std::size_t>(t.item)]);
    }
    triples.push_back(RatingTriple{u, i, t.raw, t.value});
  }
  if (triples.empty())
    throw EmptyDatasetError("min-user-ratings filter removed every rating");
  out.ratings = SparseRatings::from_triples(
      static_cast<int>(out.user_ids.size()),
      static_cast<int>(out.item_ids.size()), std::move(triples));
  return out;
}

// Canonical tab-separated dump plus id-map side files, written by `ingest`.
inline void save_canonical(const Dataset& ds, const std::string& base) {
  {
    std::ofstream out(base + ".ratings.tsv");
    if (!out) throw FileError("cannot write " + base + ".ratings.tsv");
    out << "# iamcf canonical ratings v1\n";
    out << "# users " << ds.ratings.num_users << "\n";
    out << "# items " << ds.ratings.num_items << "\n";
    for (const RatingTriple& t : ds.ratings.triples)
      out << t.user << '\t' << t.item << '\t' << t.raw << '\n';
  }
  const auto dump_map = [](const std::vector<std::string>& ids,
                           const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FileError("cannot write " + path);
    out << "# original\tdense\n";
    for (std::size_t k = 0; k < ids.size(); ++k)
      out << ids[k] << '\t' << k << '\n';
  };
  dump_map(ds.user_ids, base + ".users.tsv");
  dump_map(ds.item_ids, base + ".items.tsv");
}

}  // namespace iamcf
