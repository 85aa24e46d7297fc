#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "iamcf/audit.hpp"
#include "iamcf/errors.hpp"
#include "iamcf/mf.hpp"
#include "iamcf/rng.hpp"
#include "iamcf/types.hpp"

namespace iamcf {

enum class IamMode { warm, cold, csw };

inline const char* to_string(IamMode m) {
  switch (m) {
    case IamMode::warm: return "warm";
    case IamMode::cold: return "cold";
    case IamMode::csw: return "csw";
  }
  return "?";
}

// Inductive additive model. A user is represented by psi0 plus one learned
// translation per answered item, the translation depending on the item and on
// the rating sign. alpha scales the translations and, driven sparse by L1,
// selects the interview items; it is all-ones in warm mode.
struct IamModel {
  IamMode mode = IamMode::warm;
  int num_items = 0;
  int dim = 0;
  std::vector<double> item_vecs;  // q_i, I x N row-major
  std::vector<double> psi0;       // N
  std::vector<double> psi_pos;    // I x N, translation for a like
  std::vector<double> psi_neg;    // I x N, translation for a dislike
  std::vector<double> alpha;      // I
  Hyperparams hyper;
  std::vector<double> epoch_loss;         // data-term mse per epoch
  std::vector<double> phase2_epoch_loss;  // csw alpha phase

  std::span<const double> q(int i) const {
    return {item_vecs.data() + static_cast<std::size_t>(i) * dim,
            static_cast<std::size_t>(dim)};
  }
  std::span<const double> psi(int i, int value) const {
    const auto& arr = value > 0 ? psi_pos : psi_neg;
    return {arr.data() + static_cast<std::size_t>(i) * dim,
            static_cast<std::size_t>(dim)};
  }
};

// Lazy L1 step: shrink the post-gradient weight toward zero by `penalty`,
// snapping to exact zero when the shrink reaches or crosses it. The sign of
// the post-gradient value is never flipped. `alpha_old` is carried for the
// clip log only.
inline double l1_clip_step(double alpha_old, double alpha_after_gradient,
                           double penalty) {
  (void)alpha_old;
  if (alpha_after_gradient > 0.0)
    return std::max(0.0, alpha_after_gradient - penalty);
  if (alpha_after_gradient < 0.0)
    return std::min(0.0, alpha_after_gradient + penalty);
  return 0.0;
}

namespace detail {

inline double answer_coeff(const IamModel& m, int item) {
  return m.mode == IamMode::warm
             ? 1.0
             : m.alpha[static_cast<std::size_t>(item)];
}

inline void check_answers(const IamModel& m, const AnswerList& answers) {
  for (const AnswerEntry& e : answers.entries) {
    if (e.item < 0 || e.item >= m.num_items)
      throw IndexError("answer item out of range: " + std::to_string(e.item));
    if (e.value != 1 && e.value != -1)
      throw RangeError("answer value must be +1 or -1");
  }
}

}  // namespace detail

// psi0 plus the scaled translations of the given answers. Answers on items
// with alpha == 0 contribute nothing (cold/csw); summation runs in ascending
// item order so the result is independent of the input order, bitwise.
inline std::vector<double> iam_representation(const IamModel& m,
                                              const AnswerList& answers) {
  detail::check_answers(m, answers);
  std::vector<AnswerEntry> sorted = answers.entries;
  std::sort(sorted.begin(), sorted.end(),
            [](const AnswerEntry& a, const AnswerEntry& b) {
              return a.item < b.item;
            });
  for (std::size_t k = 1; k < sorted.size(); ++k)
    if (sorted[k].item == sorted[k - 1].item)
      throw RangeError("duplicate answer for item " +
                       std::to_string(sorted[k].item));
  std::vector<double> rep = m.psi0;
  for (const AnswerEntry& e : sorted) {
    const double c = detail::answer_coeff(m, e.item);
    if (c == 0.0) continue;
    const auto psi = m.psi(e.item, e.value);
    for (int k = 0; k < m.dim; ++k) rep[static_cast<std::size_t>(k)] += c * psi[static_cast<std::size_t>(k)];
  }
  return rep;
}

// Dot product against an already-built raw representation. In csw mode the
// representation is squashed elementwise by tanh first.
inline double iam_predict_with_rep(const IamModel& m,
                                   std::span<const double> rep, int i) {
  if (i < 0 || i >= m.num_items)
    throw IndexError("iam_predict: item out of range");
  const auto qi = m.q(i);
  double s = 0.0;
  if (m.mode == IamMode::csw) {
    for (int k = 0; k < m.dim; ++k)
      s += qi[static_cast<std::size_t>(k)] * std::tanh(rep[static_cast<std::size_t>(k)]);
  } else {
    for (int k = 0; k < m.dim; ++k)
      s += qi[static_cast<std::size_t>(k)] * rep[static_cast<std::size_t>(k)];
  }
  return s;
}

// Predicted rating for item i. If i itself appears in `answers` its own
// translation is left out of the representation (leave-one-out).
inline double iam_predict(const IamModel& m, const AnswerList& answers, int i) {
  if (i < 0 || i >= m.num_items)
    throw IndexError("iam_predict: item out of range");
  AnswerList filtered;
  filtered.entries.reserve(answers.entries.size());
  for (const AnswerEntry& e : answers.entries)
    if (e.item != i) filtered.entries.push_back(e);
  const std::vector<double> rep = iam_representation(m, filtered);
  return iam_predict_with_rep(m, rep, i);
}

// Incremental representation update for one new rating. Interview items keep
// their learned alpha; in csw mode items outside the interview (alpha == 0)
// use the raw warm translation.
inline std::vector<double> iam_update(std::span<const double> rep,
                                      const IamModel& m, int item, int value) {
  if (item < 0 || item >= m.num_items)
    throw IndexError("iam_update: item out of range");
  if (value != 1 && value != -1)
    throw RangeError("iam_update: value must be +1 or -1");
  double c = detail::answer_coeff(m, item);
  if (m.mode == IamMode::csw && c == 0.0) c = 1.0;
  std::vector<double> out(rep.begin(), rep.end());
  const auto psi = m.psi(item, value);
  for (int k = 0; k < m.dim; ++k) out[static_cast<std::size_t>(k)] += c * psi[static_cast<std::size_t>(k)];
  return out;
}

// Exact inverse of iam_update for the same (item, value).
inline std::vector<double> iam_downdate(std::span<const double> rep,
                                        const IamModel& m, int item,
                                        int value) {
  if (item < 0 || item >= m.num_items)
    throw IndexError("iam_downdate: item out of range");
  double c = detail::answer_coeff(m, item);
  if (m.mode == IamMode::csw && c == 0.0) c = 1.0;
  std::vector<double> out(rep.begin(), rep.end());
  const auto psi = m.psi(item, value);
  for (int k = 0; k < m.dim; ++k) out[static_cast<std::size_t>(k)] -= c * psi[static_cast<std::size_t>(k)];
  return out;
}

// The learned interview: items with non-null alpha, ordered by |alpha|
// descending, ties broken by ascending item index.
inline Interview interview_items(const IamModel& m) {
  if (m.mode == IamMode::warm)
    throw ModeError("interview_items: warm model has no interview");
  std::vector<int> items;
  for (int i = 0; i < m.num_items; ++i)
    if (m.alpha[static_cast<std::size_t>(i)] != 0.0) items.push_back(i);
  std::sort(items.begin(), items.end(), [&](int a, int b) {
    const double ma = std::fabs(m.alpha[static_cast<std::size_t>(a)]);
    const double mb = std::fabs(m.alpha[static_cast<std::size_t>(b)]);
    if (ma != mb) return ma > mb;
    return a < b;
  });
  Interview out;
  out.items = items;
  out.source = InterviewSource::learned_alpha;
  out.weights.reserve(items.size());
  for (int i : items) out.weights.push_back(m.alpha[static_cast<std::size_t>(i)]);
  return out;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

namespace detail {

inline IamModel iam_init(IamMode mode, const SparseRatings& train,
                         const Hyperparams& hp) {
  IamModel m;
  m.mode = mode;
  m.num_items = train.num_items;
  m.dim = hp.latent_dim;
  m.hyper = hp;
  const auto n = static_cast<std::size_t>(hp.latent_dim);
  m.item_vecs.resize(static_cast<std::size_t>(m.num_items) * n);
  m.psi0.resize(n);
  m.psi_pos.resize(static_cast<std::size_t>(m.num_items) * n);
  m.psi_neg.resize(static_cast<std::size_t>(m.num_items) * n);
  Rng rng(derive_seed(hp.seed, seed_tag::init));
  fill_gaussian(m.item_vecs, rng, 0.01);
  fill_gaussian(m.psi0, rng, 0.01);
  fill_gaussian(m.psi_pos, rng, 0.01);
  fill_gaussian(m.psi_neg, rng, 0.01);
  m.alpha.assign(static_cast<std::size_t>(m.num_items), 1.0);
  return m;
}

inline std::vector<int> users_with_ratings(const SparseRatings& data) {
  std::vector<int> out;
  for (int u = 0; u < data.num_users; ++u)
    if (!data.by_user[static_cast<std::size_t>(u)].empty()) out.push_back(u);
  return out;
}

inline double* psi_row(IamModel& m, int item, int value) {
  auto& arr = value > 0 ? m.psi_pos : m.psi_neg;
  return arr.data() + static_cast<std::size_t>(item) * m.dim;
}

// Builds psi0 + sum_j coeff_j * psi_j for one user from current parameters.
inline void build_user_rep(const IamModel& m,
                           const std::vector<std::pair<int, int>>& ratings,
                           bool scaled, std::vector<double>& rep) {
  rep.assign(m.psi0.begin(), m.psi0.end());
  for (const auto& [j, rj] : ratings) {
    const double c = scaled ? m.alpha[static_cast<std::size_t>(j)] : 1.0;
    if (c == 0.0) continue;
    const auto psi = m.psi(j, rj);
    for (int k = 0; k < m.dim; ++k) rep[static_cast<std::size_t>(k)] += c * psi[static_cast<std::size_t>(k)];
  }
}

// Audit-mode verification that `f` equals the from-scratch leave-one-out
// representation; a residual matching the target's own contribution is
// counted as a self-contribution, anything else as a cache mismatch.
inline void audit_leave_one_out(const IamModel& m,
                                const std::vector<std::pair<int, int>>& ratings,
                                int target_item, bool scaled,
                                std::span<const double> f, LeakAudit& audit) {
  std::vector<double> ref(m.psi0.begin(), m.psi0.end());
  for (const auto& [j, rj] : ratings) {
    if (j == target_item) continue;
    const double c = scaled ? m.alpha[static_cast<std::size_t>(j)] : 1.0;
    if (c == 0.0) continue;
    const auto psi = m.psi(j, rj);
    for (int k = 0; k < m.dim; ++k) ref[static_cast<std::size_t>(k)] += c * psi[static_cast<std::size_t>(k)];
  }
  double err = 0.0, scale = 1.0;
  for (int k = 0; k < m.dim; ++k) {
    err = std::max(err, std::fabs(f[static_cast<std::size_t>(k)] - ref[static_cast<std::size_t>(k)]));
    scale = std::max(scale, std::fabs(ref[static_cast<std::size_t>(k)]));
  }
  if (err <= 1e-9 * scale) return;
  // does the residual look like the target translation?
  int target_value = 0;
  for (const auto& [j, rj] : ratings)
    if (j == target_item) target_value = rj;
  if (target_value != 0) {
    const double c = scaled ? m.alpha[static_cast<std::size_t>(target_item)] : 1.0;
    const auto psi = m.psi(target_item, target_value);
    double err_with = 0.0;
    for (int k = 0; k < m.dim; ++k)
      err_with = std::max(err_with,
                          std::fabs(f[static_cast<std::size_t>(k)] -
                                    (ref[static_cast<std::size_t>(k)] + c * psi[static_cast<std::size_t>(k)])));
    if (err_with <= 1e-9 * scale) {
      audit.record_self_contribution();
      return;
    }
  }
  audit.record_cache_mismatch();
}

inline void iam_check_divergence(double mse, double initial_mse, int epoch,
                                 const char* what) {
  if (!std::isfinite(mse) || mse > 1e6 * std::max(initial_mse, 1e-12))
    throw DivergenceError(std::string(what) + " diverged at epoch " +
                          std::to_string(epoch) + " (mse " +
                          std::to_string(mse) + ")");
}

// Mean squared error of leave-one-out predictions under current parameters.
inline double iam_dataset_mse(const IamModel& m, const SparseRatings& data,
                              bool scaled, bool squash) {
  std::vector<double> rep;
  double sse = 0.0;
  std::size_t count = 0;
  for (int u = 0; u < data.num_users; ++u) {
    const auto& ratings = data.by_user[static_cast<std::size_t>(u)];
    if (ratings.empty()) continue;
    build_user_rep(m, ratings, scaled, rep);
    for (const auto& [i, r] : ratings) {
      const double c = scaled ? m.alpha[static_cast<std::size_t>(i)] : 1.0;
      const auto psi = m.psi(i, r);
      const auto qi = m.q(i);
      double pred = 0.0;
      for (int k = 0; k < m.dim; ++k) {
        const double fk = rep[static_cast<std::size_t>(k)] - c * psi[static_cast<std::size_t>(k)];
        pred += qi[static_cast<std::size_t>(k)] * (squash ? std::tanh(fk) : fk);
      }
      const double e = r - pred;
      sse += e * e;
      ++count;
    }
  }
  return count ? sse / static_cast<double>(count) : 0.0;
}

}  // namespace detail

// Warm IAM (no item selection): per-rating SGD where the target's own
// translation is excluded from its representation. The user representation is
// cached per block and maintained in closed form after each step.
inline IamModel iam_train_warm(const SparseRatings& train,
                               const Hyperparams& hp,
                               TrainHooks* hooks = nullptr) {
  hp.validate();
  if (train.triples.empty())
    throw NoDataError("iam_train_warm: empty training set");

  IamModel m = detail::iam_init(IamMode::warm, train, hp);
  const auto n = static_cast<std::size_t>(m.dim);
  const double lr = hp.learning_rate;
  const double l2 = hp.lambda1;
  const double initial_mse = detail::iam_dataset_mse(m, train, false, false);

  const std::vector<int> active = detail::users_with_ratings(train);
  std::vector<int> user_order;
  std::vector<int> pos_order;
  std::vector<double> rep(n), f(n), qold(n);

  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    user_order = active;
    Rng erng(derive_seed(hp.seed, seed_tag::epoch,
                         static_cast<std::uint64_t>(epoch)));
    erng.shuffle(user_order);
    double sse = 0.0;
    for (const int u : user_order) {
      const auto& ratings = train.by_user[static_cast<std::size_t>(u)];
      const auto n_u = ratings.size();
      detail::build_user_rep(m, ratings, false, rep);
      pos_order.resize(n_u);
      for (std::size_t k = 0; k < n_u; ++k) pos_order[k] = static_cast<int>(k);
      Rng urng(derive_seed(hp.seed, seed_tag::user_order,
                           (static_cast<std::uint64_t>(epoch) << 32) |
                               static_cast<std::uint32_t>(u)));
      urng.shuffle(pos_order);

      for (const int pos : pos_order) {
        const auto [i, r] = ratings[static_cast<std::size_t>(pos)];
        if (hooks && hooks->audit) hooks->audit->check_input(u, i);
        double* psi_i = detail::psi_row(m, i, r);
        double* qi = m.item_vecs.data() + static_cast<std::size_t>(i) * n;
        double pred = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          f[k] = rep[k] - psi_i[k];
          pred += qi[k] * f[k];
        }
        if (hooks && hooks->audit)
          detail::audit_leave_one_out(m, ratings, i, false, f, *hooks->audit);
        const double e = r - pred;
        sse += e * e;
        for (std::size_t k = 0; k < n; ++k) {
          qold[k] = qi[k];
          qi[k] += lr * (e * f[k] - l2 * qi[k]);
        }
        double* psi0 = m.psi0.data();
        for (std::size_t k = 0; k < n; ++k)
          psi0[k] += lr * (e * qold[k] - l2 * psi0[k]);
        for (const auto& [j, rj] : ratings) {
          if (j == i) continue;
          double* psi_j = detail::psi_row(m, j, rj);
          for (std::size_t k = 0; k < n; ++k)
            psi_j[k] += lr * (e * qold[k] - l2 * psi_j[k]);
        }
        // f held n_u terms (psi0 plus n_u-1 translations); each one took the
        // same decay and the same translation step.
        const double decay = 1.0 - lr * l2;
        const double step = static_cast<double>(n_u) * lr * e;
        for (std::size_t k = 0; k < n; ++k)
          rep[k] = decay * f[k] + step * qold[k] + psi_i[k];
      }
    }
    const double mse = sse / static_cast<double>(train.triples.size());
    m.epoch_loss.push_back(mse);
    detail::iam_check_divergence(mse, initial_mse, epoch, "iam_train_warm");
  }
  if (!detail::all_finite(m.item_vecs) || !detail::all_finite(m.psi0) ||
      !detail::all_finite(m.psi_pos) || !detail::all_finite(m.psi_neg))
    throw DivergenceError("iam_train_warm produced non-finite parameters");
  return m;
}

// CS-IAM: joint SGD over q, psi and alpha with lazy L1 clipping on alpha
// after each gradient step. alpha starts popularity-damped at
// 1/sqrt(freq+1), rescaled so its maximum is 1.
inline IamModel iam_train_cold(const SparseRatings& train,
                               const Hyperparams& hp,
                               TrainHooks* hooks = nullptr) {
  hp.validate();
  if (train.triples.empty())
    throw NoDataError("iam_train_cold: empty training set");

  IamModel m = detail::iam_init(IamMode::cold, train, hp);
  double max_a = 0.0;
  for (int i = 0; i < m.num_items; ++i) {
    const double a = 1.0 / std::sqrt(
        static_cast<double>(train.by_item[static_cast<std::size_t>(i)].size()) + 1.0);
    m.alpha[static_cast<std::size_t>(i)] = a;
    max_a = std::max(max_a, a);
  }
  for (double& a : m.alpha) a /= max_a;

  const auto n = static_cast<std::size_t>(m.dim);
  const double lr = hp.learning_rate;
  const double l2 = hp.lambda1;
  const double penalty = lr * hp.lambda2;
  const double initial_mse = detail::iam_dataset_mse(m, train, true, false);

  const std::vector<int> active = detail::users_with_ratings(train);
  std::vector<int> user_order;
  std::vector<int> pos_order;
  std::vector<double> rep(n), f(n), qold(n);

  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    user_order = active;
    Rng erng(derive_seed(hp.seed, seed_tag::epoch,
                         static_cast<std::uint64_t>(epoch)));
    erng.shuffle(user_order);
    double sse = 0.0;
    for (const int u : user_order) {
      const auto& ratings = train.by_user[static_cast<std::size_t>(u)];
      const auto n_u = ratings.size();
      detail::build_user_rep(m, ratings, true, rep);
      pos_order.resize(n_u);
      for (std::size_t k = 0; k < n_u; ++k) pos_order[k] = static_cast<int>(k);
      Rng urng(derive_seed(hp.seed, seed_tag::user_order,
                           (static_cast<std::uint64_t>(epoch) << 32) |
                               static_cast<std::uint32_t>(u)));
      urng.shuffle(pos_order);

      for (const int pos : pos_order) {
        const auto [i, r] = ratings[static_cast<std::size_t>(pos)];
        if (hooks && hooks->audit) hooks->audit->check_input(u, i);
        double* psi_i = detail::psi_row(m, i, r);
        const double a_i = m.alpha[static_cast<std::size_t>(i)];
        double* qi = m.item_vecs.data() + static_cast<std::size_t>(i) * n;
        double pred = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          f[k] = rep[k] - a_i * psi_i[k];
          pred += qi[k] * f[k];
        }
        if (hooks && hooks->audit)
          detail::audit_leave_one_out(m, ratings, i, true, f, *hooks->audit);
        const double e = r - pred;
        sse += e * e;
        for (std::size_t k = 0; k < n; ++k) {
          qold[k] = qi[k];
          qi[k] += lr * (e * f[k] - l2 * qi[k]);
        }
        double* psi0 = m.psi0.data();
        for (std::size_t k = 0; k < n; ++k) {
          const double old = psi0[k];
          const double nw = old + lr * (e * qold[k] - l2 * old);
          psi0[k] = nw;
          rep[k] += nw - old;
        }
        for (const auto& [j, rj] : ratings) {
          if (j == i) continue;
          double* psi_j = detail::psi_row(m, j, rj);
          const double a_old = m.alpha[static_cast<std::size_t>(j)];
          double grad_a = 0.0;
          for (std::size_t k = 0; k < n; ++k) grad_a += qold[k] * psi_j[k];
          const double stepped = a_old + lr * e * grad_a;
          const double a_new = l1_clip_step(a_old, stepped, penalty);
          if (hooks) {
            if (hooks->clip_log)
              hooks->clip_log->push_back({a_old, stepped, penalty, a_new});
            if (a_new == 0.0 && stepped != 0.0) ++hooks->clips_to_zero;
          }
          for (std::size_t k = 0; k < n; ++k) {
            const double po = psi_j[k];
            const double pn = po + lr * (e * a_old * qold[k] - l2 * po);
            psi_j[k] = pn;
            rep[k] += a_new * pn - a_old * po;
          }
          m.alpha[static_cast<std::size_t>(j)] = a_new;
        }
      }
    }
    const double mse = sse / static_cast<double>(train.triples.size());
    m.epoch_loss.push_back(mse);
    detail::iam_check_divergence(mse, initial_mse, epoch, "iam_train_cold");
  }
  if (!detail::all_finite(m.item_vecs) || !detail::all_finite(m.psi0) ||
      !detail::all_finite(m.psi_pos) || !detail::all_finite(m.psi_neg) ||
      !detail::all_finite(m.alpha))
    throw DivergenceError("iam_train_cold produced non-finite parameters");
  return m;
}

// CSW-IAM: phase 1 trains q and psi exactly as the warm model; phase 2
// freezes them and learns only alpha under the L1 loss, with the
// representation passed through tanh before every dot product. Predictions of
// the returned model squash the representation the same way.
inline IamModel iam_train_csw(const SparseRatings& train, const Hyperparams& hp,
                              TrainHooks* hooks = nullptr) {
  IamModel m = iam_train_warm(train, hp, hooks);
  m.mode = IamMode::csw;
  m.alpha.assign(static_cast<std::size_t>(m.num_items), 1.0);

  const auto n = static_cast<std::size_t>(m.dim);
  const double lr = hp.learning_rate;
  const double penalty = lr * hp.lambda2;
  const double initial_mse = detail::iam_dataset_mse(m, train, true, true);

  const std::vector<int> active = detail::users_with_ratings(train);
  std::vector<int> user_order;
  std::vector<int> pos_order;
  std::vector<double> rep(n), f(n), squashed(n), w(n);

  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    user_order = active;
    Rng erng(derive_seed(hp.seed, seed_tag::epoch,
                         0x80000000ull + static_cast<std::uint64_t>(epoch)));
    erng.shuffle(user_order);
    double sse = 0.0;
    for (const int u : user_order) {
      const auto& ratings = train.by_user[static_cast<std::size_t>(u)];
      const auto n_u = ratings.size();
      detail::build_user_rep(m, ratings, true, rep);
      pos_order.resize(n_u);
      for (std::size_t k = 0; k < n_u; ++k) pos_order[k] = static_cast<int>(k);
      Rng urng(derive_seed(hp.seed, seed_tag::user_order,
                           (0x8000000000000000ull) |
                               (static_cast<std::uint64_t>(epoch) << 32) |
                               static_cast<std::uint32_t>(u)));
      urng.shuffle(pos_order);

      for (const int pos : pos_order) {
        const auto [i, r] = ratings[static_cast<std::size_t>(pos)];
        if (hooks && hooks->audit) hooks->audit->check_input(u, i);
        const double* psi_i = detail::psi_row(m, i, r);
        const double a_i = m.alpha[static_cast<std::size_t>(i)];
        const double* qi = m.item_vecs.data() + static_cast<std::size_t>(i) * n;
        double pred = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          f[k] = rep[k] - a_i * psi_i[k];
          squashed[k] = std::tanh(f[k]);
          pred += qi[k] * squashed[k];
          w[k] = qi[k] * (1.0 - squashed[k] * squashed[k]);
        }
        if (hooks && hooks->audit)
          detail::audit_leave_one_out(m, ratings, i, true, f, *hooks->audit);
        const double e = r - pred;
        sse += e * e;
        for (const auto& [j, rj] : ratings) {
          if (j == i) continue;
          const double* psi_j = detail::psi_row(m, j, rj);
          const double a_old = m.alpha[static_cast<std::size_t>(j)];
          double grad_a = 0.0;
          for (std::size_t k = 0; k < n; ++k) grad_a += w[k] * psi_j[k];
          const double stepped = a_old + lr * e * grad_a;
          const double a_new = l1_clip_step(a_old, stepped, penalty);
          if (hooks) {
            if (hooks->clip_log)
              hooks->clip_log->push_back({a_old, stepped, penalty, a_new});
            if (a_new == 0.0 && stepped != 0.0) ++hooks->clips_to_zero;
          }
          if (a_new != a_old) {
            const double delta = a_new - a_old;
            for (std::size_t k = 0; k < n; ++k) rep[k] += delta * psi_j[k];
            m.alpha[static_cast<std::size_t>(j)] = a_new;
          }
        }
      }
    }
    const double mse = sse / static_cast<double>(train.triples.size());
    m.phase2_epoch_loss.push_back(mse);
    detail::iam_check_divergence(mse, initial_mse, epoch,
                                 "iam_train_csw phase 2");
  }
  if (!detail::all_finite(m.alpha))
    throw DivergenceError("iam_train_csw produced non-finite alpha");
  return m;
}

// ---------------------------------------------------------------------------
// full objectives and analytic gradients (gradient-check suite)
// ---------------------------------------------------------------------------

struct IamGrad {
  std::vector<double> d_item_vecs;
  std::vector<double> d_psi0;
  std::vector<double> d_psi_pos;
  std::vector<double> d_psi_neg;
  std::vector<double> d_alpha;
};

namespace detail {

inline double iam_l2_terms(const IamModel& m, double lambda1) {
  if (lambda1 == 0.0) return 0.0;
  double s = 0.0;
  for (double x : m.item_vecs) s += x * x;
  for (double x : m.psi0) s += x * x;
  for (double x : m.psi_pos) s += x * x;
  for (double x : m.psi_neg) s += x * x;
  return lambda1 * s;
}

inline void add_l2_grad(const IamModel& m, double lambda1, IamGrad& g) {
  if (lambda1 == 0.0) return;
  for (std::size_t k = 0; k < m.item_vecs.size(); ++k)
    g.d_item_vecs[k] += 2.0 * lambda1 * m.item_vecs[k];
  for (std::size_t k = 0; k < m.psi0.size(); ++k)
    g.d_psi0[k] += 2.0 * lambda1 * m.psi0[k];
  for (std::size_t k = 0; k < m.psi_pos.size(); ++k)
    g.d_psi_pos[k] += 2.0 * lambda1 * m.psi_pos[k];
  for (std::size_t k = 0; k < m.psi_neg.size(); ++k)
    g.d_psi_neg[k] += 2.0 * lambda1 * m.psi_neg[k];
}

}  // namespace detail

// Warm objective: sum of leave-one-out squared errors plus optional L2 on
// every q/psi parameter. With lambda1 = 0 this is the bare additive-model
// squared loss.
inline double iam_warm_loss(const IamModel& m, const SparseRatings& data,
                            double lambda1) {
  double loss = 0.0;
  std::vector<double> rep;
  for (int u = 0; u < data.num_users; ++u) {
    const auto& ratings = data.by_user[static_cast<std::size_t>(u)];
    if (ratings.empty()) continue;
    detail::build_user_rep(m, ratings, false, rep);
    for (const auto& [i, r] : ratings) {
      const auto psi = m.psi(i, r);
      const auto qi = m.q(i);
      double pred = 0.0;
      for (int k = 0; k < m.dim; ++k)
        pred += qi[static_cast<std::size_t>(k)] *
                (rep[static_cast<std::size_t>(k)] - psi[static_cast<std::size_t>(k)]);
      const double e = r - pred;
      loss += e * e;
    }
  }
  return loss + detail::iam_l2_terms(m, lambda1);
}

inline IamGrad iam_warm_loss_grad(const IamModel& m, const SparseRatings& data,
                                  double lambda1) {
  IamGrad g;
  g.d_item_vecs.assign(m.item_vecs.size(), 0.0);
  g.d_psi0.assign(m.psi0.size(), 0.0);
  g.d_psi_pos.assign(m.psi_pos.size(), 0.0);
  g.d_psi_neg.assign(m.psi_neg.size(), 0.0);
  g.d_alpha.assign(m.alpha.size(), 0.0);
  const auto n = static_cast<std::size_t>(m.dim);
  std::vector<double> rep, f(n);
  for (int u = 0; u < data.num_users; ++u) {
    const auto& ratings = data.by_user[static_cast<std::size_t>(u)];
    if (ratings.empty()) continue;
    detail::build_user_rep(m, ratings, false, rep);
    for (const auto& [i, r] : ratings) {
      const auto psi = m.psi(i, r);
      const auto qi = m.q(i);
      double pred = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        f[k] = rep[k] - psi[k];
        pred += qi[k] * f[k];
      }
      const double e = r - pred;
      double* dq = g.d_item_vecs.data() + static_cast<std::size_t>(i) * n;
      for (std::size_t k = 0; k < n; ++k) {
        dq[k] -= 2.0 * e * f[k];
        g.d_psi0[k] -= 2.0 * e * qi[k];
      }
      for (const auto& [j, rj] : ratings) {
        if (j == i) continue;
        auto& dpsi = rj > 0 ? g.d_psi_pos : g.d_psi_neg;
        double* row = dpsi.data() + static_cast<std::size_t>(j) * n;
        for (std::size_t k = 0; k < n; ++k) row[k] -= 2.0 * e * qi[k];
      }
    }
  }
  detail::add_l2_grad(m, lambda1, g);
  return g;
}

// Cold objective: leave-one-out squared errors with alpha-scaled
// translations, plus lambda2 * |alpha|_1, plus optional L2 on q/psi.
inline double iam_cold_loss(const IamModel& m, const SparseRatings& data,
                            double lambda1, double lambda2) {
  double loss = 0.0;
  std::vector<double> rep;
  for (int u = 0; u < data.num_users; ++u) {
    const auto& ratings = data.by_user[static_cast<std::size_t>(u)];
    if (ratings.empty()) continue;
    detail::build_user_rep(m, ratings, true, rep);
    for (const auto& [i, r] : ratings) {
      const double a_i = m.alpha[static_cast<std::size_t>(i)];
      const auto psi = m.psi(i, r);
      const auto qi = m.q(i);
      double pred = 0.0;
      for (int k = 0; k < m.dim; ++k)
        pred += qi[static_cast<std::size_t>(k)] *
                (rep[static_cast<std::size_t>(k)] - a_i * psi[static_cast<std::size_t>(k)]);
      const double e = r - pred;
      loss += e * e;
    }
  }
  for (double a : m.alpha) loss += lambda2 * std::fabs(a);
  return loss + detail::iam_l2_terms(m, lambda1);
}

inline IamGrad iam_cold_loss_grad(const IamModel& m, const SparseRatings& data,
                                  double lambda1, double lambda2) {
  IamGrad g;
  g.d_item_vecs.assign(m.item_vecs.size(), 0.0);
  g.d_psi0.assign(m.psi0.size(), 0.0);
  g.d_psi_pos.assign(m.psi_pos.size(), 0.0);
  g.d_psi_neg.assign(m.psi_neg.size(), 0.0);
  g.d_alpha.assign(m.alpha.size(), 0.0);
  const auto n = static_cast<std::size_t>(m.dim);
  std::vector<double> rep, f(n);
  for (int u = 0; u < data.num_users; ++u) {
    const auto& ratings = data.by_user[static_cast<std::size_t>(u)];
    if (ratings.empty()) continue;
    detail::build_user_rep(m, ratings, true, rep);
    for (const auto& [i, r] : ratings) {
      const double a_i = m.alpha[static_cast<std::size_t>(i)];
      const auto psi_t = m.psi(i, r);
      const auto qi = m.q(i);
      double pred = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        f[k] = rep[k] - a_i * psi_t[k];
        pred += qi[k] * f[k];
      }
      const double e = r - pred;
      double* dq = g.d_item_vecs.data() + static_cast<std::size_t>(i) * n;
      for (std::size_t k = 0; k < n; ++k) {
        dq[k] -= 2.0 * e * f[k];
        g.d_psi0[k] -= 2.0 * e * qi[k];
      }
      for (const auto& [j, rj] : ratings) {
        if (j == i) continue;
        const double a_j = m.alpha[static_cast<std::size_t>(j)];
        const auto psi_j = m.psi(j, rj);
        auto& dpsi = rj > 0 ? g.d_psi_pos : g.d_psi_neg;
        double* row = dpsi.data() + static_cast<std::size_t>(j) * n;
        double dot_q_psi = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          row[k] -= 2.0 * e * a_j * qi[k];
          dot_q_psi += qi[k] * psi_j[k];
        }
        g.d_alpha[static_cast<std::size_t>(j)] -= 2.0 * e * dot_q_psi;
      }
    }
  }
  for (std::size_t i = 0; i < m.alpha.size(); ++i) {
    const double a = m.alpha[i];
    if (a > 0.0) g.d_alpha[i] += lambda2;
    else if (a < 0.0) g.d_alpha[i] -= lambda2;
  }
  detail::add_l2_grad(m, lambda1, g);
  return g;
}

// CSW phase-2 objective: squared errors with the representation squashed by
// tanh, plus lambda2 * |alpha|_1. Gradient with respect to alpha only
// (q and psi are frozen in that phase).
inline double iam_csw_alpha_loss(const IamModel& m, const SparseRatings& data,
                                 double lambda2) {
  double loss = 0.0;
  std::vector<double> rep;
  for (int u = 0; u < data.num_users; ++u) {
    const auto& ratings = data.by_user[static_cast<std::size_t>(u)];
    if (ratings.empty()) continue;
    detail::build_user_rep(m, ratings, true, rep);
    for (const auto& [i, r] : ratings) {
      const double a_i = m.alpha[static_cast<std::size_t>(i)];
      const auto psi = m.psi(i, r);
      const auto qi = m.q(i);
      double pred = 0.0;
      for (int k = 0; k < m.dim; ++k)
        pred += qi[static_cast<std::size_t>(k)] *
                std::tanh(rep[static_cast<std::size_t>(k)] -
                          a_i * psi[static_cast<std::size_t>(k)]);
      const double e = r - pred;
      loss += e * e;
    }
  }
  for (double a : m.alpha) loss += lambda2 * std::fabs(a);
  return loss;
}

inline std::vector<double> iam_csw_alpha_loss_grad(const IamModel& m,
                                                   const SparseRatings& data,
                                                   double lambda2) {
  std::vector<double> d_alpha(m.alpha.size(), 0.0);
  const auto n = static_cast<std::size_t>(m.dim);
  std::vector<double> rep, t(n);
  for (int u = 0; u < data.num_users; ++u) {
    const auto& ratings = data.by_user[static_cast<std::size_t>(u)];
    if (ratings.empty()) continue;
    detail::build_user_rep(m, ratings, true, rep);
    for (const auto& [i, r] : ratings) {
      const double a_i = m.alpha[static_cast<std::size_t>(i)];
      const auto psi_t = m.psi(i, r);
      const auto qi = m.q(i);
      double pred = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        t[k] = std::tanh(rep[k] - a_i * psi_t[k]);
        pred += qi[k] * t[k];
      }
      const double e = r - pred;
      for (const auto& [j, rj] : ratings) {
        if (j == i) continue;
        const auto psi_j = m.psi(j, rj);
        double grad = 0.0;
        for (std::size_t k = 0; k < n; ++k)
          grad += qi[k] * (1.0 - t[k] * t[k]) * psi_j[k];
        d_alpha[static_cast<std::size_t>(j)] -= 2.0 * e * grad;
      }
    }
  }
  for (std::size_t i = 0; i < m.alpha.size(); ++i) {
    const double a = m.alpha[i];
    if (a > 0.0) d_alpha[i] += lambda2;
    else if (a < 0.0) d_alpha[i] -= lambda2;
  }
  return d_alpha;
}

}  // namespace iamcf
