#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "iamcf/audit.hpp"
#include "iamcf/dataset.hpp"
#include "iamcf/errors.hpp"
#include "iamcf/rng.hpp"
#include "iamcf/types.hpp"

namespace iamcf {

// Transductive matrix factorization: one learned vector per user and item,
// prediction is the plain dot product (no clamping, no biases).
struct MfModel {
  int num_users = 0;
  int num_items = 0;
  int dim = 0;
  std::vector<double> user_vecs;  // U x N row-major
  std::vector<double> item_vecs;  // I x N row-major
  Hyperparams hyper;
  std::vector<double> epoch_loss;  // mean squared error per epoch

  std::span<const double> p(int u) const {
    return {user_vecs.data() + static_cast<std::size_t>(u) * dim,
            static_cast<std::size_t>(dim)};
  }
  std::span<const double> q(int i) const {
    return {item_vecs.data() + static_cast<std::size_t>(i) * dim,
            static_cast<std::size_t>(dim)};
  }
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

inline void fill_gaussian(std::vector<double>& v, Rng& rng, double sd) {
  for (double& x : v) x = sd * rng.gaussian();
}

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace detail

inline double mf_predict(const MfModel& m, int u, int i) {
  if (u < 0 || u >= m.num_users)
    throw IndexError("mf_predict: user out of range");
  if (i < 0 || i >= m.num_items)
    throw IndexError("mf_predict: item out of range");
  return detail::dot(m.p(u), m.q(i));
}

// Per-rating SGD on (r - q^T p)^2 + lambda(|q|^2 + |p|^2). Triples are
// shuffled each epoch from the run seed; both vectors are updated from their
// pre-step values. Aborts with DivergenceError if the epoch loss explodes.
inline MfModel mf_train(const SparseRatings& train, const Hyperparams& hp,
                        TrainHooks* hooks = nullptr) {
  hp.validate();
  if (train.triples.empty()) throw NoDataError("mf_train: empty training set");

  MfModel m;
  m.num_users = train.num_users;
  m.num_items = train.num_items;
  m.dim = hp.latent_dim;
  m.hyper = hp;
  const auto n = static_cast<std::size_t>(hp.latent_dim);
  m.user_vecs.resize(static_cast<std::size_t>(m.num_users) * n);
  m.item_vecs.resize(static_cast<std::size_t>(m.num_items) * n);
  Rng init_rng(derive_seed(hp.seed, seed_tag::init));
  detail::fill_gaussian(m.user_vecs, init_rng, 0.01);
  detail::fill_gaussian(m.item_vecs, init_rng, 0.01);

  double initial_mse = 0.0;
  for (const RatingTriple& t : train.triples) {
    const double e = t.value - detail::dot(m.p(t.user), m.q(t.item));
    initial_mse += e * e;
  }
  initial_mse /= static_cast<double>(train.triples.size());

  std::vector<std::size_t> order(train.triples.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;

  const double lr = hp.learning_rate;
  const double l2 = hp.lambda1;
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    Rng rng(derive_seed(hp.seed, seed_tag::epoch,
                        static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    double sse = 0.0;
    for (const std::size_t idx : order) {
      const RatingTriple& t = train.triples[idx];
      if (hooks && hooks->audit) hooks->audit->check_input(t.user, t.item);
      double* pu = m.user_vecs.data() + static_cast<std::size_t>(t.user) * n;
      double* qi = m.item_vecs.data() + static_cast<std::size_t>(t.item) * n;
      double pred = 0.0;
      for (std::size_t k = 0; k < n; ++k) pred += pu[k] * qi[k];
      const double e = t.value - pred;
      sse += e * e;
      for (std::size_t k = 0; k < n; ++k) {
        const double pk = pu[k];
        const double qk = qi[k];
        pu[k] += lr * (e * qk - l2 * pk);
        qi[k] += lr * (e * pk - l2 * qk);
      }
    }
    const double mse = sse / static_cast<double>(train.triples.size());
    m.epoch_loss.push_back(mse);
    if (!std::isfinite(mse) || mse > 1e6 * std::max(initial_mse, 1e-12))
      throw DivergenceError("mf_train diverged at epoch " +
                            std::to_string(epoch) + " (mse " +
                            std::to_string(mse) + ")");
  }
  if (!detail::all_finite(m.user_vecs) || !detail::all_finite(m.item_vecs))
    throw DivergenceError("mf_train produced non-finite parameters");
  return m;
}

// Cold-start baseline protocol: the training set is the union of the
// training users' ratings and, for every valid/test user, the Answer-Set
// ratings whose item lies in the interview. Evaluation users thereby get
// trained p_u vectors for the items they answered.
inline MfModel mf_train_coldstart_baseline(const SparseRatings& data,
                                           const DatasetSplit& split,
                                           const Interview& interview,
                                           const Hyperparams& hp,
                                           TrainHooks* hooks = nullptr) {
  std::unordered_set<int> allowed(interview.items.begin(),
                                  interview.items.end());
  std::vector<RatingTriple> triples;
  for (int u = 0; u < data.num_users; ++u) {
    const auto uz = static_cast<std::size_t>(u);
    if (split.role[uz] == UserRole::train) {
      for (const auto& [item, value] : data.by_user[uz])
        triples.push_back(RatingTriple{u, item, static_cast<double>(value), value});
    } else {
      for (const auto& [item, value] : split.answers[uz]) {
        if (!allowed.count(item)) continue;
        if (hooks && hooks->audit) hooks->audit->check_input(u, item);
        triples.push_back(RatingTriple{u, item, static_cast<double>(value), value});
      }
    }
  }
  if (triples.empty())
    throw NoDataError("cold-start baseline has no training triples");
  return mf_train(SparseRatings::from_triples(data.num_users, data.num_items,
                                              std::move(triples)),
                  hp, hooks);
}

// ---- full objective and analytic gradient (used by the gradient suite) ----

inline double mf_loss(const MfModel& m, const SparseRatings& data,
                      double lambda) {
  double loss = 0.0;
  for (const RatingTriple& t : data.triples) {
    const double e = t.value - detail::dot(m.p(t.user), m.q(t.item));
    loss += e * e;
  }
  for (double x : m.user_vecs) loss += lambda * x * x;
  for (double x : m.item_vecs) loss += lambda * x * x;
  return loss;
}

struct MfGrad {
  std::vector<double> d_user_vecs;
  std::vector<double> d_item_vecs;
};

inline MfGrad mf_loss_grad(const MfModel& m, const SparseRatings& data,
                           double lambda) {
  MfGrad g;
  g.d_user_vecs.assign(m.user_vecs.size(), 0.0);
  g.d_item_vecs.assign(m.item_vecs.size(), 0.0);
  const auto n = static_cast<std::size_t>(m.dim);
  for (const RatingTriple& t : data.triples) {
    const double* pu = m.user_vecs.data() + static_cast<std::size_t>(t.user) * n;
    const double* qi = m.item_vecs.data() + static_cast<std::size_t>(t.item) * n;
    double pred = 0.0;
    for (std::size_t k = 0; k < n; ++k) pred += pu[k] * qi[k];
    const double e = t.value - pred;
    double* du = g.d_user_vecs.data() + static_cast<std::size_t>(t.user) * n;
    double* di = g.d_item_vecs.data() + static_cast<std::size_t>(t.item) * n;
    for (std::size_t k = 0; k < n; ++k) {
      du[k] -= 2.0 * e * qi[k];
      di[k] -= 2.0 * e * pu[k];
    }
  }
  for (std::size_t k = 0; k < m.user_vecs.size(); ++k)
    g.d_user_vecs[k] += 2.0 * lambda * m.user_vecs[k];
  for (std::size_t k = 0; k < m.item_vecs.size(); ++k)
    g.d_item_vecs[k] += 2.0 * lambda * m.item_vecs[k];
  return g;
}

}  // namespace iamcf
