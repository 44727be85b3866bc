#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sfanc/adaptive.hpp"
#include "sfanc/errors.hpp"
#include "sfanc/rng.hpp"
#include "sfanc/signal.hpp"

namespace sfanc {

/// One training pair: a reference window plus enough preceding history to
/// evaluate the path convolutions with zero-initial state, and the
/// primary-path disturbance aligned with the window's last sample.
/// x_ext is stored oldest first and ends at the window-end sample.
struct TaskPair {
    std::vector<double> x_ext;
    double d = 0.0;
};

/// Source material for one subclass: the raw recordings, their
/// primary-path outputs, and the disjoint support/query window positions
/// pairs are drawn from.
struct SubclassPool {
    std::vector<std::vector<double>> recordings;
    std::vector<std::vector<double>> disturbance;  // convolve(rec, P), full length
    std::size_t filter_length = 0;
    std::size_t history = 0;  // extra samples kept before each window
    std::vector<std::pair<std::size_t, std::size_t>> support_positions;
    std::vector<std::pair<std::size_t, std::size_t>> query_positions;

    TaskPair make_pair(std::size_t rec, std::size_t end) const {
        const auto& x = recordings[rec];
        const std::size_t lo = end + 1 - filter_length - history;
        TaskPair p;
        p.x_ext.assign(x.begin() + static_cast<std::ptrdiff_t>(lo),
                       x.begin() + static_cast<std::ptrdiff_t>(end + 1));
        p.d = disturbance[rec][end];
        return p;
    }
};

/// One ANC task: the support and query batches for a single subclass.
/// The pool pointer (when present) lets pretraining redraw fresh batches
/// each iteration.
struct AncTask {
    int subclass_id = 0;
    std::vector<TaskPair> support;
    std::vector<TaskPair> query;
    std::shared_ptr<const SubclassPool> pool;
};

/// All tasks of one noise category, sharing the plant and filter length.
struct TaskDistribution {
    std::vector<AncTask> tasks;
    std::string category;
    std::size_t filter_length = 0;
};

struct MetaConfig {
    double alpha = 0.03;  // inner step size
    double beta = 0.03;   // outer step size
    int support_size = 10;  // K
    int query_size = 10;    // J
    int iterations = 500;
    std::uint64_t seed = 0;
    // Extensions beyond the defaults; all default to the base behavior.
    int inner_steps = 1;
    int task_batch = 0;  // 0 = every task each iteration
    bool query_error_on_support = false;
};

namespace detail {

/// Window of the reference filtered through `path`, newest first:
/// out[l] = (x * path)(t - l) evaluated with zero state before x_ext.
inline std::vector<double> filtered_window(const TaskPair& pair,
                                           const FirPath& path,
                                           std::size_t filter_length) {
    if (pair.x_ext.size() < filter_length) {
        throw std::invalid_argument("TaskPair window shorter than filter length");
    }
    const auto& x = pair.x_ext;
    const std::size_t end = x.size() - 1;
    std::vector<double> out(filter_length, 0.0);
    for (std::size_t l = 0; l < filter_length; ++l) {
        const std::size_t m = end - l;  // absolute index of (t - l) in x_ext
        double acc = 0.0;
        const std::size_t qmax = std::min(path.taps.size() - 1, m);
        for (std::size_t q = 0; q <= qmax; ++q) {
            acc += path.taps[q] * x[m - q];
        }
        out[l] = acc;
    }
    return out;
}

struct PairVectors {
    std::vector<double> u;  // filtered through the true secondary path
    std::vector<double> v;  // filtered through the secondary-path estimate
    double d = 0.0;
};

inline PairVectors pair_vectors(const TaskPair& p, const AncPlant& plant,
                                std::size_t L) {
    return {filtered_window(p, plant.secondary, L),
            filtered_window(p, plant.secondary_estimate, L), p.d};
}

}  // namespace detail

/// Raw reference window of a pair (the last L samples of x_ext), newest
/// first.
inline std::vector<double> pair_window(const TaskPair& p, std::size_t L) {
    if (p.x_ext.size() < L) {
        throw std::invalid_argument("pair_window: window shorter than L");
    }
    std::vector<double> w(L);
    for (std::size_t l = 0; l < L; ++l) w[l] = p.x_ext[p.x_ext.size() - 1 - l];
    return w;
}

/// Sum of outer products of the s-hat-filtered support windows, as an
/// LxL row-major matrix. Symmetric positive semidefinite by construction.
inline std::vector<double> support_covariance(const AncTask& task,
                                              const AncPlant& plant,
                                              std::size_t L) {
    std::vector<double> r(L * L, 0.0);
    for (const auto& p : task.support) {
        const auto v = detail::filtered_window(p, plant.secondary_estimate, L);
        for (std::size_t i = 0; i < L; ++i) {
            for (std::size_t j = 0; j < L; ++j) {
                r[i * L + j] += v[i] * v[j];
            }
        }
    }
    return r;
}

/// Inner-layer adaptation: one (or cfg-many) batched gradient steps on
/// the support pairs,
///   w' = w + alpha * sum_k e_k x~_k,   e_k = d_k - w·u_k
/// where u is the window filtered through the true secondary path and
/// x~ through its estimate.
inline ControlFilter inner_update(const ControlFilter& w, const AncTask& task,
                                  double alpha, const AncPlant& plant,
                                  int steps = 1) {
    plant.validate();
    const std::size_t L = w.length();
    ControlFilter out = w;
    for (int s = 0; s < steps; ++s) {
        std::vector<double> acc(L, 0.0);
        for (const auto& p : task.support) {
            const auto pv = detail::pair_vectors(p, plant, L);
            const double e = pv.d - dot(out.weights, pv.u);
            if (!std::isfinite(e)) throw NumericError("inner_update: non-finite error");
            for (std::size_t i = 0; i < L; ++i) acc[i] += e * pv.v[i];
        }
        for (std::size_t i = 0; i < L; ++i) out.weights[i] += alpha * acc[i];
    }
    return out;
}

/// Query-side MSE, (1/2) sum_j e_j^2 with e_j = d_j - (w''X)*s at the
/// window ends. With query_error_on_support the reference windows come
/// from the support batch (the disturbances stay from the query batch),
/// which requires K == J.
inline double query_loss(const ControlFilter& w_adapted, const AncTask& task,
                         const AncPlant& plant,
                         bool query_error_on_support = false) {
    plant.validate();
    const std::size_t L = w_adapted.length();
    if (query_error_on_support && task.support.size() != task.query.size()) {
        throw std::invalid_argument(
            "query_error_on_support requires equal support and query sizes");
    }
    double loss = 0.0;
    for (std::size_t j = 0; j < task.query.size(); ++j) {
        const TaskPair& src = query_error_on_support ? task.support[j] : task.query[j];
        const auto u = detail::filtered_window(src, plant.secondary, L);
        const double e = task.query[j].d - dot(w_adapted.weights, u);
        loss += 0.5 * e * e;
    }
    return loss;
}

namespace detail {

struct OuterStep {
    ControlFilter filter;
    double loss = 0.0;  // Eq.-style meta loss summed over tasks, at the incoming w
};

/// One outer-layer iteration over every task in the distribution:
///   w <- w + beta * sum_i (E - alpha R~_i)^m (X~_i^que e_i^que)
/// applied in fixed task order. R~_i is applied in factored form, m is
/// the inner step count.
inline OuterStep outer_step(const ControlFilter& w, const TaskDistribution& dist,
                            const MetaConfig& cfg, const AncPlant& plant) {
    const std::size_t L = w.length();
    std::vector<double> total(L, 0.0);
    double loss = 0.0;

    for (const auto& task : dist.tasks) {
        const ControlFilter adapted =
            inner_update(w, task, cfg.alpha, plant, cfg.inner_steps);

        // Query-side error-weighted filtered-reference sum.
        std::vector<double> g(L, 0.0);
        if (cfg.query_error_on_support &&
            task.support.size() != task.query.size()) {
            throw std::invalid_argument(
                "query_error_on_support requires equal support and query sizes");
        }
        for (std::size_t j = 0; j < task.query.size(); ++j) {
            const TaskPair& err_src =
                cfg.query_error_on_support ? task.support[j] : task.query[j];
            const auto u = filtered_window(err_src, plant.secondary, L);
            const double e = task.query[j].d - dot(adapted.weights, u);
            if (!std::isfinite(e)) throw NumericError("outer_update: non-finite error");
            loss += 0.5 * e * e;
            const auto vq = filtered_window(task.query[j],
                                            plant.secondary_estimate, L);
            for (std::size_t i = 0; i < L; ++i) g[i] += e * vq[i];
        }

        // Apply (E - alpha R~)^m without forming the matrix:
        // R~ g = sum_k v_k (v_k' g).
        std::vector<std::vector<double>> vsup;
        vsup.reserve(task.support.size());
        for (const auto& p : task.support) {
            vsup.push_back(filtered_window(p, plant.secondary_estimate, L));
        }
        for (int m = 0; m < cfg.inner_steps; ++m) {
            std::vector<double> rg(L, 0.0);
            for (const auto& v : vsup) {
                const double proj = dot(v, g);
                for (std::size_t i = 0; i < L; ++i) rg[i] += proj * v[i];
            }
            for (std::size_t i = 0; i < L; ++i) g[i] -= cfg.alpha * rg[i];
        }

        for (std::size_t i = 0; i < L; ++i) total[i] += g[i];
    }

    OuterStep out;
    out.filter = w;
    for (std::size_t i = 0; i < L; ++i) {
        out.filter.weights[i] += cfg.beta * total[i];
        if (!std::isfinite(out.filter.weights[i])) {
            throw NumericError("outer_update: non-finite accumulation");
        }
    }
    out.loss = loss;
    return out;
}

}  // namespace detail

/// Outer-layer meta update over all tasks of the distribution.
inline ControlFilter outer_update(const ControlFilter& w,
                                  const TaskDistribution& dist,
                                  const MetaConfig& cfg, const AncPlant& plant) {
    plant.validate();
    if (dist.tasks.empty()) {
        throw std::invalid_argument("outer_update: empty task distribution");
    }
    return detail::outer_step(w, dist, cfg, plant).filter;
}

// ---------------------------------------------------------------------------
// Task construction and pretraining
// ---------------------------------------------------------------------------

/// Builds the task distribution for one category: one task per subclass,
/// with disjoint support/query window pools drawn from that subclass's
/// recordings and the disturbance computed through the primary path.
inline TaskDistribution make_tasks(
    const std::vector<std::vector<Signal>>& recordings_per_subclass,
    const AncPlant& plant, std::size_t filter_length, int support_size,
    int query_size, std::uint64_t seed, std::string category = {}) {
    plant.validate();
    if (filter_length == 0) {
        throw std::invalid_argument("make_tasks: filter length must be positive");
    }
    if (support_size < 1 || query_size < 1) {
        throw std::invalid_argument("make_tasks: K and J must be >= 1");
    }
    if (recordings_per_subclass.empty()) {
        throw std::invalid_argument("make_tasks: no subclasses");
    }

    const std::size_t history =
        std::max(plant.secondary.size(), plant.secondary_estimate.size()) - 1;
    const std::size_t t_min = filter_length - 1 + history;

    TaskDistribution dist;
    dist.category = std::move(category);
    dist.filter_length = filter_length;

    Rng rng(mix64(seed));
    for (std::size_t si = 0; si < recordings_per_subclass.size(); ++si) {
        const auto& recs = recordings_per_subclass[si];
        if (recs.empty()) {
            throw InsufficientDataError("make_tasks: subclass " +
                                        std::to_string(si) + " has no recordings");
        }
        auto pool = std::make_shared<SubclassPool>();
        pool->filter_length = filter_length;
        pool->history = history;

        std::vector<std::pair<std::size_t, std::size_t>> positions;
        for (std::size_t ri = 0; ri < recs.size(); ++ri) {
            const auto& samples = recs[ri].samples;
            pool->recordings.push_back(samples);
            auto d_full = convolve(std::span<const double>(samples), plant.primary);
            d_full.resize(samples.size());
            pool->disturbance.push_back(std::move(d_full));
            for (std::size_t t = t_min; t < samples.size(); ++t) {
                positions.emplace_back(ri, t);
            }
        }
        const auto need = static_cast<std::size_t>(support_size + query_size);
        if (positions.size() < need) {
            throw InsufficientDataError(
                "make_tasks: subclass " + std::to_string(si) +
                " too short for K+J windows");
        }
        rng.shuffle(positions);
        const std::size_t half = positions.size() / 2;
        pool->support_positions.assign(positions.begin(),
                                       positions.begin() + static_cast<std::ptrdiff_t>(half));
        pool->query_positions.assign(positions.begin() + static_cast<std::ptrdiff_t>(half),
                                     positions.end());
        if (pool->support_positions.size() < static_cast<std::size_t>(support_size) ||
            pool->query_positions.size() < static_cast<std::size_t>(query_size)) {
            throw InsufficientDataError(
                "make_tasks: subclass " + std::to_string(si) +
                " too short for the requested batch sizes");
        }

        AncTask task;
        task.subclass_id = static_cast<int>(si);
        for (int k = 0; k < support_size; ++k) {
            const auto& [ri, t] = pool->support_positions[static_cast<std::size_t>(k)];
            task.support.push_back(pool->make_pair(ri, t));
        }
        for (int j = 0; j < query_size; ++j) {
            const auto& [ri, t] = pool->query_positions[static_cast<std::size_t>(j)];
            task.query.push_back(pool->make_pair(ri, t));
        }
        task.pool = std::move(pool);
        dist.tasks.push_back(std::move(task));
    }
    return dist;
}

namespace detail {

/// Fresh support/query draw from a task's pool; tasks without a pool keep
/// their fixed batches.
inline AncTask redraw_task(const AncTask& task, int K, int J, Rng& rng) {
    if (!task.pool) return task;
    const auto& pool = *task.pool;
    AncTask out;
    out.subclass_id = task.subclass_id;
    out.pool = task.pool;

    auto draw = [&rng](const std::vector<std::pair<std::size_t, std::size_t>>& from,
                       int count) {
        // Draw `count` distinct indices by rejection; pools are much
        // larger than the batch so retries are rare.
        std::vector<std::size_t> picked;
        const auto n = from.size();
        const auto want = static_cast<std::size_t>(count);
        picked.reserve(want);
        if (want >= n) {
            for (std::size_t i = 0; i < n; ++i) picked.push_back(i);
            return picked;
        }
        while (picked.size() < want) {
            const std::size_t j = rng.index(n);
            bool seen = false;
            for (std::size_t q : picked) {
                if (q == j) { seen = true; break; }
            }
            if (!seen) picked.push_back(j);
        }
        return picked;
    };

    for (std::size_t i : draw(pool.support_positions, K)) {
        const auto& [ri, t] = pool.support_positions[i];
        out.support.push_back(pool.make_pair(ri, t));
    }
    for (std::size_t i : draw(pool.query_positions, J)) {
        const auto& [ri, t] = pool.query_positions[i];
        out.query.push_back(pool.make_pair(ri, t));
    }
    return out;
}

}  // namespace detail

struct PretrainResult {
    ControlFilter filter;
    std::vector<double> loss_history;  // meta loss per outer iteration
};

/// MAML-style pretraining: starts from the zero filter and runs
/// cfg.iterations outer updates, redrawing the per-task batches from the
/// pools each iteration. Deterministic for a fixed seed.
inline PretrainResult pretrain(const TaskDistribution& dist, const MetaConfig& cfg,
                               const AncPlant& plant) {
    plant.validate();
    if (dist.filter_length == 0) {
        throw std::invalid_argument("pretrain: distribution has no filter length");
    }
    if (!(cfg.alpha > 0.0) || !(cfg.beta > 0.0)) {
        throw std::invalid_argument("pretrain: step sizes must be positive");
    }
    if (cfg.support_size < 1 || cfg.query_size < 1) {
        throw std::invalid_argument("pretrain: K and J must be >= 1");
    }
    if (cfg.iterations < 0) {
        throw std::invalid_argument("pretrain: negative iteration count");
    }

    PretrainResult res;
    res.filter = ControlFilter(dist.filter_length);
    Rng rng(mix64(cfg.seed ^ 0x9c0ffee123456789ULL));

    for (int it = 0; it < cfg.iterations; ++it) {
        TaskDistribution batch;
        batch.category = dist.category;
        batch.filter_length = dist.filter_length;
        if (cfg.task_batch > 0 &&
            cfg.task_batch < static_cast<int>(dist.tasks.size())) {
            std::vector<std::size_t> order(dist.tasks.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            rng.shuffle(order);
            order.resize(static_cast<std::size_t>(cfg.task_batch));
            std::sort(order.begin(), order.end());  // fixed reduction order
            for (std::size_t i : order) {
                batch.tasks.push_back(detail::redraw_task(
                    dist.tasks[i], cfg.support_size, cfg.query_size, rng));
            }
        } else {
            for (const auto& t : dist.tasks) {
                batch.tasks.push_back(
                    detail::redraw_task(t, cfg.support_size, cfg.query_size, rng));
            }
        }

        auto step = detail::outer_step(res.filter, batch, cfg, plant);
        res.loss_history.push_back(step.loss);
        res.filter = std::move(step.filter);
        for (double w : res.filter.weights) {
            if (std::abs(w) > kWeightOverflow) {
                throw DivergenceError("pretrain diverged",
                                      static_cast<std::size_t>(it));
            }
        }
    }
    return res;
}

}  // namespace sfanc
