#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <map>

#include "sfanc/adaptive.hpp"
#include "sfanc/database.hpp"
#include "sfanc/meta.hpp"
#include "sfanc/noise.hpp"
#include "sfanc/rng.hpp"

#include "oracles.hpp"

using namespace sfanc;
namespace fs = std::filesystem;

namespace {

AncPlant case1_plant() {
    AncPlant p;
    p.primary = FirPath({1.5, 1.3, -0.6, -1.2, -1.3, 1.2});
    p.secondary = FirPath({1.0, 1.0, 1.0, 0.5});
    p.secondary_estimate = p.secondary;
    return p;
}

std::vector<double> random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = scale * rng.normal();
    return v;
}

/// Naive filtered window: out[l] = sum_q taps[q] * x_ext[end - l - q],
/// zero before the start of x_ext. Independent of the library helper.
std::vector<double> naive_filtered_window(const std::vector<double>& x_ext,
                                          const std::vector<double>& taps,
                                          std::size_t L) {
    std::vector<double> out(L, 0.0);
    const auto end = static_cast<long long>(x_ext.size()) - 1;
    for (std::size_t l = 0; l < L; ++l) {
        double acc = 0.0;
        for (std::size_t q = 0; q < taps.size(); ++q) {
            const long long idx = end - static_cast<long long>(l) -
                                  static_cast<long long>(q);
            if (idx >= 0) acc += taps[q] * x_ext[static_cast<std::size_t>(idx)];
        }
        out[l] = acc;
    }
    return out;
}

TaskPair random_pair(Rng& rng, std::size_t L, std::size_t hist) {
    TaskPair p;
    p.x_ext = random_vector(rng, L + hist);
    p.d = rng.normal();
    return p;
}

AncTask random_task(Rng& rng, std::size_t L, std::size_t hist, int K, int J) {
    AncTask t;
    for (int k = 0; k < K; ++k) t.support.push_back(random_pair(rng, L, hist));
    for (int j = 0; j < J; ++j) t.query.push_back(random_pair(rng, L, hist));
    return t;
}

double naive_query_loss(const ControlFilter& w, const AncTask& task,
                        const AncPlant& plant) {
    double loss = 0.0;
    for (const auto& q : task.query) {
        const auto u = naive_filtered_window(q.x_ext, plant.secondary.taps,
                                             w.length());
        double y = 0.0;
        for (std::size_t i = 0; i < w.length(); ++i) y += w.weights[i] * u[i];
        const double e = q.d - y;
        loss += 0.5 * e * e;
    }
    return loss;
}

}  // namespace

TEST_CASE("make_tasks counts, seeds, and disturbances") {
    const auto plant = case1_plant();
    CategorySpec spec;
    spec.label = "tasks";
    spec.sample_rate = 16000;
    std::vector<std::vector<Signal>> recs;
    recs.push_back({synth_noise(spec.with_subclass(0), 0.2, 1)});
    recs.push_back({synth_noise(spec.with_subclass(1), 0.2, 2)});

    const auto dist = make_tasks(recs, plant, 10, 2, 2, 77, "tasks");
    REQUIRE(dist.tasks.size() == 2);
    REQUIRE(dist.filter_length == 10);
    for (const auto& t : dist.tasks) {
        REQUIRE(t.support.size() == 2);
        REQUIRE(t.query.size() == 2);
        for (const auto& p : t.support) {
            REQUIRE(p.x_ext.size() == 10 + 3);  // L plus secondary history
        }
    }

    const auto dist2 = make_tasks(recs, plant, 10, 2, 2, 77, "tasks");
    for (std::size_t i = 0; i < dist.tasks.size(); ++i) {
        for (std::size_t k = 0; k < dist.tasks[i].support.size(); ++k) {
            REQUIRE(dist.tasks[i].support[k].x_ext ==
                    dist2.tasks[i].support[k].x_ext);
            REQUIRE(dist.tasks[i].support[k].d == dist2.tasks[i].support[k].d);
        }
    }

    // d at every window end equals the naive full convolution there.
    for (std::size_t s = 0; s < recs.size(); ++s) {
        const auto d_full = oracle::convolve_naive(recs[s][0].samples,
                                                   plant.primary.taps);
        for (const auto& p : dist.tasks[s].support) {
            // Locate the window end by matching the raw window content.
            bool found = false;
            for (std::size_t t = p.x_ext.size() - 1; t < recs[s][0].samples.size();
                 ++t) {
                if (recs[s][0].samples[t] == p.x_ext.back() &&
                    std::abs(d_full[t] - p.d) < 1e-12) {
                    found = true;
                    break;
                }
            }
            REQUIRE(found);
        }
    }
}

TEST_CASE("make_tasks rejects recordings too short for the batches") {
    const auto plant = case1_plant();
    Signal tiny;
    tiny.sample_rate = 16000;
    tiny.samples.assign(14, 0.1);  // only two valid windows at L=10
    REQUIRE_THROWS_AS(make_tasks({{tiny}}, plant, 10, 4, 4, 1),
                      InsufficientDataError);
}

TEST_CASE("inner_update with zero step returns the filter unchanged") {
    const auto plant = case1_plant();
    Rng rng(31);
    const auto task = random_task(rng, 8, 3, 4, 4);
    ControlFilter w(8);
    w.weights = random_vector(rng, 8, 0.5);
    const auto out = inner_update(w, task, 0.0, plant);
    REQUIRE(out.weights == w.weights);
}

TEST_CASE("inner_update with K=1 matches a matched-window fxlms step") {
    Rng rng(55);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t L = 2 + rng.index(9);
        AncPlant plant;
        plant.primary = FirPath(random_vector(rng, 1 + rng.index(4)));
        plant.secondary = FirPath(random_vector(rng, 1 + rng.index(4)));
        plant.secondary_estimate = FirPath(random_vector(rng, 1 + rng.index(4)));
        const std::size_t hist =
            std::max(plant.secondary.size(), plant.secondary_estimate.size()) - 1;

        AncTask task;
        task.support.push_back(random_pair(rng, L, hist));
        const double alpha = 0.05;

        ControlFilter w(L);
        w.weights = random_vector(rng, L, 0.3);

        const auto batched = inner_update(w, task, alpha, plant);

        // Stream the extended window through the step primitive: zero step
        // during warm-up, one live update on the window-end sample.
        ControlFilter ws = w;
        FxState fx(plant, L);
        std::vector<double> x_buf(L, 0.0);
        const auto& x = task.support[0].x_ext;
        for (std::size_t i = 0; i < x.size(); ++i) {
            for (std::size_t k = L - 1; k > 0; --k) x_buf[k] = x_buf[k - 1];
            x_buf[0] = x[i];
            fx.push_reference(x[i]);
            const bool last = (i + 1 == x.size());
            fxlms_step(ws, x_buf, last ? task.support[0].d : 0.0,
                       last ? alpha : 0.0, fx);
        }

        for (std::size_t i = 0; i < L; ++i) {
            REQUIRE_THAT(batched.weights[i],
                         Catch::Matchers::WithinAbs(ws.weights[i], 1e-12));
        }
    }
}

TEST_CASE("inner_update sits still at a zero-error fixed point") {
    const auto plant = case1_plant();
    Rng rng(71);
    const std::size_t L = 6;
    ControlFilter w_star(L);
    w_star.weights = random_vector(rng, L);

    AncTask task;
    for (int k = 0; k < 5; ++k) {
        auto p = random_pair(rng, L, plant.secondary.size() - 1);
        const auto u = naive_filtered_window(p.x_ext, plant.secondary.taps, L);
        p.d = 0.0;
        for (std::size_t i = 0; i < L; ++i) p.d += w_star.weights[i] * u[i];
        task.support.push_back(std::move(p));
    }

    const auto out = inner_update(w_star, task, 0.1, plant);
    for (std::size_t i = 0; i < L; ++i) {
        REQUIRE_THAT(out.weights[i],
                     Catch::Matchers::WithinAbs(w_star.weights[i], 1e-12));
    }
}

TEST_CASE("query_loss matches the scalar-loop oracle") {
    const auto plant = case1_plant();
    Rng rng(91);
    const std::size_t L = 7;
    const auto task = random_task(rng, L, plant.secondary.size() - 1, 3, 5);

    ControlFilter zero(L);
    double want = 0.0;
    for (const auto& q : task.query) want += 0.5 * q.d * q.d;
    REQUIRE_THAT(query_loss(zero, task, plant),
                 Catch::Matchers::WithinAbs(want, 1e-12));

    ControlFilter w(L);
    w.weights = random_vector(rng, L);
    REQUIRE_THAT(query_loss(w, task, plant),
                 Catch::Matchers::WithinAbs(naive_query_loss(w, task, plant), 1e-12));

    // Manufactured exact filter: zero loss.
    AncTask exact = task;
    for (auto& q : exact.query) {
        const auto u = naive_filtered_window(q.x_ext, plant.secondary.taps, L);
        q.d = 0.0;
        for (std::size_t i = 0; i < L; ++i) q.d += w.weights[i] * u[i];
    }
    REQUIRE_THAT(query_loss(w, exact, plant),
                 Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("query_error_on_support reproduces the literal batched text") {
    const auto plant = case1_plant();
    Rng rng(101);
    const std::size_t L = 5;
    const auto task = random_task(rng, L, plant.secondary.size() - 1, 3, 3);
    ControlFilter w(L);
    w.weights = random_vector(rng, L);

    double want = 0.0;
    for (std::size_t j = 0; j < task.query.size(); ++j) {
        const auto u =
            naive_filtered_window(task.support[j].x_ext, plant.secondary.taps, L);
        double y = 0.0;
        for (std::size_t i = 0; i < L; ++i) y += w.weights[i] * u[i];
        const double e = task.query[j].d - y;
        want += 0.5 * e * e;
    }
    REQUIRE_THAT(query_loss(w, task, plant, true),
                 Catch::Matchers::WithinAbs(want, 1e-12));

    const auto uneven = random_task(rng, L, plant.secondary.size() - 1, 2, 3);
    REQUIRE_THROWS_AS(query_loss(w, uneven, plant, true), std::invalid_argument);
}

TEST_CASE("outer_update with alpha=0 is batched query-side accumulation") {
    Rng rng(404);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t L = 6;
        AncPlant plant;
        plant.primary = FirPath(random_vector(rng, 2));
        plant.secondary = FirPath(random_vector(rng, 1 + rng.index(4)));
        plant.secondary_estimate = FirPath(random_vector(rng, 1 + rng.index(4)));
        const std::size_t hist =
            std::max(plant.secondary.size(), plant.secondary_estimate.size()) - 1;

        TaskDistribution dist;
        dist.filter_length = L;
        dist.tasks.push_back(random_task(rng, L, hist, 3, 4));
        dist.tasks.push_back(random_task(rng, L, hist, 3, 4));

        MetaConfig cfg;
        cfg.alpha = 0.0;
        cfg.beta = 0.37;
        cfg.support_size = 3;
        cfg.query_size = 4;

        ControlFilter w(L);
        w.weights = random_vector(rng, L, 0.4);

        const auto got = outer_update(w, dist, cfg, plant);

        std::vector<double> want = w.weights;
        for (const auto& task : dist.tasks) {
            for (const auto& q : task.query) {
                const auto u =
                    naive_filtered_window(q.x_ext, plant.secondary.taps, L);
                const auto v = naive_filtered_window(
                    q.x_ext, plant.secondary_estimate.taps, L);
                double y = 0.0;
                for (std::size_t i = 0; i < L; ++i) y += w.weights[i] * u[i];
                const double e = q.d - y;
                for (std::size_t i = 0; i < L; ++i) want[i] += cfg.beta * e * v[i];
            }
        }
        for (std::size_t i = 0; i < L; ++i) {
            REQUIRE_THAT(got.weights[i], Catch::Matchers::WithinAbs(want[i], 1e-12));
        }
    }
}

TEST_CASE("outer_update with beta=0 returns the filter unchanged") {
    const auto plant = case1_plant();
    Rng rng(11);
    TaskDistribution dist;
    dist.filter_length = 6;
    dist.tasks.push_back(random_task(rng, 6, plant.secondary.size() - 1, 3, 3));

    MetaConfig cfg;
    cfg.alpha = 0.05;
    cfg.beta = 0.0;
    ControlFilter w(6);
    w.weights = random_vector(rng, 6);
    const auto out = outer_update(w, dist, cfg, plant);
    REQUIRE(out.weights == w.weights);
}

TEST_CASE("outer_update equals the central finite-difference gradient") {
    // With an exact secondary-path estimate the outer step is the exact
    // gradient of the summed query loss; central differences on the
    // quadratic objective agree to roundoff.
    Rng rng(2024);
    const double h = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t L = 8;
        const int M = 2, K = 3, J = 3;
        AncPlant plant;
        plant.primary = FirPath(random_vector(rng, 1 + rng.index(4)));
        plant.secondary = FirPath(random_vector(rng, 1 + rng.index(4)));
        plant.secondary_estimate = plant.secondary;
        const std::size_t hist = plant.secondary.size() - 1;

        TaskDistribution dist;
        dist.filter_length = L;
        for (int i = 0; i < M; ++i) {
            dist.tasks.push_back(random_task(rng, L, hist, K, J));
        }

        MetaConfig cfg;
        cfg.alpha = 0.01;
        cfg.beta = 0.7;
        cfg.support_size = K;
        cfg.query_size = J;

        ControlFilter w(L);
        w.weights = random_vector(rng, L, 0.3);

        const auto stepped = outer_update(w, dist, cfg, plant);
        std::vector<double> step(L);
        for (std::size_t i = 0; i < L; ++i) step[i] = stepped.weights[i] - w.weights[i];

        auto objective = [&](const ControlFilter& wt) {
            double loss = 0.0;
            for (const auto& task : dist.tasks) {
                loss += query_loss(inner_update(wt, task, cfg.alpha, plant), task,
                                   plant);
            }
            return loss;
        };

        std::vector<double> fd(L);
        for (std::size_t i = 0; i < L; ++i) {
            ControlFilter hi = w, lo = w;
            hi.weights[i] += h;
            lo.weights[i] -= h;
            fd[i] = (objective(hi) - objective(lo)) / (2.0 * h);
        }

        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < L; ++i) {
            const double want = -cfg.beta * fd[i];
            num += (step[i] - want) * (step[i] - want);
            den += want * want;
        }
        REQUIRE(den > 0.0);
        REQUIRE(std::sqrt(num / den) < 1e-5);
    }
}

TEST_CASE("support covariance is symmetric positive semidefinite") {
    const auto plant = case1_plant();
    Rng rng(313);
    const std::size_t L = 9;
    const auto task = random_task(rng, L, plant.secondary.size() - 1, 6, 2);
    const auto r = support_covariance(task, plant, L);

    for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t j = 0; j < L; ++j) {
            REQUIRE_THAT(r[i * L + j],
                         Catch::Matchers::WithinAbs(r[j * L + i], 1e-12));
        }
    }
    for (int trial = 0; trial < 50; ++trial) {
        const auto z = random_vector(rng, L);
        double quad = 0.0;
        for (std::size_t i = 0; i < L; ++i) {
            for (std::size_t j = 0; j < L; ++j) {
                quad += z[i] * r[i * L + j] * z[j];
            }
        }
        REQUIRE(quad >= -1e-12);
    }
}

TEST_CASE("meta fixed point: a shared generating filter stays put") {
    const auto plant = case1_plant();
    Rng rng(515);
    const std::size_t L = 6;
    ControlFilter w_star(L);
    w_star.weights = random_vector(rng, L);

    TaskDistribution dist;
    dist.filter_length = L;
    for (int m = 0; m < 3; ++m) {
        auto task = random_task(rng, L, plant.secondary.size() - 1, 4, 4);
        for (auto* pairs : {&task.support, &task.query}) {
            for (auto& p : *pairs) {
                const auto u =
                    naive_filtered_window(p.x_ext, plant.secondary.taps, L);
                p.d = 0.0;
                for (std::size_t i = 0; i < L; ++i) p.d += w_star.weights[i] * u[i];
            }
        }
        dist.tasks.push_back(std::move(task));
    }

    MetaConfig cfg;
    cfg.alpha = 0.02;
    cfg.beta = 0.4;
    cfg.support_size = 4;
    cfg.query_size = 4;
    const auto out = outer_update(w_star, dist, cfg, plant);
    for (std::size_t i = 0; i < L; ++i) {
        REQUIRE_THAT(out.weights[i],
                     Catch::Matchers::WithinAbs(w_star.weights[i], 1e-12));
    }
}

TEST_CASE("pretrain with zero iterations returns the zero filter") {
    const auto plant = case1_plant();
    CategorySpec spec;
    spec.label = "zero_iter";
    spec.sample_rate = 16000;
    std::vector<std::vector<Signal>> recs;
    recs.push_back({synth_noise(spec.with_subclass(0), 0.2, 1)});

    const auto dist = make_tasks(recs, plant, 8, 3, 3, 5);
    MetaConfig cfg;
    cfg.support_size = 3;
    cfg.query_size = 3;
    cfg.iterations = 0;
    const auto out = pretrain(dist, cfg, plant);
    REQUIRE(out.filter.weights == std::vector<double>(8, 0.0));
    REQUIRE(out.loss_history.empty());
}

TEST_CASE("pretrain is deterministic per seed") {
    const auto plant = case1_plant();
    CategorySpec spec;
    spec.label = "determinism";
    spec.band_low_hz = 400.0;
    spec.band_high_hz = 1200.0;
    spec.sample_rate = 16000;
    std::vector<std::vector<Signal>> recs;
    for (int s = 0; s < 3; ++s) {
        recs.push_back({synth_noise(spec.with_subclass(s), 0.3,
                                    static_cast<std::uint64_t>(s) + 10)});
    }
    const auto dist = make_tasks(recs, plant, 10, 5, 5, 42);

    MetaConfig cfg;
    cfg.alpha = 0.03;
    cfg.beta = 0.03;
    cfg.support_size = 5;
    cfg.query_size = 5;
    cfg.iterations = 40;
    cfg.seed = 7;

    const auto a = pretrain(dist, cfg, plant);
    const auto b = pretrain(dist, cfg, plant);
    REQUIRE(a.filter.weights == b.filter.weights);
    REQUIRE(a.loss_history == b.loss_history);
    REQUIRE(a.loss_history.size() == 40);

    MetaConfig other = cfg;
    other.seed = 8;
    const auto c = pretrain(dist, other, plant);
    REQUIRE(a.filter.weights != c.filter.weights);
}

TEST_CASE("pretrained filter adapts faster than a zero start") {
    const auto plant = case1_plant();
    CategorySpec spec;
    spec.label = "advantage";
    spec.band_low_hz = 500.0;
    spec.band_high_hz = 2000.0;
    spec.sample_rate = 16000;

    std::vector<std::vector<Signal>> recs;
    for (int s = 0; s < 9; ++s) {
        recs.push_back({synth_noise(spec.with_subclass(s), 1.0,
                                    static_cast<std::uint64_t>(s) + 100)});
    }
    const auto dist = make_tasks(recs, plant, 10, 10, 10, 21);

    MetaConfig cfg;
    cfg.alpha = 0.03;
    cfg.beta = 0.03;
    cfg.support_size = 10;
    cfg.query_size = 10;
    cfg.iterations = 300;
    cfg.seed = 3;
    const auto pre = pretrain(dist, cfg, plant);

    // Held-out subclass.
    const auto ref = synth_noise(spec.with_subclass(9), 2.0, 999);
    CancellationConfig cc;
    cc.algo = Algo::fxlms;
    cc.mu = 0.02;

    auto samples_to_threshold = [&](const ControlFilter& w0) {
        const auto run = run_cancellation(ref, plant, w0, cc);
        for (const auto& r : run.trace.rows) {
            if (!std::isnan(r.anr_db) && r.anr_db <= -10.0) return r.n;
        }
        return ref.samples.size() + 1;
    };

    const auto warm = samples_to_threshold(pre.filter);
    const auto cold = samples_to_threshold(ControlFilter(10));
    REQUIRE(warm < cold);
    REQUIRE(warm <= ref.samples.size());
}

TEST_CASE("build_database trains distinct filters and round-trips") {
    const auto plant = case1_plant();
    auto make_cat = [&](const std::string& label, double lo, double hi,
                        std::uint64_t seed) {
        CategorySpec spec;
        spec.label = label;
        spec.band_low_hz = lo;
        spec.band_high_hz = hi;
        spec.sample_rate = 16000;
        std::vector<std::vector<Signal>> recs;
        for (int s = 0; s < 3; ++s) {
            recs.push_back({synth_noise(spec.with_subclass(s), 0.3, seed + s)});
        }
        return make_tasks(recs, plant, 8, 4, 4, seed, label);
    };

    std::map<std::string, TaskDistribution> cats;
    cats.emplace("low_band", make_cat("low_band", 300.0, 800.0, 11));
    cats.emplace("high_band", make_cat("high_band", 2000.0, 4000.0, 22));

    MetaConfig cfg;
    cfg.alpha = 0.02;
    cfg.beta = 0.02;
    cfg.support_size = 4;
    cfg.query_size = 4;
    cfg.iterations = 60;
    std::map<std::string, MetaConfig> cfgs{{"low_band", cfg}, {"high_band", cfg}};

    const auto db = build_database(cats, cfgs, plant);
    REQUIRE(db.entries.size() == 2);
    REQUIRE(db.filter_length() == 8);
    REQUIRE(db.entries.at("low_band").filter.weights !=
            db.entries.at("high_band").filter.weights);
    REQUIRE(db.entries.at("low_band").fingerprint == plant_fingerprint(plant));

    const auto dir = fs::temp_directory_path() / "sfanc_test_meta";
    fs::create_directories(dir);
    const auto path = dir / "db.json";
    save_database(db, path);
    const auto back = load_database(path);
    REQUIRE(back.entries.size() == 2);
    for (const auto& [label, entry] : db.entries) {
        REQUIRE(back.entries.at(label).filter.weights == entry.filter.weights);
        REQUIRE(back.entries.at(label).loss_history == entry.loss_history);
    }
}
