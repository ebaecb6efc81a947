// Copyright (c) 2026, The mmcl Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <random>

#include "mmcl/modality_curriculum.hpp"
#include "mmcl/spl_trainer.hpp"
#include "support.hpp"

using namespace mmcl;
using Catch::Matchers::WithinAbs;

namespace {

DatasetSpec small_spec(std::uint64_t seed, std::size_t n = 120) {
    DatasetSpec spec;
    spec.n_samples = n;
    spec.n_classes = 3;
    spec.modalities = {ModalitySpec{6, 2.0, 0.5}, ModalitySpec{4, 0.5, 1.0}};
    spec.sample_noise_spread = 2.0;
    spec.seed = seed;
    return spec;
}

std::vector<std::vector<std::size_t>> dims_for(const Dataset& data, std::size_t hidden) {
    std::vector<std::vector<std::size_t>> dims;
    for (std::size_t d : data.feature_dims) dims.push_back({d, hidden, data.n_classes});
    return dims;
}

std::vector<std::size_t> all_indices(const Dataset& data) {
    std::vector<std::size_t> idx(data.samples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
}

TrainState make_state(const Dataset& data, const TrainOptions& opt, EtaSchedule schedule = {}) {
    auto model = MultimodalModel::create(dims_for(data, 5), Activation::tanh, opt.fusion, opt.seed);
    return TrainState(std::move(model), opt.curriculum.gamma, schedule);
}

double max_param_diff(const MlpEncoder& a, const MlpEncoder& b) {
    double worst = 0.0;
    for (std::size_t l = 0; l < a.num_layers(); ++l) {
        for (std::size_t i = 0; i < a.weights[l].data().size(); ++i) {
            worst = std::max(worst, std::abs(a.weights[l].data()[i] - b.weights[l].data()[i]));
        }
        for (std::size_t i = 0; i < a.biases[l].size(); ++i) worst = std::max(worst, std::abs(a.biases[l][i] - b.biases[l][i]));
    }
    return worst;
}

}  // namespace

TEST_CASE("solve_v: examples", "[spl]") {
    CHECK(solve_v(0.7, 0.0, 0.3) == 1.0);
    CHECK_THAT(solve_v(0.5, 2.0, 0.5), WithinAbs(0.0, 1e-12));
    CHECK_THAT(testing::grid_solve_v(0.5 * 2.0, 0.5), WithinAbs(0.0, 1e-3));
    CHECK_THAT(solve_v(0.5, 1.0, 0.5), WithinAbs(0.5, 1e-12));
    CHECK_THAT(testing::grid_solve_v(0.5, 0.5), WithinAbs(0.5, 1e-3));
}

TEST_CASE("solve_v: nonpositive eta throws", "[spl][errors]") {
    CHECK_THROWS_AS(solve_v(0.5, 1.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(solve_v(0.5, 1.0, -1.0), std::invalid_argument);
}

TEST_CASE("solve_v: property - grid minimiser and monotonicity", "[spl][property]") {
    std::mt19937_64 rng(61);
    std::uniform_real_distribution<double> w(0.0, 1.0), l(0.0, 6.0), e(0.01, 4.0);
    for (int trial = 0; trial < 300; ++trial) {
        const double wf = w(rng), tl = l(rng), eta = e(rng);
        const double v = solve_v(wf, tl, eta);
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
        REQUIRE(std::abs(v - testing::grid_solve_v(wf * tl, eta)) < 1e-3);
        REQUIRE(solve_v(wf, tl * 1.3, eta) <= v);
        REQUIRE(solve_v(wf, tl, eta * 1.3) >= v);
    }
}

TEST_CASE("solve_v: inclusion set grows as eta grows", "[spl][property]") {
    std::mt19937_64 rng(67);
    std::uniform_real_distribution<double> wl(0.0, 3.0);
    std::vector<double> costs(500);
    for (double& c : costs) c = wl(rng);
    EtaSchedule sched{0.2, 0.5, EtaKind::linear};
    std::vector<bool> included(costs.size(), false);
    for (std::size_t t = 0; t < 10; ++t) {
        const double eta = eta_at(sched, t);
        for (std::size_t i = 0; i < costs.size(); ++i) {
            const bool now = solve_v(1.0, costs[i], eta) > 0.0;
            REQUIRE((now || !included[i]));
            included[i] = now;
        }
    }
}

TEST_CASE("eta_at: linear and exponential schedules", "[spl]") {
    CHECK(eta_at({1.7, 0.3, EtaKind::linear}, 0) == 1.7);
    CHECK(eta_at({1.7, 0.3, EtaKind::exponential}, 0) == 1.7);
    CHECK_THAT(eta_at({1.0, 0.5, EtaKind::linear}, 4), WithinAbs(3.0, 1e-12));
    CHECK_THAT(eta_at({1.0, 1.0, EtaKind::exponential}, 3), WithinAbs(8.0, 1e-12));
    CHECK(parse_eta_kind("exponential") == EtaKind::exponential);
    CHECK_THROWS_AS(parse_eta_kind("cosine"), std::invalid_argument);
}

TEST_CASE("modality_alignment: identical, negated and orthogonal sets", "[spl]") {
    const std::vector<std::vector<double>> a{{1.0, 2.0, 6.0}, {0.5, -1.0, 0.0}};
    std::vector<std::vector<double>> neg(a);
    for (auto& v : neg) {
        for (double& x : v) x = -x;
    }
    CHECK_THAT(modality_alignment(a, a), WithinAbs(1.0, 1e-12));
    CHECK_THAT(modality_alignment(a, neg), WithinAbs(0.0, 1e-12));
    // Centered (1, -1, 0) and (1, 1, -2) are orthogonal.
    const std::vector<std::vector<double>> x{{1.0, -1.0, 0.0}}, y{{1.0, 1.0, -2.0}};
    CHECK_THAT(modality_alignment(x, y), WithinAbs(0.5, 1e-12));
    const std::vector<std::vector<double>> flat{{3.0, 3.0, 3.0}};
    CHECK_THAT(modality_alignment(flat, x), WithinAbs(0.5, 1e-12));
    CHECK_THROWS_AS(modality_alignment(a, x), std::invalid_argument);
}

TEST_CASE("train_epoch: one-sample epoch matches an externally composed step", "[spl]") {
    Dataset data = generate(small_spec(3, 1));
    TrainOptions opt;
    opt.batch_size = 1;
    opt.lr = 0.3;
    opt.seed = 4;
    TrainState state = make_state(data, opt, EtaSchedule{1.0, 0.5, EtaKind::linear});
    const MultimodalModel before = state.model;
    const auto rec = train_epoch(state, data, all_indices(data), opt, 0);

    // Oracle: compose the module operations by hand.
    const SyntheticSample& s = data.samples[0];
    const std::size_t n_mod = 2, y = s.label;
    std::vector<ForwardResult> fr;
    std::vector<std::vector<double>> probs, logits;
    std::vector<double> losses;
    for (std::size_t m = 0; m < n_mod; ++m) {
        fr.push_back(forward(before.encoders[m], s.features[m]));
        logits.push_back(fr.back().logits);
        probs.push_back(softmax(fr.back().logits));
        losses.push_back(cross_entropy(probs.back(), y));
    }
    const auto cold = activate_and_reweight(omega_init(losses), std::vector<double>(n_mod, 0.5), 0.5);
    const double prelim = cross_entropy(softmax(fuse_gated(logits, cold.omega_star, cold.active)), y);
    const ModalityState ms = assess_modalities(losses, prelim, ModalityOptions{});
    const auto fused = softmax(fuse_gated(logits, ms.omega_star, ms.active));
    const double lc = cross_entropy(fused, y);
    const PredictionSet ps{probs, fused, y};
    const MetricTriple uniform{1.0 / 3, 1.0 / 3, 1.0 / 3};
    const auto diff = score_difficulty(losses, lc, ps, MetricOrientation{}, uniform);
    const double w = diff.d_task * ms.d_fuse;
    const double v = std::clamp(1.0 - w * diff.d_loss / (2.0 * 1.0), 0.0, 1.0);
    REQUIRE(v > 0.0);

    CHECK_THAT(rec.mean_v, WithinAbs(v, 1e-12));
    CHECK_THAT(rec.mean_d_task, WithinAbs(diff.d_task, 1e-12));
    CHECK_THAT(rec.mean_d_fuse, WithinAbs(ms.d_fuse, 1e-12));
    CHECK_THAT(rec.mean_loss, WithinAbs(diff.d_loss, 1e-12));

    for (std::size_t m = 0; m < n_mod; ++m) {
        std::vector<double> g(probs[m]);
        g[y] -= 1.0;
        for (double& x : g) x *= diff.delta_weights[m];
        for (std::size_t c = 0; c < g.size(); ++c) g[c] += ms.omega_star[m] * (fused[c] - (c == y ? 1.0 : 0.0));
        MlpEncoder expected = before.encoders[m];
        sgd_step(expected, backward(expected, fr[m].cache, g), opt.lr, v * w);
        INFO("modality " << m);
        CHECK(max_param_diff(expected, state.model.encoders[m]) < 1e-12);
    }
    // The first volatility update only records the standardized values.
    CHECK(state.volatility.ema == MetricTriple{0.0, 0.0, 0.0});
    REQUIRE(state.volatility.prev_standardized.has_value());
    CHECK_THAT((*state.volatility.prev_standardized)[0], WithinAbs(diff.standardized[0], 1e-12));
}

TEST_CASE("train_epoch: concat and summation steps follow the finite-difference gradient", "[spl]") {
    Dataset data = generate(small_spec(8, 1));
    const SyntheticSample& s = data.samples[0];
    for (FusionKind kind : {FusionKind::concat_head, FusionKind::summation, FusionKind::uniform_weighted}) {
        TrainOptions opt;
        opt.batch_size = 1;
        opt.lr = 1e-3;
        opt.fusion.kind = kind;
        opt.fusion.head_hidden = {3};
        TrainState state = make_state(data, opt, EtaSchedule{5.0, 0.5, EtaKind::linear});
        const MultimodalModel before = state.model;
        (void)train_epoch(state, data, all_indices(data), opt, 0);
        const auto& sc = state.last_epoch.at(0);
        const double scale = sc.v * sc.d_task * sc.d_fuse;
        REQUIRE(scale > 0.0);

        // Entropy weights are held constant at their pre-step values.
        std::vector<double> delta;
        {
            std::vector<std::vector<double>> probs;
            for (std::size_t m = 0; m < 2; ++m) probs.push_back(softmax(forward(before.encoders[m], s.features[m]).logits));
            const PredictionSet ps{probs, probs[0], s.label};
            delta = deviation_loss(std::vector<double>{1.0, 1.0}, 0.0, ps).delta;
        }
        auto objective = [&](const MultimodalModel& model) {
            double j = 0.0;
            for (std::size_t m = 0; m < 2; ++m) {
                j += delta[m] * cross_entropy(softmax(forward(model.encoders[m], s.features[m]).logits), s.label);
            }
            return j - std::log(model.predict(s)[s.label]);
        };
        MultimodalModel probe = before;
        double worst = 0.0;
        auto check = [&](double& param, double after, double initial) {
            const double saved = param;
            param = saved + 1e-6;
            const double up = objective(probe);
            param = saved - 1e-6;
            const double down = objective(probe);
            param = saved;
            const double numeric = (up - down) / 2e-6;
            const double applied = (initial - after) / (opt.lr * scale);
            worst = std::max(worst, std::abs(numeric - applied) / std::max({std::abs(numeric), std::abs(applied), 1e-4}));
        };
        for (std::size_t m = 0; m < 2; ++m) {
            for (std::size_t l = 0; l < probe.encoders[m].num_layers(); ++l) {
                auto p = probe.encoders[m].weights[l].data();
                for (std::size_t i = 0; i < p.size(); ++i) {
                    check(p[i], state.model.encoders[m].weights[l].data()[i], before.encoders[m].weights[l].data()[i]);
                }
            }
        }
        if (probe.head) {
            auto p = probe.head->weights[0].data();
            for (std::size_t i = 0; i < p.size(); ++i) check(p[i], state.model.head->weights[0].data()[i], before.head->weights[0].data()[i]);
        }
        INFO("fusion " << to_string(kind));
        CHECK(worst < 1e-5);
    }
}

TEST_CASE("train_epoch: zero learning rate leaves the model unchanged", "[spl]") {
    Dataset data = generate(small_spec(1));
    TrainOptions opt;
    opt.lr = 0.0;
    TrainState state = make_state(data, opt);
    const MultimodalModel before = state.model;
    const auto r0 = train_epoch(state, data, all_indices(data), opt, 0);
    const auto r1 = train_epoch(state, data, all_indices(data), opt, 1);
    for (std::size_t m = 0; m < 2; ++m) CHECK(state.model.encoders[m] == before.encoders[m]);
    CHECK(r0.accuracy == r1.accuracy);
}

TEST_CASE("train_epoch: a huge eta includes every sample fully", "[spl]") {
    Dataset data = generate(small_spec(2));
    TrainOptions opt;
    TrainState state = make_state(data, opt, EtaSchedule{1e300, 0.5, EtaKind::linear});
    const auto rec = train_epoch(state, data, all_indices(data), opt, 0);
    CHECK(rec.mean_v == 1.0);
    for (const auto& sc : state.last_epoch) CHECK(sc.v == 1.0);
}

TEST_CASE("train_epoch: automatic eta0 is half the first-batch median of W L", "[spl]") {
    Dataset data = generate(small_spec(2, 1));
    TrainOptions opt;
    TrainState state = make_state(data, opt);
    (void)train_epoch(state, data, all_indices(data), opt, 0);
    const auto& sc = state.last_epoch.at(0);
    CHECK_THAT(state.schedule.eta0, WithinAbs(0.5 * sc.d_task * sc.d_fuse * sc.task_loss, 1e-12));
    // With a single sample W L = 2 eta0, which sits exactly on the clamp.
    CHECK_THAT(sc.v, WithinAbs(0.0, 1e-12));
}

TEST_CASE("train_epoch: ablation switches", "[spl]") {
    Dataset data = generate(small_spec(5));
    TrainOptions opt;
    opt.curriculum.sdc_enabled = false;
    TrainState a = make_state(data, opt);
    (void)train_epoch(a, data, all_indices(data), opt, 0);
    for (const auto& sc : a.last_epoch) CHECK(sc.d_task == 1.0);

    TrainOptions mdc_off;
    mdc_off.curriculum.mdc_enabled = false;
    TrainState b = make_state(data, mdc_off);
    const auto rec = train_epoch(b, data, all_indices(data), mdc_off, 0);
    for (const auto& sc : b.last_epoch) CHECK(sc.d_fuse == 1.0);
    CHECK(rec.gates == std::vector<double>{1.0, 1.0});

    TrainOptions spl_off;
    spl_off.curriculum.self_paced_enabled = false;
    TrainState c = make_state(data, spl_off);
    CHECK(train_epoch(c, data, all_indices(data), spl_off, 0).mean_v == 1.0);
}

TEST_CASE("train_epoch: identical seeds give identical records", "[spl][property]") {
    Dataset data = generate(small_spec(9));
    auto run = [&] {
        TrainOptions opt;
        opt.seed = 21;
        TrainState state = make_state(data, opt);
        std::vector<TrainRecord> recs;
        for (std::size_t t = 0; t < 3; ++t) recs.push_back(train_epoch(state, data, all_indices(data), opt, t));
        return std::make_pair(recs, state.model);
    };
    const auto [ra, ma] = run();
    const auto [rb, mb] = run();
    for (std::size_t t = 0; t < ra.size(); ++t) {
        CHECK(ra[t].mean_loss == rb[t].mean_loss);
        CHECK(ra[t].accuracy == rb[t].accuracy);
        CHECK(ra[t].psi == rb[t].psi);
        CHECK(ra[t].gates == rb[t].gates);
    }
    for (std::size_t m = 0; m < 2; ++m) CHECK(ma.encoders[m] == mb.encoders[m]);
}

TEST_CASE("train_epoch: loss falls over the first epochs on a separable task", "[spl][property]") {
    DatasetSpec spec = small_spec(13, 400);
    spec.modalities = {ModalitySpec{6, 8.0, 1.0}, ModalitySpec{4, 4.0, 1.0}};
    spec.sample_noise_spread = 0.0;
    const Dataset data = generate(spec);
    TrainOptions opt;
    opt.seed = 13;
    TrainState state = make_state(data, opt);
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < 5; ++t) {
        const auto rec = train_epoch(state, data, all_indices(data), opt, t);
        INFO("epoch " << t);
        CHECK(rec.mean_loss < prev);
        prev = rec.mean_loss;
    }
}

TEST_CASE("train_epoch: curriculum quantities stay in range", "[spl][property]") {
    Dataset data = generate(small_spec(17, 200));
    TrainOptions opt;
    TrainState state = make_state(data, opt);
    for (std::size_t t = 0; t < 3; ++t) {
        const auto rec = train_epoch(state, data, all_indices(data), opt, t);
        CHECK_THAT(rec.psi[0] + rec.psi[1] + rec.psi[2], WithinAbs(1.0, 1e-9));
        CHECK_THAT(rec.omegas[0] + rec.omegas[1], WithinAbs(1.0, 1e-9));
        CHECK(rec.modality_alignment >= 0.0);
        CHECK(rec.modality_alignment <= 1.0);
        for (const auto& sc : state.last_epoch) {
            REQUIRE(sc.v >= 0.0);
            REQUIRE(sc.v <= 1.0);
            REQUIRE(sc.d_task > 0.0);
            REQUIRE(sc.d_task < 1.0);
            REQUIRE(sc.d_fuse > 0.0);
            REQUIRE(sc.d_fuse < 1.0);
        }
    }
}

TEST_CASE("train_epoch: NaN features abort with the sample and metric", "[spl][errors]") {
    Dataset data = generate(small_spec(4, 10));
    data.samples[6].features[1][0] = std::numeric_limits<double>::quiet_NaN();
    TrainOptions opt;
    TrainState state = make_state(data, opt);
    try {
        (void)train_epoch(state, data, all_indices(data), opt, 0);
        FAIL("expected NumericAbort");
    } catch (const NumericAbort& e) {
        CHECK(e.sample_id() == 6);
        CHECK_FALSE(e.metric().empty());
    }
}

TEST_CASE("train_epoch: inconsistent dimensions are rejected", "[spl][errors]") {
    Dataset data = generate(small_spec(4, 10));
    TrainOptions opt;
    TrainState state = make_state(data, opt);
    Dataset wrong = data;
    wrong.feature_dims[0] = 7;
    CHECK_THROWS_AS(train_epoch(state, wrong, all_indices(data), opt, 0), ShapeError);
    TrainOptions zero_batch;
    zero_batch.batch_size = 0;
    CHECK_THROWS_AS(train_epoch(state, data, all_indices(data), zero_batch, 0), std::invalid_argument);
}
