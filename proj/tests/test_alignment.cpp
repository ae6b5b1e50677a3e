#include <doctest.h>

#include "oracles.hpp"
#include "pan/alignment.hpp"
#include "pan/fedsim.hpp"

using namespace pan;

namespace {

Matrix random_cost(std::size_t n, Rng& rng) {
    Matrix c(n, n);
    for (auto& v : c.data()) v = rng.uniform() * 10.0;
    return c;
}

}  // namespace

TEST_CASE("hungarian: equals brute force for every J <= 6 over 100 seeds") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        for (std::size_t n = 1; n <= 6; ++n) {
            const Matrix cost = random_cost(n, rng);
            std::vector<std::size_t> best;
            const double want = oracle::brute_force_assignment(cost, &best);
            const Assignment got = hungarian(cost);
            CAPTURE(seed);
            CAPTURE(n);
            CHECK(got.cost == want);
            CHECK(got.col_of_row == best);
        }
    }
}

TEST_CASE("hungarian: hand 3x3 instance and degenerate sizes") {
    const Matrix cost{{4, 1, 3}, {2, 0, 5}, {3, 2, 2}};
    const Assignment a = hungarian(cost);
    CHECK(a.col_of_row == std::vector<std::size_t>{1, 0, 2});
    CHECK(a.cost == 5.0);
    CHECK(hungarian(Matrix(0, 0)).col_of_row.empty());
    CHECK_THROWS_AS(hungarian(Matrix(2, 3)), ShapeError);
}

TEST_CASE("hungarian: larger instances beat random assignments") {
    Rng rng(5);
    const Matrix cost = random_cost(60, rng);
    const Assignment a = hungarian(cost);
    Permutation as_perm{a.col_of_row};
    CHECK(as_perm.is_bijection());
    for (int trial = 0; trial < 200; ++trial) {
        const Permutation p = gen_permutation(60, 1.0, rng);
        double c = 0.0;
        for (std::size_t i = 0; i < 60; ++i) c += cost(i, p.index[i]);
        CHECK(a.cost <= c);
    }
}

TEST_CASE("match_neurons: self match and permuted recovery") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t width = rng.uniform_int(2, 6);
        const ActivationProfile global{1, oracle::random_matrix(width, 20, rng)};
        const AssignmentResult self = match_neurons(global, global);
        CHECK(self.assignment == Permutation::identity(width));
        CHECK(self.match_ratio == 1.0);
        CHECK(self.cost == 0.0);

        const Permutation p = gen_permutation(width, 1.0, rng);
        const ActivationProfile local{1, p.permute_rows(global.values)};
        const AssignmentResult r = match_neurons(global, local);
        CHECK(r.assignment == p.inverse());
        CHECK(r.cost == 0.0);
        CHECK(r.match_ratio == r_kept(p));
    }
    const ActivationProfile a{1, Matrix(3, 4)}, b{1, Matrix(3, 5)};
    CHECK_THROWS_AS(match_neurons(a, b), ShapeError);
}

TEST_CASE("match_neurons: cost invariant under a shared permutation") {
    Rng rng(12);
    for (int trial = 0; trial < 30; ++trial) {
        const ActivationProfile g{1, oracle::random_matrix(7, 9, rng)};
        const ActivationProfile l{1, oracle::random_matrix(7, 9, rng)};
        const Permutation p = gen_permutation(7, 1.0, rng);
        const double base = match_neurons(g, l).cost;
        const double moved = match_neurons({1, p.permute_rows(g.values)}, {1, p.permute_rows(l.values)}).cost;
        CHECK(moved == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("pairwise_l2") {
    const Matrix a{{0, 0}, {3, 4}};
    const Matrix b{{0, 0}};
    const Matrix d = pairwise_l2(a, b);
    CHECK(d(0, 0) == 0.0);
    CHECK(d(1, 0) == 5.0);
}

TEST_CASE("collect_activations") {
    const Mlp m = make_mlp({4, 6, 5, 2}, {}, 3);
    Rng rng(1);
    const Matrix probe = oracle::random_matrix(12, 4, rng);

    const Matrix first(1, 4, std::vector<double>(probe.row(0).begin(), probe.row(0).end()));
    const ActivationProfile single = collect_activations(m, first, 2);
    const LayerActivations acts = forward(m, probe);
    REQUIRE(single.values.cols() == 1);
    for (std::size_t i = 0; i < 5; ++i) CHECK(single.values(i, 0) == acts.post[2](0, i));

    CHECK(collect_activations(m, probe, 1).values == collect_activations(Mlp(m), probe, 1).values);
    CHECK_THROWS_AS(collect_activations(m, probe, 0), std::out_of_range);
    CHECK_THROWS_AS(collect_activations(m, probe, 3), std::out_of_range);

    // Shuffled model: its profile is the row-permuted original.
    const PermutationPlan plan = gen_plan(m, 1.0, rng);
    const Mlp s = shuffle_model(m, plan);
    for (std::size_t layer : {1, 2}) {
        const Matrix orig = collect_activations(m, probe, layer).values;
        const Matrix moved = collect_activations(s, probe, layer).values;
        CHECK(frobenius_distance(moved, plan.hidden[layer - 1].permute_rows(orig)) < 1e-12);
    }
}

TEST_CASE("preference_vectors: analytic single-neuron head") {
    // 1 -> 1 -> 3, hidden h = relu(x), logits Z = [h, 0, 0]: only class 0 is fed.
    Mlp m = make_zero_mlp({1, 1, 3}, {});
    m.layers[0].weight(0, 0) = 1.0;
    m.layers[1].weight(0, 0) = 1.0;
    Dataset probe;
    probe.num_classes = 3;
    probe.features = Matrix{{0.5}, {2.0}, {1.0}, {3.0}};
    probe.labels = {0, 1, 2, 0};
    const PreferenceMatrix p = preference_vectors(m, probe, 1);
    CHECK(p.values(0, 0) == 3.5);  // 0.5 * 1 + 3.0 * 1
    CHECK(p.values(0, 1) == 0.0);
    CHECK(p.values(0, 2) == 0.0);
    CHECK(p.argmax == std::vector<int>{0});
}

TEST_CASE("preference_vectors: zero activations and ties") {
    const Mlp m = make_zero_mlp({3, 4, 3}, {});
    const Dataset probe = gen_synthetic(30, 3, 3, 1.0, 1);
    const PreferenceMatrix p = preference_vectors(m, probe, 1);
    for (double v : p.values.data()) CHECK(v == 0.0);
    for (int c : p.argmax) CHECK(c == 0);  // all-zero rows tie to the lowest class
}

TEST_CASE("preference_vectors: missing class and bad layer") {
    const Mlp m = make_mlp({3, 4, 3}, {}, 1);
    Dataset probe = gen_synthetic(30, 3, 3, 1.0, 1);
    CHECK_THROWS_AS(preference_vectors(m, probe, 2), std::out_of_range);
    for (auto& y : probe.labels)
        if (y == 2) y = 1;
    CHECK_THROWS_AS(preference_vectors(m, probe, 1), ConfigError);
}

TEST_CASE("preference_vectors: permuting neurons permutes rows") {
    const Mlp m = make_mlp({5, 8, 6, 4}, {}, 2);
    const Dataset probe = gen_synthetic(80, 5, 4, 2.0, 3);
    Rng rng(6);
    const PermutationPlan plan = gen_plan(m, 1.0, rng);
    const Mlp s = shuffle_model(m, plan);
    for (std::size_t layer : {1, 2}) {
        const PreferenceMatrix a = preference_vectors(m, probe, layer);
        const PreferenceMatrix b = preference_vectors(s, probe, layer);
        const Permutation& p = plan.hidden[layer - 1];
        CHECK(frobenius_distance(b.values, p.permute_rows(a.values)) < 1e-12);
        for (std::size_t j = 0; j < p.size(); ++j) CHECK(b.argmax[j] == a.argmax[p.index[j]]);
    }
}

TEST_CASE("fusion_curve: endpoints, flat self-curve, and errors") {
    const auto [train, test] = gen_synthetic_split(400, 200, 5, 3, 2.0, 1);
    LocalTrainConfig cfg;
    cfg.epochs = 2;
    const Mlp a = train_central(make_mlp({5, 12, 3}, {}, 1), train, test, cfg, 1).model;
    const Mlp b = train_central(make_mlp({5, 12, 3}, {}, 2), train, test, cfg, 2).model;
    const std::vector<double> grid{0.0, 0.25, 0.5, 0.75, 1.0};

    const FusionCurve curve = fusion_curve(a, b, test, grid);
    CHECK(curve.mu == grid);
    CHECK(curve.accuracy.front() == evaluate(a, test));
    CHECK(curve.accuracy.back() == evaluate(b, test));

    const FusionCurve flat = fusion_curve(a, a, test, grid);
    for (double acc : flat.accuracy) CHECK(acc == flat.accuracy.front());

    CHECK_THROWS_AS(fusion_curve(a, make_mlp({5, 10, 3}, {}, 1), test, grid), ShapeError);
    Mlp with_pan = b;
    with_pan.set_pan({PanMode::Multiplicative, 0.1, 1.0});
    CHECK_THROWS_AS(fusion_curve(a, with_pan, test, grid), ConfigError);
    const std::vector<double> bad{1.5};
    CHECK_THROWS_AS(fusion_curve(a, b, test, bad), ConfigError);
}

TEST_CASE("fusion_curve: independently trained halves show a midpoint barrier") {
    int barrier = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto [train, test] = gen_synthetic_split(1000, 500, 10, 5, 2.5, seed);
        std::vector<std::size_t> first, second;
        for (std::size_t i = 0; i < train.size(); ++i) (i % 2 ? second : first).push_back(i);
        LocalTrainConfig cfg;
        cfg.epochs = 10;
        const Mlp a = train_central(make_mlp({10, 32, 32, 5}, {}, 100 + seed), train.subset(first), test, cfg, seed).model;
        const Mlp b = train_central(make_mlp({10, 32, 32, 5}, {}, 200 + seed), train.subset(second), test, cfg, seed).model;
        const std::vector<double> grid{0.0, 0.5, 1.0};
        const FusionCurve c = fusion_curve(a, b, test, grid);
        barrier += c.accuracy[1] <= std::max(c.accuracy[0], c.accuracy[2]);
    }
    CHECK(barrier >= 4);
}

TEST_CASE("match ratio drops after an injected shuffle") {
    const auto [train, test] = gen_synthetic_split(1000, 300, 10, 5, 2.5, 4);
    LocalTrainConfig cfg;
    cfg.epochs = 5;
    const Mlp global = train_central(make_mlp({10, 64, 64, 5}, {}, 4), train, test, cfg, 4).model;

    std::vector<std::size_t> part;
    for (std::size_t i = 0; i < 200; ++i) part.push_back(i);
    LocalTrainConfig tune;
    tune.epochs = 1;
    tune.lr = 0.01;

    int higher = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Mlp plain = global;
        Rng r1(seed);
        train_local(plain, train, part, tune, r1);

        Rng plan_rng(seed + 50);
        Mlp shuffled = shuffle_model(global, gen_plan(global, 0.1, plan_rng));
        Rng r2(seed);
        train_local(shuffled, train, part, tune, r2);

        const Matrix probe = test.features;
        const auto g = collect_activations(global, probe, 1);
        const double plain_ratio = match_neurons(g, collect_activations(plain, probe, 1)).match_ratio;
        const double shuffled_ratio = match_neurons(g, collect_activations(shuffled, probe, 1)).match_ratio;
        higher += plain_ratio > shuffled_ratio;
    }
    CHECK(higher == 5);
}
