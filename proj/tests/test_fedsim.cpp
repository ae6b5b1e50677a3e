#include <doctest.h>

#include "oracles.hpp"
#include "pan/fedsim.hpp"

using namespace pan;

namespace {

Mlp scalar_model(double w) {
    Mlp m = make_zero_mlp({1, 1}, {});
    m.layers[0].weight(0, 0) = w;
    return m;
}

FederationConfig small_config() {
    FederationConfig cfg;
    cfg.clients = 4;
    cfg.local_epochs = 1;
    cfg.rounds = 3;
    cfg.batch_size = 32;
    cfg.hidden = {16};
    cfg.seed = 5;
    return cfg;
}

std::vector<ClientDataset> split_evenly(std::size_t n, std::size_t k) {
    std::vector<ClientDataset> out(k);
    for (std::size_t i = 0; i < n; ++i) out[i % k].indices.push_back(i);
    for (std::size_t c = 0; c < k; ++c) out[c].client = c;
    return out;
}

}  // namespace

TEST_CASE("algorithm names round trip") {
    for (Algorithm a : {Algorithm::FedAvg, Algorithm::FedProx, Algorithm::FedOpt})
        CHECK(parse_algorithm(to_string(a)) == a);
    CHECK_THROWS_AS(parse_algorithm("scaffold"), ConfigError);
}

TEST_CASE("FederationConfig validation") {
    FederationConfig cfg = small_config();
    CHECK(cfg.selected_count() == 4);
    cfg.ratio = 0.3;
    CHECK(cfg.selected_count() == 2);
    cfg.validate();
    cfg.ratio = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_config();
    cfg.rounds = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_config();
    cfg.alpha = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("weight_divergence") {
    const std::vector<Mlp> same{scalar_model(2), scalar_model(2), scalar_model(2)};
    CHECK(weight_divergence(same, 1) == 0.0);

    const std::vector<Mlp> two{scalar_model(1), scalar_model(3)};
    CHECK(weight_divergence(two, 1) == 1.0);

    std::vector<Mlp> models;
    for (std::uint64_t s = 0; s < 4; ++s) models.push_back(make_mlp({3, 5, 2}, {}, s));
    const double before = weight_divergence(models, 1);
    Rng rng(1);
    const Matrix shift = oracle::random_matrix(5, 3, rng);
    for (auto& m : models)
        for (std::size_t i = 0; i < shift.size(); ++i) m.layers[0].weight.data()[i] += shift.data()[i];
    CHECK(weight_divergence(models, 1) == doctest::Approx(before).epsilon(1e-12));

    CHECK_THROWS_AS(weight_divergence(std::vector<Mlp>{scalar_model(1), make_zero_mlp({2, 1}, {})}, 1), ShapeError);
    CHECK_THROWS_AS(weight_divergence(models, 3), std::out_of_range);
}

TEST_CASE("average_models") {
    const std::vector<Mlp> two{scalar_model(2), scalar_model(4)};
    const std::vector<double> half{0.5, 0.5};
    CHECK(average_models(two, half).layers[0].weight(0, 0) == 3.0);
    const std::vector<double> skew{0.25, 0.75};
    CHECK(average_models(two, skew).layers[0].weight(0, 0) == 3.5);
}

TEST_CASE("averaging commutes with a shared permutation") {
    std::vector<Mlp> models;
    for (std::uint64_t s = 0; s < 3; ++s) models.push_back(make_mlp({4, 6, 5, 2}, {PanMode::Multiplicative, 0.1, 1}, s));
    Rng rng(8);
    const PermutationPlan plan = gen_plan(models[0], 0.7, rng);
    std::vector<Mlp> shuffled;
    for (const auto& m : models) shuffled.push_back(shuffle_model(m, plan));
    const std::vector<double> w(3, 1.0 / 3);
    CHECK(average_models(shuffled, w) == shuffle_model(average_models(models, w), plan));
}

TEST_CASE("evaluate: fixtures") {
    SUBCASE("constant prediction on a balanced set gives 1/C") {
        const Dataset ds = gen_synthetic(100, 3, 4, 1.0, 1);
        Mlp m = make_zero_mlp({3, 4}, {});
        m.layers[0].bias[2] = 1.0;
        CHECK(evaluate(m, ds) == 0.25);
    }
    SUBCASE("perfect memorization") {
        Dataset ds;
        ds.num_classes = 3;
        ds.features = Matrix{{1, 0, 0}, {0, 0, 1}, {0, 1, 0}, {0, 0, 1}};
        ds.labels = {0, 2, 1, 2};
        Mlp m = make_zero_mlp({3, 3}, {});
        m.layers[0].weight = Matrix::identity(3);
        CHECK(evaluate(m, ds) == 1.0);
    }
    SUBCASE("hand-counted 10-sample confusion, ties to the lowest class") {
        // Rows are one-hot scores for the predicted class; the last two rows
        // are all-zero ties that resolve to class 0.
        Dataset ds;
        ds.num_classes = 3;
        ds.features = Matrix{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 0}, {0, 1, 0},
                             {0, 0, 1}, {0, 1, 0}, {1, 0, 0}, {0, 0, 0}, {0, 0, 0}};
        ds.labels = {0, 1, 2, 1, 1, 0, 2, 0, 0, 1};
        // correct: rows 0,1,2,4,7,8 -> 6 of 10
        Mlp m = make_zero_mlp({3, 3}, {});
        m.layers[0].weight = Matrix::identity(3);
        CHECK(evaluate(m, ds) == 0.6);
    }
    CHECK_THROWS_AS(evaluate(make_zero_mlp({3, 3}, {}), Dataset{Matrix(0, 3), {}, 3}), ConfigError);
}

TEST_CASE("select_clients") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const auto s = select_clients(10, 4, rng);
        REQUIRE(s.size() == 4);
        CHECK(std::is_sorted(s.begin(), s.end()));
        CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
        CHECK(s.back() < 10);
    }
    CHECK(select_clients(5, 5, rng) == std::vector<std::size_t>{0, 1, 2, 3, 4});
    CHECK_THROWS_AS(select_clients(3, 0, rng), ConfigError);
}

TEST_CASE("run_round: one client equals its own local training") {
    const Dataset train = gen_synthetic(200, 4, 3, 3.0, 1);
    FederationConfig cfg = small_config();
    cfg.clients = 1;
    const auto clients = split_evenly(train.size(), 1);
    const RoundState state = initial_state(cfg, 4, 3);
    const RoundState next = run_round(state, cfg, train, clients, nullptr);

    Mlp local = state.global;
    Rng rng = Rng::derive(cfg.seed, {0xc11e47, 0, 0});
    train_local(local, train, clients[0].indices, cfg.local_config(), rng);
    CHECK(next.global == local);
    CHECK(next.selected == std::vector<std::size_t>{0});
    CHECK(next.metrics.divergence == std::vector<double>{0.0, 0.0});
}

TEST_CASE("run_round: zero local epochs is a fixed point") {
    const Dataset train = gen_synthetic(100, 4, 3, 3.0, 1);
    FederationConfig cfg = small_config();
    cfg.clients = 2;
    cfg.local_epochs = 0;
    const RoundState state = initial_state(cfg, 4, 3);
    const RoundState next = run_round(state, cfg, train, split_evenly(100, 2), nullptr);
    CHECK(next.global == state.global);
    CHECK(next.metrics.client_distance == 0.0);
    for (double d : next.metrics.divergence) CHECK(d == 0.0);
}

TEST_CASE("run_round: partial participation selects ceil(R K) clients") {
    const Dataset train = gen_synthetic(200, 4, 3, 3.0, 1);
    FederationConfig cfg = small_config();
    cfg.clients = 5;
    cfg.ratio = 0.5;
    const RoundState next = run_round(initial_state(cfg, 4, 3), cfg, train, split_evenly(200, 5), nullptr);
    CHECK(next.selected.size() == 3);
    CHECK(next.round == 1);
}

TEST_CASE("run_round: weighted averaging uses client sizes") {
    const Dataset train = gen_synthetic(90, 4, 3, 3.0, 1);
    FederationConfig cfg = small_config();
    cfg.clients = 2;
    cfg.weighted = true;
    std::vector<ClientDataset> clients(2);
    for (std::size_t i = 0; i < 90; ++i) clients[i < 30 ? 0 : 1].indices.push_back(i);
    clients[1].client = 1;
    const RoundState state = initial_state(cfg, 4, 3);
    const RoundState next = run_round(state, cfg, train, clients, nullptr);

    std::vector<Mlp> locals(2, state.global);
    for (std::size_t k = 0; k < 2; ++k) {
        Rng rng = Rng::derive(cfg.seed, {0xc11e47, 0, k});
        train_local(locals[k], train, clients[k].indices, cfg.local_config(), rng);
    }
    const std::vector<double> w{30.0 / 90.0, 60.0 / 90.0};
    CHECK(next.global == average_models(locals, w));
}

TEST_CASE("FedOpt with unit server step and no momentum reduces to FedAvg") {
    const Dataset train = gen_synthetic(200, 4, 3, 3.0, 1);
    FederationConfig avg = small_config();
    FederationConfig opt = avg;
    opt.algorithm = Algorithm::FedOpt;
    opt.server_lr = 1.0;
    opt.server_momentum = 0.0;
    const auto clients = split_evenly(200, 4);
    const RoundState a = run_round(initial_state(avg, 4, 3), avg, train, clients, nullptr);
    const RoundState b = run_round(initial_state(opt, 4, 3), opt, train, clients, nullptr);
    for (std::size_t l = 0; l < a.global.depth(); ++l)
        for (std::size_t i = 0; i < a.global.layers[l].weight.size(); ++i)
            CHECK(b.global.layers[l].weight.data()[i] ==
                  doctest::Approx(a.global.layers[l].weight.data()[i]).epsilon(1e-12));
    CHECK(b.server_buffer.size() == a.global.depth());
}

TEST_CASE("clients share the global encodings") {
    const Dataset train = gen_synthetic(200, 4, 3, 3.0, 1);
    FederationConfig cfg = small_config();
    cfg.pan = {PanMode::Multiplicative, 0.1, 1.0};
    cfg.hidden = {12, 12};
    RoundState state = initial_state(cfg, 4, 3);
    const auto encodings = state.global.encodings;
    CHECK(encodings[0] == gen_encoding(12, cfg.pan));
    const auto clients = split_evenly(200, 4);
    for (int r = 0; r < 3; ++r) {
        state = run_round(state, cfg, train, clients, nullptr);
        CHECK(state.global.encodings == encodings);
    }
    // Each client's copy starts from the global model and keeps its encodings.
    Mlp local = state.global;
    Rng rng(1);
    train_local(local, train, clients[2].indices, cfg.local_config(), rng);
    CHECK(local.encodings == encodings);
}

TEST_CASE("FedProx: client drift shrinks as the proximal weight grows") {
    const auto [train, test] = gen_synthetic_split(600, 100, 6, 4, 2.0, 3);
    std::vector<std::vector<double>> drift(3);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        FederationConfig cfg = small_config();
        cfg.algorithm = Algorithm::FedProx;
        cfg.local_epochs = 3;
        cfg.alpha = 0.5;
        cfg.rounds = 2;
        cfg.seed = seed;
        const double mus[] = {1e-4, 1e-3, 1e-1};
        for (int i = 0; i < 3; ++i) {
            cfg.prox_mu = mus[i];
            drift[i].push_back(run_experiment(cfg, train, test).rounds.back().client_distance);
        }
    }
    CHECK(oracle::median(drift[0]) > oracle::median(drift[1]));
    CHECK(oracle::median(drift[1]) > oracle::median(drift[2]));
}

TEST_CASE("shuffle injection is applied and tracked during local training") {
    const Dataset train = gen_synthetic(640, 4, 3, 3.0, 1);
    std::vector<std::size_t> rows(640);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    LocalTrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 64;
    cfg.shuffle_nsf = 50.0;  // every step
    cfg.shuffle_psf = 0.3;
    Mlp m = make_mlp({4, 16, 3}, {}, 2);
    Rng rng(4);
    const LocalTrainResult r = train_local(m, train, rows, cfg, rng);
    CHECK(r.steps == 50);
    CHECK(r.shuffles == 50);
    CHECK(r.composed.r_kept() < 0.5);

    cfg.shuffle_nsf = 0.0;
    Mlp plain = make_mlp({4, 16, 3}, {}, 2);
    Rng rng2(4);
    const LocalTrainResult none = train_local(plain, train, rows, cfg, rng2);
    CHECK(none.shuffles == 0);
    CHECK(none.composed.r_kept() == 1.0);
}

TEST_CASE("non-finite loss raises a numerical error") {
    const Dataset train = gen_synthetic(64, 4, 3, 50.0, 1);
    std::vector<std::size_t> rows(64);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    LocalTrainConfig cfg;
    cfg.lr = 1e300;
    cfg.epochs = 5;
    Mlp m = make_mlp({4, 8, 3}, {}, 1);
    Rng rng(1);
    CHECK_THROWS_AS(train_local(m, train, rows, cfg, rng), NumericalError);
}

TEST_CASE("run_experiment is deterministic under a seed") {
    const auto [train, test] = gen_synthetic_split(400, 100, 5, 3, 3.0, 2);
    FederationConfig cfg = small_config();
    cfg.alpha = 1.0;
    cfg.pan = {PanMode::Additive, 0.1, 2.0};
    cfg.shuffle_nsf = 1.0;
    const MetricsLog a = run_experiment(cfg, train, test);
    const MetricsLog b = run_experiment(cfg, train, test);
    REQUIRE(a.rounds.size() == 3);
    for (std::size_t r = 0; r < 3; ++r) {
        CHECK(a.rounds[r].accuracy == b.rounds[r].accuracy);
        CHECK(a.rounds[r].divergence == b.rounds[r].divergence);
        CHECK(a.rounds[r].mean_shuffles == b.rounds[r].mean_shuffles);
        CHECK(a.rounds[r].r_kept == b.rounds[r].r_kept);
    }
    CHECK(a.final_model == b.final_model);
    CHECK(a.client_sizes == b.client_sizes);
}

TEST_CASE("train_central honours a step budget") {
    const auto [train, test] = gen_synthetic_split(300, 50, 5, 3, 3.0, 2);
    LocalTrainConfig cfg;
    cfg.batch_size = 32;
    const CentralTrainResult r = train_central(make_mlp({5, 8, 3}, {}, 1), train, test, cfg, 1, 25);
    CHECK(r.steps == 25);
    CHECK(r.accuracy.size() == 3);
}
