#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pan/data.hpp"
#include "pan/network.hpp"
#include "pan/permutation.hpp"

namespace pan {

enum class Algorithm { FedAvg, FedProx, FedOpt };

std::string to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& s);

struct LocalTrainConfig {
    std::size_t epochs = 5;
    std::size_t batch_size = 64;
    double lr = 0.05;
    double momentum = 0.9;
    std::size_t warmup_steps = 0;
    double prox_mu = 0.0;
    // Shuffle injection: N_sf expected whole-model shuffles per local run,
    // each generated with P_sf. N_sf = 0 disables it.
    double shuffle_nsf = 0.0;
    double shuffle_psf = 0.1;
};

struct LocalTrainResult {
    std::size_t steps = 0;
    std::size_t shuffles = 0;
    PermutationPlan composed;  // product of every injected plan, latest on the left
    double last_loss = 0.0;
};

// Trains `model` in place on the given rows with SGD + momentum (fresh
// buffers). `anchor` enables the proximal term when prox_mu > 0. Throws
// NumericalError on a non-finite loss.
LocalTrainResult train_local(Mlp& model, const Dataset& data, const std::vector<std::size_t>& rows,
                             const LocalTrainConfig& cfg, Rng& rng, const Gradients* anchor = nullptr);

struct FederationConfig {
    std::size_t clients = 10;
    double ratio = 1.0;
    std::size_t local_epochs = 5;
    std::size_t rounds = 20;
    std::size_t batch_size = 64;
    double alpha = 10.0;
    double lr = 0.05;
    double momentum = 0.9;
    std::size_t warmup_steps = 0;
    Algorithm algorithm = Algorithm::FedAvg;
    double prox_mu = 1e-3;
    double server_lr = 0.5;
    double server_momentum = 0.9;
    PanConfig pan;
    double shuffle_nsf = 0.0;
    double shuffle_psf = 0.1;
    bool weighted = false;  // sample-size-weighted averaging instead of 1/|S_t|
    std::vector<std::size_t> hidden = {64, 64};
    std::uint64_t seed = 0;

    std::size_t selected_count() const;
    void validate() const;
    LocalTrainConfig local_config() const;
};

struct RoundMetrics {
    std::size_t round = 0;
    double accuracy = 0.0;
    std::vector<double> divergence;  // per weight layer 1..L
    double client_distance = 0.0;    // mean ||theta_k - theta_t|| over selected clients
    double mean_shuffles = 0.0;
    double r_kept = 1.0;
};

struct RoundState {
    std::size_t round = 0;
    std::vector<std::size_t> selected;
    Mlp global;
    Gradients server_buffer;  // FedOpt momentum, persists across rounds
    RoundMetrics metrics;
};

// Client-to-mean-weight divergence of layer `layer` (1-based):
// mean_k ||W^(k) - mean_j W^(j)||_F.
double weight_divergence(std::span<const Mlp> models, std::size_t layer);

// Coordinate-wise (optionally weighted) mean of parameters; weights must sum to 1.
Mlp average_models(std::span<const Mlp> models, std::span<const double> weights);

// Top-1 accuracy; ties resolve to the lowest class index.
double evaluate(const Mlp& model, const Dataset& test);

// Uniform sample of `count` distinct clients out of `total`, sorted ascending.
std::vector<std::size_t> select_clients(std::size_t total, std::size_t count, Rng& rng);

// One communication round. `test` may be null, in which case accuracy is 0.
RoundState run_round(const RoundState& state, const FederationConfig& cfg, const Dataset& train,
                     const std::vector<ClientDataset>& clients, const Dataset* test);

struct MetricsLog {
    std::vector<RoundMetrics> rounds;
    std::vector<std::size_t> client_sizes;
    double final_accuracy = 0.0;
    double best_accuracy = 0.0;
    Mlp final_model;
};

RoundState initial_state(const FederationConfig& cfg, std::size_t input_dim, std::size_t num_classes);

MetricsLog run_experiment(const FederationConfig& cfg, const Dataset& train, const Dataset& test);

struct CentralTrainResult {
    Mlp model;
    std::vector<double> accuracy;  // after each epoch
    std::size_t steps = 0;
};

// Centralized baseline: plain SGD + momentum over the whole training set.
// `total_steps`, when set, caps the number of optimizer steps.
CentralTrainResult train_central(const Mlp& init, const Dataset& train, const Dataset& test,
                                 const LocalTrainConfig& cfg, std::uint64_t seed,
                                 std::optional<std::size_t> total_steps = std::nullopt);

}  // namespace pan
