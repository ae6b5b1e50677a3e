#include "pan/fedsim.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

namespace pan {

std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::FedAvg: return "fedavg";
        case Algorithm::FedProx: return "fedprox";
        case Algorithm::FedOpt: return "fedopt";
    }
    return "fedavg";
}

Algorithm parse_algorithm(const std::string& s) {
    if (s == "fedavg") return Algorithm::FedAvg;
    if (s == "fedprox") return Algorithm::FedProx;
    if (s == "fedopt") return Algorithm::FedOpt;
    throw ConfigError("unknown algorithm '" + s + "' (expected fedavg|fedprox|fedopt)");
}

LocalTrainResult train_local(Mlp& model, const Dataset& data, const std::vector<std::size_t>& rows,
                             const LocalTrainConfig& cfg, Rng& rng, const Gradients* anchor) {
    LocalTrainResult result;
    result.composed = PermutationPlan::identity(model);
    if (cfg.epochs == 0 || rows.empty()) return result;

    OptimState opt;
    opt.lr = cfg.lr;
    opt.momentum = cfg.momentum;
    opt.warmup_steps = cfg.warmup_steps;
    opt.prox_mu = anchor ? cfg.prox_mu : 0.0;
    if (anchor && cfg.prox_mu > 0.0) opt.anchor = *anchor;
    opt.buffers = zero_gradients(model);

    double step_probability = 0.0;
    if (cfg.shuffle_nsf > 0.0)
        step_probability = shuffle_injection_schedule(cfg.epochs, rows.size(), cfg.batch_size, cfg.shuffle_nsf,
                                                      cfg.shuffle_psf).step_probability;

    // Injection draws come from their own stream so batch order does not
    // depend on N_sf.
    Rng inject_rng(rng.next_u64());
    Matrix x;
    std::vector<int> y;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (const auto& batch : make_batches(rows.size(), cfg.batch_size, rng)) {
            if (step_probability > 0.0 && inject_rng.uniform() <= step_probability) {
                const PermutationPlan plan = gen_plan(model, cfg.shuffle_psf, inject_rng);
                permute_parameters(model.layers, plan);
                permute_parameters(opt.buffers, plan);
                result.composed = compose(plan, result.composed);
                ++result.shuffles;
            }
            std::vector<std::size_t> picked(batch.size());
            for (std::size_t i = 0; i < batch.size(); ++i) picked[i] = rows[batch[i]];
            gather(data, picked, x, y);
            const LayerActivations acts = forward(model, x);
            const LossResult loss = softmax_cross_entropy(acts.output(), y);
            if (!std::isfinite(loss.loss)) throw NumericalError("non-finite training loss");
            sgd_step(model, backward(model, acts, loss.output_grad), opt);
            result.last_loss = loss.loss;
            ++result.steps;
        }
    }
    return result;
}

std::size_t FederationConfig::selected_count() const {
    return static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(clients) - 1e-9));
}

void FederationConfig::validate() const {
    if (clients == 0) throw ConfigError("federation: need at least one client");
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("federation: participation ratio must lie in (0, 1]");
    if (selected_count() == 0) throw ConfigError("federation: no clients selected per round");
    if (rounds == 0) throw ConfigError("federation: need at least one round");
    if (batch_size == 0) throw ConfigError("federation: batch size must be positive");
    if (!(alpha > 0.0)) throw ConfigError("federation: alpha must be positive");
    if (!(lr >= 0.0) || !(momentum >= 0.0)) throw ConfigError("federation: lr and momentum must be non-negative");
    if (prox_mu < 0.0) throw ConfigError("federation: prox_mu must be non-negative");
    if (shuffle_nsf < 0.0 || !(shuffle_psf >= 0.0 && shuffle_psf <= 1.0))
        throw ConfigError("federation: invalid shuffle injection settings");
    if (pan.enabled() && !(pan.period > 0.0)) throw ConfigError("federation: PAN period must be positive");
    if (pan.amplitude < 0.0) throw ConfigError("federation: PAN amplitude must be non-negative");
}

LocalTrainConfig FederationConfig::local_config() const {
    LocalTrainConfig c;
    c.epochs = local_epochs;
    c.batch_size = batch_size;
    c.lr = lr;
    c.momentum = momentum;
    c.warmup_steps = warmup_steps;
    c.prox_mu = algorithm == Algorithm::FedProx ? prox_mu : 0.0;
    c.shuffle_nsf = shuffle_nsf;
    c.shuffle_psf = shuffle_psf;
    return c;
}

double weight_divergence(std::span<const Mlp> models, std::size_t layer) {
    if (models.size() < 2) throw ConfigError("weight_divergence: need at least two models");
    if (layer == 0 || layer > models[0].depth()) throw std::out_of_range("weight_divergence: layer out of range");
    const Matrix& first = models[0].layers[layer - 1].weight;
    Matrix mean(first.rows(), first.cols());
    for (const auto& m : models) {
        if (m.depth() != models[0].depth()) throw ShapeError("weight_divergence: depth mismatch");
        const Matrix& w = m.layers[layer - 1].weight;
        if (w.rows() != mean.rows() || w.cols() != mean.cols()) throw ShapeError("weight_divergence: shape mismatch");
        for (std::size_t i = 0; i < w.size(); ++i) mean.data()[i] += w.data()[i];
    }
    const double inv = 1.0 / static_cast<double>(models.size());
    for (auto& v : mean.data()) v *= inv;
    double acc = 0.0;
    for (const auto& m : models) acc += frobenius_distance(m.layers[layer - 1].weight, mean);
    return acc * inv;
}

Mlp average_models(std::span<const Mlp> models, std::span<const double> weights) {
    if (models.empty() || weights.size() != models.size()) throw ConfigError("average_models: bad inputs");
    Mlp out = models[0];
    for (std::size_t l = 0; l < out.depth(); ++l) {
        auto& w = out.layers[l].weight.data();
        auto& b = out.layers[l].bias;
        std::fill(w.begin(), w.end(), 0.0);
        std::fill(b.begin(), b.end(), 0.0);
        for (std::size_t k = 0; k < models.size(); ++k) {
            const auto& src = models[k].layers[l];
            if (src.weight.size() != w.size() || src.bias.size() != b.size())
                throw ShapeError("average_models: architecture mismatch");
            for (std::size_t i = 0; i < w.size(); ++i) w[i] += weights[k] * src.weight.data()[i];
            for (std::size_t i = 0; i < b.size(); ++i) b[i] += weights[k] * src.bias[i];
        }
    }
    return out;
}

double evaluate(const Mlp& model, const Dataset& test) {
    if (test.size() == 0) throw ConfigError("evaluate: empty test set");
    constexpr std::size_t kChunk = 1024;
    std::size_t correct = 0;
    Matrix x;
    std::vector<int> y;
    for (std::size_t start = 0; start < test.size(); start += kChunk) {
        std::vector<std::size_t> rows;
        for (std::size_t i = start; i < std::min(test.size(), start + kChunk); ++i) rows.push_back(i);
        gather(test, rows, x, y);
        const Matrix out = predict(model, x);
        for (std::size_t r = 0; r < out.rows(); ++r) {
            auto z = out.row(r);
            const auto best = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
            correct += best == y[r];
        }
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

std::vector<std::size_t> select_clients(std::size_t total, std::size_t count, Rng& rng) {
    if (count == 0 || count > total) throw ConfigError("select_clients: invalid selection size");
    std::vector<std::size_t> ids(total);
    for (std::size_t i = 0; i < total; ++i) ids[i] = i;
    for (std::size_t i = 0; i < count; ++i) std::swap(ids[i], ids[rng.uniform_int(i, total - 1)]);
    ids.resize(count);
    std::ranges::sort(ids);
    return ids;
}

namespace {

double parameter_distance(const Mlp& a, const Mlp& b) {
    double acc = 0.0;
    for (std::size_t l = 0; l < a.depth(); ++l) {
        const double dw = frobenius_distance(a.layers[l].weight, b.layers[l].weight);
        acc += dw * dw;
        for (std::size_t i = 0; i < a.layers[l].bias.size(); ++i) {
            const double d = a.layers[l].bias[i] - b.layers[l].bias[i];
            acc += d * d;
        }
    }
    return std::sqrt(acc);
}

}  // namespace

RoundState run_round(const RoundState& state, const FederationConfig& cfg, const Dataset& train,
                     const std::vector<ClientDataset>& clients, const Dataset* test) {
    if (clients.size() != cfg.clients) throw ConfigError("run_round: client list does not match config");
    Rng select_rng = Rng::derive(cfg.seed, {0x5e1ec7, state.round});
    const std::vector<std::size_t> selected = select_clients(cfg.clients, cfg.selected_count(), select_rng);
    if (selected.empty()) throw ConfigError("run_round: no clients selected");

    const LocalTrainConfig local = cfg.local_config();
    const Gradients anchor = state.global.layers;
    std::vector<Mlp> trained(selected.size(), state.global);
    std::vector<LocalTrainResult> results(selected.size());
    std::vector<std::exception_ptr> errors(selected.size());

    const auto n_sel = static_cast<long>(selected.size());
#pragma omp parallel for schedule(dynamic)
    for (long s = 0; s < n_sel; ++s) {
        const auto i = static_cast<std::size_t>(s);
        try {
            Rng rng = Rng::derive(cfg.seed, {0xc11e47, state.round, selected[i]});
            results[i] = train_local(trained[i], train, clients[selected[i]].indices, local, rng,
                                     local.prox_mu > 0.0 ? &anchor : nullptr);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::vector<double> weights(selected.size(), 1.0 / static_cast<double>(selected.size()));
    if (cfg.weighted) {
        double total = 0.0;
        for (auto k : selected) total += static_cast<double>(clients[k].size());
        for (std::size_t i = 0; i < selected.size(); ++i) weights[i] = static_cast<double>(clients[selected[i]].size()) / total;
    }
    const Mlp averaged = average_models(trained, weights);

    RoundState next;
    next.round = state.round + 1;
    next.selected = selected;
    next.server_buffer = state.server_buffer;
    if (cfg.algorithm == Algorithm::FedOpt) {
        next.global = state.global;
        if (next.server_buffer.empty()) next.server_buffer = zero_gradients(state.global);
        for (std::size_t l = 0; l < next.global.depth(); ++l) {
            auto step = [&](std::vector<double>& theta, const std::vector<double>& avg, std::vector<double>& buf) {
                for (std::size_t i = 0; i < theta.size(); ++i) {
                    const double pseudo_grad = theta[i] - avg[i];
                    buf[i] = cfg.server_momentum * buf[i] + pseudo_grad;
                    theta[i] -= cfg.server_lr * buf[i];
                }
            };
            step(next.global.layers[l].weight.data(), averaged.layers[l].weight.data(),
                 next.server_buffer[l].weight.data());
            step(next.global.layers[l].bias, averaged.layers[l].bias, next.server_buffer[l].bias);
        }
    } else {
        next.global = averaged;
    }

    RoundMetrics& m = next.metrics;
    m.round = next.round;
    m.accuracy = test ? evaluate(next.global, *test) : 0.0;
    m.divergence.assign(state.global.depth(), 0.0);
    if (trained.size() >= 2)
        for (std::size_t l = 1; l <= state.global.depth(); ++l) m.divergence[l - 1] = weight_divergence(trained, l);
    double r_kept_sum = 0.0;
    for (std::size_t i = 0; i < selected.size(); ++i) {
        m.client_distance += parameter_distance(trained[i], state.global);
        m.mean_shuffles += static_cast<double>(results[i].shuffles);
        r_kept_sum += results[i].composed.r_kept();
    }
    const double inv = 1.0 / static_cast<double>(selected.size());
    m.client_distance *= inv;
    m.mean_shuffles *= inv;
    m.r_kept = r_kept_sum * inv;
    return next;
}

RoundState initial_state(const FederationConfig& cfg, std::size_t input_dim, std::size_t num_classes) {
    std::vector<std::size_t> sizes{input_dim};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(num_classes);
    RoundState state;
    state.global = make_mlp(sizes, cfg.pan, Rng::derive_seed(cfg.seed, {0x1417}));
    return state;
}

MetricsLog run_experiment(const FederationConfig& cfg, const Dataset& train, const Dataset& test) {
    cfg.validate();
    train.validate();
    test.validate();
    const auto clients = partition_dirichlet(train, {cfg.clients, cfg.alpha, Rng::derive_seed(cfg.seed, {0xd1c7})});
    MetricsLog log;
    for (const auto& c : clients) log.client_sizes.push_back(c.size());
    RoundState state = initial_state(cfg, train.dim(), train.num_classes);
    for (std::size_t t = 0; t < cfg.rounds; ++t) {
        state = run_round(state, cfg, train, clients, &test);
        log.rounds.push_back(state.metrics);
        log.best_accuracy = std::max(log.best_accuracy, state.metrics.accuracy);
    }
    log.final_accuracy = log.rounds.back().accuracy;
    log.final_model = std::move(state.global);
    return log;
}

CentralTrainResult train_central(const Mlp& init, const Dataset& train, const Dataset& test,
                                 const LocalTrainConfig& cfg, std::uint64_t seed,
                                 std::optional<std::size_t> total_steps) {
    train.validate();
    CentralTrainResult result{init, {}, 0};
    OptimState opt;
    opt.lr = cfg.lr;
    opt.momentum = cfg.momentum;
    opt.warmup_steps = cfg.warmup_steps;
    opt.buffers = zero_gradients(init);
    Rng rng = Rng::derive(seed, {0xce47});
    Matrix x;
    std::vector<int> y;
    for (std::size_t epoch = 0; total_steps ? result.steps < *total_steps : epoch < cfg.epochs; ++epoch) {
        for (const auto& batch : make_batches(train.size(), cfg.batch_size, rng)) {
            if (total_steps && result.steps >= *total_steps) break;
            gather(train, batch, x, y);
            const LayerActivations acts = forward(result.model, x);
            const LossResult loss = softmax_cross_entropy(acts.output(), y);
            if (!std::isfinite(loss.loss)) throw NumericalError("non-finite training loss");
            sgd_step(result.model, backward(result.model, acts, loss.output_grad), opt);
            ++result.steps;
        }
        result.accuracy.push_back(test.size() ? evaluate(result.model, test) : 0.0);
    }
    return result;
}

}  // namespace pan
