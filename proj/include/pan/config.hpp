#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pan/fedsim.hpp"

namespace pan {

// Flat `key = value` configuration. Lines starting with '#' and blank lines
// are ignored; surrounding whitespace is trimmed. Every key must be one of
// the known keys listed in Settings::defaults().
class KeyValueConfig {
public:
    static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
    static KeyValueConfig load(const std::string& path);

    // Applies "key=value"; unknown keys are rejected by Settings, not here.
    void set(const std::string& assignment);
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

// Every tunable of every subcommand, with defaults.
struct Settings {
    std::uint64_t seed = 0;

    std::string dataset = "synthetic";
    std::size_t synth_n_train = 5000;
    std::size_t synth_n_test = 1000;
    std::size_t synth_dim = 20;
    std::size_t synth_classes = 10;
    double synth_separation = 4.0;
    std::uint64_t synth_seed = 1;
    std::string idx_train_images, idx_train_labels, idx_test_images, idx_test_labels;
    std::size_t idx_classes = 0;

    std::vector<std::size_t> hidden = {64, 64};
    PanConfig pan;

    double lr = 0.05;
    double momentum = 0.9;
    std::size_t batch_size = 64;
    std::size_t epochs = 10;
    std::size_t warmup_steps = 0;

    std::size_t clients = 10;
    double ratio = 1.0;
    std::size_t local_epochs = 5;
    std::size_t rounds = 20;
    double alpha = 10.0;
    std::vector<double> alphas;  // optional sweep; one output set per value
    Algorithm algorithm = Algorithm::FedAvg;
    double prox_mu = 1e-3;
    double server_lr = 0.5;
    double server_momentum = 0.9;
    bool weighted = false;
    double shuffle_nsf = 0.0;
    double shuffle_psf = 0.1;

    std::string shuffle_checkpoint;
    std::vector<double> shuffle_psfs = {0.0, 0.1, 0.5, 1.0};
    std::vector<double> shuffle_amplitudes = {0.0, 0.01, 0.05, 0.1, 0.25};
    std::vector<double> shuffle_periods = {1.0, 8.0};
    std::vector<PanMode> shuffle_modes = {PanMode::Additive, PanMode::Multiplicative};
    std::size_t shuffle_trials = 10;
    std::size_t shuffle_batch = 64;

    std::vector<std::string> analyze_checkpoints;
    std::vector<std::string> analyze_tasks = {"divergence", "match", "prefvec", "fusion"};
    std::size_t analyze_layer = 1;
    std::size_t analyze_probe = 500;
    std::vector<double> analyze_fusion_grid = {0.0, 0.25, 0.5, 0.75, 1.0};
    bool analyze_dense = false;

    // Raises ConfigError for unknown keys or unparsable values.
    static Settings from(const KeyValueConfig& kv);
    // The full effective configuration as `key = value` lines, sorted by key.
    std::string echo() const;

    FederationConfig federation(double alpha_value) const;
    LocalTrainConfig central_training() const;
};

}  // namespace pan
