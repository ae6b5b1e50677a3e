#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pan/linalg.hpp"

namespace pan {

enum class PanMode { Off, Additive, Multiplicative };
enum class Activation { Relu, Identity };

std::string to_string(PanMode mode);
PanMode parse_pan_mode(const std::string& s);

// Position encodings fused into hidden-neuron outputs. Amplitude 0 (either
// mode) reproduces a plain MLP exactly.
struct PanConfig {
    PanMode mode = PanMode::Off;
    double amplitude = 0.0;
    double period = 1.0;

    bool enabled() const { return mode != PanMode::Off; }
    bool operator==(const PanConfig&) const = default;
};

// e_j = A sin(2 pi T j / J) for additive PANs, 1 + A sin(2 pi T j / J) for
// multiplicative ones, j = 0..J-1. Off returns zeros.
Vector gen_encoding(std::size_t width, const PanConfig& cfg);

struct LayerParams {
    Matrix weight;  // J_l x J_{l-1}
    Vector bias;    // J_l

    bool operator==(const LayerParams&) const = default;
};

using Gradients = std::vector<LayerParams>;

// A dense network with L weight layers. Hidden layers (1..L-1) carry an
// activation and, when PANs are on, a fixed encoding; the output layer is
// always linear and never encoded.
struct Mlp {
    std::vector<std::size_t> sizes;        // J_0 .. J_L
    std::vector<LayerParams> layers;       // layers[l-1] holds W_l, b_l
    std::vector<Activation> activations;   // one per hidden layer
    PanConfig pan;
    std::vector<Vector> encodings;         // encodings[l-1] = e_l for hidden l; empty when Off

    std::size_t depth() const { return layers.size(); }
    std::size_t hidden_count() const { return layers.empty() ? 0 : layers.size() - 1; }
    std::size_t parameter_count() const;

    // Replaces the PAN configuration and regenerates every hidden encoding.
    void set_pan(const PanConfig& cfg);
    // Throws ShapeError unless every weight, bias, and encoding agrees with sizes.
    void validate() const;

    bool operator==(const Mlp&) const = default;
};

// Weights and biases drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Mlp make_mlp(const std::vector<std::size_t>& sizes, const PanConfig& pan, std::uint64_t seed,
             Activation hidden_activation = Activation::Relu);

// Same shapes as make_mlp with every parameter zero.
Mlp make_zero_mlp(const std::vector<std::size_t>& sizes, const PanConfig& pan,
                  Activation hidden_activation = Activation::Relu);

struct LayerActivations {
    // pre[l] is the value fed into f_l (encoding already fused), post[l] = f_l(pre[l]).
    // post[0] is the input batch and pre[0] is unused.
    std::vector<Matrix> pre;
    std::vector<Matrix> post;

    const Matrix& output() const { return post.back(); }
};

// Rows of `batch` are samples.
LayerActivations forward(const Mlp& model, const Matrix& batch);
Matrix predict(const Mlp& model, const Matrix& batch);

// Exact gradients of a loss given dLoss/dOutput (rows = samples).
Gradients backward(const Mlp& model, const LayerActivations& acts, const Matrix& output_grad);

// dLoss/dh_l for post-activation values of hidden layer `layer` (1-based).
Matrix activation_gradient(const Mlp& model, const LayerActivations& acts, const Matrix& output_grad,
                           std::size_t layer);

struct LossResult {
    double loss = 0.0;
    Matrix output_grad;  // d(mean loss)/d(logits)
};

// Mean softmax cross-entropy over the batch.
LossResult softmax_cross_entropy(const Matrix& logits, std::span<const int> labels);

Gradients zero_gradients(const Mlp& model);

struct OptimState {
    double lr = 0.05;
    double momentum = 0.9;
    double prox_mu = 0.0;
    std::size_t warmup_steps = 0;
    std::size_t step = 0;
    Gradients buffers;                 // lazily sized on first step
    std::optional<Gradients> anchor;   // proximal anchor parameters (FedProx)
};

// buffer <- momentum * buffer + (grad + prox_mu * (theta - anchor))
// theta  <- theta - lr_t * buffer, with lr_t linearly warmed up when requested.
void sgd_step(Mlp& model, const Gradients& grads, OptimState& opt);

Gradients parameters_of(const Mlp& model);

// Numeric Jacobian of the outputs with respect to an encoding shared by all
// hidden layers (the hidden widths must agree). Central differences with step
// `h`; row s * J_L + o holds d output_o(sample s) / d e.
Matrix jacobian_wrt_encoding(const Mlp& model, const Matrix& batch, double h = 1e-5);

}  // namespace pan
