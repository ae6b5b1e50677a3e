#include "pan/network.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pan/kernels.hpp"

namespace pan {

std::string to_string(PanMode mode) {
    switch (mode) {
        case PanMode::Off: return "off";
        case PanMode::Additive: return "add";
        case PanMode::Multiplicative: return "mul";
    }
    return "off";
}

PanMode parse_pan_mode(const std::string& s) {
    if (s == "off" || s == "none") return PanMode::Off;
    if (s == "add" || s == "additive") return PanMode::Additive;
    if (s == "mul" || s == "multiplicative") return PanMode::Multiplicative;
    throw ConfigError("unknown PAN mode '" + s + "' (expected off|add|mul)");
}

Vector gen_encoding(std::size_t width, const PanConfig& cfg) {
    Vector e(width, 0.0);
    if (!cfg.enabled()) return e;
    const double base = cfg.mode == PanMode::Multiplicative ? 1.0 : 0.0;
    for (std::size_t j = 0; j < width; ++j) {
        const double phase = 2.0 * std::numbers::pi * cfg.period * static_cast<double>(j) /
                             static_cast<double>(width);
        e[j] = base + cfg.amplitude * std::sin(phase);
    }
    return e;
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

void Mlp::set_pan(const PanConfig& cfg) {
    pan = cfg;
    encodings.clear();
    if (!cfg.enabled()) return;
    for (std::size_t l = 1; l + 1 < sizes.size(); ++l) encodings.push_back(gen_encoding(sizes[l], cfg));
}

void Mlp::validate() const {
    if (sizes.size() < 2 || layers.size() + 1 != sizes.size()) throw ShapeError("mlp: layer count mismatch");
    if (activations.size() != hidden_count()) throw ShapeError("mlp: activation count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& p = layers[l];
        if (p.weight.rows() != sizes[l + 1] || p.weight.cols() != sizes[l] || p.bias.size() != sizes[l + 1])
            throw ShapeError("mlp: parameter shape mismatch at layer " + std::to_string(l + 1));
    }
    if (pan.enabled()) {
        if (encodings.size() != hidden_count()) throw ShapeError("mlp: encoding count mismatch");
        for (std::size_t l = 0; l < encodings.size(); ++l)
            if (encodings[l].size() != sizes[l + 1]) throw ShapeError("mlp: encoding width mismatch");
    }
}

namespace {

Mlp empty_shell(const std::vector<std::size_t>& sizes, const PanConfig& pan, Activation act) {
    if (sizes.size() < 2) throw ConfigError("mlp needs at least an input and an output layer");
    for (auto s : sizes)
        if (s == 0) throw ConfigError("mlp layer widths must be positive");
    Mlp m;
    m.sizes = sizes;
    for (std::size_t l = 1; l < sizes.size(); ++l)
        m.layers.push_back({Matrix(sizes[l], sizes[l - 1]), Vector(sizes[l], 0.0)});
    m.activations.assign(sizes.size() - 2, act);
    m.set_pan(pan);
    return m;
}

}  // namespace

Mlp make_zero_mlp(const std::vector<std::size_t>& sizes, const PanConfig& pan, Activation hidden_activation) {
    return empty_shell(sizes, pan, hidden_activation);
}

Mlp make_mlp(const std::vector<std::size_t>& sizes, const PanConfig& pan, std::uint64_t seed,
             Activation hidden_activation) {
    Mlp m = empty_shell(sizes, pan, hidden_activation);
    Rng rng(seed);
    for (auto& layer : m.layers) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
        for (auto& w : layer.weight.data()) w = bound * (2.0 * rng.uniform() - 1.0);
        for (auto& b : layer.bias) b = bound * (2.0 * rng.uniform() - 1.0);
    }
    return m;
}

LayerActivations forward(const Mlp& model, const Matrix& batch) {
    if (batch.cols() != model.sizes.front())
        throw ShapeError("forward: batch has " + std::to_string(batch.cols()) + " features, model expects " +
                         std::to_string(model.sizes.front()));
    LayerActivations acts;
    acts.pre.resize(model.depth() + 1);
    acts.post.resize(model.depth() + 1);
    acts.post[0] = batch;
    for (std::size_t l = 1; l <= model.depth(); ++l) {
        const auto& p = model.layers[l - 1];
        Matrix z = kernels::gemm_nt(acts.post[l - 1], p.weight);
        const bool hidden = l < model.depth();
        const Vector* enc = hidden && model.pan.enabled() ? &model.encodings[l - 1] : nullptr;
        for (std::size_t r = 0; r < z.rows(); ++r) {
            auto row = z.row(r);
            for (std::size_t j = 0; j < row.size(); ++j) {
                double s = row[j] + p.bias[j];
                if (enc) s = model.pan.mode == PanMode::Multiplicative ? s * (*enc)[j] : s + (*enc)[j];
                row[j] = s;
            }
        }
        Matrix h = z;
        if (hidden && model.activations[l - 1] == Activation::Relu)
            for (auto& v : h.data()) v = v > 0.0 ? v : 0.0;
        acts.pre[l] = std::move(z);
        acts.post[l] = std::move(h);
    }
    return acts;
}

Matrix predict(const Mlp& model, const Matrix& batch) { return forward(model, batch).post.back(); }

namespace {

// Converts dL/dh_l into dL/du_l where u_l = W_l h_{l-1} + b_l, in place.
void through_hidden(const Mlp& model, const LayerActivations& acts, std::size_t l, Matrix& grad) {
    const bool relu = model.activations[l - 1] == Activation::Relu;
    const Vector* enc = model.pan.mode == PanMode::Multiplicative ? &model.encodings[l - 1] : nullptr;
    const Matrix& z = acts.pre[l];
    for (std::size_t r = 0; r < grad.rows(); ++r) {
        auto g = grad.row(r);
        auto zr = z.row(r);
        for (std::size_t j = 0; j < g.size(); ++j) {
            double d = g[j];
            if (relu && !(zr[j] > 0.0)) d = 0.0;
            if (enc) d *= (*enc)[j];
            g[j] = d;
        }
    }
}

void check_backward_inputs(const Mlp& model, const LayerActivations& acts, const Matrix& output_grad) {
    if (acts.post.size() != model.depth() + 1) throw ShapeError("backward: activations do not match model depth");
    if (output_grad.rows() != acts.post[0].rows() || output_grad.cols() != model.sizes.back())
        throw ShapeError("backward: output gradient shape mismatch");
}

}  // namespace

Gradients backward(const Mlp& model, const LayerActivations& acts, const Matrix& output_grad) {
    check_backward_inputs(model, acts, output_grad);
    Gradients grads(model.depth());
    Matrix delta = output_grad;  // dL/du_L (output layer is linear and unencoded)
    for (std::size_t l = model.depth(); l >= 1; --l) {
        auto& g = grads[l - 1];
        g.weight = kernels::gemm_tn(delta, acts.post[l - 1]);
        g.bias.assign(delta.cols(), 0.0);
        for (std::size_t r = 0; r < delta.rows(); ++r) {
            auto d = delta.row(r);
            for (std::size_t j = 0; j < d.size(); ++j) g.bias[j] += d[j];
        }
        if (l == 1) break;
        delta = kernels::gemm(delta, model.layers[l - 1].weight);
        through_hidden(model, acts, l - 1, delta);
    }
    return grads;
}

Matrix activation_gradient(const Mlp& model, const LayerActivations& acts, const Matrix& output_grad,
                           std::size_t layer) {
    check_backward_inputs(model, acts, output_grad);
    if (layer == 0 || layer >= model.depth())
        throw std::out_of_range("activation_gradient: layer " + std::to_string(layer) + " is not hidden");
    Matrix delta = output_grad;
    for (std::size_t l = model.depth(); l > layer; --l) {
        delta = kernels::gemm(delta, model.layers[l - 1].weight);  // dL/dh_{l-1}
        if (l - 1 == layer) break;
        through_hidden(model, acts, l - 1, delta);
    }
    return delta;
}

LossResult softmax_cross_entropy(const Matrix& logits, std::span<const int> labels) {
    if (labels.size() != logits.rows()) throw ShapeError("softmax_cross_entropy: label count mismatch");
    LossResult out;
    out.output_grad = Matrix(logits.rows(), logits.cols());
    const double inv_n = 1.0 / static_cast<double>(logits.rows());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto z = logits.row(r);
        const double mx = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - mx);
        const double log_sum = mx + std::log(sum);
        const auto y = static_cast<std::size_t>(labels[r]);
        if (labels[r] < 0 || y >= logits.cols()) throw ShapeError("softmax_cross_entropy: label out of range");
        out.loss += (log_sum - z[y]) * inv_n;
        auto g = out.output_grad.row(r);
        for (std::size_t c = 0; c < z.size(); ++c) g[c] = std::exp(z[c] - log_sum) * inv_n;
        g[y] -= inv_n;
    }
    return out;
}

Gradients zero_gradients(const Mlp& model) {
    Gradients g;
    g.reserve(model.depth());
    for (const auto& p : model.layers) g.push_back({Matrix(p.weight.rows(), p.weight.cols()), Vector(p.bias.size(), 0.0)});
    return g;
}

Gradients parameters_of(const Mlp& model) { return model.layers; }

void sgd_step(Mlp& model, const Gradients& grads, OptimState& opt) {
    if (grads.size() != model.depth()) throw ShapeError("sgd_step: gradient layer count mismatch");
    if (opt.buffers.empty()) opt.buffers = zero_gradients(model);
    if (opt.anchor && opt.anchor->size() != model.depth()) throw ShapeError("sgd_step: anchor shape mismatch");
    double lr = opt.lr;
    if (opt.warmup_steps > 0 && opt.step < opt.warmup_steps)
        lr *= static_cast<double>(opt.step + 1) / static_cast<double>(opt.warmup_steps);

    auto update = [&](std::vector<double>& theta, const std::vector<double>& g, std::vector<double>& buf,
                      const std::vector<double>* anchor) {
        if (g.size() != theta.size() || buf.size() != theta.size())
            throw ShapeError("sgd_step: parameter shape mismatch");
        for (std::size_t i = 0; i < theta.size(); ++i) {
            double d = g[i];
            if (anchor && opt.prox_mu != 0.0) d += opt.prox_mu * (theta[i] - (*anchor)[i]);
            buf[i] = opt.momentum * buf[i] + d;
            theta[i] -= lr * buf[i];
        }
    };
    for (std::size_t l = 0; l < model.depth(); ++l) {
        auto& p = model.layers[l];
        const LayerParams* a = opt.anchor ? &(*opt.anchor)[l] : nullptr;
        update(p.weight.data(), grads[l].weight.data(), opt.buffers[l].weight.data(), a ? &a->weight.data() : nullptr);
        update(p.bias, grads[l].bias, opt.buffers[l].bias, a ? &a->bias : nullptr);
    }
    ++opt.step;
}

Matrix jacobian_wrt_encoding(const Mlp& model, const Matrix& batch, double h) {
    if (!model.pan.enabled()) throw ConfigError("jacobian_wrt_encoding: PANs are off");
    if (model.hidden_count() == 0) throw ConfigError("jacobian_wrt_encoding: model has no hidden layer");
    const std::size_t width = model.sizes[1];
    for (std::size_t l = 1; l + 1 < model.sizes.size(); ++l)
        if (model.sizes[l] != width) throw ShapeError("jacobian_wrt_encoding: hidden widths differ");

    const std::size_t out_dim = model.sizes.back();
    Matrix jac(batch.rows() * out_dim, width);
    Mlp probe = model;
    for (std::size_t j = 0; j < width; ++j) {
        auto shift = [&](double delta) {
            for (std::size_t l = 0; l < probe.encodings.size(); ++l)
                probe.encodings[l][j] = model.encodings[l][j] + delta;
        };
        shift(h);
        const Matrix plus = predict(probe, batch);
        shift(-h);
        const Matrix minus = predict(probe, batch);
        shift(0.0);
        for (std::size_t s = 0; s < batch.rows(); ++s)
            for (std::size_t o = 0; o < out_dim; ++o)
                jac(s * out_dim + o, j) = (plus(s, o) - minus(s, o)) / (2.0 * h);
    }
    return jac;
}

}  // namespace pan
