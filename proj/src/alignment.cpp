#include "pan/alignment.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "pan/fedsim.hpp"

namespace pan {

ActivationProfile collect_activations(const Mlp& model, const Matrix& probe, std::size_t layer) {
    if (layer == 0 || layer >= model.depth())
        throw std::out_of_range("collect_activations: layer " + std::to_string(layer) + " is not hidden");
    if (probe.rows() == 0) throw ConfigError("collect_activations: empty probe");
    const LayerActivations acts = forward(model, probe);
    return {layer, acts.post[layer].transposed()};
}

Assignment hungarian(const Matrix& cost) {
    if (cost.rows() != cost.cols()) throw ShapeError("hungarian: cost matrix must be square");
    const std::size_t n = cost.rows();
    constexpr double kInf = std::numeric_limits<double>::infinity();
    // 1-based arrays; column 0 is a virtual start node.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> row_of_col(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        row_of_col[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, kInf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = row_of_col[j0];
            double delta = kInf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (row_of_col[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    Assignment a;
    a.col_of_row.assign(n, 0);
    for (std::size_t j = 1; j <= n; ++j) a.col_of_row[row_of_col[j] - 1] = j - 1;
    for (std::size_t i = 0; i < n; ++i) a.cost += cost(i, a.col_of_row[i]);
    return a;
}

Matrix pairwise_l2(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw ShapeError("pairwise_l2: representation lengths differ");
    Matrix d(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ra = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            auto rb = b.row(j);
            double acc = 0.0;
            for (std::size_t k = 0; k < ra.size(); ++k) {
                const double diff = ra[k] - rb[k];
                acc += diff * diff;
            }
            d(i, j) = std::sqrt(acc);
        }
    }
    return d;
}

AssignmentResult match_neurons(const ActivationProfile& global, const ActivationProfile& local) {
    if (global.values.rows() != local.values.rows() || global.values.cols() != local.values.cols())
        throw ShapeError("match_neurons: profiles differ in shape");
    const Assignment a = hungarian(pairwise_l2(global.values, local.values));
    AssignmentResult r;
    r.assignment.index = a.col_of_row;
    r.cost = a.cost;
    r.match_ratio = r_kept(r.assignment);
    return r;
}

PreferenceMatrix preference_vectors(const Mlp& model, const Dataset& probe, std::size_t layer) {
    if (layer == 0 || layer >= model.depth())
        throw std::out_of_range("preference_vectors: layer " + std::to_string(layer) + " is not hidden");
    const std::size_t classes = model.sizes.back();
    std::vector<std::vector<std::size_t>> by_class(classes);
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const auto y = static_cast<std::size_t>(probe.labels[i]);
        if (y >= classes) throw ConfigError("preference_vectors: probe label exceeds model outputs");
        by_class[y].push_back(i);
    }
    for (std::size_t c = 0; c < classes; ++c)
        if (by_class[c].empty()) throw ConfigError("preference_vectors: probe has no sample of class " + std::to_string(c));

    const std::size_t width = model.sizes[layer];
    PreferenceMatrix pref{Matrix(width, classes), std::vector<int>(width, 0)};
    Matrix x;
    std::vector<int> y;
    for (std::size_t c = 0; c < classes; ++c) {
        gather(probe, by_class[c], x, y);
        const LayerActivations acts = forward(model, x);
        Matrix seed(x.rows(), classes);
        for (std::size_t r = 0; r < x.rows(); ++r) seed(r, c) = 1.0;  // dZ_c/dZ
        const Matrix grad = activation_gradient(model, acts, seed, layer);
        const Matrix& h = acts.post[layer];
        for (std::size_t r = 0; r < x.rows(); ++r)
            for (std::size_t i = 0; i < width; ++i) pref.values(i, c) += h(r, i) * grad(r, i);
    }
    for (std::size_t i = 0; i < width; ++i) {
        auto row = pref.values.row(i);
        std::size_t best = 0;
        for (std::size_t c = 1; c < classes; ++c)
            if (row[c] > row[best]) best = c;
        pref.argmax[i] = static_cast<int>(best);
    }
    return pref;
}

FusionCurve fusion_curve(const Mlp& a, const Mlp& b, const Dataset& test, std::span<const double> grid) {
    if (a.sizes != b.sizes) throw ShapeError("fusion_curve: architectures differ");
    if (a.pan != b.pan || a.encodings != b.encodings) throw ConfigError("fusion_curve: PAN configurations differ");
    FusionCurve curve;
    for (double mu : grid) {
        if (!(mu >= 0.0 && mu <= 1.0)) throw ConfigError("fusion_curve: mu must lie in [0, 1]");
        const Mlp models[] = {a, b};
        const double weights[] = {1.0 - mu, mu};
        Mlp mixed = average_models(models, weights);
        // Exact endpoints, free of (1 - mu) * x + mu * y rounding.
        if (mu == 0.0) mixed = a;
        if (mu == 1.0) mixed = b;
        curve.mu.push_back(mu);
        curve.accuracy.push_back(evaluate(mixed, test));
    }
    return curve;
}

}  // namespace pan
