#include "pan/permutation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace pan {

Permutation Permutation::identity(std::size_t n) {
    Permutation p;
    p.index.resize(n);
    for (std::size_t i = 0; i < n; ++i) p.index[i] = i;
    return p;
}

bool Permutation::is_bijection() const {
    std::vector<bool> seen(index.size(), false);
    for (auto i : index) {
        if (i >= index.size() || seen[i]) return false;
        seen[i] = true;
    }
    return true;
}

Permutation Permutation::inverse() const {
    Permutation inv;
    inv.index.resize(index.size());
    for (std::size_t j = 0; j < index.size(); ++j) inv.index[index[j]] = j;
    return inv;
}

Matrix Permutation::to_dense() const {
    Matrix m(index.size(), index.size());
    for (std::size_t j = 0; j < index.size(); ++j) m(j, index[j]) = 1.0;
    return m;
}

Vector Permutation::apply(std::span<const double> x) const {
    if (x.size() != index.size()) throw ShapeError("permutation apply: length mismatch");
    Vector out(x.size());
    for (std::size_t j = 0; j < index.size(); ++j) out[j] = x[index[j]];
    return out;
}

Matrix Permutation::permute_rows(const Matrix& m) const {
    if (m.rows() != index.size()) throw ShapeError("permute_rows: row count mismatch");
    Matrix out(m.rows(), m.cols());
    for (std::size_t j = 0; j < index.size(); ++j) std::ranges::copy(m.row(index[j]), out.row(j).begin());
    return out;
}

Matrix Permutation::permute_cols(const Matrix& m) const {
    if (m.cols() != index.size()) throw ShapeError("permute_cols: column count mismatch");
    Matrix out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t k = 0; k < index.size(); ++k) out(r, k) = m(r, index[k]);
    return out;
}

Permutation compose(const Permutation& outer, const Permutation& inner) {
    if (outer.size() != inner.size()) throw ShapeError("compose: permutation sizes differ");
    Permutation p;
    p.index.resize(outer.size());
    // (outer (inner x))_j = (inner x)_{outer[j]} = x_{inner[outer[j]]}
    for (std::size_t j = 0; j < outer.size(); ++j) p.index[j] = inner.index[outer.index[j]];
    return p;
}

double r_kept(const Permutation& p) {
    if (p.size() == 0) return 1.0;
    std::size_t fixed = 0;
    for (std::size_t j = 0; j < p.size(); ++j) fixed += p.index[j] == j;
    return static_cast<double>(fixed) / static_cast<double>(p.size());
}

Permutation gen_permutation(std::size_t width, double p_sf, Rng& rng) {
    if (!(p_sf >= 0.0 && p_sf <= 1.0)) throw ConfigError("gen_permutation: P_sf must lie in [0, 1]");
    Permutation p = Permutation::identity(width);
    for (std::size_t j = 0; j + 1 < width; ++j) {
        const std::size_t i = rng.uniform_int(j + 1, width - 1);
        if (rng.uniform() <= p_sf && p_sf > 0.0) std::swap(p.index[j], p.index[i]);
    }
    return p;
}

PermutationPlan PermutationPlan::identity(const Mlp& model) {
    PermutationPlan plan;
    for (std::size_t l = 1; l + 1 < model.sizes.size(); ++l) plan.hidden.push_back(Permutation::identity(model.sizes[l]));
    return plan;
}

double PermutationPlan::r_kept() const {
    if (hidden.empty()) return 1.0;
    double acc = 0.0;
    for (const auto& p : hidden) acc += pan::r_kept(p);
    return acc / static_cast<double>(hidden.size());
}

PermutationPlan gen_plan(const Mlp& model, double p_sf, Rng& rng) {
    PermutationPlan plan;
    plan.p_sf = p_sf;
    for (std::size_t l = 1; l + 1 < model.sizes.size(); ++l) plan.hidden.push_back(gen_permutation(model.sizes[l], p_sf, rng));
    return plan;
}

PermutationPlan compose(const PermutationPlan& outer, const PermutationPlan& inner) {
    if (outer.hidden.size() != inner.hidden.size()) throw ShapeError("compose: plan depths differ");
    PermutationPlan plan;
    plan.p_sf = outer.p_sf;
    for (std::size_t l = 0; l < outer.hidden.size(); ++l) plan.hidden.push_back(compose(outer.hidden[l], inner.hidden[l]));
    return plan;
}

void permute_parameters(std::vector<LayerParams>& params, const PermutationPlan& plan) {
    if (plan.hidden.size() + 1 != params.size()) throw ShapeError("shuffle: plan does not match model depth");
    for (std::size_t l = 0; l < params.size(); ++l) {
        auto& p = params[l];
        const bool permute_out = l < plan.hidden.size();
        const bool permute_in = l > 0;
        if (permute_out && (plan.hidden[l].size() != p.weight.rows() || !plan.hidden[l].is_bijection()))
            throw ShapeError("shuffle: plan width mismatch at layer " + std::to_string(l + 1));
        if (permute_in && plan.hidden[l - 1].size() != p.weight.cols())
            throw ShapeError("shuffle: plan width mismatch at layer " + std::to_string(l + 1));
        if (permute_out) {
            p.weight = plan.hidden[l].permute_rows(p.weight);
            p.bias = plan.hidden[l].apply(p.bias);
        }
        if (permute_in) p.weight = plan.hidden[l - 1].permute_cols(p.weight);
    }
}

Mlp shuffle_model(const Mlp& model, const PermutationPlan& plan) {
    Mlp out = model;
    permute_parameters(out.layers, plan);
    return out;
}

ShuffleError shuffle_error(const Mlp& model, const PermutationPlan& plan, const Matrix& batch) {
    if (batch.rows() == 0) throw ShapeError("shuffle_error: empty batch");
    const Matrix y = predict(model, batch);
    const Matrix y_sf = predict(shuffle_model(model, plan), batch);
    ShuffleError err;
    const double out_dim = static_cast<double>(y.cols());
    for (std::size_t r = 0; r < y.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < y.cols(); ++c) {
            const double d = y_sf(r, c) - y(r, c);
            acc += d * d;
        }
        const double e = std::sqrt(acc) / out_dim;
        err.mean += e;
        err.max = std::max(err.max, e);
    }
    err.mean /= static_cast<double>(y.rows());
    return err;
}

ShuffleSchedule shuffle_injection_schedule(std::size_t local_epochs, std::size_t local_samples,
                                           std::size_t batch_size, double expected_shuffles, double p_sf) {
    if (batch_size == 0) throw ConfigError("shuffle schedule: batch size must be positive");
    if (local_epochs == 0 || local_samples == 0)
        throw ConfigError("shuffle schedule: zero local steps (E * N_k / B = 0)");
    if (expected_shuffles < 0.0) throw ConfigError("shuffle schedule: N_sf must be non-negative");
    if (!(p_sf >= 0.0 && p_sf <= 1.0)) throw ConfigError("shuffle schedule: P_sf must lie in [0, 1]");
    ShuffleSchedule s;
    s.expected_shuffles = expected_shuffles;
    s.local_steps = static_cast<double>(local_epochs) * static_cast<double>(local_samples) / static_cast<double>(batch_size);
    s.step_probability = std::clamp(expected_shuffles / s.local_steps, 0.0, 1.0);
    s.p_sf = p_sf;
    return s;
}

InjectionTrace simulate_injection(std::size_t steps, double step_probability, double p_sf, std::size_t width,
                                  Rng& rng) {
    InjectionTrace trace;
    trace.composed = Permutation::identity(width);
    for (std::size_t s = 0; s < steps; ++s) {
        if (step_probability > 0.0 && rng.uniform() <= step_probability) {
            trace.composed = compose(gen_permutation(width, p_sf, rng), trace.composed);
            ++trace.shuffles;
        }
    }
    return trace;
}

std::vector<ShuffleTestRow> shuffle_test(const Mlp& model, std::span<const ShuffleTestPoint> grid,
                                         std::size_t trials, std::size_t batch_rows, std::uint64_t seed) {
    if (trials == 0 || batch_rows == 0) throw ConfigError("shuffle_test: trials and batch size must be positive");
    std::vector<ShuffleTestRow> rows(grid.size());
    const auto n_points = static_cast<long>(grid.size());
#pragma omp parallel for schedule(dynamic)
    for (long g = 0; g < n_points; ++g) {
        const auto& point = grid[static_cast<std::size_t>(g)];
        Mlp probe = model;
        probe.set_pan(point.pan);
        std::vector<double> per_trial(trials);
        ShuffleTestRow row{point};
        for (std::size_t t = 0; t < trials; ++t) {
            Rng plan_rng = Rng::derive(seed, {1, t, std::bit_cast<std::uint64_t>(point.p_sf)});
            Rng data_rng = Rng::derive(seed, {2, t});
            const PermutationPlan plan = gen_plan(probe, point.p_sf, plan_rng);
            const Matrix batch(batch_rows, probe.sizes.front(),
                               sample_gaussian(data_rng, batch_rows * probe.sizes.front(), 0.0, 1.0));
            const ShuffleError err = shuffle_error(probe, plan, batch);
            per_trial[t] = err.mean;
            row.err_max = std::max(row.err_max, err.max);
            row.r_kept += plan.r_kept();
        }
        double sum = 0.0;
        for (double e : per_trial) sum += e;
        row.err_mean = sum / static_cast<double>(trials);
        row.r_kept /= static_cast<double>(trials);
        std::sort(per_trial.begin(), per_trial.end());
        const std::size_t mid = trials / 2;
        row.err_median = trials % 2 ? per_trial[mid] : 0.5 * (per_trial[mid - 1] + per_trial[mid]);
        rows[static_cast<std::size_t>(g)] = row;
    }
    return rows;
}

}  // namespace pan
