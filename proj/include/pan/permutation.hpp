#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pan/network.hpp"

namespace pan {

// A permutation stored as an index array: (P x)_j = x[index[j]]. As a 0/1
// matrix, row j has its single one in column index[j].
struct Permutation {
    std::vector<std::size_t> index;

    static Permutation identity(std::size_t n);

    std::size_t size() const { return index.size(); }
    bool is_bijection() const;
    Permutation inverse() const;
    Matrix to_dense() const;

    // P x
    Vector apply(std::span<const double> x) const;
    // Rows of m reordered: row j of the result is row index[j] of m.
    Matrix permute_rows(const Matrix& m) const;
    // m P^T: column k of the result is column index[k] of m.
    Matrix permute_cols(const Matrix& m) const;

    bool operator==(const Permutation&) const = default;
};

// outer * inner, i.e. apply `inner` first.
Permutation compose(const Permutation& outer, const Permutation& inner);

// Fraction of fixed points (mean of the dense diagonal).
double r_kept(const Permutation& p);

// Starts from the identity and walks j = 0..J-1; for every j with a later
// row, draws i uniformly from (j, J-1] and swaps rows j and i with
// probability p_sf. The last row never initiates a swap.
Permutation gen_permutation(std::size_t width, double p_sf, Rng& rng);

// One permutation per hidden layer. Input and output layers are never permuted.
struct PermutationPlan {
    std::vector<Permutation> hidden;  // hidden[l-1] permutes hidden layer l
    double p_sf = 0.0;

    static PermutationPlan identity(const Mlp& model);
    double r_kept() const;  // mean over hidden layers
};

PermutationPlan gen_plan(const Mlp& model, double p_sf, Rng& rng);
PermutationPlan compose(const PermutationPlan& outer, const PermutationPlan& inner);

// W_l <- P_l W_l P_{l-1}^T, b_l <- P_l b_l. Encodings stay put.
Mlp shuffle_model(const Mlp& model, const PermutationPlan& plan);
// Same reordering applied to a parameter-shaped set (gradients, momentum buffers).
void permute_parameters(std::vector<LayerParams>& params, const PermutationPlan& plan);

struct ShuffleError {
    double mean = 0.0;  // mean over batch rows of ||y_sf - y|| / J_L
    double max = 0.0;
};

ShuffleError shuffle_error(const Mlp& model, const PermutationPlan& plan, const Matrix& batch);

// Per-step shuffle injection during one client's local training.
struct ShuffleSchedule {
    double expected_shuffles = 0.0;  // N_sf
    double local_steps = 0.0;        // r_k = E * N_k / B
    double step_probability = 0.0;   // min(1, N_sf / r_k)
    double p_sf = 0.1;
};

ShuffleSchedule shuffle_injection_schedule(std::size_t local_epochs, std::size_t local_samples,
                                           std::size_t batch_size, double expected_shuffles, double p_sf);

struct InjectionTrace {
    std::size_t shuffles = 0;
    Permutation composed;  // P_{r_k} ... P_2 P_1
};

// Runs the per-step coin flips for `steps` steps on a single layer of width J.
InjectionTrace simulate_injection(std::size_t steps, double step_probability, double p_sf, std::size_t width,
                                  Rng& rng);

struct ShuffleTestPoint {
    double p_sf = 0.0;
    PanConfig pan;
};

struct ShuffleTestRow {
    ShuffleTestPoint point;
    double err_mean = 0.0;
    double err_median = 0.0;  // median of the per-trial batch means
    double err_max = 0.0;
    double r_kept = 0.0;
};

// Shuffle test: for each grid point the trained weights are re-equipped with
// the point's PAN configuration and shuffled by `trials` plans. Trial t uses
// the same plan and the same N(0,1) batch at every grid point sharing p_sf.
std::vector<ShuffleTestRow> shuffle_test(const Mlp& model, std::span<const ShuffleTestPoint> grid,
                                         std::size_t trials, std::size_t batch_rows, std::uint64_t seed);

}  // namespace pan
