#pragma once

#include <span>
#include <vector>

#include "pan/data.hpp"
#include "pan/network.hpp"
#include "pan/permutation.hpp"

namespace pan {

// Post-activation outputs of one hidden layer over m probe samples; row i is
// neuron i's representation.
struct ActivationProfile {
    std::size_t layer = 0;
    Matrix values;  // J_l x m
};

ActivationProfile collect_activations(const Mlp& model, const Matrix& probe, std::size_t layer);

struct Assignment {
    std::vector<std::size_t> col_of_row;
    double cost = 0.0;  // sum of cost(i, col_of_row[i]) in row order
};

// Kuhn-Munkres with row/column potentials, O(n^3). Square costs only.
Assignment hungarian(const Matrix& cost);

struct AssignmentResult {
    Permutation assignment;  // global neuron i <-> local neuron assignment.index[i]
    double cost = 0.0;
    double match_ratio = 0.0;  // fraction of i with assignment.index[i] == i
};

// L2 distances between every global row and every local row.
Matrix pairwise_l2(const Matrix& a, const Matrix& b);

AssignmentResult match_neurons(const ActivationProfile& global, const ActivationProfile& local);

struct PreferenceMatrix {
    Matrix values;            // J_l x C, p_c per neuron
    std::vector<int> argmax;  // lowest class index wins ties
};

// p_c(i) = sum over probe samples x of class c of h_i(x) * dZ_c/dh_i(x),
// with h the post-activation of hidden layer `layer` and Z_c the class-c logit.
PreferenceMatrix preference_vectors(const Mlp& model, const Dataset& probe, std::size_t layer);

struct FusionCurve {
    std::vector<double> mu;
    std::vector<double> accuracy;
};

// Accuracy of (1 - mu) theta_a + mu theta_b along the grid. Both models must
// share architecture and PAN configuration.
FusionCurve fusion_curve(const Mlp& a, const Mlp& b, const Dataset& test, std::span<const double> grid);

}  // namespace pan
