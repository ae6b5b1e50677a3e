#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pan/linalg.hpp"

namespace pan {

struct Dataset {
    Matrix features;          // n x d
    std::vector<int> labels;  // n entries in [0, num_classes)
    std::size_t num_classes = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.cols(); }

    Dataset subset(const std::vector<std::size_t>& indices) const;
    void validate() const;
};

// C Gaussian blobs with unit variance. Class means are random unit
// directions scaled by `separation`; labels are balanced.
Dataset gen_synthetic(std::size_t n, std::size_t dim, std::size_t num_classes, double separation, std::uint64_t seed);

// Draws train and test sets from the same blob means (the mean seed is shared).
std::pair<Dataset, Dataset> gen_synthetic_split(std::size_t n_train, std::size_t n_test, std::size_t dim,
                                                std::size_t num_classes, double separation, std::uint64_t seed);

// MNIST-style IDX pair: images magic 0x00000803, labels magic 0x00000801,
// big-endian header, u8 payload. Pixels are scaled to [0, 1]. The class
// count is max(label) + 1 unless `num_classes` is given.
Dataset load_idx(const std::string& images_path, const std::string& labels_path, std::size_t num_classes = 0);

struct ClientDataset {
    std::size_t client = 0;
    std::vector<std::size_t> indices;  // into the parent dataset

    std::size_t size() const { return indices.size(); }
};

struct PartitionSpec {
    std::size_t clients = 1;
    double alpha = 1.0;
    std::uint64_t seed = 0;
    std::size_t max_attempts = 100;
};

// Per class, client shares p ~ Dir(alpha 1_K); the class's shuffled samples
// are cut at floor(cumsum(p) * n_c). Draws are repeated until every client
// holds at least one sample.
std::vector<ClientDataset> partition_dirichlet(const Dataset& ds, const PartitionSpec& spec);

// counts[k][c] = samples of class c held by client k.
std::vector<std::vector<std::size_t>> partition_counts(const Dataset& ds, const std::vector<ClientDataset>& parts);

// Mean total-variation distance between each client's label distribution and
// the global one.
double mean_label_tv_distance(const Dataset& ds, const std::vector<ClientDataset>& parts);

// Indices 0..n-1 shuffled and cut into batches of `batch_size`; the last
// partial batch is kept.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, Rng& rng);

// Gathers rows of the dataset into a feature matrix and label list.
void gather(const Dataset& ds, const std::vector<std::size_t>& rows, Matrix& features, std::vector<int>& labels);

}  // namespace pan
