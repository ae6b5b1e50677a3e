#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pan {

// Dimension or length mismatch between operands.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Invalid user-supplied configuration (bad keys, infeasible sizes, ...).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed on-disk data (IDX files, checkpoints).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite loss or parameters during training.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Vector = std::vector<double>;

// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> init);

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    Matrix transposed() const;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Standard product a * b (OpenMP kernel underneath).
Matrix matmul(const Matrix& a, const Matrix& b);

Vector hadamard(std::span<const double> a, std::span<const double> b);

double frobenius_distance(const Matrix& a, const Matrix& b);
double l2_norm(std::span<const double> v);
bool all_finite(std::span<const double> v);

// xoshiro256** seeded through splitmix64. Output is identical on every
// platform; none of the std:: distributions are used.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    // Stream for a sub-task: the root seed mixed with one or more indices
    // through splitmix64, so (seed, round, client) tuples never collide the
    // way a plain XOR would.
    static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> indices);
    static std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> indices);

    std::uint64_t next_u64();
    // Uniform in [0, 1) with 53 random bits.
    double uniform();
    // Uniform integer in [lo, hi] inclusive.
    std::size_t uniform_int(std::size_t lo, std::size_t hi);
    // Box-Muller; caches the second draw.
    double gaussian();
    // Marsaglia-Tsang. Returns log(Gamma(shape, 1)) so tiny shapes do not underflow.
    double log_gamma_sample(double shape);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_int(0, i - 1);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t s_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

Vector sample_gaussian(Rng& rng, std::size_t n, double mean, double std);

}  // namespace pan
