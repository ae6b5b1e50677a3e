#include "pan/kernels.hpp"

#include <string>

namespace pan::kernels {

namespace {

// Below this many multiply-adds the thread start-up cost dominates.
constexpr std::size_t kParallelThreshold = 1 << 15;

void check(bool ok, const char* op, const Matrix& a, const Matrix& b) {
    if (!ok) {
        throw ShapeError(std::string(op) + ": incompatible shapes " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " and " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
    }
}

// Row kernels shared by the serial and parallel drivers.
inline void gemm_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
    auto o = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
        const double aik = a(i, k);
        auto brow = b.row(k);
        for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aik * brow[j];
    }
}

inline void gemm_nt_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
    auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
        auto brow = b.row(j);
        double acc = 0.0;
        for (std::size_t k = 0; k < a.cols(); ++k) acc += arow[k] * brow[k];
        out(i, j) = acc;
    }
}

// Row i of a^T b; walks a column-wise so accumulation order over k is fixed.
inline void gemm_tn_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
    auto o = out.row(i);
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double aki = a(k, i);
        auto brow = b.row(k);
        for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aki * brow[j];
    }
}

}  // namespace

Matrix gemm(const Matrix& a, const Matrix& b) {
    check(a.cols() == b.rows(), "gemm", a, b);
    Matrix out(a.rows(), b.cols());
    const auto n = static_cast<long>(a.rows());
    const bool big = a.rows() * a.cols() * b.cols() >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (big)
    for (long i = 0; i < n; ++i) gemm_row(a, b, out, static_cast<std::size_t>(i));
    return out;
}

Matrix gemm_nt(const Matrix& a, const Matrix& b) {
    check(a.cols() == b.cols(), "gemm_nt", a, b);
    Matrix out(a.rows(), b.rows());
    const auto n = static_cast<long>(a.rows());
    const bool big = a.rows() * a.cols() * b.rows() >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (big)
    for (long i = 0; i < n; ++i) gemm_nt_row(a, b, out, static_cast<std::size_t>(i));
    return out;
}

Matrix gemm_tn(const Matrix& a, const Matrix& b) {
    check(a.rows() == b.rows(), "gemm_tn", a, b);
    Matrix out(a.cols(), b.cols());
    const auto n = static_cast<long>(a.cols());
    const bool big = a.rows() * a.cols() * b.cols() >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (big)
    for (long i = 0; i < n; ++i) gemm_tn_row(a, b, out, static_cast<std::size_t>(i));
    return out;
}

namespace serial {

Matrix gemm(const Matrix& a, const Matrix& b) {
    check(a.cols() == b.rows(), "gemm", a, b);
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) gemm_row(a, b, out, i);
    return out;
}

Matrix gemm_nt(const Matrix& a, const Matrix& b) {
    check(a.cols() == b.cols(), "gemm_nt", a, b);
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) gemm_nt_row(a, b, out, i);
    return out;
}

Matrix gemm_tn(const Matrix& a, const Matrix& b) {
    check(a.rows() == b.rows(), "gemm_tn", a, b);
    Matrix out(a.cols(), b.cols());
    for (std::size_t i = 0; i < a.cols(); ++i) gemm_tn_row(a, b, out, i);
    return out;
}

}  // namespace serial

}  // namespace pan::kernels
