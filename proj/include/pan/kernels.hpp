#pragma once

#include "pan/linalg.hpp"

// Dense products used by the forward and backward passes. The default
// versions split output rows across OpenMP threads; each output element is
// accumulated in the same order as the serial reference, so both produce
// bit-identical results.
namespace pan::kernels {

// a * b
Matrix gemm(const Matrix& a, const Matrix& b);
// a * b^T
Matrix gemm_nt(const Matrix& a, const Matrix& b);
// a^T * b
Matrix gemm_tn(const Matrix& a, const Matrix& b);

namespace serial {
Matrix gemm(const Matrix& a, const Matrix& b);
Matrix gemm_nt(const Matrix& a, const Matrix& b);
Matrix gemm_tn(const Matrix& a, const Matrix& b);
}  // namespace serial

}  // namespace pan::kernels
