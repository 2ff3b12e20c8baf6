#pragma once

#include "salaad/matrix.hpp"
#include "salaad/svd.hpp"

namespace salaad {

/// Elementwise shrinkage sign(z) * (|z| - tau)_+ (prox of tau * l1 norm).
Matrix soft_threshold(const Matrix& m, double tau);

/// Singular value thresholding U diag((sigma_i - tau)_+) V^T
/// (prox of tau * nuclear norm).
Matrix svt(const Matrix& m, double tau);

/// Like svt but also returns the shrunk spectrum and factors, which the
/// caller gets for free from the single decomposition.
struct SvtResult {
    Matrix value;
    std::vector<double> shrunk_singular_values;  // full length min(n, m)
};
SvtResult svt_full(const Matrix& m, double tau);

} // namespace salaad
