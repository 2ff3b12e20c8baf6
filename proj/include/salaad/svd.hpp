#pragma once

#include <vector>

#include "salaad/matrix.hpp"

namespace salaad {

/// Thin SVD of an n x m matrix: u is n x k, vt is k x m, k = min(n, m).
/// Singular values are nonincreasing and nonnegative; the sign convention
/// makes the first nonzero entry of every left singular vector nonnegative,
/// so the factorization is deterministic for a fixed input.
struct SvdResult {
    Matrix u;
    std::vector<double> singular_values;
    Matrix vt;

    Matrix reconstruct() const;
};

SvdResult svd(const Matrix& m);

} // namespace salaad
