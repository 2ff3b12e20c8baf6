#include "salaad/prox.hpp"

#include <cmath>
#include <stdexcept>

namespace salaad {

Matrix soft_threshold(const Matrix& m, double tau) {
    if (tau < 0.0) throw std::invalid_argument("soft_threshold: tau must be nonnegative");
    Matrix out = m;
    for (double& v : out.data()) {
        double mag = std::abs(v) - tau;
        v = mag > 0.0 ? (v < 0.0 ? -mag : mag) : 0.0;
    }
    return out;
}

SvtResult svt_full(const Matrix& m, double tau) {
    if (tau < 0.0) throw std::invalid_argument("svt: tau must be nonnegative");
    SvdResult dec = svd(m);
    const int k = static_cast<int>(dec.singular_values.size());
    SvtResult out;
    out.shrunk_singular_values.resize(k);
    int rank = 0;
    for (int i = 0; i < k; ++i) {
        double s = dec.singular_values[i] - tau;
        out.shrunk_singular_values[i] = s > 0.0 ? s : 0.0;
        if (out.shrunk_singular_values[i] > 0.0) rank = i + 1;
    }
    if (rank == 0) {
        out.value = Matrix(m.rows(), m.cols());
        return out;
    }
    // Reassemble from the surviving prefix only.
    Matrix us(m.rows(), rank);
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < rank; ++j)
            us(i, j) = dec.u(i, j) * out.shrunk_singular_values[j];
    Matrix vt_top(rank, m.cols());
    for (int j = 0; j < rank; ++j)
        for (int i = 0; i < m.cols(); ++i)
            vt_top(j, i) = dec.vt(j, i);
    out.value = matmul(us, vt_top);
    return out;
}

Matrix svt(const Matrix& m, double tau) {
    return svt_full(m, tau).value;
}

} // namespace salaad
