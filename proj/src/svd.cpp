#include "salaad/svd.hpp"

#include <string>

#include <Eigen/Core>
#include <Eigen/SVD>

#include "salaad/errors.hpp"

namespace salaad {

namespace {

using EigenRowMajor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

} // namespace

Matrix SvdResult::reconstruct() const {
    const int n = u.rows();
    const int k = static_cast<int>(singular_values.size());
    const int m = vt.cols();
    Matrix us(n, k);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j)
            us(i, j) = u(i, j) * singular_values[j];
    (void)m;
    return matmul(us, vt);
}

SvdResult svd(const Matrix& m) {
    ensure_finite(m, "svd input");
    Eigen::Map<const EigenRowMajor> input(m.data().data(), m.rows(), m.cols());
    Eigen::BDCSVD<Eigen::MatrixXd> dec(input, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (dec.info() != Eigen::Success)
        throw NumericalError("svd: decomposition failed for " + std::to_string(m.rows()) +
                             "x" + std::to_string(m.cols()) + " block");

    const int n = m.rows();
    const int cols = m.cols();
    const int k = std::min(n, cols);

    SvdResult out;
    out.u = Matrix(n, k);
    out.vt = Matrix(k, cols);
    out.singular_values.assign(dec.singularValues().data(),
                               dec.singularValues().data() + k);

    const Eigen::MatrixXd& u = dec.matrixU();
    const Eigen::MatrixXd& v = dec.matrixV();
    for (int j = 0; j < k; ++j) {
        // Sign convention: first nonzero entry of each left singular vector
        // is nonnegative.
        double flip = 1.0;
        for (int i = 0; i < n; ++i) {
            if (u(i, j) != 0.0) {
                flip = u(i, j) < 0.0 ? -1.0 : 1.0;
                break;
            }
        }
        for (int i = 0; i < n; ++i) out.u(i, j) = flip * u(i, j);
        for (int i = 0; i < cols; ++i) out.vt(j, i) = flip * v(i, j);
    }
    ensure_finite(out.u, "svd output u");
    ensure_finite(out.vt, "svd output vt");
    return out;
}

} // namespace salaad
