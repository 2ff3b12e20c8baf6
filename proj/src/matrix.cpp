#include "salaad/matrix.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Core>

#include "salaad/errors.hpp"

namespace salaad {

using EigenRowMajor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapConst = Eigen::Map<const EigenRowMajor>;
using Map = Eigen::Map<EigenRowMajor>;

Matrix::Matrix(int rows, int cols)
    : rows_(rows), cols_(cols),
      data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), 0.0) {
    if (rows <= 0 || cols <= 0)
        throw std::invalid_argument("Matrix: dimensions must be positive");
}

Matrix::Matrix(int rows, int cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows <= 0 || cols <= 0)
        throw std::invalid_argument("Matrix: dimensions must be positive");
    if (data_.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
        throw std::invalid_argument("Matrix: data length does not match rows*cols");
}

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix& Matrix::operator+=(const Matrix& other) {
    if (!same_shape(other)) throw std::invalid_argument("Matrix +=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    if (!same_shape(other)) throw std::invalid_argument("Matrix -=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double scalar) {
    for (double& v : data_) v *= scalar;
    return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { a += b; return a; }
Matrix operator-(Matrix a, const Matrix& b) { a -= b; return a; }
Matrix operator*(Matrix a, double s) { a *= s; return a; }
Matrix operator*(double s, Matrix a) { a *= s; return a; }

bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a.data() == b.data();
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
    Matrix out(a.rows(), b.cols());
    MapConst ma(a.data().data(), a.rows(), a.cols());
    MapConst mb(b.data().data(), b.rows(), b.cols());
    Map mo(out.data().data(), out.rows(), out.cols());
    mo.noalias() = ma * mb;
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw std::invalid_argument("matmul_tn: inner dimensions differ");
    Matrix out(a.cols(), b.cols());
    MapConst ma(a.data().data(), a.rows(), a.cols());
    MapConst mb(b.data().data(), b.rows(), b.cols());
    Map mo(out.data().data(), out.rows(), out.cols());
    mo.noalias() = ma.transpose() * mb;
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimensions differ");
    Matrix out(a.rows(), b.rows());
    MapConst ma(a.data().data(), a.rows(), a.cols());
    MapConst mb(b.data().data(), b.rows(), b.cols());
    Map mo(out.data().data(), out.rows(), out.cols());
    mo.noalias() = ma * mb.transpose();
    return out;
}

double frobenius_norm(const Matrix& m) {
    // Scaled accumulation to avoid overflow on pathological inputs.
    double scale = 0.0, ssq = 1.0;
    for (double v : m.data()) {
        if (v == 0.0) continue;
        double av = std::abs(v);
        if (scale < av) {
            ssq = 1.0 + ssq * (scale / av) * (scale / av);
            scale = av;
        } else {
            ssq += (av / scale) * (av / scale);
        }
    }
    return scale * std::sqrt(ssq);
}

double density(const Matrix& m, double zero_tol) {
    if (zero_tol < 0.0) throw std::invalid_argument("density: zero_tol must be nonnegative");
    std::size_t nnz = 0;
    for (double v : m.data())
        if (std::abs(v) > zero_tol) ++nnz;
    return static_cast<double>(nnz) / static_cast<double>(m.size());
}

double effective_rank_ratio(std::span<const double> singular_values, double gamma) {
    if (!(gamma > 0.0 && gamma <= 1.0))
        throw std::invalid_argument("effective_rank_ratio: gamma must be in (0, 1]");
    if (singular_values.empty())
        throw std::invalid_argument("effective_rank_ratio: empty spectrum");
    double total = 0.0;
    double prev = singular_values[0];
    for (double s : singular_values) {
        if (s < 0.0 || !(std::isfinite(s)))
            throw std::invalid_argument("effective_rank_ratio: spectrum must be finite and nonnegative");
        if (s > prev + 1e-12 * std::max(1.0, prev))
            throw std::invalid_argument("effective_rank_ratio: spectrum must be nonincreasing");
        prev = s;
        total += s;
    }
    if (total == 0.0) return 0.0;
    double cum = 0.0;
    std::size_t k = singular_values.size();
    for (std::size_t i = 0; i < singular_values.size(); ++i) {
        cum += singular_values[i];
        if (cum >= gamma * total) {
            k = i + 1;
            break;
        }
    }
    return static_cast<double>(k) / static_cast<double>(singular_values.size());
}

void ensure_finite(const Matrix& m, const std::string& context) {
    for (double v : m.data())
        if (!std::isfinite(v))
            throw NumericalError(context + ": non-finite entry in " +
                                 std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                                 " matrix");
}

} // namespace salaad
