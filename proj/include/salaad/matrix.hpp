#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace salaad {

/// Dense real matrix, row-major binary64. The universal carrier for
/// weights, factors and gradients across all modules.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols);  // zero-filled
    Matrix(int rows, int cols, std::vector<double> data);

    static Matrix identity(int n);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
    double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double scalar);

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);
bool operator==(const Matrix& a, const Matrix& b);

/// a * b via dense GEMM.
Matrix matmul(const Matrix& a, const Matrix& b);
/// a^T * b.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a * b^T.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

double frobenius_norm(const Matrix& m);

/// Fraction of entries with |value| > zero_tol.
double density(const Matrix& m, double zero_tol = 0.0);

/// Smallest head-fraction of the (nonincreasing) spectrum whose cumulative
/// share reaches the energy coverage gamma, divided by the spectrum length.
/// An all-zero spectrum maps to 0.
double effective_rank_ratio(std::span<const double> singular_values, double gamma);

/// Throws NumericalError naming `context` if any entry is NaN/Inf.
void ensure_finite(const Matrix& m, const std::string& context);

} // namespace salaad
