#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

namespace distobs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Complex = std::complex<double>;
using ComplexVec = std::vector<Complex>;

/// Dense Kronecker product: block (i,j) of the result is a(i,j) * b.
inline Matrix kronecker(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

/// Principal submatrix on the given (sorted or not) index list, order preserved.
inline Matrix principal_submatrix(const Matrix& m, const std::vector<int>& idx) {
    Matrix out(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < idx.size(); ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(idx[i], idx[j]);
    return out;
}

/// Rows/columns of `m` selected by index lists (general, not principal).
inline Matrix submatrix(const Matrix& m, const std::vector<int>& rows, const std::vector<int>& cols) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(rows[i], cols[j]);
    return out;
}

inline double max_abs(const Matrix& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline void sort_complex(ComplexVec& v) {
    std::sort(v.begin(), v.end(), [](const Complex& a, const Complex& b) {
        if (a.real() != b.real()) return a.real() < b.real();
        return a.imag() < b.imag();
    });
}

namespace detail {

/// Diagonal similarity scaling with exact powers of two (Parlett-Reinsch).
/// Eigen's QR iteration does not balance and can stall on defective
/// Kronecker-structured matrices; balancing preserves the spectrum exactly.
inline Matrix balance(Matrix a) {
    const Eigen::Index n = a.rows();
    for (bool converged = false; !converged;) {
        converged = true;
        for (Eigen::Index i = 0; i < n; ++i) {
            double c = 0.0, r = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j == i) continue;
                c += std::abs(a(j, i));
                r += std::abs(a(i, j));
            }
            if (c == 0.0 || r == 0.0) continue;
            const double sum = c + r;
            double f = 1.0;
            while (c < r / 2.0) {
                c *= 2.0;
                r /= 2.0;
                f *= 2.0;
            }
            while (c > r * 2.0) {
                c /= 2.0;
                r *= 2.0;
                f /= 2.0;
            }
            if (f != 1.0 && c + r < 0.95 * sum) {
                converged = false;
                a.col(i) *= f;
                a.row(i) /= f;
            }
        }
    }
    return a;
}

}  // namespace detail

/// Eigenvalues of a general real square matrix, sorted by (re, im).
/// Balances first and retries with larger iteration budgets; defective
/// matrices can exhaust the default QR iteration limit, in which case the
/// solver would otherwise return unconverged values silently.
inline ComplexVec spectrum(const Matrix& m) {
    if (m.rows() == 0) return {};
    const Matrix balanced = detail::balance(m);
    Eigen::EigenSolver<Matrix> es;
    for (int boost : {8, 64, 512}) {
        es.setMaxIterations(boost * 40 * std::max<Eigen::Index>(m.rows(), 1));
        es.compute(balanced, /*computeEigenvectors=*/false);
        if (es.info() == Eigen::Success) {
            ComplexVec out(static_cast<std::size_t>(m.rows()));
            for (Eigen::Index i = 0; i < m.rows(); ++i)
                out[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
            sort_complex(out);
            return out;
        }
    }
    throw std::runtime_error("eigenvalue iteration failed to converge");
}

/// Eigenvalues of a symmetric real matrix, ascending.
inline std::vector<double> symmetric_spectrum(const Matrix& m) {
    if (m.rows() == 0) return {};
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("symmetric eigenvalue iteration failed to converge");
    std::vector<double> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
    return out;
}

inline double spectral_radius(const Matrix& m) {
    double r = 0.0;
    for (const Complex& z : spectrum(m)) r = std::max(r, std::abs(z));
    return r;
}

/// Numerical rank via SVD, threshold relative to the largest singular value.
inline int numeric_rank(const Matrix& m, double rel_tol) {
    if (m.rows() == 0 || m.cols() == 0) return 0;
    Eigen::JacobiSVD<Matrix> svd(m);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) <= 0.0) return 0;
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > rel_tol * sv(0)) ++rank;
    return rank;
}

/// Multiset equality of two eigenvalue lists by greedy nearest pairing.
/// `tol` is an absolute distance bound per pair.
inline bool multiset_match(const ComplexVec& a, const ComplexVec& b, double tol) {
    if (a.size() != b.size()) return false;
    std::vector<bool> used(b.size(), false);
    for (const Complex& x : a) {
        double best = -1.0;
        std::size_t best_j = 0;
        for (std::size_t j = 0; j < b.size(); ++j) {
            if (used[j]) continue;
            double d = std::abs(x - b[j]);
            if (best < 0.0 || d < best) {
                best = d;
                best_j = j;
            }
        }
        if (best < 0.0 || best > tol) return false;
        used[best_j] = true;
    }
    return true;
}

/// Absolute matching tolerance scaled by the magnitude of the data.
inline double eig_match_tolerance(const ComplexVec& a, const ComplexVec& b, double rel_tol) {
    double scale = 0.0;
    for (const Complex& z : a) scale = std::max(scale, std::abs(z));
    for (const Complex& z : b) scale = std::max(scale, std::abs(z));
    return rel_tol * (1.0 + scale);
}

/// Collapse a multiset of eigenvalues into distinct representatives within `tol`.
inline ComplexVec distinct_values(ComplexVec v, double tol) {
    sort_complex(v);
    ComplexVec out;
    for (const Complex& z : v) {
        bool found = false;
        for (const Complex& w : out)
            if (std::abs(z - w) <= tol) {
                found = true;
                break;
            }
        if (!found) out.push_back(z);
    }
    return out;
}

}  // namespace distobs
