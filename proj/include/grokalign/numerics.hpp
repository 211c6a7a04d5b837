#pragma once

// Dense double-precision linear algebra for desk-scale experiments.
// Row-major matrices, plain std::vector<double> vectors, and a cyclic
// Jacobi eigensolver for small symmetric matrices.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace grokalign {

using Vector = std::vector<double>;

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    static Matrix from_rows(const std::vector<Vector>& rws) {
        if (rws.empty()) return {};
        Matrix m(rws.size(), rws.front().size());
        for (std::size_t i = 0; i < rws.size(); ++i) {
            if (rws[i].size() != m.cols)
                throw std::invalid_argument("Matrix::from_rows: ragged rows");
            std::copy(rws[i].begin(), rws[i].end(), m.row(i));
        }
        return m;
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

inline void check_finite(const Vector& v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite entry");
}

inline void check_finite(const Matrix& m, const char* what) {
    check_finite(m.data, what);
}

// ---- vector helpers ----

inline double dot(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Vector& a) { return std::sqrt(dot(a, a)); }

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

inline Vector scaled(Vector v, double alpha) {
    for (double& x : v) x *= alpha;
    return v;
}

inline Vector vec_add(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw std::invalid_argument("vec_add: size mismatch");
    Vector r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

inline Vector vec_sub(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw std::invalid_argument("vec_sub: size mismatch");
    Vector r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

inline Vector ones(std::size_t n) { return Vector(n, 1.0); }

inline Vector basis(std::size_t n, std::size_t i) {
    Vector e(n, 0.0);
    e[i] = 1.0;
    return e;
}

inline double cosine(const Vector& a, const Vector& b) {
    double na = norm2(a), nb = norm2(b);
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine: zero vector");
    return dot(a, b) / (na * nb);
}

// ---- matrix products ----

// y = M x
inline Vector matvec(const Matrix& m, const Vector& x) {
    if (x.size() != m.cols) throw std::invalid_argument("matvec: shape mismatch");
    Vector y(m.rows, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* r = m.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) s += r[j] * x[j];
        y[i] = s;
    }
    return y;
}

// y = M^T x
inline Vector matvec_t(const Matrix& m, const Vector& x) {
    if (x.size() != m.rows) throw std::invalid_argument("matvec_t: shape mismatch");
    Vector y(m.cols, 0.0);
    for (std::size_t i = 0; i < m.rows; ++i) axpy(x[i], m.row(i), y.data(), m.cols);
    return y;
}

// C = A B
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul: shape mismatch");
    Matrix c(a.rows, b.cols);
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(a.rows); ++i) {
        double* ci = c.row(static_cast<std::size_t>(i));
        const double* ai = a.row(static_cast<std::size_t>(i));
        for (std::size_t k = 0; k < a.cols; ++k) axpy(ai[k], b.row(k), ci, b.cols);
    }
    return c;
}

// C = A B^T  (rows of both operands are contiguous in the reduction index)
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) throw std::invalid_argument("matmul_nt: shape mismatch");
    Matrix c(a.rows, b.rows);
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(a.rows); ++i) {
        const double* ai = a.row(static_cast<std::size_t>(i));
        double* ci = c.row(static_cast<std::size_t>(i));
        for (std::size_t j = 0; j < b.rows; ++j) {
            const double* bj = b.row(j);
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) s += ai[k] * bj[k];
            ci[j] = s;
        }
    }
    return c;
}

// C = A^T B, reducing over the shared row index of A and B
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) throw std::invalid_argument("matmul_tn: shape mismatch");
    Matrix c(a.cols, b.cols);
#if defined(_OPENMP)
#pragma omp parallel for schedule(static)
#endif
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(a.cols); ++j) {
        double* cj = c.row(static_cast<std::size_t>(j));
        for (std::size_t p = 0; p < a.rows; ++p)
            axpy(a(p, static_cast<std::size_t>(j)), b.row(p), cj, b.cols);
    }
    return c;
}

inline Matrix transpose(const Matrix& m) {
    Matrix t(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
    return t;
}

inline double frobenius_sq(const Matrix& m) {
    double s = 0.0;
    for (double x : m.data) s += x * x;
    return s;
}

inline double frobenius(const Matrix& m) { return std::sqrt(frobenius_sq(m)); }

inline double trace(const Matrix& m) {
    double s = 0.0;
    for (std::size_t i = 0; i < std::min(m.rows, m.cols); ++i) s += m(i, i);
    return s;
}

// ---- small symmetric eigensolver ----

struct SymEig {
    Vector values;   // descending
    Matrix vectors;  // columns are eigenvectors, matching values order
};

namespace detail {

inline void require_symmetric(const Matrix& m) {
    if (m.rows != m.cols) throw std::invalid_argument("eig_sym_small: matrix not square");
    if (m.rows == 0) throw std::invalid_argument("eig_sym_small: empty matrix");
    double scale = 1.0;
    for (double x : m.data) scale = std::max(scale, std::abs(x));
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = i + 1; j < m.cols; ++j)
            if (std::abs(m(i, j) - m(j, i)) > 1e-12 * scale)
                throw std::invalid_argument(
                    "eig_sym_small: asymmetry at (" + std::to_string(i) + "," +
                    std::to_string(j) + ") = " + std::to_string(m(i, j) - m(j, i)));
}

}  // namespace detail

// Cyclic Jacobi rotations; fine for the class-count-sized matrices used here.
inline SymEig eig_sym_with_vectors(Matrix m) {
    detail::require_symmetric(m);
    const std::size_t n = m.rows;
    Matrix v = Matrix::identity(n);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += m(p, q) * m(p, q);
        double diag = 0.0;
        for (std::size_t p = 0; p < n; ++p) diag += m(p, p) * m(p, p);
        if (off <= 1e-30 * std::max(1.0, diag)) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = m(p, q);
                if (apq == 0.0) continue;
                const double theta = (m(q, q) - m(p, p)) / (2.0 * apq);
                const double t = std::copysign(1.0, theta) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double mkp = m(k, p), mkq = m(k, q);
                    m(k, p) = c * mkp - s * mkq;
                    m(k, q) = s * mkp + c * mkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double mpk = m(p, k), mqk = m(q, k);
                    m(p, k) = c * mpk - s * mqk;
                    m(q, k) = s * mpk + c * mqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return m(a, a) > m(b, b); });
    SymEig out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        out.values[k] = m(order[k], order[k]);
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
    }
    return out;
}

// Eigenvalues of a small symmetric matrix, sorted descending.
inline Vector eig_sym_small(const Matrix& m) { return eig_sym_with_vectors(m).values; }

}  // namespace grokalign
