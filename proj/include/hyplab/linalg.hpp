#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace hyplab {

// 2x2 real matrix, row major: [[a, b], [c, d]].
struct Mat2 {
    double a = 1, b = 0, c = 0, d = 1;

    static Mat2 identity() { return {1, 0, 0, 1}; }

    double det() const { return a * d - b * c; }

    Mat2 inverse() const {
        const double dt = det();
        if (dt == 0.0) throw std::domain_error("Mat2: singular matrix");
        return {d / dt, -b / dt, -c / dt, a / dt};
    }

    Mat2 transpose() const { return {a, c, b, d}; }

    // Largest singular value (spectral norm), closed form via A^T A.
    double op_norm() const {
        const double p = a * a + c * c;
        const double q = b * b + d * d;
        const double r = a * b + c * d;
        const double mean = 0.5 * (p + q);
        const double disc = std::sqrt(0.25 * (p - q) * (p - q) + r * r);
        return std::sqrt(mean + disc);
    }

    friend Mat2 operator*(const Mat2& m, const Mat2& n) {
        return {m.a * n.a + m.b * n.c, m.a * n.b + m.b * n.d,
                m.c * n.a + m.d * n.c, m.c * n.b + m.d * n.d};
    }
};

// 2x2 integer matrix for toral automorphisms; arithmetic stays exact.
struct IMat2 {
    std::int64_t a = 1, b = 0, c = 0, d = 1;

    std::int64_t det() const { return a * d - b * c; }

    // Inverse is integral exactly when det = +-1.
    IMat2 inverse() const {
        const std::int64_t dt = det();
        if (dt != 1 && dt != -1)
            throw std::domain_error("IMat2: determinant is not +-1");
        return {d / dt, -b / dt, -c / dt, a / dt};
    }

    Mat2 real() const {
        return {double(a), double(b), double(c), double(d)};
    }

    friend IMat2 operator*(const IMat2& m, const IMat2& n) {
        return {m.a * n.a + m.b * n.c, m.a * n.b + m.b * n.d,
                m.c * n.a + m.d * n.c, m.c * n.b + m.d * n.d};
    }

    friend bool operator==(const IMat2& m, const IMat2& n) {
        return m.a == n.a && m.b == n.b && m.c == n.c && m.d == n.d;
    }
};

inline IMat2 ipow(IMat2 m, int n) {
    IMat2 r;
    while (n > 0) {
        if (n & 1) r = r * m;
        m = m * m;
        n >>= 1;
    }
    return r;
}

// Solve [col1 col2] * (x, y)^T = rhs by Cramer's rule.
// Returns false when the columns are numerically dependent.
inline bool solve_columns(double c1x, double c1y, double c2x, double c2y,
                          double rx, double ry, double& x, double& y) {
    const double dt = c1x * c2y - c2x * c1y;
    if (std::abs(dt) < 1e-14) return false;
    x = (rx * c2y - c2x * ry) / dt;
    y = (c1x * ry - rx * c1y) / dt;
    return true;
}

}  // namespace hyplab
