#pragma once

#include <cmath>

#include "hyplab/errors.hpp"
#include "hyplab/linalg.hpp"

namespace hyplab {

// Flat 2-torus R^2/Z^2. Injectivity radius of the flat metric is 1/2.
inline constexpr double kInjectivityRadius = 0.5;

// Canonical representative in [0, 1). Coordinates within 1e-15 of 1.0 snap
// to 0.0 so long orbits do not drift between representatives.
inline double wrap01(double t) {
    double r = t - std::floor(t);
    if (r >= 1.0 || 1.0 - r < 1e-15) r = 0.0;
    return r;
}

// Representative of t + Z in (-1/2, 1/2]; the tie at 1/2 takes the positive
// sign.
inline double wrap_half(double t) {
    return t - std::ceil(t - 0.5);
}

// Tangent vector in the flat chart; unrestricted magnitude.
struct TorusVector {
    double dx = 0, dy = 0;

    double norm() const { return std::hypot(dx, dy); }
    double dot(const TorusVector& o) const { return dx * o.dx + dy * o.dy; }

    TorusVector normalized() const {
        const double n = norm();
        if (n == 0.0) throw std::domain_error("cannot normalize zero vector");
        return {dx / n, dy / n};
    }

    friend TorusVector operator+(TorusVector u, TorusVector v) {
        return {u.dx + v.dx, u.dy + v.dy};
    }
    friend TorusVector operator-(TorusVector u, TorusVector v) {
        return {u.dx - v.dx, u.dy - v.dy};
    }
    friend TorusVector operator*(double s, TorusVector v) {
        return {s * v.dx, s * v.dy};
    }
    friend TorusVector operator-(TorusVector v) { return {-v.dx, -v.dy}; }
    friend TorusVector operator*(const Mat2& m, TorusVector v) {
        return {m.a * v.dx + m.b * v.dy, m.c * v.dx + m.d * v.dy};
    }
};

// Point on the torus; constructor canonicalizes into [0,1)^2.
struct TorusPoint {
    double x = 0, y = 0;

    TorusPoint() = default;
    TorusPoint(double px, double py) : x(wrap01(px)), y(wrap01(py)) {}

    friend bool operator==(const TorusPoint& p, const TorusPoint& q) {
        return p.x == q.x && p.y == q.y;
    }
};

// A representative of `base` in the universal cover.
struct Lift {
    TorusPoint base;
    double rx = 0, ry = 0;

    static Lift canonical(const TorusPoint& p) { return {p, p.x, p.y}; }
};

// Geodesic distance: minimum over integer shifts of the Euclidean distance
// between lifts. Always <= sqrt(2)/2.
inline double distance(const TorusPoint& p, const TorusPoint& q) {
    return std::hypot(wrap_half(q.x - p.x), wrap_half(q.y - p.y));
}

// exp_p(v) = p + v mod 1; requires |v| below the injectivity radius.
inline TorusPoint exp_map(const TorusPoint& p, const TorusVector& v) {
    const double n = v.norm();
    if (n >= kInjectivityRadius) throw NormTooLarge(n);
    return TorusPoint(p.x + v.dx, p.y + v.dy);
}

// Inverse of exp_map on its domain: the unique v with |v| < 1/2 and
// exp_map(p, v) = q.
inline TorusVector log_map(const TorusPoint& p, const TorusPoint& q) {
    const TorusVector v{wrap_half(q.x - p.x), wrap_half(q.y - p.y)};
    if (v.norm() >= kInjectivityRadius) throw TooFarApart(v.norm());
    return v;
}

}  // namespace hyplab
