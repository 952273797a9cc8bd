#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "hyplab/errors.hpp"
#include "hyplab/linalg.hpp"
#include "hyplab/torus.hpp"

namespace hyplab {

// One step of the family: either a toral automorphism p -> A p mod 1, or a
// single-mode sine shear of it,
//     f(p) = A p + amplitude * (sin(2 pi (mode . p + phase)), 0)  mod 1.
// The perturbation keeps exact Jacobians and exact C^2 bounds.
struct MapSpec {
    enum class Kind { LinearToral, PerturbedLinear };

    Kind kind = Kind::LinearToral;
    IMat2 matrix;
    double amplitude = 0.0;
    std::array<std::int64_t, 2> mode{1, 0};
    double phase = 0.0;

    static MapSpec linear(const IMat2& m) {
        MapSpec s;
        s.kind = Kind::LinearToral;
        s.matrix = m;
        s.validate();
        return s;
    }

    static MapSpec perturbed(const IMat2& m, double amplitude,
                             std::array<std::int64_t, 2> mode, double phase) {
        MapSpec s;
        s.kind = Kind::PerturbedLinear;
        s.matrix = m;
        s.amplitude = amplitude;
        s.mode = mode;
        s.phase = phase;
        s.validate();
        return s;
    }

    void validate() const {
        if (matrix.det() != 1 && matrix.det() != -1)
            throw std::invalid_argument("map matrix must have determinant +-1");
        if (kind == Kind::PerturbedLinear) {
            if (amplitude < 0.0)
                throw std::invalid_argument("amplitude must be >= 0");
            if (mode[0] == 0 && mode[1] == 0)
                throw std::invalid_argument("mode must be nonzero");
            // Diffeomorphism condition: the perturbation Jacobian must stay
            // below 1/|A^-1| so A + E remains invertible everywhere.
            const double mn = mode_norm();
            const double inv = matrix.inverse().real().op_norm();
            if (amplitude * 2.0 * std::numbers::pi * mn >= 1.0 / inv)
                throw std::invalid_argument(
                    "amplitude too large: perturbed map may fail to be a "
                    "diffeomorphism");
        }
    }

    double mode_norm() const {
        return std::hypot(double(mode[0]), double(mode[1]));
    }

    // Lift action on R^2 (no reduction mod 1).
    void apply_lift(double x, double y, double& ox, double& oy) const {
        ox = double(matrix.a) * x + double(matrix.b) * y;
        oy = double(matrix.c) * x + double(matrix.d) * y;
        if (kind == Kind::PerturbedLinear) {
            const double arg = 2.0 * std::numbers::pi *
                               (double(mode[0]) * x + double(mode[1]) * y + phase);
            ox += amplitude * std::sin(arg);
        }
    }

    TorusPoint apply(const TorusPoint& p) const {
        double ox, oy;
        apply_lift(p.x, p.y, ox, oy);
        return TorusPoint(ox, oy);
    }

    // Preimage by damped fixed-point iteration on the lift. The construction
    // check makes q -> A^-1 (target - eps s(q)) a contraction.
    TorusPoint apply_inverse(const TorusPoint& p) const {
        const Mat2 ainv = matrix.inverse().real();
        if (kind == Kind::LinearToral) {
            return TorusPoint(ainv.a * p.x + ainv.b * p.y,
                              ainv.c * p.x + ainv.d * p.y);
        }
        double qx = ainv.a * p.x + ainv.b * p.y;
        double qy = ainv.c * p.x + ainv.d * p.y;
        for (int it = 0; it < 200; ++it) {
            const double arg =
                2.0 * std::numbers::pi *
                (double(mode[0]) * qx + double(mode[1]) * qy + phase);
            const double sx = p.x - amplitude * std::sin(arg);
            const double nqx = ainv.a * sx + ainv.b * p.y;
            const double nqy = ainv.c * sx + ainv.d * p.y;
            double rx, ry;
            apply_lift(nqx, nqy, rx, ry);
            qx = nqx;
            qy = nqy;
            if (std::hypot(rx - p.x, ry - p.y) < 1e-12)
                return TorusPoint(qx, qy);
        }
        throw NoConvergence(200, "perturbed-map inverse");
    }

    // Exact Jacobian at p.
    Mat2 jacobian(const TorusPoint& p) const {
        Mat2 j = matrix.real();
        if (kind == Kind::PerturbedLinear) {
            const double arg = 2.0 * std::numbers::pi *
                               (double(mode[0]) * p.x + double(mode[1]) * p.y +
                                phase);
            const double s = amplitude * 2.0 * std::numbers::pi * std::cos(arg);
            j.a += s * double(mode[0]);
            j.b += s * double(mode[1]);
        }
        return j;
    }

    // Analytic sup bounds used by the C^2 certificate.
    double d1_bound() const {
        double b = matrix.real().op_norm();
        if (kind == Kind::PerturbedLinear)
            b += amplitude * 2.0 * std::numbers::pi * mode_norm();
        return b;
    }

    double d1_inverse_bound() const {
        const double inv = matrix.inverse().real().op_norm();
        if (kind == Kind::LinearToral) return inv;
        const double e = amplitude * 2.0 * std::numbers::pi * mode_norm();
        return inv / (1.0 - inv * e);
    }

    double d2_bound() const {
        if (kind == Kind::LinearToral) return 0.0;
        const double mn = mode_norm();
        const double pi2 = 2.0 * std::numbers::pi;
        return amplitude * pi2 * pi2 * mn * mn;
    }

    double d2_inverse_bound() const {
        if (kind == Kind::LinearToral) return 0.0;
        // |D^2 g| <= |Dg|^3 |D^2 f| for g = f^-1.
        const double dg = d1_inverse_bound();
        return dg * dg * dg * d2_bound();
    }
};

enum class Extension { Periodic, ConstantTails };

// Finitely described bi-infinite family F = (f_i). The pattern covers the
// window [window_lo, window_hi]; outside it the extension rule applies.
struct FamilySpec {
    std::vector<MapSpec> pattern;
    Extension extension = Extension::Periodic;
    int window_lo = 0;
    int window_hi = 0;

    void validate() const {
        if (pattern.empty())
            throw std::invalid_argument("family pattern must be nonempty");
        if (window_hi - window_lo + 1 != int(pattern.size()))
            throw std::invalid_argument(
                "window [" + std::to_string(window_lo) + "," +
                std::to_string(window_hi) + "] does not match pattern size " +
                std::to_string(pattern.size()));
        for (const auto& m : pattern) m.validate();
    }

    int period() const { return int(pattern.size()); }

    const MapSpec& map_at(int i) const {
        const int n = int(pattern.size());
        if (extension == Extension::Periodic) {
            const int k = ((i - window_lo) % n + n) % n;
            return pattern[std::size_t(k)];
        }
        const int k = i < window_lo ? 0 : (i > window_hi ? n - 1 : i - window_lo);
        return pattern[std::size_t(k)];
    }

    bool all_linear() const {
        for (const auto& m : pattern)
            if (m.kind != MapSpec::Kind::LinearToral) return false;
        return true;
    }

    static FamilySpec constant(const MapSpec& m) {
        FamilySpec f;
        f.pattern = {m};
        f.extension = Extension::Periodic;
        f.window_lo = f.window_hi = 0;
        f.validate();
        return f;
    }

    static FamilySpec periodic(std::vector<MapSpec> maps, int lo = 0) {
        FamilySpec f;
        f.pattern = std::move(maps);
        f.extension = Extension::Periodic;
        f.window_lo = lo;
        f.window_hi = lo + int(f.pattern.size()) - 1;
        f.validate();
        return f;
    }
};

// Reindexed family g_j = f_{j+offset}; used to relate shadowing runs that
// start at different levels.
inline FamilySpec shifted(const FamilySpec& f, int offset) {
    FamilySpec g = f;
    if (f.extension == Extension::Periodic) {
        const int n = f.period();
        const int rot = ((offset % n) + n) % n;
        for (int k = 0; k < n; ++k)
            g.pattern[std::size_t(k)] = f.pattern[std::size_t((k + rot) % n)];
    } else {
        g.window_lo = f.window_lo - offset;
        g.window_hi = f.window_hi - offset;
    }
    return g;
}

struct Jet {
    TorusPoint value;
    Mat2 derivative;
    double second_derivative_bound = 0.0;

    void validate() const {
        const double dt = std::abs(derivative.det());
        if (dt < 1e-6 || dt > 1e6)
            throw std::invalid_argument("jet derivative determinant out of range");
    }
};

inline TorusPoint apply(const FamilySpec& f, int i, const TorusPoint& p) {
    return f.map_at(i).apply(p);
}

inline TorusPoint apply_inverse(const FamilySpec& f, int i, const TorusPoint& p) {
    return f.map_at(i).apply_inverse(p);
}

// Composition law: n > 0 walks f_{i}, ..., f_{i+n-1}; n < 0 walks
// f_{i-1}^-1, ..., f_{i-|n|}^-1; n = 0 is the identity on level i.
inline TorusPoint compose(const FamilySpec& f, int i, int n, TorusPoint p) {
    if (n >= 0) {
        for (int k = 0; k < n; ++k) p = apply(f, i + k, p);
    } else {
        for (int k = 0; k < -n; ++k) p = apply_inverse(f, i - 1 - k, p);
    }
    return p;
}

inline Jet jet(const FamilySpec& f, int i, const TorusPoint& p) {
    const MapSpec& m = f.map_at(i);
    Jet j{m.apply(p), m.jacobian(p), m.d2_bound()};
    j.validate();
    return j;
}

// Chain-rule product D_p(F_i^n); inverse Jacobians along the backward orbit
// for n < 0.
inline Mat2 derivative_cocycle(const FamilySpec& f, int i, int n, TorusPoint p) {
    Mat2 acc = Mat2::identity();
    if (n >= 0) {
        for (int k = 0; k < n; ++k) {
            const MapSpec& m = f.map_at(i + k);
            acc = m.jacobian(p) * acc;
            p = m.apply(p);
        }
    } else {
        for (int k = 0; k < -n; ++k) {
            const MapSpec& m = f.map_at(i - 1 - k);
            const TorusPoint q = m.apply_inverse(p);
            acc = m.jacobian(q).inverse() * acc;
            p = q;
        }
    }
    return acc;
}

// The two reference families.
inline FamilySpec cat_family() {
    return FamilySpec::constant(MapSpec::linear({2, 1, 1, 1}));
}

// Alternating shears with n_i = 1: lower shear on even levels, upper on odd.
// F_0^2 equals the cat map.
inline FamilySpec shear_family() {
    return FamilySpec::periodic(
        {MapSpec::linear({1, 0, 1, 1}), MapSpec::linear({1, 1, 0, 1})}, 0);
}

}  // namespace hyplab
