#pragma once

#include <cmath>

#include "hyplab/manifolds.hpp"
#include "hyplab/rng.hpp"

namespace hyplab {

// Parameter box for canonical coordinates: manifolds of radius epsilon are
// intersected for points closer than delta. The chain
// delta < epsilon/4 < (injectivity radius)/16 mirrors the existence proof.
struct BracketParams {
    double epsilon = 0.05;
    double delta = 0.01;
    double alpha = 0.2;  // cone opening used by containment checks

    void validate() const {
        if (!(epsilon > 0.0) || !(epsilon < 0.125))
            throw std::invalid_argument("bracket epsilon must lie in (0, 1/8)");
        if (!(delta > 0.0) || !(delta < epsilon / 4))
            throw std::invalid_argument("bracket delta must lie in (0, epsilon/4)");
        if (!(alpha > 0.0))
            throw std::invalid_argument("cone opening must be positive");
    }
};

// Cone around one axis of a splitting: membership means the transverse
// component is at most `opening` times the axial one.
struct Cone {
    Flavor axis = Flavor::Stable;
    double opening = 0.2;

    bool contains(const Splitting& frame, const TorusVector& v) const {
        double s, u;
        if (!frame.decompose(v, s, u)) return false;
        const double axial = axis == Flavor::Stable ? s : u;
        const double trans = axis == Flavor::Stable ? u : s;
        return std::abs(trans) <= opening * std::abs(axial) + 1e-15;
    }
};

namespace detail {

// Exact bracket for linear-toral families: manifolds are the straight lines
// p + R e_s(p) and q + R e_u(q), so the intersection solves a 2x2 system on
// the lift. Valid on the whole chart, not only below the Theorem-A delta;
// eps_cap bounds how far along either line the solution may sit.
inline TorusPoint bracket_exact_linear(const FamilySpec& f, int i,
                                       const TorusPoint& p, const TorusPoint& q,
                                       double eps_cap, double* t_out = nullptr,
                                       double* u_out = nullptr) {
    if (!f.all_linear()) throw NotLinear();
    const Splitting sp = splitting_at(f, i, p, 40);
    const Splitting sq = splitting_at(f, i, q, 40);
    const TorusVector rhs = log_map(p, q);
    double t, u;
    if (!solve_columns(sp.e_s.dx, sp.e_s.dy, -sq.e_u.dx, -sq.e_u.dy, rhs.dx,
                       rhs.dy, t, u))
        throw NoIntersection("stable and unstable directions are parallel");
    if (std::abs(t) > eps_cap || std::abs(u) > eps_cap)
        throw NoIntersection("intersection lies outside the chart box");
    if (t_out) *t_out = t;
    if (u_out) *u_out = u;
    return exp_map(p, t * sp.e_s);
}

}  // namespace detail

// Canonical coordinates [p, q] = W^s(p, eps) cap W^u(q, eps). The first
// argument contributes the stable manifold. Linear families get the exact
// two-line solve; perturbed ones alternate projections between the two
// computed graphs until the step size drops below 1e-11.
inline TorusPoint bracket(const FamilySpec& f, int i, const TorusPoint& p,
                          const TorusPoint& q, const BracketParams& params,
                          int manifold_depth = 40) {
    params.validate();
    const double d = distance(p, q);
    if (d >= params.delta) throw TooFarApart(d);

    if (f.all_linear())
        return detail::bracket_exact_linear(f, i, p, q, params.epsilon);

    const LocalManifold ws =
        local_manifold(f, i, p, Flavor::Stable, params.epsilon, manifold_depth);
    const LocalManifold wu =
        local_manifold(f, i, q, Flavor::Unstable, params.epsilon, manifold_depth);

    TorusPoint z = q;
    for (int it = 0; it < 100; ++it) {
        double a, t;
        if (!ws.coords(z, a, t)) throw NoIntersection("degenerate frame");
        if (std::abs(a) > params.epsilon)
            throw NoIntersection("left the stable chart");
        const TorusPoint zs = ws.point_at(a);

        double b, r;
        if (!wu.coords(zs, b, r)) throw NoIntersection("degenerate frame");
        if (std::abs(b) > params.epsilon)
            throw NoIntersection("left the unstable chart");
        const TorusPoint zu = wu.point_at(b);

        const double moved = distance(z, zu);
        z = zu;
        if (moved < 1e-11) break;
    }

    // The fixed point must sit on both graphs.
    double a, t, b, r;
    if (!ws.coords(z, a, t) || !wu.coords(z, b, r))
        throw NoIntersection("degenerate frame at the fixed point");
    if (std::abs(t - ws.value_at(a)) > 1e-9 ||
        std::abs(r - wu.value_at(b)) > 1e-9)
        throw NoIntersection("alternating projection did not land on both "
                             "manifolds");
    return z;
}

// Halves delta until `trials` random nearby pairs all bracket successfully
// inside the epsilon box.
inline BracketParams calibrate_delta(const FamilySpec& f,
                                     const BracketParams& params_in,
                                     int trials, std::uint64_t seed = 2024) {
    if (trials < 100)
        throw std::invalid_argument("calibration needs at least 100 trials");
    BracketParams params = params_in;
    params.validate();

    const int span = f.window_hi - f.window_lo + 1;
    while (params.delta >= 1e-6) {
        bool ok = true;
        Rng rng(seed);
        for (int t = 0; t < trials && ok; ++t) {
            const int i = f.window_lo + t % span;
            const TorusPoint p = rng.point();
            const TorusVector step = rng.in_ball(params.delta * 0.999);
            const TorusPoint q = exp_map(p, step);
            try {
                bracket(f, i, p, q, params);
            } catch (const Error&) {
                ok = false;
            }
        }
        if (ok) return params;
        params.delta *= 0.5;
    }
    throw CalibrationFailed(params.delta);
}

}  // namespace hyplab
