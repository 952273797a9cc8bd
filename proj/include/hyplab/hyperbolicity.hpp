#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "hyplab/family.hpp"

namespace hyplab {

// Unit stable/unstable directions at one (level, point) pair, sign-normalized
// so the first component above 1e-12 is positive.
struct Splitting {
    int index = 0;
    TorusPoint point;
    TorusVector e_s;
    TorusVector e_u;
    double angle = 0.0;

    // Coordinates of v in the (e_s, e_u) basis.
    bool decompose(const TorusVector& v, double& s, double& u) const {
        return solve_columns(e_s.dx, e_s.dy, e_u.dx, e_u.dy, v.dx, v.dy, s, u);
    }

    TorusVector recompose(double s, double u) const {
        return s * e_s + u * e_u;
    }
};

struct HyperbolicityEstimate {
    double lambda = 0.0;
    double c = 0.0;
    double angle_inf = 0.0;
    int window_lo = 0;
    int window_hi = 0;
    long long sample_count = 0;
};

struct C2Certificate {
    double sup_norm = 0.0;
    bool is_member = false;
};

namespace detail {

inline TorusVector sign_normalize(TorusVector v) {
    const double lead = std::abs(v.dx) > 1e-12 ? v.dx : v.dy;
    return lead < 0 ? -v : v;
}

// Push a seed through the single-step Jacobians along an orbit segment ending
// at (i, p), renormalizing each step. The orbit is walked outward from p and
// cached: points far from p carry the large orbit error but their influence
// on the final direction decays faster than the error grows, which keeps the
// computed direction accurate on chaotic orbits.
//
// forward=true  : Jacobians of f_{i-depth}, ..., f_{i-1} along the backward
//                 orbit, pushing the seed forward into level i (unstable
//                 direction).
// forward=false : inverse Jacobians along the forward orbit, pulling the seed
//                 back into level i (stable direction).
inline TorusVector power_iterate(const FamilySpec& f, int i,
                                 const TorusPoint& p, int depth, bool forward,
                                 TorusVector seed, double& log_growth) {
    std::vector<TorusPoint> orbit(std::size_t(depth) + 1);
    orbit[0] = p;
    for (int k = 1; k <= depth; ++k)
        orbit[std::size_t(k)] = forward
                                    ? apply_inverse(f, i - k, orbit[std::size_t(k - 1)])
                                    : apply(f, i + k - 1, orbit[std::size_t(k - 1)]);

    TorusVector v = seed.normalized();
    log_growth = 0.0;
    for (int k = depth; k >= 1; --k) {
        // The Jacobian of each step is evaluated at the step's source point.
        const Mat2 j = forward
                           ? f.map_at(i - k).jacobian(orbit[std::size_t(k)])
                           : f.map_at(i + k - 1).jacobian(orbit[std::size_t(k - 1)]).inverse();
        v = j * v;
        const double n = v.norm();
        log_growth += std::log(n);
        v = {v.dx / n, v.dy / n};
    }
    return v;
}

}  // namespace detail

// Splitting via forward/backward cocycle power iteration: the unstable
// direction at (i, p) is the image of a generic seed pushed forward from
// level i - depth along the orbit ending at p; the stable direction is the
// time-reversed analogue. Seed (1,0) falls back to (0,1) when it fails to
// grow (it sat inside the opposite subspace).
inline Splitting splitting_at(const FamilySpec& f, int i, const TorusPoint& p,
                              int depth) {
    if (depth < 1) throw std::invalid_argument("splitting depth must be >= 1");

    double growth = 0.0;
    TorusVector e_u = detail::power_iterate(f, i, p, depth, true, {1, 0}, growth);
    if (growth <= 0.0)
        e_u = detail::power_iterate(f, i, p, depth, true, {0, 1}, growth);

    double growth_s = 0.0;
    TorusVector e_s =
        detail::power_iterate(f, i, p, depth, false, {1, 0}, growth_s);
    if (growth_s <= 0.0)
        e_s = detail::power_iterate(f, i, p, depth, false, {0, 1}, growth_s);

    Splitting sp;
    sp.index = i;
    sp.point = p;
    sp.e_s = detail::sign_normalize(e_s);
    sp.e_u = detail::sign_normalize(e_u);
    const double ip = std::clamp(std::abs(sp.e_s.dot(sp.e_u)), 0.0, 1.0);
    sp.angle = std::acos(ip);
    if (sp.angle <= 1e-10 || growth <= 0.0 || growth_s <= 0.0)
        throw DepthInsufficient(sp.angle);
    return sp;
}

// Fits (lambda, c) of the Anosov inequalities over a sample: lambda by
// log-linear regression of the measured contraction rates against n, then c
// as the largest residual ratio, so every sampled inequality holds by
// construction. The result is sample-dependent by design.
inline HyperbolicityEstimate estimate_constants(const FamilySpec& f,
                                                int window_lo, int window_hi,
                                                int grid, int depth,
                                                int split_depth = 40) {
    if (grid < 1) throw std::invalid_argument("grid must be >= 1");
    if (depth < 2) throw std::invalid_argument("depth must be >= 2");
    if (window_hi < window_lo)
        throw std::invalid_argument("window must be nonempty");

    struct Sample {
        int n;
        double log_rate;
    };
    std::vector<Sample> samples;
    samples.reserve(std::size_t(window_hi - window_lo + 1) * grid * grid * depth * 2);
    double angle_inf = 4.0;

    try {
        for (int i = window_lo; i <= window_hi; ++i) {
            for (int gx = 0; gx < grid; ++gx) {
                for (int gy = 0; gy < grid; ++gy) {
                    const TorusPoint p((gx + 0.5) / grid, (gy + 0.5) / grid);
                    const Splitting sp = splitting_at(f, i, p, split_depth);
                    angle_inf = std::min(angle_inf, sp.angle);

                    TorusVector vs = sp.e_s;
                    TorusPoint q = p;
                    double log_ns = 0.0;
                    for (int n = 1; n <= depth; ++n) {
                        const MapSpec& m = f.map_at(i + n - 1);
                        vs = m.jacobian(q) * vs;
                        q = m.apply(q);
                        const double nn = vs.norm();
                        log_ns += std::log(nn);
                        vs = {vs.dx / nn, vs.dy / nn};
                        samples.push_back({n, log_ns});
                    }

                    TorusVector vu = sp.e_u;
                    q = p;
                    double log_nu = 0.0;
                    for (int n = 1; n <= depth; ++n) {
                        const MapSpec& m = f.map_at(i - n);
                        const TorusPoint pre = m.apply_inverse(q);
                        vu = m.jacobian(pre).inverse() * vu;
                        q = pre;
                        const double nn = vu.norm();
                        log_nu += std::log(nn);
                        vu = {vu.dx / nn, vu.dy / nn};
                        samples.push_back({n, log_nu});
                    }
                }
            }
        }
    } catch (const DepthInsufficient&) {
        throw NotHyperbolic("splitting directions failed to separate");
    }

    double sn = 0, sr = 0, snn = 0, snr = 0;
    for (const auto& s : samples) {
        sn += s.n;
        sr += s.log_rate;
        snn += double(s.n) * s.n;
        snr += double(s.n) * s.log_rate;
    }
    const double m = double(samples.size());
    const double denom = m * snn - sn * sn;
    const double slope = (m * snr - sn * sr) / denom;
    const double lambda = std::exp(slope);
    if (!(lambda < 1.0 - 1e-6))
        throw NotHyperbolic("fitted rate " + std::to_string(lambda) +
                            " is not below 1");

    double c = 0.0;
    for (const auto& s : samples)
        c = std::max(c, std::exp(s.log_rate - s.n * slope));

    HyperbolicityEstimate est;
    est.lambda = lambda;
    est.c = c;
    est.angle_inf = angle_inf;
    est.window_lo = window_lo;
    est.window_hi = window_hi;
    est.sample_count = (long long)samples.size();
    return est;
}

// Exact analytic sup of max{|Df|, |Df^-1|, |D^2 f|, |D^2 f^-1|} over the
// pattern; both extension rules reuse pattern entries, so the sup over the
// pattern equals the sup over all of Z.
inline C2Certificate c2_certificate(const FamilySpec& f) {
    double sup = 0.0;
    for (const auto& m : f.pattern) {
        sup = std::max({sup, m.d1_bound(), m.d1_inverse_bound(), m.d2_bound(),
                        m.d2_inverse_bound()});
    }
    return {sup, std::isfinite(sup)};
}

// sup |Df_i| alone; the Lipschitz constant used for the uniform-continuity
// modulus in the Markov construction.
inline double sup_derivative_norm(const FamilySpec& f) {
    double sup = 0.0;
    for (const auto& m : f.pattern) sup = std::max(sup, m.d1_bound());
    return sup;
}

}  // namespace hyplab
