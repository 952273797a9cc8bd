#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "hyplab/bracket.hpp"

namespace hyplab {

// Finite pseudo-orbit: points[k] lives on level start_index + k and every
// consecutive jump d(f_n(x_n), x_{n+1}) stays below alpha.
struct PseudoOrbit {
    int start_index = 0;
    std::vector<TorusPoint> points;
    double alpha = 0.0;

    int level(int k) const { return start_index + k; }
    int steps() const { return int(points.size()) - 1; }
};

inline PseudoOrbit validate_pseudo_orbit(const FamilySpec& f, int start,
                                         std::vector<TorusPoint> pts,
                                         double alpha) {
    if (pts.empty())
        throw std::invalid_argument("pseudo-orbit needs at least one point");
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        const double jump =
            distance(apply(f, start + int(k), pts[k]), pts[k + 1]);
        if (!(jump < alpha)) throw JumpTooLarge(int(k), jump);
    }
    return PseudoOrbit{start, std::move(pts), alpha};
}

// Parameter chain of the constructive shadowing proof, step (i):
//   epsilon1 < (1 - lambda) min(epsilon, beta),  eta = epsilon1/(1 - lambda),
//   delta < beta - eta, and alpha small enough that brackets against
//   lambda*epsilon1-sized stable disks stay inside epsilon1-sized ones.
struct ShadowParams {
    double beta = 0.0;
    double epsilon1 = 0.0;
    double eta = 0.0;
    double delta = 0.0;
    double alpha = 0.0;
    double lambda = 0.0;

    void validate() const {
        if (!(beta > 0) || !(epsilon1 > 0) || !(eta > 0) || !(delta > 0) ||
            !(alpha > 0) || !(lambda > 0) || !(lambda < 1))
            throw std::invalid_argument("shadow parameters must be positive "
                                        "with lambda in (0,1)");
        if (!(eta <= epsilon1 / (1.0 - lambda) * (1 + 1e-12)))
            throw std::invalid_argument("eta must equal epsilon1/(1-lambda)");
        if (!(delta < beta - eta + 1e-15))
            throw std::invalid_argument("delta must stay below beta - eta");
    }
};

struct ShadowResult {
    TorusPoint shadow_point;
    double max_error = 0.0;
    std::vector<double> per_step_error;
};

namespace detail {

// Bracket parameters for the solver's interior steps: wide enough for the
// worst step distance alpha + lambda*max(epsilon1, eta), while still a valid
// BracketParams box.
inline BracketParams step_bracket_params(const ShadowParams& p) {
    const double dneed =
        1.5 * (p.alpha + p.lambda * std::max(p.epsilon1, p.eta)) + 1e-12;
    BracketParams bp;
    bp.delta = dneed;
    bp.epsilon = std::max(4.2 * dneed, p.epsilon1 * 1.05);
    bp.alpha = 0.5;
    if (bp.epsilon >= 0.125)
        throw ParamsInfeasible("step bracket box exceeds the chart");
    bp.validate();
    return bp;
}

}  // namespace detail

// Derives the proof's parameter chain for a target beta and probes for the
// largest admissible alpha among {delta * 2^-k}.
inline ShadowParams choose_params(const FamilySpec& f, double beta,
                                  const HyperbolicityEstimate& est,
                                  const BracketParams& bracket_params,
                                  int trials = 200, std::uint64_t seed = 411) {
    if (!(beta > 0)) throw std::invalid_argument("beta must be positive");
    ShadowParams p;
    p.beta = beta;
    p.lambda = est.lambda;
    p.epsilon1 = 0.5 * (1.0 - p.lambda) * std::min(bracket_params.epsilon, beta);
    p.eta = p.epsilon1 / (1.0 - p.lambda);
    p.delta = 0.5 * (beta - p.eta);
    if (!(p.delta > 0)) throw ParamsInfeasible("beta leaves no room for delta");

    const int span = f.window_hi - f.window_lo + 1;
    const bool linear = f.all_linear();
    for (p.alpha = p.delta; p.alpha >= 1e-9; p.alpha *= 0.5) {
        BracketParams bp;
        try {
            bp = detail::step_bracket_params(p);
        } catch (const ParamsInfeasible&) {
            continue;  // alpha still too large for a chart-sized bracket box
        }
        bool ok = true;
        Rng rng(seed);
        for (int t = 0; t < trials && ok; ++t) {
            const int i = f.window_lo + t % span;
            const TorusPoint z = rng.point();
            const TorusPoint w = exp_map(z, rng.in_ball(p.alpha * 0.999));
            // Probe point on W^s(w, lambda*epsilon1).
            TorusPoint x;
            if (linear) {
                const Splitting sw = splitting_at(f, i, w, 40);
                x = exp_map(w, rng.uniform(-1, 1) * p.lambda * p.epsilon1 * sw.e_s);
            } else {
                const LocalManifold ws = local_manifold(
                    f, i, w, Flavor::Stable, bp.epsilon, 40);
                x = ws.point_at(rng.uniform(-1, 1) * p.lambda * p.epsilon1);
            }
            try {
                const TorusPoint y = bracket(f, i, z, x, bp);
                double s, u;
                if (!splitting_at(f, i, z, 40).decompose(log_map(z, y), s, u))
                    ok = false;
                else if (std::abs(s) > p.epsilon1)
                    ok = false;
            } catch (const Error&) {
                ok = false;
            }
        }
        if (ok) {
            p.validate();
            return p;
        }
    }
    throw ParamsInfeasible("no admissible alpha above 1e-9");
}

// Constructive shadowing. Forward pass is the proof's recursion
// y_k = [x_k, f(y_{k-1})]; the backward pass realizes F^{-n}(y_n) by walking
// the unstable leaves, re-pinning each step's stable coordinate with a
// bracket so the expansion of rounding noise along E^s cannot build up.
inline ShadowResult shadow(const FamilySpec& f, const PseudoOrbit& po,
                           const ShadowParams& params) {
    params.validate();
    if (!(po.alpha <= params.alpha * (1 + 1e-12)))
        throw std::invalid_argument(
            "pseudo-orbit jump bound exceeds the calibrated alpha");

    const int n = po.steps();
    const BracketParams bp = detail::step_bracket_params(params);

    std::vector<TorusPoint> y(std::size_t(n) + 1);
    y[0] = po.points[0];
    for (int k = 1; k <= n; ++k) {
        const TorusPoint fy = apply(f, po.level(k - 1), y[std::size_t(k) - 1]);
        try {
            y[std::size_t(k)] = bracket(f, po.level(k), po.points[std::size_t(k)], fy, bp);
        } catch (const Error&) {
            throw BracketFailed(k, "forward recursion");
        }
        // The inductive invariant y_k in W^s(x_k, epsilon1).
        double s, u;
        const Splitting sp = splitting_at(f, po.level(k), po.points[std::size_t(k)], 40);
        if (!sp.decompose(log_map(po.points[std::size_t(k)], y[std::size_t(k)]), s, u) ||
            std::abs(s) > params.epsilon1 * (1 + 1e-9))
            throw BracketFailed(k, "left the epsilon1 stable disk");
    }

    // Backward pass: z_k = F^{-1}(z_{k+1}) with the stable coordinate pinned
    // to y_k; the exact orbit satisfies z_k in W^u(y_k, eta).
    std::vector<TorusPoint> z(std::size_t(n) + 1);
    z[std::size_t(n)] = y[std::size_t(n)];
    for (int k = n - 1; k >= 0; --k) {
        const TorusPoint pre = apply_inverse(f, po.level(k), z[std::size_t(k) + 1]);
        try {
            z[std::size_t(k)] = bracket(f, po.level(k), pre, y[std::size_t(k)], bp);
        } catch (const Error&) {
            throw BracketFailed(k, "backward pass");
        }
    }

    ShadowResult res;
    res.shadow_point = z[0];
    res.per_step_error.resize(std::size_t(n) + 1);
    for (int k = 0; k <= n; ++k) {
        res.per_step_error[std::size_t(k)] =
            distance(z[std::size_t(k)], po.points[std::size_t(k)]);
        res.max_error = std::max(res.max_error, res.per_step_error[std::size_t(k)]);
    }
    if (!(res.max_error < params.beta)) throw BetaExceeded(res.max_error);
    return res;
}

// Independent oracle for linear-toral families: in the splitting frame the
// corrections c_k = z_k - x_k obey scalar recursions, stable components
// forward and unstable components backward, both geometrically convergent.
inline ShadowResult shadow_oracle_linear(const FamilySpec& f,
                                         const PseudoOrbit& po) {
    if (!f.all_linear()) throw NotLinear();
    const int n = po.steps();

    std::vector<Splitting> fr(std::size_t(n) + 1);
    for (int k = 0; k <= n; ++k)
        fr[std::size_t(k)] = splitting_at(f, po.level(k), po.points[std::size_t(k)], 40);

    // Signed one-step multipliers along the invariant directions and the
    // defect components in the frame of the target level.
    const std::size_t nn = std::size_t(n);
    std::vector<double> sigma(nn), mu(nn), ps(nn), qs(nn);
    for (int k = 0; k < n; ++k) {
        const Mat2 df = jet(f, po.level(k), po.points[std::size_t(k)]).derivative;
        sigma[std::size_t(k)] = (df * fr[std::size_t(k)].e_s).dot(fr[std::size_t(k) + 1].e_s);
        mu[std::size_t(k)] = (df * fr[std::size_t(k)].e_u).dot(fr[std::size_t(k) + 1].e_u);
        const TorusVector defect =
            log_map(apply(f, po.level(k), po.points[std::size_t(k)]),
                    po.points[std::size_t(k) + 1]);
        double a, b;
        if (!fr[std::size_t(k) + 1].decompose(defect, a, b))
            throw NoIntersection("degenerate frame in linear oracle");
        ps[std::size_t(k)] = a;
        qs[std::size_t(k)] = b;
    }

    std::vector<double> s(std::size_t(n) + 1, 0.0), u(std::size_t(n) + 1, 0.0);
    for (int k = 0; k < n; ++k)
        s[std::size_t(k) + 1] = sigma[std::size_t(k)] * s[std::size_t(k)] - ps[std::size_t(k)];
    for (int k = n - 1; k >= 0; --k)
        u[std::size_t(k)] = (u[std::size_t(k) + 1] + qs[std::size_t(k)]) / mu[std::size_t(k)];

    ShadowResult res;
    res.per_step_error.resize(std::size_t(n) + 1);
    for (int k = 0; k <= n; ++k) {
        const TorusVector c = fr[std::size_t(k)].recompose(s[std::size_t(k)], u[std::size_t(k)]);
        if (c.norm() >= 0.49) throw BetaExceeded(c.norm());
        res.per_step_error[std::size_t(k)] = c.norm();
        res.max_error = std::max(res.max_error, c.norm());
        if (k == 0) res.shadow_point = exp_map(po.points[0], c);
    }
    return res;
}

struct ExpansivenessBound {
    double r = 0.0;
    double eta = 0.0;
    double zeta = 0.0;
    int N = 0;
    double bound = 0.0;
};

// d(p, q) <= 2 sqrt(2) (eta^-1 - zeta)^-N r whenever the two orbits stay
// r-close over [-N, N].
inline ExpansivenessBound expansiveness_bound(double r, double eta, double zeta,
                                              int N) {
    const double gap = 1.0 / eta - zeta;
    if (!(gap > 0.0)) throw InvalidGap(gap);
    ExpansivenessBound b;
    b.r = r;
    b.eta = eta;
    b.zeta = zeta;
    b.N = N;
    b.bound = 2.0 * std::sqrt(2.0) * std::pow(gap, -double(N)) * r;
    return b;
}

// Heuristic defaults: eta^-1 = lambda^-1 (1 - 1e-3), zeta = lambda.
inline std::pair<double, double> default_expansiveness(double lambda) {
    return {lambda / (1.0 - 1e-3), lambda};
}

// Smallest |n| <= n_max with d(F_0^n p, F_0^n q) >= delta, searching
// n = 0, +1, -1, +2, -2, ...; std::nullopt when no finite witness shows up.
inline std::optional<int> expansiveness_witness(const FamilySpec& f,
                                                const TorusPoint& p,
                                                const TorusPoint& q,
                                                double delta, int n_max) {
    if (p == q) throw std::invalid_argument("witness needs distinct points");
    if (distance(p, q) >= delta) return 0;
    TorusPoint fp = p, fq = q, bp = p, bq = q;
    for (int a = 1; a <= n_max; ++a) {
        fp = apply(f, a - 1, fp);
        fq = apply(f, a - 1, fq);
        if (distance(fp, fq) >= delta) return a;
        bp = apply_inverse(f, -a, bp);
        bq = apply_inverse(f, -a, bq);
        if (distance(bp, bq) >= delta) return -a;
    }
    return std::nullopt;
}

// Verifies the uniqueness half of the shadowing theorem statistically:
// alternative points displaced by more than 2 beta must violate the
// beta-shadowing bound at some step of the window.
inline bool uniqueness_check(const FamilySpec& f, const PseudoOrbit& po,
                             const ShadowResult& res, const ShadowParams& params,
                             int probes, std::uint64_t seed = 905) {
    Rng rng(seed);
    const int n = po.steps();
    for (int t = 0; t < probes; ++t) {
        const double radius =
            rng.uniform(2.0 * params.beta * 1.01,
                        std::min(4.0 * params.beta, 0.2));
        const TorusPoint alt =
            exp_map(res.shadow_point, radius * rng.direction());
        bool rejected = false;
        TorusPoint w = alt;
        for (int k = 0; k <= n; ++k) {
            if (distance(w, po.points[std::size_t(k)]) > params.beta) {
                rejected = true;
                break;
            }
            if (k < n) w = apply(f, po.level(k), w);
        }
        if (!rejected) return false;
    }
    return true;
}

// Deterministic fixture: a true orbit with seeded uniform noise of the given
// radius added to every entry.
inline PseudoOrbit make_noisy_orbit(const FamilySpec& f, int start, int len,
                                    const TorusPoint& x0, double noise,
                                    double alpha, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<TorusPoint> pts;
    pts.reserve(std::size_t(len));
    TorusPoint x = x0;
    for (int k = 0; k < len; ++k) {
        pts.push_back(noise > 0 ? exp_map(x, rng.in_ball(noise)) : x);
        x = apply(f, start + k, x);
    }
    return validate_pseudo_orbit(f, start, std::move(pts), alpha);
}

}  // namespace hyplab
