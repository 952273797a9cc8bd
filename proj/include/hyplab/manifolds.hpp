#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "hyplab/hyperbolicity.hpp"

namespace hyplab {

enum class Flavor { Stable, Unstable };

// Local invariant manifold through `base` as a sampled Lipschitz graph over
// the axis direction (e_s for Stable, e_u for Unstable): 65 uniform nodes on
// [-epsilon, epsilon], linear interpolation in between. Linear-toral families
// have exactly straight manifolds, so the graph is identically zero there.
struct LocalManifold {
    static constexpr int kNodes = 65;

    int index = 0;
    TorusPoint base;
    Flavor flavor = Flavor::Unstable;
    double epsilon = 0.0;
    Splitting frame;
    std::vector<double> offsets;  // transverse value at each node
    double alpha = 0.0;           // measured Lipschitz constant

    TorusVector axis() const {
        return flavor == Flavor::Unstable ? frame.e_u : frame.e_s;
    }
    TorusVector transverse() const {
        return flavor == Flavor::Unstable ? frame.e_s : frame.e_u;
    }

    double node(int j) const {
        return -epsilon + 2.0 * epsilon * j / (kNodes - 1);
    }

    double value_at(double s) const {
        const double t = (s + epsilon) * (kNodes - 1) / (2.0 * epsilon);
        const int j = std::clamp(int(std::floor(t)), 0, kNodes - 2);
        const double w = t - j;
        return (1.0 - w) * offsets[std::size_t(j)] + w * offsets[std::size_t(j) + 1];
    }

    TorusPoint point_at(double s) const {
        return exp_map(base, s * axis() + value_at(s) * transverse());
    }

    // Axis/transverse coordinates of q in the chart at base.
    bool coords(const TorusPoint& q, double& a, double& t) const {
        const TorusVector w = log_map(base, q);
        const TorusVector ax = axis(), tr = transverse();
        return solve_columns(ax.dx, ax.dy, tr.dx, tr.dy, w.dx, w.dy, a, t);
    }
};

namespace detail {

inline double measured_lipschitz(const LocalManifold& m) {
    double lip = 0.0;
    const double h = 2.0 * m.epsilon / (LocalManifold::kNodes - 1);
    for (int j = 0; j + 1 < LocalManifold::kNodes; ++j)
        lip = std::max(lip, std::abs(m.offsets[std::size_t(j) + 1] -
                                     m.offsets[std::size_t(j)]) / h);
    return lip;
}

// One graph-transform push: the graph at orbit[k] (level shifts by `dir`)
// is mapped by the step and re-projected onto the frame at orbit[k-1].
// `dir` = +1 builds unstable manifolds (push by f along the backward orbit),
// -1 builds stable ones (push by f^-1 along the forward orbit).
inline std::vector<double> push_graph(const FamilySpec& f, int level_from,
                                      int dir, const TorusPoint& from,
                                      const Splitting& frame_from,
                                      const TorusPoint& to,
                                      const Splitting& frame_to, double eps,
                                      const std::vector<double>& g) {
    const int n = LocalManifold::kNodes;
    const TorusVector ax_f =
        dir > 0 ? frame_from.e_u : frame_from.e_s;
    const TorusVector tr_f = dir > 0 ? frame_from.e_s : frame_from.e_u;
    const TorusVector ax_t = dir > 0 ? frame_to.e_u : frame_to.e_s;
    const TorusVector tr_t = dir > 0 ? frame_to.e_s : frame_to.e_u;

    const std::size_t nn = std::size_t(n);
    std::vector<double> us(nn), vs(nn);
    for (int j = 0; j < n; ++j) {
        const double s = -eps + 2.0 * eps * j / (n - 1);
        const TorusPoint x =
            exp_map(from, s * ax_f + g[std::size_t(j)] * tr_f);
        const TorusPoint y = dir > 0 ? apply(f, level_from, x)
                                     : apply_inverse(f, level_from - 1, x);
        const TorusVector w = log_map(to, y);
        double u, v;
        if (!ax_t.dot(ax_t) || !solve_columns(ax_t.dx, ax_t.dy, tr_t.dx,
                                              tr_t.dy, w.dx, w.dy, u, v))
            throw EpsilonTooLarge("degenerate frame during graph transform");
        us[std::size_t(j)] = u;
        vs[std::size_t(j)] = v;
        if (std::abs(v) > eps)
            throw EpsilonTooLarge("graph left the chart transversally");
    }
    for (int j = 0; j + 1 < n; ++j)
        if (us[std::size_t(j)] >= us[std::size_t(j) + 1])
            throw EpsilonTooLarge("image graph folded over the axis");
    if (us.front() > -eps || us.back() < eps)
        throw EpsilonTooLarge("image graph does not cover the chart");

    std::vector<double> out(nn);
    int seg = 0;
    for (int j = 0; j < n; ++j) {
        const double s = -eps + 2.0 * eps * j / (n - 1);
        while (seg + 2 < n && us[std::size_t(seg) + 1] < s) ++seg;
        const double w =
            (s - us[std::size_t(seg)]) /
            (us[std::size_t(seg) + 1] - us[std::size_t(seg)]);
        out[std::size_t(j)] = (1.0 - w) * vs[std::size_t(seg)] +
                              w * vs[std::size_t(seg) + 1];
    }
    return out;
}

}  // namespace detail

// Computes the local manifold by iterating the graph transform along the
// orbit until two successive iterates agree to 1e-10 in sup norm. The m-th
// iterate starts from the zero graph m steps away and is pushed back to the
// base point; the whole orbit segment is cached first.
inline LocalManifold local_manifold(const FamilySpec& f, int i,
                                    const TorusPoint& p, Flavor flavor,
                                    double epsilon, int depth,
                                    int frame_depth = 40) {
    if (!(epsilon > 0.0) || epsilon >= 0.125)
        throw std::invalid_argument("manifold radius must lie in (0, 1/8)");
    if (depth < 1) throw std::invalid_argument("depth must be >= 1");

    LocalManifold m;
    m.index = i;
    m.base = p;
    m.flavor = flavor;
    m.epsilon = epsilon;
    m.frame = splitting_at(f, i, p, frame_depth);
    m.offsets.assign(LocalManifold::kNodes, 0.0);

    if (f.all_linear()) {
        m.alpha = 0.0;
        return m;
    }

    const int dir = flavor == Flavor::Unstable ? +1 : -1;

    // orbit[k] is F^(-dir*k)(p); frames are computed once per orbit point.
    std::vector<TorusPoint> orbit(std::size_t(depth) + 1);
    std::vector<Splitting> frames(std::size_t(depth) + 1);
    orbit[0] = p;
    frames[0] = m.frame;
    for (int k = 1; k <= depth; ++k) {
        orbit[std::size_t(k)] =
            dir > 0 ? apply_inverse(f, i - k, orbit[std::size_t(k - 1)])
                    : apply(f, i + k - 1, orbit[std::size_t(k - 1)]);
        frames[std::size_t(k)] =
            splitting_at(f, i - dir * k, orbit[std::size_t(k)], frame_depth);
    }

    std::vector<double> prev(std::size_t(LocalManifold::kNodes), 0.0);
    for (int iter = 1; iter <= depth; ++iter) {
        std::vector<double> g(std::size_t(LocalManifold::kNodes), 0.0);
        for (int k = iter; k >= 1; --k) {
            const int level_from = i - dir * k;
            g = detail::push_graph(f, level_from, dir, orbit[std::size_t(k)],
                                   frames[std::size_t(k)],
                                   orbit[std::size_t(k - 1)],
                                   frames[std::size_t(k - 1)], epsilon, g);
        }
        double diff = 0.0;
        for (int j = 0; j < LocalManifold::kNodes; ++j)
            diff = std::max(diff, std::abs(g[std::size_t(j)] - prev[std::size_t(j)]));
        prev = g;
        if (diff < 1e-10) {
            m.offsets = std::move(prev);
            m.alpha = detail::measured_lipschitz(m);
            return m;
        }
    }
    throw NoConvergence(depth, "graph transform");
}

struct ContractionEntry {
    int n = 0;
    double measured = 0.0;
    double ratio = 0.0;
    double bound = 0.0;
    bool violated = false;
};

// Tracks d(F^{+-n} q, F^{+-n} p) along the manifold flavor's contracting
// direction against the configured bound K zeta^n d(q, p).
inline std::vector<ContractionEntry> contraction_check(
    const FamilySpec& f, const LocalManifold& m, const TorusPoint& q,
    int n_max, double K, double zeta) {
    double a = 0, t = 0;
    if (!m.coords(q, a, t)) throw NotOnManifold(1.0);
    const double off = std::abs(t - m.value_at(a));
    if (off > 1e-8) throw NotOnManifold(off);

    const int dir = m.flavor == Flavor::Stable ? +1 : -1;
    const double d0 = distance(q, m.base);
    std::vector<ContractionEntry> out;
    out.reserve(std::size_t(n_max) + 1);
    TorusPoint xq = q, xp = m.base;
    for (int n = 0; n <= n_max; ++n) {
        ContractionEntry e;
        e.n = n;
        e.measured = distance(xq, xp);
        e.ratio = d0 > 0 ? e.measured / d0 : 0.0;
        e.bound = K * std::pow(zeta, n) * d0;
        e.violated = e.measured > e.bound + 1e-12;
        out.push_back(e);
        if (n < n_max) {
            const int level = m.index + dir * n;
            xq = dir > 0 ? apply(f, level, xq) : apply_inverse(f, level - 1, xq);
            xp = dir > 0 ? apply(f, level, xp) : apply_inverse(f, level - 1, xp);
        }
    }
    return out;
}

enum class PairClass { StableRelated, UnstableRelated, Neither, Both };

// Orbit-proximity classification: forward beta-closeness up to the horizon
// marks a stable relation, backward closeness an unstable one.
inline PairClass classify_pair(const FamilySpec& f, int i, const TorusPoint& p,
                               const TorusPoint& q, double beta, int horizon,
                               double epsilon = 0.05) {
    if (!(beta < epsilon / 2))
        throw std::invalid_argument("beta must stay below epsilon/2");

    bool fwd = true, bwd = true;
    TorusPoint fp = p, fq = q, bp = p, bq = q;
    if (distance(p, q) >= beta) {
        fwd = bwd = false;
    }
    for (int n = 1; n <= horizon && (fwd || bwd); ++n) {
        if (fwd) {
            fp = apply(f, i + n - 1, fp);
            fq = apply(f, i + n - 1, fq);
            if (distance(fp, fq) >= beta) fwd = false;
        }
        if (bwd) {
            bp = apply_inverse(f, i - n, bp);
            bq = apply_inverse(f, i - n, bq);
            if (distance(bp, bq) >= beta) bwd = false;
        }
    }
    if (fwd && bwd) return PairClass::Both;
    if (fwd) return PairClass::StableRelated;
    if (bwd) return PairClass::UnstableRelated;
    return PairClass::Neither;
}

// Finite-horizon surrogates of the forward/backward separation rates; the
// maximum over the horizon's upper half stands in for the limsup.
struct RateEstimate {
    double theta = 0.0;
    double delta = 0.0;
    int horizon = 0;
};

inline RateEstimate estimate_rates(const FamilySpec& f, int i,
                                   const TorusPoint& p, const TorusPoint& q,
                                   int horizon) {
    if (horizon < 2) throw std::invalid_argument("horizon must be >= 2");
    RateEstimate r;
    r.horizon = horizon;
    r.theta = -std::numeric_limits<double>::infinity();
    r.delta = -std::numeric_limits<double>::infinity();
    TorusPoint fp = p, fq = q, bp = p, bq = q;
    for (int n = 1; n <= horizon; ++n) {
        fp = apply(f, i + n - 1, fp);
        fq = apply(f, i + n - 1, fq);
        bp = apply_inverse(f, i - n, bp);
        bq = apply_inverse(f, i - n, bq);
        if (n >= (horizon + 1) / 2) {
            const double df = std::max(distance(fp, fq), 1e-300);
            const double db = std::max(distance(bp, bq), 1e-300);
            r.theta = std::max(r.theta, std::log(df) / n);
            r.delta = std::max(r.delta, std::log(db) / n);
        }
    }
    return r;
}

}  // namespace hyplab
