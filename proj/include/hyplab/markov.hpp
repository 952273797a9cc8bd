#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

#include "hyplab/shadowing.hpp"

namespace hyplab {

// ---------------------------------------------------------------------------
// Dense symbol sets
// ---------------------------------------------------------------------------

// Finite gamma-dense subset of the torus, reused verbatim on every level.
struct DenseSet {
    double gamma = 0.0;
    std::vector<TorusPoint> points;
};

namespace detail {

// Uniform hash grid for radius and nearest-point queries on the torus.
class PointIndex {
  public:
    explicit PointIndex(const std::vector<TorusPoint>& pts, double cell)
        : pts_(pts) {
        nb_ = std::max(1, int(1.0 / std::max(cell, 1e-3)));
        buckets_.assign(std::size_t(nb_) * nb_, {});
        for (int k = 0; k < int(pts.size()); ++k)
            buckets_[bucket(pts[std::size_t(k)].x, pts[std::size_t(k)].y)]
                .push_back(k);
    }

    template <typename Fn>
    void for_ball(const TorusPoint& c, double r, Fn&& fn) const {
        const int span = int(std::ceil(r * nb_)) + 1;
        const int bx = cell_of(c.x), by = cell_of(c.y);
        for (int dx = -span; dx <= span; ++dx) {
            for (int dy = -span; dy <= span; ++dy) {
                const std::size_t b =
                    idx(wrap_cell(bx + dx), wrap_cell(by + dy));
                for (int k : buckets_[b])
                    if (distance(pts_[std::size_t(k)], c) < r) fn(k);
            }
        }
    }

    int nearest(const TorusPoint& c) const {
        int best = -1;
        double bd = 1e300;
        for (int span = 1; span <= nb_; ++span) {
            const int bx = cell_of(c.x), by = cell_of(c.y);
            for (int dx = -span; dx <= span; ++dx) {
                for (int dy = -span; dy <= span; ++dy) {
                    if (std::max(std::abs(dx), std::abs(dy)) != span &&
                        span > 1)
                        continue;
                    for (int k :
                         buckets_[idx(wrap_cell(bx + dx), wrap_cell(by + dy))]) {
                        const double d = distance(pts_[std::size_t(k)], c);
                        if (d < bd) {
                            bd = d;
                            best = k;
                        }
                    }
                }
            }
            // A full ring beyond the best hit cannot improve it.
            if (best >= 0 && bd < double(span - 1) / nb_) break;
        }
        return best;
    }

  private:
    int cell_of(double t) const {
        int c = int(t * nb_);
        return c >= nb_ ? nb_ - 1 : c;
    }
    int wrap_cell(int c) const { return ((c % nb_) + nb_) % nb_; }
    std::size_t idx(int x, int y) const {
        return std::size_t(x) * nb_ + std::size_t(y);
    }
    std::size_t bucket(double x, double y) const {
        return idx(cell_of(x), cell_of(y));
    }

    const std::vector<TorusPoint>& pts_;
    int nb_ = 1;
    std::vector<std::vector<int>> buckets_;
};

}  // namespace detail

// Hexagonal lattice with in-row spacing gamma*sqrt(3)/2, which keeps the
// covering radius below 0.58 gamma; a seeded offset decorrelates the lattice
// from the maps' fixed points.
inline DenseSet dense_set(double gamma, std::uint64_t seed) {
    if (!(gamma > 0.0) || !(gamma <= 0.25))
        throw std::invalid_argument("gamma must lie in (0, 0.25]");
    DenseSet ds;
    ds.gamma = gamma;
    const double a = gamma * std::sqrt(3.0) / 2.0;
    const int nx = int(std::ceil(1.0 / a));
    const double h = a * std::sqrt(3.0) / 2.0;
    const int ny = int(std::ceil(1.0 / h));
    Rng rng(seed);
    const double ox = rng.uniform(), oy = rng.uniform();
    for (int j = 0; j < ny; ++j) {
        const double xoff = (j % 2 == 1) ? 0.5 / nx : 0.0;
        for (int i = 0; i < nx; ++i)
            ds.points.emplace_back(double(i) / nx + xoff + ox,
                                   double(j) / ny + oy);
    }

    // Covering sanity on a probe grid (capped; the lattice construction
    // already guarantees the bound).
    const int probe = std::min(128, int(std::ceil(4.0 / gamma)));
    detail::PointIndex index(ds.points, gamma);
    for (int i = 0; i < probe; ++i) {
        for (int j = 0; j < probe; ++j) {
            const TorusPoint p((i + 0.5) / probe, (j + 0.5) / probe);
            const int k = index.nearest(p);
            if (k < 0 || distance(ds.points[std::size_t(k)], p) >= gamma)
                throw std::logic_error("dense set failed its covering check");
        }
    }
    return ds;
}

// gamma = min(beta, alpha/2, alpha/(2L)) (1 - 1e-6) with L = sup |Df|; the
// last term realizes the uniform-continuity modulus through the Lipschitz
// bound.
inline double choose_gamma(const FamilySpec& f, double alpha, double beta) {
    const double L = sup_derivative_norm(f);
    return std::min({beta, alpha / 2.0, alpha / (2.0 * L)}) * (1.0 - 1e-6);
}

// ---------------------------------------------------------------------------
// Symbol sequences and the coding map
// ---------------------------------------------------------------------------

// Windowed admissible symbol sequence; symbols[k] indexes the dense set and
// lives on level start_index + k. The window's centre is the level at which
// theta evaluates.
struct SymbolSequence {
    int start_index = 0;
    std::vector<int> symbols;

    int center_offset() const { return (int(symbols.size()) - 1) / 2; }
    int center_level() const { return start_index + center_offset(); }
};

inline void validate_sequence(const FamilySpec& f, const DenseSet& P,
                              const SymbolSequence& seq, double alpha) {
    if (seq.symbols.empty())
        throw std::invalid_argument("symbol sequence must be nonempty");
    for (std::size_t k = 0; k + 1 < seq.symbols.size(); ++k) {
        const TorusPoint a = P.points[std::size_t(seq.symbols[k])];
        const TorusPoint b = P.points[std::size_t(seq.symbols[k + 1])];
        const double jump = distance(apply(f, seq.start_index + int(k), a), b);
        if (!(jump < alpha)) throw JumpTooLarge(int(k), jump);
    }
}

namespace detail {

struct LinearCorrections {
    std::vector<Splitting> frames;
    std::vector<double> s, u;
};

// Stable components integrate forward from zero, unstable ones backward from
// zero; exactly the linear shadowing solution of the pseudo-orbit.
inline LinearCorrections linear_corrections(const FamilySpec& f,
                                            const PseudoOrbit& po) {
    if (!f.all_linear()) throw NotLinear();
    const int n = po.steps();
    LinearCorrections lc;
    lc.frames.resize(std::size_t(n) + 1);
    for (int k = 0; k <= n; ++k)
        lc.frames[std::size_t(k)] =
            splitting_at(f, po.level(k), po.points[std::size_t(k)], 40);
    lc.s.assign(std::size_t(n) + 1, 0.0);
    lc.u.assign(std::size_t(n) + 1, 0.0);
    for (int k = 0; k < n; ++k) {
        const Mat2 df = jet(f, po.level(k), po.points[std::size_t(k)]).derivative;
        const double sg =
            (df * lc.frames[std::size_t(k)].e_s).dot(lc.frames[std::size_t(k) + 1].e_s);
        const TorusVector defect =
            log_map(apply(f, po.level(k), po.points[std::size_t(k)]),
                    po.points[std::size_t(k) + 1]);
        double a = 0, b = 0;
        if (!lc.frames[std::size_t(k) + 1].decompose(defect, a, b))
            throw NoIntersection("degenerate frame");
        lc.s[std::size_t(k) + 1] = sg * lc.s[std::size_t(k)] - a;
    }
    for (int k = n - 1; k >= 0; --k) {
        const Mat2 df = jet(f, po.level(k), po.points[std::size_t(k)]).derivative;
        const double mg =
            (df * lc.frames[std::size_t(k)].e_u).dot(lc.frames[std::size_t(k) + 1].e_u);
        const TorusVector defect =
            log_map(apply(f, po.level(k), po.points[std::size_t(k)]),
                    po.points[std::size_t(k) + 1]);
        double a = 0, b = 0;
        lc.frames[std::size_t(k) + 1].decompose(defect, a, b);
        lc.u[std::size_t(k)] = (lc.u[std::size_t(k) + 1] + b) / mg;
    }
    return lc;
}

}  // namespace detail

// Coding map: the unique point whose orbit tracks the sequence's induced
// pseudo-orbit, evaluated at the window's centre level. Linear families use
// the exact two-sided recursion (numerically stable at any window length);
// other families shadow at the window start and compose to the centre.
inline TorusPoint theta(const FamilySpec& f, const SymbolSequence& seq,
                        const DenseSet& P, const ShadowParams& params) {
    validate_sequence(f, P, seq, params.alpha);
    std::vector<TorusPoint> pts;
    pts.reserve(seq.symbols.size());
    for (int s : seq.symbols) pts.push_back(P.points[std::size_t(s)]);
    const PseudoOrbit po{seq.start_index, std::move(pts), params.alpha};

    const int c = seq.center_offset();
    if (f.all_linear()) {
        const detail::LinearCorrections lc = detail::linear_corrections(f, po);
        const TorusVector corr = lc.frames[std::size_t(c)].recompose(
            lc.s[std::size_t(c)], lc.u[std::size_t(c)]);
        return exp_map(po.points[std::size_t(c)], corr);
    }
    const ShadowResult res = shadow(f, po, params);
    return compose(f, po.start_index, c, res.shadow_point);
}

// Splice: the first argument supplies the future (center level onward), the
// second the past; both must carry the same centre symbol.
inline SymbolSequence sequence_bracket(const SymbolSequence& a,
                                       const SymbolSequence& b) {
    if (a.start_index != b.start_index || a.symbols.size() != b.symbols.size())
        throw std::invalid_argument("sequence windows must match");
    const int c = a.center_offset();
    if (a.symbols[std::size_t(c)] != b.symbols[std::size_t(c)])
        throw SymbolMismatch();
    SymbolSequence out = b;
    for (std::size_t k = std::size_t(c); k < a.symbols.size(); ++k)
        out.symbols[k] = a.symbols[k];
    return out;
}

// Deterministic admissible random walks over the symbol graph.
inline SymbolSequence random_admissible_sequence(
    const FamilySpec& f, const DenseSet& P, const detail::PointIndex& index,
    int center_symbol, int center_level, int window_n, double alpha, Rng& rng,
    double pred_search_factor = 3.0) {
    SymbolSequence seq;
    seq.start_index = center_level - window_n;
    seq.symbols.assign(std::size_t(2 * window_n) + 1, -1);
    seq.symbols[std::size_t(window_n)] = center_symbol;

    for (int k = window_n + 1; k <= 2 * window_n; ++k) {
        const int prev = seq.symbols[std::size_t(k) - 1];
        const TorusPoint img =
            apply(f, seq.start_index + k - 1, P.points[std::size_t(prev)]);
        std::vector<int> cands;
        index.for_ball(img, alpha, [&](int j) { cands.push_back(j); });
        if (cands.empty())
            throw std::runtime_error("symbol has no admissible successor");
        seq.symbols[std::size_t(k)] = cands[std::size_t(rng.below(int(cands.size())))];
    }
    for (int k = window_n - 1; k >= 0; --k) {
        const int next = seq.symbols[std::size_t(k) + 1];
        const int level = seq.start_index + k;
        const TorusPoint target = P.points[std::size_t(next)];
        const TorusPoint pre = apply_inverse(f, level, target);
        std::vector<int> cands;
        index.for_ball(pre, pred_search_factor * alpha, [&](int j) {
            if (distance(apply(f, level, P.points[std::size_t(j)]), target) < alpha)
                cands.push_back(j);
        });
        if (cands.empty())
            throw std::runtime_error("symbol has no admissible predecessor");
        seq.symbols[std::size_t(k)] = cands[std::size_t(rng.below(int(cands.size())))];
    }
    return seq;
}

// Nearest-symbol coding of a true orbit.
inline SymbolSequence nearest_coding(const FamilySpec& f,
                                     [[maybe_unused]] const DenseSet& P,
                                     const detail::PointIndex& index,
                                     const TorusPoint& x, int center_level,
                                     int window_n) {
    SymbolSequence seq;
    seq.start_index = center_level - window_n;
    seq.symbols.resize(std::size_t(2 * window_n) + 1);
    TorusPoint w = compose(f, center_level, -window_n, x);
    for (int k = 0; k <= 2 * window_n; ++k) {
        seq.symbols[std::size_t(k)] = index.nearest(w);
        if (k < 2 * window_n) w = apply(f, seq.start_index + k, w);
    }
    return seq;
}

// ---------------------------------------------------------------------------
// Rectangles, refinement, and the Markov checker
// ---------------------------------------------------------------------------

// Proper rectangle: a bracket-closed box in the splitting frame at `anchor`,
// with the boundary polygon spelled out for export.
struct Rectangle {
    int index = 0;   // level
    int symbol = -1;  // generating symbol, when built from one
    TorusPoint anchor;
    double s_lo = 0, s_hi = 0, u_lo = 0, u_hi = 0;

    double s_width() const { return s_hi - s_lo; }
    double u_width() const { return u_hi - u_lo; }

    std::vector<std::array<double, 2>> boundary() const {
        return {{s_lo, u_lo}, {s_hi, u_lo}, {s_hi, u_hi}, {s_lo, u_hi}};
    }

    TorusPoint point_of(const Splitting& fr, double s, double u) const {
        const TorusVector v = fr.recompose(s, u);
        return TorusPoint(anchor.x + v.dx, anchor.y + v.dy);
    }

    // Nearest-lift chart coordinates of x relative to the anchor; suits
    // rectangles below the injectivity radius.
    bool coords(const Splitting& fr, const TorusPoint& x, double& s,
                double& u) const {
        if (distance(anchor, x) >= 0.49) return false;
        return fr.decompose(log_map(anchor, x), s, u);
    }

    // Coordinates of the lift of x with the largest box margin; rectangles
    // wider than the injectivity radius need the shift search. Returns the
    // margin (negative outside the box).
    double best_coords(const Splitting& fr, const TorusPoint& x, double& s,
                       double& u) const {
        const double bx = x.x - anchor.x, by = x.y - anchor.y;
        double best = -1e300;
        for (int m = -1; m <= 1; ++m) {
            for (int n = -1; n <= 1; ++n) {
                double ss, uu;
                if (!fr.decompose({bx + m, by + n}, ss, uu)) continue;
                const double margin =
                    std::min(std::min(ss - s_lo, s_hi - ss),
                             std::min(uu - u_lo, u_hi - uu));
                if (margin > best) {
                    best = margin;
                    s = ss;
                    u = uu;
                }
            }
        }
        return best;
    }

    bool contains(const Splitting& fr, const TorusPoint& x,
                  double tol = 0.0) const {
        double s, u;
        return best_coords(fr, x, s, u) >= -tol;
    }

    // Distance-to-boundary in frame coordinates (negative outside).
    double interior_margin(const Splitting& fr, const TorusPoint& x) const {
        double s, u;
        return best_coords(fr, x, s, u);
    }
};

struct LevelStats {
    double area_sum = 0.0;
    double max_pair_overlap = 0.0;
    int holes = 0;
};

struct PartitionSequence {
    std::map<int, std::vector<Rectangle>> levels;
    int max_cardinality = 0;
    std::map<int, LevelStats> stats;
};

// Build/check parameters for the partition machinery. `build_alpha` is the
// admissibility threshold used while constructing rectangles; it may sit
// below the shadowing alpha (a subshift of the full one) but must stay above
// (L+1) gamma so nearest-symbol codings remain admissible and the rectangles
// still cover.
struct MarkovParams {
    double alpha = 0.0;        // admissibility of Sigma(P)
    double beta = 0.0;         // shadow tolerance used in diagnostics
    double build_alpha = 0.0;  // defaults to alpha when <= 0
    int window_n = 20;
    double boundary_margin = 1e-6;
    double check_tol = 1e-7;
    double min_area = 1e-10;
    std::uint64_t seed = 7;

    double effective_build_alpha() const {
        return build_alpha > 0 ? build_alpha : alpha;
    }
};

namespace detail {

// Exact attainable-coordinate extents for linear periodic families: value
// iteration on the interval fixed-point equations
//   S(k, c+1) = hull_j { sigma_c S(j, c) - ds(j->k) },
//   U(k, c)   = hull_k'{ (U(k', c+1) + du(k->k')) / mu_c }.
struct ExactExtents {
    int period = 0;
    std::vector<Splitting> frames;            // per class
    std::vector<double> sigma, mu;            // per class
    // extents[c][k]
    std::vector<std::vector<double>> s_lo, s_hi, u_lo, u_hi;
    // Transition lists per class: for each j, admissible (k, ds, du).
    struct Edge {
        int to;
        double ds = 0, du = 0;
    };
    std::vector<std::vector<std::vector<Edge>>> edges;
    double min_s_cover_margin = 0.0;  // >= 0 means attainable sets fill hulls
    double min_u_cover_margin = 0.0;
};

inline ExactExtents exact_extents(const FamilySpec& f, const DenseSet& P,
                                  double build_alpha) {
    if (!f.all_linear()) throw NotLinear();
    if (f.extension != Extension::Periodic)
        throw std::invalid_argument(
            "exact rectangle extents need a periodic family");

    ExactExtents ex;
    const int period = f.period();
    ex.period = period;
    const int r = int(P.points.size());

    ex.frames.resize(std::size_t(period) + 1);
    for (int c = 0; c <= period; ++c)
        ex.frames[std::size_t(c)] =
            splitting_at(f, f.window_lo + c, {0.1234, 0.5678}, 60);
    ex.sigma.resize(std::size_t(period));
    ex.mu.resize(std::size_t(period));
    for (int c = 0; c < period; ++c) {
        const Mat2 df = f.map_at(f.window_lo + c).jacobian({0, 0});
        ex.sigma[std::size_t(c)] =
            (df * ex.frames[std::size_t(c)].e_s).dot(ex.frames[std::size_t(c) + 1].e_s);
        ex.mu[std::size_t(c)] =
            (df * ex.frames[std::size_t(c)].e_u).dot(ex.frames[std::size_t(c) + 1].e_u);
    }

    PointIndex index(P.points, std::min(0.25, build_alpha));
    ex.edges.assign(std::size_t(period), {});
    for (int c = 0; c < period; ++c) {
        ex.edges[std::size_t(c)].assign(std::size_t(r), {});
        for (int j = 0; j < r; ++j) {
            const TorusPoint img =
                apply(f, f.window_lo + c, P.points[std::size_t(j)]);
            index.for_ball(img, build_alpha, [&](int k) {
                const TorusVector d = log_map(img, P.points[std::size_t(k)]);
                double ds = 0, du = 0;
                ex.frames[std::size_t(c) + 1].decompose(d, ds, du);
                ex.edges[std::size_t(c)][std::size_t(j)].push_back({k, ds, du});
            });
        }
    }

    const auto zeros = [&] {
        return std::vector<std::vector<double>>(
            std::size_t(period), std::vector<double>(std::size_t(r), 0.0));
    };
    ex.s_lo = zeros();
    ex.s_hi = zeros();
    ex.u_lo = zeros();
    ex.u_hi = zeros();

    for (int sweep = 0; sweep < 4000; ++sweep) {
        double change = 0.0;
        // Stable extents propagate forward across one period.
        for (int c = 0; c < period; ++c) {
            const int cn = (c + 1) % period;
            std::vector<double> nlo(std::size_t(r), 1e300),
                nhi(std::size_t(r), -1e300);
            for (int j = 0; j < r; ++j) {
                const double sg = ex.sigma[std::size_t(c)];
                const double a = sg * ex.s_lo[std::size_t(c)][std::size_t(j)];
                const double b = sg * ex.s_hi[std::size_t(c)][std::size_t(j)];
                const double lo = std::min(a, b), hi = std::max(a, b);
                for (const auto& e : ex.edges[std::size_t(c)][std::size_t(j)]) {
                    nlo[std::size_t(e.to)] =
                        std::min(nlo[std::size_t(e.to)], lo - e.ds);
                    nhi[std::size_t(e.to)] =
                        std::max(nhi[std::size_t(e.to)], hi - e.ds);
                }
            }
            for (int k = 0; k < r; ++k) {
                if (nlo[std::size_t(k)] > nhi[std::size_t(k)]) {
                    nlo[std::size_t(k)] = nhi[std::size_t(k)] = 0.0;
                }
                change = std::max(change,
                                  std::abs(nlo[std::size_t(k)] -
                                           ex.s_lo[std::size_t(cn)][std::size_t(k)]));
                change = std::max(change,
                                  std::abs(nhi[std::size_t(k)] -
                                           ex.s_hi[std::size_t(cn)][std::size_t(k)]));
                ex.s_lo[std::size_t(cn)][std::size_t(k)] = nlo[std::size_t(k)];
                ex.s_hi[std::size_t(cn)][std::size_t(k)] = nhi[std::size_t(k)];
            }
        }
        // Unstable extents propagate backward.
        for (int c = period - 1; c >= 0; --c) {
            const int cn = (c + 1) % period;
            for (int j = 0; j < r; ++j) {
                double lo = 1e300, hi = -1e300;
                for (const auto& e : ex.edges[std::size_t(c)][std::size_t(j)]) {
                    const double a =
                        (ex.u_lo[std::size_t(cn)][std::size_t(e.to)] + e.du) /
                        ex.mu[std::size_t(c)];
                    const double b =
                        (ex.u_hi[std::size_t(cn)][std::size_t(e.to)] + e.du) /
                        ex.mu[std::size_t(c)];
                    lo = std::min(lo, std::min(a, b));
                    hi = std::max(hi, std::max(a, b));
                }
                if (lo > hi) lo = hi = 0.0;
                change = std::max(change, std::abs(lo - ex.u_lo[std::size_t(c)][std::size_t(j)]));
                change = std::max(change, std::abs(hi - ex.u_hi[std::size_t(c)][std::size_t(j)]));
                ex.u_lo[std::size_t(c)][std::size_t(j)] = lo;
                ex.u_hi[std::size_t(c)][std::size_t(j)] = hi;
            }
        }
        if (change < 1e-14) break;
    }

    // Fullness margins: the per-predecessor (per-successor) interval images
    // must cover each hull without gaps, otherwise hulls would exceed the
    // attainable sets.
    double smar = 1e300, umar = 1e300;
    for (int c = 0; c < period; ++c) {
        const int cn = (c + 1) % period;
        std::vector<std::vector<std::pair<double, double>>> simg(
            std::size_t(int(P.points.size())));
        for (int j = 0; j < int(P.points.size()); ++j) {
            const double sg = ex.sigma[std::size_t(c)];
            const double a = sg * ex.s_lo[std::size_t(c)][std::size_t(j)];
            const double b = sg * ex.s_hi[std::size_t(c)][std::size_t(j)];
            for (const auto& e : ex.edges[std::size_t(c)][std::size_t(j)])
                simg[std::size_t(e.to)].push_back(
                    {std::min(a, b) - e.ds, std::max(a, b) - e.ds});
        }
        for (int k = 0; k < int(P.points.size()); ++k) {
            auto& iv = simg[std::size_t(k)];
            if (iv.empty()) continue;
            std::sort(iv.begin(), iv.end());
            // Interior gaps only: the hull ends coincide with extremal image
            // ends by the fixed-point equations themselves.
            double reach = iv[0].second;
            double gap = -1e300;
            for (std::size_t t = 1; t < iv.size(); ++t) {
                gap = std::max(gap, iv[t].first - reach);
                reach = std::max(reach, iv[t].second);
            }
            smar = std::min(smar, -gap);
        }

        std::vector<std::vector<std::pair<double, double>>> uimg(
            std::size_t(int(P.points.size())));
        for (int j = 0; j < int(P.points.size()); ++j) {
            for (const auto& e : ex.edges[std::size_t(c)][std::size_t(j)]) {
                const double a =
                    (ex.u_lo[std::size_t(cn)][std::size_t(e.to)] + e.du) /
                    ex.mu[std::size_t(c)];
                const double b =
                    (ex.u_hi[std::size_t(cn)][std::size_t(e.to)] + e.du) /
                    ex.mu[std::size_t(c)];
                uimg[std::size_t(j)].push_back({std::min(a, b), std::max(a, b)});
            }
        }
        for (int j = 0; j < int(P.points.size()); ++j) {
            auto& iv = uimg[std::size_t(j)];
            if (iv.empty()) continue;
            std::sort(iv.begin(), iv.end());
            double reach = iv[0].second;
            double gap = -1e300;
            for (std::size_t t = 1; t < iv.size(); ++t) {
                gap = std::max(gap, iv[t].first - reach);
                reach = std::max(reach, iv[t].second);
            }
            umar = std::min(umar, -gap);
        }
    }
    ex.min_s_cover_margin = smar;
    ex.min_u_cover_margin = umar;
    return ex;
}

}  // namespace detail

// Rectangles T_k at one level: theta images of admissible windowed sequences
// with centre symbol k, hulled into a bracket-closed box. The sampled hull is
// exact for linear periodic families, where the attainable-coordinate
// extents solve a fixed-point equation instead of relying on the budget.
inline std::vector<Rectangle> build_T_rectangles(const FamilySpec& f, int i,
                                                 const DenseSet& P,
                                                 const MarkovParams& params,
                                                 int sample_budget,
                                                 bool force_sampled = false) {
    const double alpha = params.effective_build_alpha();
    std::vector<Rectangle> out;

    if (!force_sampled && f.all_linear() && f.extension == Extension::Periodic) {
        const detail::ExactExtents ex = detail::exact_extents(f, P, alpha);
        const int period = f.period();
        const int c = ((i - f.window_lo) % period + period) % period;
        for (int k = 0; k < int(P.points.size()); ++k) {
            Rectangle r;
            r.index = i;
            r.symbol = k;
            r.anchor = P.points[std::size_t(k)];
            r.s_lo = ex.s_lo[std::size_t(c)][std::size_t(k)];
            r.s_hi = ex.s_hi[std::size_t(c)][std::size_t(k)];
            r.u_lo = ex.u_lo[std::size_t(c)][std::size_t(k)];
            r.u_hi = ex.u_hi[std::size_t(c)][std::size_t(k)];
            if (r.s_width() * r.u_width() > 0) out.push_back(r);
        }
        return out;
    }

    // Sampled route: theta over random admissible windows.
    detail::PointIndex index(P.points, std::min(0.25, alpha));
    ShadowParams sp;
    sp.beta = params.beta;
    sp.alpha = alpha;
    sp.lambda = 0.5;
    sp.epsilon1 = params.beta * 0.25;
    sp.eta = sp.epsilon1 / (1 - sp.lambda);
    sp.delta = params.beta - sp.eta > 0 ? 0.5 * (params.beta - sp.eta)
                                        : params.beta * 0.1;
    Rng rng(params.seed);
    for (int k = 0; k < int(P.points.size()); ++k) {
        std::vector<TorusPoint> samples;
        for (int b = 0; b < sample_budget; ++b) {
            try {
                const SymbolSequence seq = random_admissible_sequence(
                    f, P, index, k, i, params.window_n, alpha, rng);
                samples.push_back(theta(f, seq, P, sp));
            } catch (const Error&) {
                // skip failed windows; isolated symbols yield no rectangle
            } catch (const std::runtime_error&) {
            }
        }
        if (samples.empty()) continue;
        Rectangle r;
        r.index = i;
        r.symbol = k;
        r.anchor = P.points[std::size_t(k)];
        const Splitting fr = splitting_at(f, i, r.anchor, 40);
        bool first = true;
        for (const TorusPoint& q : samples) {
            double s, u;
            if (!r.coords(fr, q, s, u)) continue;
            if (first) {
                r.s_lo = r.s_hi = s;
                r.u_lo = r.u_hi = u;
                first = false;
            } else {
                r.s_lo = std::min(r.s_lo, s);
                r.s_hi = std::max(r.s_hi, s);
                r.u_lo = std::min(r.u_lo, u);
                r.u_hi = std::max(r.u_hi, u);
            }
        }
        if (!first) out.push_back(r);
    }
    return out;
}

namespace detail {

struct AtomKey {
    long long cx, cy, ws, wu;
    bool operator<(const AtomKey& o) const {
        return std::tie(cx, cy, ws, wu) < std::tie(o.cx, o.cy, o.ws, o.wu);
    }
};

inline AtomKey atom_key(const TorusPoint& center, double wsd, double wud) {
    const auto q = [](double t) { return llround(t * 1e8); };
    // Snap coordinates that quantize to the torus edge back to zero.
    long long cx = q(center.x) % 100000000LL;
    long long cy = q(center.y) % 100000000LL;
    return AtomKey{cx, cy, q(wsd), q(wud)};
}

}  // namespace detail

// Refinement: intersects the rectangle cover's bracket pieces into atoms with
// pairwise disjoint interiors. The atom through x is the box bounded by the
// nearest cut on each side, where cuts are the extent boundaries of every
// rectangle overlapping a rectangle that contains x. Atoms are enumerated by
// flood fill across shared walls; geometry is exact interval arithmetic in
// the frame chart (linear families).
inline PartitionSequence refine(const FamilySpec& f,
                                const std::map<int, std::vector<Rectangle>>& trects,
                                const MarkovParams& params) {
    PartitionSequence part;

    // Levels whose input rectangles coincide (periodic families) share the
    // refined partition; remember finished levels by their pattern class.
    std::map<int, int> done_class;

    for (const auto& [level, rects] : trects) {
        const int period = f.period();
        const int cls = f.extension == Extension::Periodic
                            ? ((level - f.window_lo) % period + period) % period
                            : level;
        if (auto it = done_class.find(cls); it != done_class.end()) {
            const int src = it->second;
            if (trects.at(src).size() == rects.size()) {
                std::vector<Rectangle> copy = part.levels.at(src);
                for (auto& a : copy) a.index = level;
                part.stats[level] = part.stats.at(src);
                part.levels[level] = std::move(copy);
                continue;
            }
        }
        done_class[cls] = level;
        const std::size_t cap = 10 * rects.size() * rects.size();
        const Splitting fr = splitting_at(f, level, {0.1234, 0.5678}, 60);
        const double frame_det =
            std::abs(fr.e_s.dx * fr.e_u.dy - fr.e_s.dy * fr.e_u.dx);

        // Anchor index and per-rectangle partner lists. The anchor-to-corner
        // reach uses |s| + |u| (unit frame vectors), valid for any frame
        // angle and for extents sitting asymmetrically around the anchor.
        std::vector<TorusPoint> anchors;
        anchors.reserve(rects.size());
        double max_corner = 0.0;
        for (const auto& r : rects) {
            anchors.push_back(r.anchor);
            for (const auto& v : r.boundary())
                max_corner =
                    std::max(max_corner, fr.recompose(v[0], v[1]).norm());
        }
        if (max_corner > 0.235)
            throw EpsilonTooLarge(
                "rectangles too large for chart-local refinement");
        detail::PointIndex aindex(anchors, 0.05);
        const double reach = std::min(0.48, 2.0 * max_corner + 1e-3);

        // Partner rectangles (box overlap) with their anchor offsets in frame
        // coordinates. Anchor pairs sit within one chart, and offsets add
        // exactly in the global frame, so positions relative to any nearby
        // point reach partners beyond that point's own chart.
        struct Partner {
            int m;
            double ds = 0, du = 0;
        };
        std::vector<std::vector<Partner>> partners(rects.size());
        for (int j = 0; j < int(rects.size()); ++j) {
            const Rectangle& rj = rects[std::size_t(j)];
            aindex.for_ball(rj.anchor, reach, [&](int m) {
                double s, u;
                if (!fr.decompose(log_map(rj.anchor,
                                          rects[std::size_t(m)].anchor),
                                  s, u))
                    return;
                const Rectangle& rm = rects[std::size_t(m)];
                if (s + rm.s_hi > rj.s_lo && s + rm.s_lo < rj.s_hi &&
                    u + rm.u_hi > rj.u_lo && u + rm.u_lo < rj.u_hi)
                    partners[std::size_t(j)].push_back({m, s, u});
            });
        }

        // Atom through x; nullopt for boundary grazes and holes.
        std::vector<int> stamp(rects.size(), -1);
        int stamp_gen = 0;
        const auto atom_of = [&](const TorusPoint& x)
            -> std::optional<Rectangle> {
            std::vector<std::pair<int, std::pair<double, double>>> J;
            bool grazing = false;
            aindex.for_ball(x, max_corner + 1e-6, [&](int j) {
                double s, u;
                if (!rects[std::size_t(j)].coords(fr, x, s, u)) return;
                const Rectangle& rj = rects[std::size_t(j)];
                // Membership must be numerically unambiguous, otherwise two
                // sides of the same region could disagree about the cut set.
                const double margin =
                    std::min(std::min(s - rj.s_lo, rj.s_hi - s),
                             std::min(u - rj.u_lo, rj.u_hi - u));
                if (std::abs(margin) < 1e-12) grazing = true;
                if (margin >= 0) J.push_back({j, {s, u}});
            });
            if (grazing || J.empty()) return std::nullopt;

            ++stamp_gen;
            double slo = -1e300, shi = 1e300, ulo = -1e300, uhi = 1e300;
            // Cuts of box m positioned at (s0, u0) relative to x.
            const auto cut = [&](int m, double s0, double u0) {
                if (stamp[std::size_t(m)] == stamp_gen) return;
                stamp[std::size_t(m)] = stamp_gen;
                const Rectangle& rm = rects[std::size_t(m)];
                for (double c : {s0 + rm.s_lo, s0 + rm.s_hi}) {
                    if (c <= 0)
                        slo = std::max(slo, c);
                    else
                        shi = std::min(shi, c);
                }
                for (double c : {u0 + rm.u_lo, u0 + rm.u_hi}) {
                    if (c <= 0)
                        ulo = std::max(ulo, c);
                    else
                        uhi = std::min(uhi, c);
                }
            };
            for (const auto& [j, su] : J) {
                // Offset of anchor_j from x is the negative of x's coords.
                const double sj = -su.first, uj = -su.second;
                cut(j, sj, uj);
                for (const Partner& pm : partners[std::size_t(j)])
                    cut(pm.m, sj + pm.ds, uj + pm.du);
            }
            // Zero-width cuts mean x grazed a boundary; caller perturbs.
            if (slo > -1e-12 || shi < 1e-12 || ulo > -1e-12 || uhi < 1e-12)
                return std::nullopt;

            Rectangle atom;
            atom.index = level;
            atom.anchor = x;
            atom.s_lo = slo;
            atom.s_hi = shi;
            atom.u_lo = ulo;
            atom.u_hi = uhi;
            return atom;
        };

        // Flood fill from symbol anchors and a coarse grid. Found atoms go
        // into a fine spatial hash so wall seeds landing in known territory
        // cost one lookup instead of a full cut pass.
        std::vector<Rectangle> level_atoms;
        const int grid_n = 256;
        std::unordered_map<long long, std::vector<int>> atom_grid;
        const auto grid_cell = [&](double x, double y) {
            const long long cx = (long long)(wrap01(x) * grid_n);
            const long long cy = (long long)(wrap01(y) * grid_n);
            return cx * grid_n + cy;
        };
        const auto register_atom = [&](const Rectangle& a) {
            const int idx = int(level_atoms.size());
            level_atoms.push_back(a);
            // Cover the xy bounding box of the frame box.
            const double ex = std::abs(a.s_hi * fr.e_s.dx) +
                              std::abs(a.u_hi * fr.e_u.dx) + 1e-12;
            const double ey = std::abs(a.s_hi * fr.e_s.dy) +
                              std::abs(a.u_hi * fr.e_u.dy) + 1e-12;
            const int sx = int(std::floor((a.anchor.x - ex) * grid_n));
            const int sy = int(std::floor((a.anchor.y - ey) * grid_n));
            const int txc = int(std::floor((a.anchor.x + ex) * grid_n));
            const int tyc = int(std::floor((a.anchor.y + ey) * grid_n));
            for (int cx = sx; cx <= txc; ++cx)
                for (int cy = sy; cy <= tyc; ++cy)
                    atom_grid[(((long long)cx % grid_n + grid_n) % grid_n) * grid_n +
                              (((long long)cy % grid_n + grid_n) % grid_n)]
                        .push_back(idx);
        };
        const auto locate_known = [&](const TorusPoint& x) {
            const auto it = atom_grid.find(grid_cell(x.x, x.y));
            if (it == atom_grid.end()) return -1;
            for (int idx : it->second)
                if (level_atoms[std::size_t(idx)].contains(fr, x, 1e-13))
                    return idx;
            return -1;
        };

        std::map<detail::AtomKey, int> seen_keys;
        std::vector<TorusPoint> queue;
        Rng rng(params.seed ^ 0x9e3779b97f4a7c15ULL);
        for (const auto& r : rects) queue.push_back(r.anchor);
        for (int gx = 0; gx < 16; ++gx)
            for (int gy = 0; gy < 16; ++gy)
                queue.emplace_back((gx + 0.37) / 16.0, (gy + 0.61) / 16.0);

        LevelStats stats;
        while (!queue.empty()) {
            TorusPoint x = queue.back();
            queue.pop_back();
            if (locate_known(x) >= 0) continue;
            std::optional<Rectangle> atom;
            for (int attempt = 0; attempt < 4 && !atom; ++attempt) {
                atom = atom_of(x);
                if (!atom) x = exp_map(x, rng.in_ball(3e-7 * (attempt + 1)));
            }
            if (!atom) {
                ++stats.holes;
                continue;
            }
            // Canonical center keeps the dedup key chart-independent.
            const TorusPoint center = exp_map(
                atom->anchor, fr.recompose(0.5 * (atom->s_lo + atom->s_hi),
                                           0.5 * (atom->u_lo + atom->u_hi)));
            const detail::AtomKey key =
                detail::atom_key(center, atom->s_width(), atom->u_width());
            if (!seen_keys.emplace(key, int(level_atoms.size())).second)
                continue;

            Rectangle canon = *atom;
            canon.anchor = center;
            const double hs = 0.5 * atom->s_width(), hu = 0.5 * atom->u_width();
            canon.s_lo = -hs;
            canon.s_hi = hs;
            canon.u_lo = -hu;
            canon.u_hi = hu;
            if (canon.s_width() * canon.u_width() * frame_det < params.min_area)
                continue;
            register_atom(canon);
            if (level_atoms.size() > cap)
                throw RefinementExplosion(level_atoms.size(), cap);

            // Seeds just beyond each wall and corner.
            const double ks = hs + params.boundary_margin * 0.03 + 1e-9;
            const double ku = hu + params.boundary_margin * 0.03 + 1e-9;
            for (const auto& [ds, du] :
                 std::initializer_list<std::pair<double, double>>{
                     {ks, 0.0}, {-ks, 0.0}, {0.0, ku}, {0.0, -ku},
                     {ks, ku}, {ks, -ku}, {-ks, ku}, {-ks, -ku}}) {
                queue.push_back(exp_map(center, fr.recompose(ds, du)));
            }
        }

        // Audit: total area and pairwise interior overlaps.
        std::vector<TorusPoint> centers;
        for (const auto& a : level_atoms) centers.push_back(a.anchor);
        detail::PointIndex cindex(centers, 0.02);
        double area = 0.0;
        for (const auto& a : level_atoms)
            area += a.s_width() * a.u_width() * frame_det;
        stats.area_sum = area;
        double max_atom_halfdiag = 0.0;
        for (const auto& a : level_atoms)
            max_atom_halfdiag = std::max(
                max_atom_halfdiag, 0.5 * std::hypot(a.s_width(), a.u_width()));
        for (int ai = 0; ai < int(level_atoms.size()); ++ai) {
            const Rectangle& a = level_atoms[std::size_t(ai)];
            const double rad = 0.5 * std::hypot(a.s_width(), a.u_width()) +
                               max_atom_halfdiag + 1e-6;
            cindex.for_ball(a.anchor, std::min(0.45, rad), [&](int bi) {
                if (bi <= ai) return;
                const Rectangle& b = level_atoms[std::size_t(bi)];
                double s, u;
                if (!b.coords(fr, a.anchor, s, u)) return;
                // b's box relative to a's anchor sits at (-s, -u).
                const double os =
                    std::min(a.s_hi, b.s_hi - s) - std::max(a.s_lo, b.s_lo - s);
                const double ou =
                    std::min(a.u_hi, b.u_hi - u) - std::max(a.u_lo, b.u_lo - u);
                if (os > 0 && ou > 0)
                    stats.max_pair_overlap =
                        std::max(stats.max_pair_overlap, os * ou * frame_det);
            });
        }

        part.levels[level] = std::move(level_atoms);
        part.stats[level] = stats;
        part.max_cardinality =
            std::max(part.max_cardinality, int(part.levels[level].size()));
    }
    return part;
}

struct MarkovReport {
    long long probes_attempted = 0;
    long long probes_used = 0;
    int violations = 0;
    double worst_defect = 0.0;
};

namespace detail {

// Point location over one level's atoms.
class AtomLocator {
  public:
    AtomLocator(const std::vector<Rectangle>& atoms, const Splitting& fr)
        : atoms_(atoms), fr_(fr), centers_() {
        for (const auto& a : atoms) centers_.push_back(a.anchor);
        index_.emplace(centers_, 0.02);
        for (const auto& a : atoms)
            reach_ = std::max(reach_, 0.75 * std::hypot(a.s_width(), a.u_width()) + 1e-3);
    }

    // Index of the atom whose interior contains x with at least `margin`
    // slack; -1 when none does.
    int locate(const TorusPoint& x, double margin) const {
        int best = -1;
        double bm = margin;
        index_->for_ball(x, std::min(0.45, reach_), [&](int k) {
            const double m = atoms_[std::size_t(k)].interior_margin(fr_, x);
            if (m > bm) {
                bm = m;
                best = k;
            }
        });
        return best;
    }

    const Rectangle& atom(int k) const { return atoms_[std::size_t(k)]; }

  private:
    const std::vector<Rectangle>& atoms_;
    Splitting fr_;
    std::vector<TorusPoint> centers_;
    std::optional<PointIndex> index_;
    double reach_ = 0.0;
};

}  // namespace detail

// Markov-condition audit: random interior probes x with x in R and
// f(x) in R' check that stable fibers map into stable fibers and unstable
// fibers pull back into unstable fibers, sampling 33 points per fiber.
inline MarkovReport check_markov(const FamilySpec& f,
                                 const PartitionSequence& part, int probes,
                                 std::uint64_t seed = 20240,
                                 double tol = 1e-7,
                                 double boundary_margin = 1e-6) {
    MarkovReport rep;
    if (probes <= 0) return rep;

    // Consecutive level pairs available in the partition.
    std::vector<int> levels;
    for (const auto& [lvl, atoms] : part.levels) levels.push_back(lvl);
    std::vector<int> pair_lo;
    for (int lvl : levels)
        if (part.levels.count(lvl + 1)) pair_lo.push_back(lvl);
    if (pair_lo.empty())
        throw std::invalid_argument(
            "markov check needs two consecutive levels");

    std::map<int, Splitting> frames;
    std::map<int, std::optional<detail::AtomLocator>> locs;
    for (int lvl : levels) {
        frames[lvl] = splitting_at(f, lvl, {0.1234, 0.5678}, 60);
        locs[lvl].emplace(part.levels.at(lvl), frames[lvl]);
    }

    Rng rng(seed);
    const int fiber_samples = 33;
    long long guard = 0;
    while (rep.probes_used < probes && guard < 400LL * probes) {
        ++guard;
        ++rep.probes_attempted;
        const int lvl = pair_lo[std::size_t(rng.below(int(pair_lo.size())))];
        const TorusPoint x = rng.point();
        const int ai = locs[lvl]->locate(x, boundary_margin);
        if (ai < 0) continue;
        const TorusPoint fx = apply(f, lvl, x);
        const int bi = locs[lvl + 1]->locate(fx, boundary_margin);
        if (bi < 0) continue;
        ++rep.probes_used;

        const Rectangle& A = locs[lvl]->atom(ai);
        const Rectangle& B = locs[lvl + 1]->atom(bi);
        const Splitting& fra = frames[lvl];
        const Splitting& frb = frames[lvl + 1];

        double sx, ux, sfx, ufx;
        A.best_coords(fra, x, sx, ux);
        B.best_coords(frb, fx, sfx, ufx);

        // (a) f(W^s(x, A)) inside W^s(fx, B).
        for (int t = 0; t < fiber_samples; ++t) {
            const double s =
                A.s_lo + (A.s_hi - A.s_lo) * t / (fiber_samples - 1);
            const TorusPoint y = A.point_of(fra, s, ux);
            const TorusPoint fy = apply(f, lvl, y);
            double s2 = 0, u2 = 0;
            if (B.best_coords(frb, fy, s2, u2) <= -1e299) {
                ++rep.violations;
                rep.worst_defect = std::max(rep.worst_defect, 1.0);
                continue;
            }
            const double d =
                std::max({std::abs(u2 - ufx), B.s_lo - s2, s2 - B.s_hi});
            if (d > tol) {
                ++rep.violations;
                rep.worst_defect = std::max(rep.worst_defect, d);
            }
        }

        // (b) W^u(fx, B) inside f(W^u(x, A)).
        for (int t = 0; t < fiber_samples; ++t) {
            const double u =
                B.u_lo + (B.u_hi - B.u_lo) * t / (fiber_samples - 1);
            const TorusPoint w = B.point_of(frb, sfx, u);
            const TorusPoint pw = apply_inverse(f, lvl, w);
            double s2 = 0, u2 = 0;
            if (A.best_coords(fra, pw, s2, u2) <= -1e299) {
                ++rep.violations;
                rep.worst_defect = std::max(rep.worst_defect, 1.0);
                continue;
            }
            const double d =
                std::max({std::abs(s2 - sx), A.u_lo - u2, u2 - A.u_hi});
            if (d > tol) {
                ++rep.violations;
                rep.worst_defect = std::max(rep.worst_defect, d);
            }
        }
    }
    return rep;
}

// 0/1 transition matrices B_i[j][k] = 1 iff f_i(int R_j^i) meets
// int R_k^{i+1}, stored as sorted column lists per row (the matrices are
// sparse at realistic partition sizes). Linear families map frame boxes to
// frame boxes, so the interior-overlap test is exact interval arithmetic.
struct TransitionMatrixSequence {
    struct Matrix {
        int rows = 0, cols = 0;
        std::vector<std::vector<int>> row_ones;

        bool rows_and_columns_nonempty() const {
            std::vector<char> col(std::size_t(cols), 0);
            for (const auto& r : row_ones) {
                if (r.empty()) return false;
                for (int k : r) col[std::size_t(k)] = 1;
            }
            for (char c : col)
                if (!c) return false;
            return true;
        }

        friend bool operator==(const Matrix& a, const Matrix& b) {
            return a.rows == b.rows && a.cols == b.cols &&
                   a.row_ones == b.row_ones;
        }
    };
    std::map<int, Matrix> matrices;
};

inline TransitionMatrixSequence transition_matrices(
    const FamilySpec& f, const PartitionSequence& part,
    double area_tol = 1e-9) {
    if (!f.all_linear()) throw NotLinear();
    TransitionMatrixSequence out;
    for (const auto& [lvl, atoms] : part.levels) {
        if (!part.levels.count(lvl + 1)) continue;
        const auto& next = part.levels.at(lvl + 1);
        const Splitting fra = splitting_at(f, lvl, {0.1234, 0.5678}, 60);
        const Splitting frb = splitting_at(f, lvl + 1, {0.1234, 0.5678}, 60);
        const Mat2 df = f.map_at(lvl).jacobian({0, 0});
        const double sg = (df * fra.e_s).dot(frb.e_s);
        const double mg = (df * fra.e_u).dot(frb.e_u);
        const double det =
            std::abs(frb.e_s.dx * frb.e_u.dy - frb.e_s.dy * frb.e_u.dx);

        // Sliver atoms can only ever overlap by a fraction of their own
        // area, so the overlap threshold adapts downward with them.
        double min_area = 1e300;
        for (const auto& a : atoms)
            min_area = std::min(min_area, a.s_width() * a.u_width() * det);
        for (const auto& b : next)
            min_area = std::min(min_area, b.s_width() * b.u_width() * det);
        const double tol = std::min(area_tol, 0.2 * min_area);

        std::vector<TorusPoint> centers;
        for (const auto& b : next) centers.push_back(b.anchor);
        detail::PointIndex cindex(centers, 0.02);
        double next_halfdiag = 0.0;
        for (const auto& b : next)
            next_halfdiag = std::max(
                next_halfdiag, 0.5 * std::hypot(b.s_width(), b.u_width()));

        // Boxes wider than the chart wrap around the torus; compare against
        // the lattice translates of each target box in that case.
        double max_extent = 2 * next_halfdiag;
        for (const auto& a : atoms) {
            max_extent = std::max(max_extent, std::abs(sg) * a.s_width());
            max_extent = std::max(max_extent, std::abs(mg) * a.u_width());
        }
        const int shift_range = max_extent > 0.4 ? 2 : 0;

        TransitionMatrixSequence::Matrix B;
        B.rows = int(atoms.size());
        B.cols = int(next.size());
        B.row_ones.resize(atoms.size());
        for (int j = 0; j < int(atoms.size()); ++j) {
            const Rectangle& a = atoms[std::size_t(j)];
            const TorusPoint ia = apply(f, lvl, a.anchor);
            const double is_lo = std::min(sg * a.s_lo, sg * a.s_hi);
            const double is_hi = std::max(sg * a.s_lo, sg * a.s_hi);
            const double iu_lo = std::min(mg * a.u_lo, mg * a.u_hi);
            const double iu_hi = std::max(mg * a.u_lo, mg * a.u_hi);
            const double irad =
                0.5 * std::hypot(is_hi - is_lo, iu_hi - iu_lo) +
                next_halfdiag + 1e-6;
            auto& row = B.row_ones[std::size_t(j)];
            const auto test = [&](int k) {
                const Rectangle& b = next[std::size_t(k)];
                const double bx = wrap_half(b.anchor.x - ia.x);
                const double by = wrap_half(b.anchor.y - ia.y);
                for (int m = -shift_range; m <= shift_range; ++m) {
                    for (int n = -shift_range; n <= shift_range; ++n) {
                        double s, u;
                        if (!frb.decompose({bx + m, by + n}, s, u)) continue;
                        const double os = std::min(is_hi, s + b.s_hi) -
                                          std::max(is_lo, s + b.s_lo);
                        const double ou = std::min(iu_hi, u + b.u_hi) -
                                          std::max(iu_lo, u + b.u_lo);
                        if (os > 0 && ou > 0 && os * ou * det > tol) {
                            row.push_back(k);
                            return;
                        }
                    }
                }
            };
            if (shift_range > 0 || irad >= 0.45) {
                for (int k = 0; k < int(next.size()); ++k) test(k);
            } else {
                cindex.for_ball(ia, irad, test);
            }
            std::sort(row.begin(), row.end());
        }
        out.matrices[lvl] = std::move(B);
    }
    return out;
}

}  // namespace hyplab
