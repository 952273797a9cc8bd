#include <catch2/catch_amalgamated.hpp>

#include "hyplab/aw_partition.hpp"
#include "hyplab/markov.hpp"

using namespace hyplab;

namespace {

const double kLambda = (3.0 - std::sqrt(5.0)) / 2.0;

double cover_radius(const DenseSet& P, int probe = 160) {
    detail::PointIndex index(P.points, P.gamma);
    double worst = 0.0;
    for (int i = 0; i < probe; ++i) {
        for (int j = 0; j < probe; ++j) {
            const TorusPoint p((i + 0.5) / probe, (j + 0.5) / probe);
            worst = std::max(
                worst, distance(P.points[std::size_t(index.nearest(p))], p));
        }
    }
    return worst;
}

// Reference partition-scale parameters for a linear family.
struct BuildSetup {
    DenseSet P;
    MarkovParams mp;
};

BuildSetup partition_setup(const FamilySpec& f, double gamma) {
    BuildSetup s{dense_set(gamma, 12345), {}};
    const double L = sup_derivative_norm(f);
    const double cover = cover_radius(s.P);
    s.mp.alpha = (L + 1) * cover * 1.15;
    s.mp.build_alpha = s.mp.alpha;
    s.mp.beta = 2.0 * s.mp.alpha;
    s.mp.seed = 99;
    return s;
}

// Shadow parameters usable by theta at the honest coding scale.
ShadowParams theta_params() {
    BracketParams bp;
    bp.epsilon = 0.05;
    bp.delta = 0.0124;
    const HyperbolicityEstimate est = estimate_constants(cat_family(), 0, 0, 2, 8);
    return choose_params(cat_family(), 0.05, est, bp);
}

}  // namespace

TEST_CASE("dense set: counts, covering, quadratic growth") {
    const DenseSet ds = dense_set(0.25, 5);
    CHECK(ds.points.size() >= 25);
    CHECK(ds.points.size() <= 35);

    // Every probe of a 64x64 grid lies within gamma of a member.
    detail::PointIndex index(ds.points, ds.gamma);
    for (int i = 0; i < 64; ++i) {
        for (int j = 0; j < 64; ++j) {
            const TorusPoint p((i + 0.5) / 64, (j + 0.5) / 64);
            CHECK(distance(ds.points[std::size_t(index.nearest(p))], p) < 0.25);
        }
    }

    const DenseSet half = dense_set(0.125, 5);
    const double ratio = double(half.points.size()) / double(ds.points.size());
    CHECK(ratio > 3.0);
    CHECK(ratio < 5.0);

    CHECK_THROWS_AS(dense_set(0.26, 5), std::invalid_argument);
}

TEST_CASE("choose_gamma applies the Lipschitz modulus") {
    const double g = choose_gamma(cat_family(), 0.01, 0.5);
    CHECK(g == Catch::Approx(0.01 / (2 * 2.618033988749895) * (1 - 1e-6))
                   .margin(1e-12));

    // A family with |Df| = 1: the min picks alpha/2.
    const FamilySpec id = FamilySpec::constant(MapSpec::linear({1, 0, 0, 1}));
    CHECK(choose_gamma(id, 0.01, 0.5) ==
          Catch::Approx(0.005 * (1 - 1e-6)).margin(1e-12));
    CHECK(choose_gamma(id, 0.01, 0.001) ==
          Catch::Approx(0.001 * (1 - 1e-6)).margin(1e-12));

    CHECK(choose_gamma(cat_family(), 0.02, 0.5) < 0.01);
}

TEST_CASE("theta codes the fixed point from the constant sequence") {
    const FamilySpec cat = cat_family();
    DenseSet P = dense_set(0.2, 3);
    P.points.push_back({0, 0});
    const int origin = int(P.points.size()) - 1;

    ShadowParams sp = theta_params();
    SymbolSequence seq;
    seq.start_index = -10;
    seq.symbols.assign(21, origin);
    const TorusPoint x = theta(cat, seq, P, sp);
    CHECK(distance(x, {0, 0}) < 1e-12);
}

TEST_CASE("theta inverts nearest-symbol codings and is shift equivariant") {
    const FamilySpec cat = cat_family();
    const ShadowParams sp = theta_params();
    const double gamma = choose_gamma(cat, sp.alpha, sp.beta);
    const DenseSet P = dense_set(gamma, 11);
    detail::PointIndex index(P.points, gamma);
    const int N = 20;

    const auto [eta, zeta] = default_expansiveness(sp.lambda);
    const double trunc = expansiveness_bound(2 * sp.beta, eta, zeta, N).bound;

    Rng rng(301);
    for (int t = 0; t < 30; ++t) {
        const TorusPoint x = rng.point();
        const SymbolSequence code = nearest_coding(cat, P, index, x, 0, N);
        CHECK_NOTHROW(validate_sequence(cat, P, code, sp.alpha));
        const TorusPoint back = theta(cat, code, P, sp);
        CHECK(distance(back, x) < sp.beta + trunc);

        // Dropping the first symbol re-windows the sequence; theta commutes
        // with the family up to the truncation tail.
        SymbolSequence tail;
        tail.start_index = code.start_index + 1;
        tail.symbols.assign(code.symbols.begin() + 1, code.symbols.end());
        const TorusPoint via_f = apply(cat, 0, theta(cat, code, P, sp));
        const TorusPoint direct = theta(cat, tail, P, sp);
        // tail has even length; its centre sits at level 0, one step behind.
        CHECK(distance(apply(cat, 0, direct), via_f) < 1e-8);
    }
}

TEST_CASE("sequences agreeing on the window code within the truncation bound") {
    const FamilySpec cat = cat_family();
    const ShadowParams sp = theta_params();
    const double gamma = choose_gamma(cat, sp.alpha, sp.beta);
    const DenseSet P = dense_set(gamma, 11);
    detail::PointIndex index(P.points, gamma);
    const int N = 10, pad = 5;

    const auto [eta, zeta] = default_expansiveness(sp.lambda);
    const double bound = expansiveness_bound(2 * sp.beta, eta, zeta, N).bound;

    // Extends a window outward by `pad` admissible steps on each side.
    const auto extend = [&](const SymbolSequence& core, Rng& rng) {
        SymbolSequence seq;
        seq.start_index = core.start_index - pad;
        seq.symbols.assign(core.symbols.size() + 2 * std::size_t(pad), -1);
        std::copy(core.symbols.begin(), core.symbols.end(),
                  seq.symbols.begin() + pad);
        for (int k = pad + int(core.symbols.size()); k < int(seq.symbols.size()); ++k) {
            const TorusPoint img = apply(
                cat, seq.start_index + k - 1,
                P.points[std::size_t(seq.symbols[std::size_t(k) - 1])]);
            std::vector<int> cands;
            index.for_ball(img, sp.alpha, [&](int j) { cands.push_back(j); });
            REQUIRE(!cands.empty());
            seq.symbols[std::size_t(k)] = cands[std::size_t(rng.below(int(cands.size())))];
        }
        for (int k = pad - 1; k >= 0; --k) {
            const int level = seq.start_index + k;
            const TorusPoint target =
                P.points[std::size_t(seq.symbols[std::size_t(k) + 1])];
            const TorusPoint pre = apply_inverse(cat, level, target);
            std::vector<int> cands;
            index.for_ball(pre, 3 * sp.alpha, [&](int j) {
                if (distance(apply(cat, level, P.points[std::size_t(j)]), target) <
                    sp.alpha)
                    cands.push_back(j);
            });
            REQUIRE(!cands.empty());
            seq.symbols[std::size_t(k)] = cands[std::size_t(rng.below(int(cands.size())))];
        }
        return seq;
    };

    Rng rng(302);
    for (int t = 0; t < 20; ++t) {
        const int k = rng.below(int(P.points.size()));
        const SymbolSequence core =
            random_admissible_sequence(cat, P, index, k, 0, N, sp.alpha, rng);
        const SymbolSequence a = extend(core, rng);
        const SymbolSequence b = extend(core, rng);
        CHECK_NOTHROW(validate_sequence(cat, P, a, sp.alpha));
        CHECK_NOTHROW(validate_sequence(cat, P, b, sp.alpha));
        const double d = distance(theta(cat, a, P, sp), theta(cat, b, P, sp));
        CHECK(d < bound);
    }
}

TEST_CASE("splice identity links sequence and point brackets") {
    const FamilySpec cat = cat_family();
    const ShadowParams sp = theta_params();
    const double gamma = choose_gamma(cat, sp.alpha, sp.beta);
    const DenseSet P = dense_set(gamma, 11);
    detail::PointIndex index(P.points, gamma);
    const int N = 20;

    Rng rng(303);
    int done = 0;
    while (done < 50) {
        const int k = rng.below(int(P.points.size()));
        const SymbolSequence a =
            random_admissible_sequence(cat, P, index, k, 0, N, sp.alpha, rng);
        const SymbolSequence b =
            random_admissible_sequence(cat, P, index, k, 0, N, sp.alpha, rng);
        const SymbolSequence c = sequence_bracket(a, b);
        CHECK_NOTHROW(validate_sequence(cat, P, c, sp.alpha));

        const TorusPoint ta = theta(cat, a, P, sp);
        const TorusPoint tb = theta(cat, b, P, sp);
        const TorusPoint tc = theta(cat, c, P, sp);
        const TorusPoint br = detail::bracket_exact_linear(cat, 0, ta, tb, 0.1);
        CHECK(distance(tc, br) < 1e-7);
        ++done;
    }

    // Self-splice is the identity; centre mismatch throws.
    const SymbolSequence a =
        random_admissible_sequence(cat, P, index, 7, 0, N, sp.alpha, rng);
    const SymbolSequence aa = sequence_bracket(a, a);
    CHECK(aa.symbols == a.symbols);
    SymbolSequence m = a;
    m.symbols[std::size_t(m.center_offset())] += 1;
    CHECK_THROWS_AS(sequence_bracket(a, m), SymbolMismatch);
}

TEST_CASE("exact T-rectangles: anchors inside, diameters bounded, brackets closed") {
    const FamilySpec cat = cat_family();
    const BuildSetup s = partition_setup(cat, 0.06);
    const auto rects = build_T_rectangles(cat, 0, s.P, s.mp, 0);
    CHECK(rects.size() == s.P.points.size());

    const Splitting fr = splitting_at(cat, 0, {0.1, 0.2}, 40);
    Rng rng(304);
    for (int t = 0; t < 40; ++t) {
        const Rectangle& r = rects[std::size_t(rng.below(int(rects.size())))];
        CHECK(r.contains(fr, r.anchor));
        CHECK(std::hypot(r.s_width(), r.u_width()) <= 2 * s.mp.beta);

        // Bracket-closedness on random interior pairs.
        for (int q = 0; q < 5; ++q) {
            const TorusPoint x = r.point_of(
                fr, rng.uniform(r.s_lo, r.s_hi), rng.uniform(r.u_lo, r.u_hi));
            const TorusPoint y = r.point_of(
                fr, rng.uniform(r.s_lo, r.s_hi), rng.uniform(r.u_lo, r.u_hi));
            const TorusPoint b = detail::bracket_exact_linear(cat, 0, x, y, 0.49);
            CHECK(r.contains(fr, b, 1e-9));
        }
    }

    // The attainable-coordinate hulls are genuinely filled (no interior gaps
    // in the image intervals), so the hull boxes are the exact T-sets.
    const detail::ExactExtents ex =
        detail::exact_extents(cat, s.P, s.mp.effective_build_alpha());
    CHECK(ex.min_s_cover_margin > 0.0);
    CHECK(ex.min_u_cover_margin > 0.0);
}

TEST_CASE("sampled T-rectangles stay inside the exact hulls") {
    const FamilySpec cat = cat_family();
    const BuildSetup s = partition_setup(cat, 0.06);
    MarkovParams mp = s.mp;
    mp.window_n = 20;
    const auto exact = build_T_rectangles(cat, 0, s.P, mp, 0);
    const auto sampled = build_T_rectangles(cat, 0, s.P, mp, 12, true);

    std::map<int, const Rectangle*> by_symbol;
    for (const auto& r : exact) by_symbol[r.symbol] = &r;
    REQUIRE(!sampled.empty());
    for (const auto& r : sampled) {
        const Rectangle* e = by_symbol.at(r.symbol);
        CHECK(r.s_lo >= e->s_lo - 1e-7);
        CHECK(r.s_hi <= e->s_hi + 1e-7);
        CHECK(r.u_lo >= e->u_lo - 1e-7);
        CHECK(r.u_hi <= e->u_hi + 1e-7);
    }
}

TEST_CASE("refine returns a single-rectangle cover unchanged") {
    const FamilySpec cat = cat_family();
    Rectangle r;
    r.index = 0;
    r.anchor = {0.3, 0.7};
    r.s_lo = -0.05;
    r.s_hi = 0.04;
    r.u_lo = -0.03;
    r.u_hi = 0.05;
    MarkovParams mp;
    mp.alpha = 0.1;
    mp.beta = 0.2;
    const PartitionSequence part = refine(cat, {{0, {r}}}, mp);
    REQUIRE(part.levels.at(0).size() == 1);
    const Rectangle& a = part.levels.at(0)[0];
    CHECK(a.s_width() == Catch::Approx(r.s_width()).margin(1e-12));
    CHECK(a.u_width() == Catch::Approx(r.u_width()).margin(1e-12));
    const Splitting fr = splitting_at(cat, 0, {0.1, 0.2}, 40);
    CHECK(distance(a.anchor, r.point_of(fr, 0.5 * (r.s_lo + r.s_hi),
                                        0.5 * (r.u_lo + r.u_hi))) < 1e-12);
}

TEST_CASE("cat partition: tiling, markov condition, stationary matrices") {
    const FamilySpec cat = cat_family();
    const BuildSetup s = partition_setup(cat, 0.06);
    std::map<int, std::vector<Rectangle>> tr;
    for (int lvl = 0; lvl <= 2; ++lvl) {
        tr[lvl] = build_T_rectangles(cat, lvl, s.P, s.mp, 0);
        for (auto& r : tr[lvl]) r.index = lvl;
    }
    const PartitionSequence part = refine(cat, tr, s.mp);

    for (int lvl = 0; lvl <= 2; ++lvl) {
        const LevelStats& st = part.stats.at(lvl);
        CHECK(std::abs(st.area_sum - 1.0) < 1e-6);
        CHECK(st.max_pair_overlap < 1e-8);
        CHECK(st.holes == 0);
    }
    CHECK(part.max_cardinality ==
          int(part.levels.at(0).size()));

    const MarkovReport rep = check_markov(cat, part, 300, 77, 1e-7);
    CHECK(rep.probes_used == 300);
    CHECK(rep.violations == 0);
    CHECK(rep.worst_defect == 0.0);

    const TransitionMatrixSequence tm = transition_matrices(cat, part);
    REQUIRE(tm.matrices.size() == 2);
    CHECK(tm.matrices.at(0).rows_and_columns_nonempty());
    CHECK(tm.matrices.at(0) == tm.matrices.at(1));
}

TEST_CASE("probes = 0 yields an empty report") {
    const MarkovReport rep = check_markov(cat_family(),
                                          adler_weiss_cat_partition(), 0);
    CHECK(rep.probes_used == 0);
    CHECK(rep.violations == 0);
}

TEST_CASE("classical eigen-segment partition passes the checker") {
    const PartitionSequence aw = adler_weiss_cat_partition(0, 1);
    const auto& faces = aw.levels.at(0);
    CHECK(faces.size() >= 2);
    CHECK(faces.size() <= 6);
    double area = 0.0;
    for (const auto& r : faces) area += r.s_width() * r.u_width();
    CHECK(area == Catch::Approx(1.0).margin(1e-9));

    const MarkovReport rep = check_markov(cat_family(), aw, 400, 13, 1e-7);
    CHECK(rep.probes_used == 400);
    CHECK(rep.violations == 0);

    const TransitionMatrixSequence tm = transition_matrices(cat_family(), aw);
    CHECK(tm.matrices.at(0).rows_and_columns_nonempty());
}

TEST_CASE("a corrupted rectangle fails the checker") {
    PartitionSequence aw = adler_weiss_cat_partition(0, 1);
    // Shift the largest face; its fibers no longer match across levels.
    auto& faces = aw.levels.at(0);
    std::size_t big = 0;
    for (std::size_t i = 1; i < faces.size(); ++i)
        if (faces[i].s_width() * faces[i].u_width() >
            faces[big].s_width() * faces[big].u_width())
            big = i;
    faces[big].anchor = exp_map(faces[big].anchor, {0.05, 0.0});

    const MarkovReport rep = check_markov(cat_family(), aw, 400, 13, 1e-7);
    CHECK(rep.violations >= 1);
    CHECK(rep.worst_defect > 1e-4);
}
