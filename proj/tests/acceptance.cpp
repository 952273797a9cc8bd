// Acceptance suite: exercises every advertised contract of the laboratory on
// the two reference families and prints one PASS/FAIL line per criterion.

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "hyplab/aw_partition.hpp"
#include "hyplab/markov.hpp"

using namespace hyplab;
using Clock = std::chrono::steady_clock;

namespace {

int checks_failed = 0;
std::vector<std::string> notes;

void expect(bool ok, const std::string& what) {
    if (!ok) {
        ++checks_failed;
        notes.push_back(what);
    }
}

const double kSqrt5 = std::sqrt(5.0);
const double kLambda = (3.0 - kSqrt5) / 2.0;

BracketParams reference_bracket_params() {
    BracketParams bp;
    bp.epsilon = 0.05;
    bp.delta = 0.0124;
    bp.alpha = 0.2;
    return bp;
}

// Extends an admissible window outward by `pad` admissible steps per side.
SymbolSequence extend_window(const FamilySpec& f, const DenseSet& P,
                             const detail::PointIndex& index,
                             const SymbolSequence& core, int pad, double alpha,
                             Rng& rng) {
    SymbolSequence seq;
    seq.start_index = core.start_index - pad;
    seq.symbols.assign(core.symbols.size() + 2 * std::size_t(pad), -1);
    std::copy(core.symbols.begin(), core.symbols.end(),
              seq.symbols.begin() + pad);
    for (int k = pad + int(core.symbols.size()); k < int(seq.symbols.size());
         ++k) {
        const TorusPoint img =
            apply(f, seq.start_index + k - 1,
                  P.points[std::size_t(seq.symbols[std::size_t(k) - 1])]);
        std::vector<int> cands;
        index.for_ball(img, alpha, [&](int j) { cands.push_back(j); });
        if (cands.empty()) throw Error("no admissible successor");
        seq.symbols[std::size_t(k)] =
            cands[std::size_t(rng.below(int(cands.size())))];
    }
    for (int k = pad - 1; k >= 0; --k) {
        const int level = seq.start_index + k;
        const TorusPoint target =
            P.points[std::size_t(seq.symbols[std::size_t(k) + 1])];
        const TorusPoint pre = apply_inverse(f, level, target);
        std::vector<int> cands;
        index.for_ball(pre, 3 * alpha, [&](int j) {
            if (distance(apply(f, level, P.points[std::size_t(j)]), target) <
                alpha)
                cands.push_back(j);
        });
        if (cands.empty()) throw Error("no admissible predecessor");
        seq.symbols[std::size_t(k)] =
            cands[std::size_t(rng.below(int(cands.size())))];
    }
    return seq;
}

// ---------------------------------------------------------------------------

void criterion_1_splitting_oracle() {
    const FamilySpec cat = cat_family();
    Rng rng(101);
    for (int t = 0; t < 25; ++t) {
        const Splitting sp = splitting_at(cat, rng.below(9) - 4, rng.point(), 30);
        expect(std::abs(sp.e_u.dy / sp.e_u.dx - (kSqrt5 - 1) / 2) < 1e-10,
               "unstable slope off");
        expect(std::abs(sp.e_s.dy / sp.e_s.dx + (1 + kSqrt5) / 2) < 1e-10,
               "stable slope off");
    }
    const HyperbolicityEstimate est = estimate_constants(cat, 0, 0, 4, 10);
    expect(std::abs(est.lambda - kLambda) < 1e-6, "lambda off");
}

void criterion_2_composition_identity() {
    for (const FamilySpec& f : {cat_family(), shear_family()}) {
        Rng rng(102);
        for (int t = 0; t < 100; ++t) {
            const TorusPoint p = rng.point();
            const int i = rng.below(11) - 5;
            const int m = rng.below(11) - 5;
            const int n = rng.below(11) - 5;
            const TorusPoint a = compose(f, i, m + n, p);
            const TorusPoint b = compose(f, i + m, n, compose(f, i, m, p));
            expect(distance(a, b) < 1e-9, "composition law violated");
        }
    }
}

void criterion_3_two_step_collapse() {
    const FamilySpec shear = shear_family();
    const FamilySpec cat = cat_family();
    Rng rng(103);
    for (int t = 0; t < 100; ++t) {
        // Dyadic coordinates keep every intermediate sum exact in binary.
        const TorusPoint p(double(rng.below(1 << 20)) / (1 << 20),
                           double(rng.below(1 << 20)) / (1 << 20));
        const TorusPoint two = compose(shear, 0, 2, p);
        const TorusPoint one = apply(cat, 0, p);
        expect(two == one, "two-shear product is not exactly the cat step");
    }
}

void criterion_4_bracket_contract() {
    for (const FamilySpec& f : {cat_family(), shear_family()}) {
        const BracketParams bp =
            calibrate_delta(f, reference_bracket_params(), 200);
        const Cone stable_cone{Flavor::Stable, bp.alpha};
        const Cone unstable_cone{Flavor::Unstable, bp.alpha};
        Rng rng(104);
        for (int t = 0; t < 500; ++t) {
            const int i = rng.below(2);
            const TorusPoint p = rng.point();
            const TorusPoint q = exp_map(p, rng.in_ball(bp.delta * 0.999));
            TorusPoint b;
            try {
                b = bracket(f, i, p, q, bp);
            } catch (const Error&) {
                expect(false, "bracket failed below the calibrated delta");
                continue;
            }
            expect(distance(bracket(f, i, p, b, bp), b) < 1e-9,
                   "bracket not idempotent");
            expect(stable_cone.contains(splitting_at(f, i, p, 40), log_map(p, b)),
                   "stable cone containment violated");
            expect(unstable_cone.contains(splitting_at(f, i, q, 40), log_map(q, b)),
                   "unstable cone containment violated");
        }
        Rng rng2(105);
        for (int t = 0; t < 20; ++t) {
            const TorusPoint p = rng2.point();
            expect(bracket(f, 0, p, p, bp) == p, "[p,p] must be p exactly");
        }
    }
}

void criterion_5_shadowing() {
    const FamilySpec cat = cat_family();
    const HyperbolicityEstimate est = estimate_constants(cat, 0, 0, 2, 8);
    const ShadowParams sp =
        choose_params(cat, 0.02, est, reference_bracket_params());
    const double noise = 1e-4;
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        Rng rng(seed * 6151);
        try {
            const PseudoOrbit po =
                make_noisy_orbit(cat, 0, 41, rng.point(), noise, 3.7e-4, seed);
            const ShadowResult res = shadow(cat, po, sp);
            const ShadowResult oracle = shadow_oracle_linear(cat, po);
            expect(res.max_error < sp.beta, "max error above beta");
            expect(distance(res.shadow_point, oracle.shadow_point) < 1e-8,
                   "solver disagrees with the linear oracle");
        } catch (const Error&) {
            expect(false, "shadow solver failed on a noisy orbit");
        }
    }
}

void criterion_6_expansiveness() {
    const FamilySpec cat = cat_family();
    const double delta = 0.01;
    const int budget =
        int(std::ceil(std::log(delta / 1e-6) / std::log(1.0 / kLambda))) + 1;
    Rng rng(106);
    for (int t = 0; t < 50; ++t) {
        const TorusPoint p = rng.point();
        const Splitting sp = splitting_at(cat, 0, p, 40);
        const auto wu = expansiveness_witness(
            cat, p, exp_map(p, 1e-6 * sp.e_u), delta, budget + 3);
        expect(wu.has_value() && std::abs(*wu) <= budget,
               "unstable witness missing or late");
        const auto ws = expansiveness_witness(
            cat, p, exp_map(p, 1e-6 * sp.e_s), delta, budget + 3);
        expect(ws.has_value() && std::abs(*ws) <= budget,
               "stable witness missing or late");
    }

    // Bit stability of the bound formula plus a frozen value.
    const ExpansivenessBound a = expansiveness_bound(0.1, 0.5, 0.0, 3);
    const ExpansivenessBound b = expansiveness_bound(0.1, 0.5, 0.0, 3);
    expect(a.bound == b.bound, "bound not bit-stable");
    expect(std::abs(a.bound - 0.0353553391) < 1e-9, "bound value drifted");

    // Window-extension stability against the expansiveness bound.
    const HyperbolicityEstimate est = estimate_constants(cat, 0, 0, 2, 8);
    const ShadowParams sp =
        choose_params(cat, 0.02, est, reference_bracket_params());
    const int N = 10, pad = 5;
    const auto [eta, zeta] = default_expansiveness(sp.lambda);
    const double bound = expansiveness_bound(2 * sp.beta, eta, zeta, N).bound;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const PseudoOrbit wide = make_noisy_orbit(
            cat, -N - pad, 2 * (N + pad) + 1, Rng(seed).point(), 1e-4, 3.7e-4,
            seed);
        PseudoOrbit core;
        core.start_index = -N;
        core.alpha = wide.alpha;
        core.points.assign(wide.points.begin() + pad, wide.points.end() - pad);
        const TorusPoint w =
            compose(cat, -N - pad, N + pad, shadow(cat, wide, sp).shadow_point);
        const TorusPoint c =
            compose(cat, -N, N, shadow(cat, core, sp).shadow_point);
        expect(distance(w, c) < bound, "window extension exceeded the bound");
    }
}

void criterion_7_theta_coding() {
    const FamilySpec cat = cat_family();
    const HyperbolicityEstimate est = estimate_constants(cat, 0, 0, 2, 8);
    const ShadowParams sp =
        choose_params(cat, 0.05, est, reference_bracket_params());
    const double gamma = choose_gamma(cat, sp.alpha, sp.beta);
    const DenseSet P = dense_set(gamma, 11);
    detail::PointIndex index(P.points, gamma);
    const auto [eta, zeta] = default_expansiveness(sp.lambda);

    // Surjectivity surrogate at N = 20.
    {
        const int N = 20;
        const double trunc = expansiveness_bound(2 * sp.beta, eta, zeta, N).bound;
        Rng rng(107);
        for (int t = 0; t < 100; ++t) {
            const TorusPoint x = rng.point();
            const SymbolSequence code = nearest_coding(cat, P, index, x, 0, N);
            try {
                validate_sequence(cat, P, code, sp.alpha);
                expect(distance(theta(cat, code, P, sp), x) < sp.beta + trunc,
                       "nearest coding failed to invert");
            } catch (const Error&) {
                expect(false, "nearest coding inadmissible");
            }
        }
    }

    // Continuity surrogate: shared core window, independent admissible tails.
    {
        const int N = 10, pad = 5;
        const double bound = expansiveness_bound(2 * sp.beta, eta, zeta, N).bound;
        Rng rng(108);
        for (int t = 0; t < 20; ++t) {
            try {
                const int k = rng.below(int(P.points.size()));
                const SymbolSequence core = random_admissible_sequence(
                    cat, P, index, k, 0, N, sp.alpha, rng);
                const SymbolSequence a =
                    extend_window(cat, P, index, core, pad, sp.alpha, rng);
                const SymbolSequence b =
                    extend_window(cat, P, index, core, pad, sp.alpha, rng);
                validate_sequence(cat, P, a, sp.alpha);
                validate_sequence(cat, P, b, sp.alpha);
                const double d =
                    distance(theta(cat, a, P, sp), theta(cat, b, P, sp));
                expect(d < bound, "agreeing windows code too far apart");
            } catch (const std::exception& e) {
                expect(false, std::string("continuity pair failed: ") + e.what());
            }
        }
    }

    // Splice identity against the point bracket.
    {
        const int N = 20;
        Rng rng(109);
        for (int t = 0; t < 50; ++t) {
            const int k = rng.below(int(P.points.size()));
            const SymbolSequence a = random_admissible_sequence(
                cat, P, index, k, 0, N, sp.alpha, rng);
            const SymbolSequence b = random_admissible_sequence(
                cat, P, index, k, 0, N, sp.alpha, rng);
            const SymbolSequence c = sequence_bracket(a, b);
            const TorusPoint ta = theta(cat, a, P, sp);
            const TorusPoint tb = theta(cat, b, P, sp);
            const TorusPoint tc = theta(cat, c, P, sp);
            const TorusPoint br = detail::bracket_exact_linear(cat, 0, ta, tb, 0.1);
            expect(distance(tc, br) < 1e-7, "splice identity violated");
        }
    }
}

double markov_family_audit(const FamilySpec& f, double gamma,
                           std::uint64_t seed) {
    const auto t0 = Clock::now();
    const DenseSet P = dense_set(gamma, seed);

    // Admissibility wide enough for nearest-symbol codings: (L + 1) times the
    // covering radius, measured on a probe grid, with margin.
    detail::PointIndex index(P.points, gamma);
    double cover = 0.0;
    for (int i = 0; i < 160; ++i) {
        for (int j = 0; j < 160; ++j) {
            const TorusPoint p((i + 0.5) / 160, (j + 0.5) / 160);
            cover = std::max(
                cover, distance(P.points[std::size_t(index.nearest(p))], p));
        }
    }
    MarkovParams mp;
    mp.alpha = (sup_derivative_norm(f) + 1) * cover * 1.15;
    mp.build_alpha = mp.alpha;
    mp.beta = 2 * mp.alpha;
    mp.window_n = 20;
    mp.seed = seed;

    std::map<int, std::vector<Rectangle>> tr;
    for (int lvl = 0; lvl <= f.period(); ++lvl) {
        tr[lvl] = build_T_rectangles(f, lvl, P, mp, 0);
        for (auto& r : tr[lvl]) r.index = lvl;
    }
    const PartitionSequence part = refine(f, tr, mp);
    for (const auto& [lvl, st] : part.stats) {
        expect(std::abs(st.area_sum - 1.0) < 1e-6, "coverage defect above 1e-6");
        expect(st.max_pair_overlap < 1e-8, "interior overlap above 1e-8");
        expect(st.holes == 0, "refinement left holes");
    }
    const MarkovReport rep = check_markov(f, part, 500, seed, 1e-7);
    expect(rep.probes_used == 500, "checker starved of interior probes");
    expect(rep.violations == 0, "markov condition violated");
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void criterion_8_markov() {
    const double cat_secs = markov_family_audit(cat_family(), 0.06, 12345);
    expect(cat_secs < 60.0, "cat partition exceeded 60 s");
    const double shear_secs = markov_family_audit(shear_family(), 0.042, 12345);
    expect(shear_secs < 60.0, "shear partition exceeded 60 s");

    // Independent positive control: the classical eigen-segment partition.
    const PartitionSequence aw = adler_weiss_cat_partition(0, 1);
    const MarkovReport rep = check_markov(cat_family(), aw, 400, 17, 1e-7);
    expect(rep.probes_used == 400, "control checker starved");
    expect(rep.violations == 0, "classical partition rejected");
}

void criterion_9_negative_controls() {
    const FamilySpec id = FamilySpec::constant(MapSpec::linear({1, 0, 0, 1}));
    bool rejected = false;
    try {
        estimate_constants(id, 0, 0, 2, 6);
    } catch (const NotHyperbolic&) {
        rejected = true;
    }
    expect(rejected, "identity family not rejected");

    PartitionSequence aw = adler_weiss_cat_partition(0, 1);
    auto& faces = aw.levels.at(0);
    std::size_t big = 0;
    for (std::size_t i = 1; i < faces.size(); ++i)
        if (faces[i].s_width() * faces[i].u_width() >
            faces[big].s_width() * faces[big].u_width())
            big = i;
    faces[big].anchor = exp_map(faces[big].anchor, {0.05, 0.0});
    const MarkovReport rep = check_markov(cat_family(), aw, 400, 17, 1e-7);
    expect(rep.violations >= 1, "corrupted rectangle not detected");
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<void()> run;
        double budget_seconds;
    };
    const std::vector<Criterion> criteria{
        {"1 splitting oracle", criterion_1_splitting_oracle, 1.0},
        {"2 composition-law identity", criterion_2_composition_identity, 0.0},
        {"3 two-step shear collapse", criterion_3_two_step_collapse, 0.0},
        {"4 bracket contract", criterion_4_bracket_contract, 0.0},
        {"5 constructive shadowing", criterion_5_shadowing, 5.0},
        {"6 expansiveness", criterion_6_expansiveness, 0.0},
        {"7 theta coding", criterion_7_theta_coding, 0.0},
        {"8 markov partitions", criterion_8_markov, 0.0},
        {"9 negative controls", criterion_9_negative_controls, 0.0},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        checks_failed = 0;
        notes.clear();
        const auto t0 = Clock::now();
        try {
            c.run();
        } catch (const std::exception& e) {
            ++checks_failed;
            notes.push_back(std::string("exception: ") + e.what());
        }
        const double secs =
            std::chrono::duration<double>(Clock::now() - t0).count();
        if (c.budget_seconds > 0 && secs > c.budget_seconds) {
            ++checks_failed;
            notes.push_back("runtime budget exceeded");
        }
        const bool ok = checks_failed == 0;
        std::printf("[%s] criterion %-28s (%.2f s)\n", ok ? "PASS" : "FAIL",
                    c.name, secs);
        if (!ok) {
            ++failed;
            std::size_t shown = 0;
            for (const auto& n : notes) {
                std::printf("       - %s\n", n.c_str());
                if (++shown >= 5) {
                    std::printf("       - (%zu more)\n", notes.size() - shown);
                    break;
                }
            }
        }
    }
    std::printf("%d/9 criteria passed\n", 9 - failed);
    return failed == 0 ? 0 : 1;
}
