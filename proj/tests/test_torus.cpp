#include <catch2/catch_amalgamated.hpp>

#include "hyplab/rng.hpp"
#include "hyplab/torus.hpp"

using namespace hyplab;

namespace {

// Independent oracle: brute force over the 9 integer shifts.
double distance_oracle(const TorusPoint& p, const TorusPoint& q) {
    double best = 1e300;
    for (int m = -1; m <= 1; ++m)
        for (int n = -1; n <= 1; ++n)
            best = std::min(best, std::hypot(q.x + m - p.x, q.y + n - p.y));
    return best;
}

}  // namespace

TEST_CASE("canonical representative") {
    CHECK(TorusPoint(1.0, -0.25).x == 0.0);
    CHECK(TorusPoint(1.0, -0.25).y == 0.75);
    CHECK(TorusPoint(2.5, 3.75).x == 0.5);
    // Values a hair under 1.0 snap to 0 so orbits cannot drift representatives.
    CHECK(TorusPoint(1.0 - 1e-16, 0.0).x == 0.0);
    CHECK(TorusPoint(0.0, -1e-16).y == 0.0);
}

TEST_CASE("distance basics") {
    CHECK(distance({0, 0}, {0, 0}) == 0.0);
    CHECK(distance({0.9, 0.0}, {0.1, 0.0}) == Catch::Approx(0.2).margin(1e-15));
    CHECK(distance({0.5, 0.5}, {0.0, 0.0}) ==
          Catch::Approx(0.7071067811865476).margin(1e-15));
}

TEST_CASE("distance equals the 9-shift oracle and is symmetric") {
    Rng rng(7);
    for (int t = 0; t < 2000; ++t) {
        const TorusPoint p = rng.point(), q = rng.point();
        const double d = distance(p, q);
        CHECK(d == Catch::Approx(distance_oracle(p, q)).margin(1e-14));
        CHECK(d == Catch::Approx(distance(q, p)).margin(1e-14));
        CHECK(d <= 0.7071067811865476 + 1e-12);
    }
}

TEST_CASE("distance is invariant under integer translation of lifts") {
    Rng rng(8);
    for (int t = 0; t < 500; ++t) {
        const TorusPoint p = rng.point(), q = rng.point();
        const TorusPoint ps(p.x + rng.below(5) - 2, p.y + rng.below(5) - 2);
        CHECK(distance(p, q) == Catch::Approx(distance(ps, q)).margin(1e-14));
    }
}

TEST_CASE("triangle inequality on random triples") {
    Rng rng(9);
    for (int t = 0; t < 1000; ++t) {
        const TorusPoint a = rng.point(), b = rng.point(), c = rng.point();
        CHECK(distance(a, c) <= distance(a, b) + distance(b, c) + 1e-12);
    }
}

TEST_CASE("exp basics") {
    const TorusPoint p = exp_map({0.2, 0.3}, {0, 0});
    CHECK(p.x == 0.2);
    CHECK(p.y == 0.3);

    const TorusPoint q = exp_map({0.9, 0.9}, {0.2, 0.2});
    CHECK(q.x == Catch::Approx(0.1).margin(1e-15));
    CHECK(q.y == Catch::Approx(0.1).margin(1e-15));

    CHECK_THROWS_AS(exp_map({0, 0}, {0.6, 0}), NormTooLarge);
    CHECK_THROWS_AS(exp_map({0, 0}, {0.5, 0}), NormTooLarge);
}

TEST_CASE("exp moves by exactly the vector norm") {
    Rng rng(10);
    for (int t = 0; t < 500; ++t) {
        const TorusPoint p = rng.point();
        const TorusVector v = rng.in_ball(0.499);
        CHECK(distance(exp_map(p, v), p) == Catch::Approx(v.norm()).margin(1e-12));
    }
}

TEST_CASE("log basics") {
    const TorusPoint p{0.37, 0.81};
    const TorusVector z = log_map(p, p);
    CHECK(z.dx == 0.0);
    CHECK(z.dy == 0.0);

    const TorusVector v = log_map({0.9, 0}, {0.1, 0});
    CHECK(v.dx == Catch::Approx(0.2).margin(1e-15));
    CHECK(v.dy == 0.0);

    CHECK_THROWS_AS(log_map({0, 0}, {0.5, 0.5}), TooFarApart);
}

TEST_CASE("exp and log are inverse on the injectivity domain") {
    Rng rng(11);
    for (int t = 0; t < 1000; ++t) {
        const TorusPoint p = rng.point();
        const TorusVector v = rng.in_ball(0.49);
        const TorusPoint q = exp_map(p, v);
        const TorusVector w = log_map(p, q);
        CHECK(w.dx == Catch::Approx(v.dx).margin(1e-12));
        CHECK(w.dy == Catch::Approx(v.dy).margin(1e-12));
        const TorusPoint r = exp_map(p, w);
        CHECK(distance(r, q) < 1e-12);
    }
}

TEST_CASE("half-integer tie picks the positive representative") {
    CHECK(wrap_half(0.5) == 0.5);
    CHECK(wrap_half(-0.5) == 0.5);
    CHECK(wrap_half(1.5) == 0.5);
}
