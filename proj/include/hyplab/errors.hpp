#pragma once

#include <stdexcept>
#include <string>

namespace hyplab {

// Base class for all solver/domain failures. Precondition violations on
// caller-supplied arguments throw std::invalid_argument instead, so the CLI
// can map the two families to distinct exit codes.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct NormTooLarge : Error {
    double norm;
    explicit NormTooLarge(double n)
        : Error("tangent vector norm " + std::to_string(n) +
                " exceeds the injectivity radius 0.5"),
          norm(n) {}
};

struct TooFarApart : Error {
    double dist;
    explicit TooFarApart(double d)
        : Error("points at distance " + std::to_string(d) +
                " are too far apart for this operation"),
          dist(d) {}
};

struct NoConvergence : Error {
    int iterations;
    explicit NoConvergence(int iters, const std::string& ctx = "iteration")
        : Error(ctx + " failed to converge after " + std::to_string(iters) +
                " iterations"),
          iterations(iters) {}
};

struct DepthInsufficient : Error {
    explicit DepthInsufficient(double angle)
        : Error("forward/backward iterates separate directions only by angle " +
                std::to_string(angle)) {}
};

struct NotHyperbolic : Error {
    explicit NotHyperbolic(const std::string& why)
        : Error("family is not uniformly hyperbolic on the sample: " + why) {}
};

struct EpsilonTooLarge : Error {
    explicit EpsilonTooLarge(const std::string& why)
        : Error("manifold radius too large: " + why) {}
};

struct NotOnManifold : Error {
    double transverse;
    explicit NotOnManifold(double t)
        : Error("point lies at transverse distance " + std::to_string(t) +
                " from the manifold"),
          transverse(t) {}
};

struct NoIntersection : Error {
    explicit NoIntersection(const std::string& why)
        : Error("bracket iteration found no intersection: " + why) {}
};

struct CalibrationFailed : Error {
    explicit CalibrationFailed(double delta)
        : Error("delta underflowed " + std::to_string(delta) +
                " without a successful calibration round") {}
};

struct JumpTooLarge : Error {
    int index;
    double measured;
    JumpTooLarge(int idx, double d)
        : Error("pseudo-orbit jump at index " + std::to_string(idx) + " is " +
                std::to_string(d) + ", above the claimed bound"),
          index(idx),
          measured(d) {}
};

struct ParamsInfeasible : Error {
    explicit ParamsInfeasible(const std::string& why)
        : Error("shadowing parameter chain infeasible: " + why) {}
};

struct BracketFailed : Error {
    int step;
    explicit BracketFailed(int k, const std::string& why = "")
        : Error("bracket step " + std::to_string(k) +
                " left its neighborhood" + (why.empty() ? "" : ": " + why)),
          step(k) {}
};

struct BetaExceeded : Error {
    double max_error;
    explicit BetaExceeded(double e)
        : Error("shadowing finished but max error " + std::to_string(e) +
                " exceeds beta"),
          max_error(e) {}
};

struct NotLinear : Error {
    NotLinear() : Error("operation requires a purely linear-toral family") {}
};

struct InvalidGap : Error {
    explicit InvalidGap(double gap)
        : Error("expansiveness gap eta^-1 - zeta = " + std::to_string(gap) +
                " is not positive"),
          gap(gap) {}
    double gap;
};

struct SymbolMismatch : Error {
    SymbolMismatch() : Error("sequences disagree at relative position 0") {}
};

struct RefinementExplosion : Error {
    explicit RefinementExplosion(std::size_t count, std::size_t cap)
        : Error("refinement produced " + std::to_string(count) +
                " pieces on one level, above the cap " + std::to_string(cap)) {}
};

}  // namespace hyplab
