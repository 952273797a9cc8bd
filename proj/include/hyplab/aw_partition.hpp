#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "hyplab/markov.hpp"

namespace hyplab {

// Classical eigen-segment partition of the torus for the cat matrix: one
// unstable and one stable segment through the fixed point 0, sized so that
// every segment endpoint lands on a lattice translate of the other segment.
// The faces of the resulting fence are proper rectangles; the fence lies on
// invariant eigenlines through a fixed point, so stable boundaries map into
// stable boundaries and unstable boundaries pull back into unstable ones,
// which is exactly the Markov property of the face partition.
//
// Coordinates below: xi along the unstable eigenvector, eta along the stable
// one (an orthonormal frame since the matrix is symmetric). Candidate
// segment lengths come from small lattice vectors; the first fence whose
// face enumeration tiles the torus wins.
inline std::vector<Rectangle> adler_weiss_cat_rectangles() {
    const FamilySpec cat = cat_family();
    const Splitting fr = splitting_at(cat, 0, {0.1234, 0.5678}, 60);
    const auto xi_of = [&](double ax, double ay) {
        return ax * fr.e_u.dx + ay * fr.e_u.dy;
    };
    const auto eta_of = [&](double ax, double ay) {
        return ax * fr.e_s.dx + ay * fr.e_s.dy;
    };

    // Endpoint candidates: placing a U-endpoint at xi = xi(w) requires
    // eta = -eta(w) to lie on the stable segment, and symmetrically.
    struct Cand {
        double value, partner;
    };
    std::vector<Cand> upos, uneg, spos, sneg;
    for (int a = -3; a <= 3; ++a) {
        for (int b = -3; b <= 3; ++b) {
            if (a == 0 && b == 0) continue;
            const double xi = xi_of(a, b), eta = eta_of(a, b);
            if (xi > 1e-12) upos.push_back({xi, -eta});
            if (xi < -1e-12) uneg.push_back({xi, -eta});
            if (eta > 1e-12) spos.push_back({eta, -xi});
            if (eta < -1e-12) sneg.push_back({eta, -xi});
        }
    }
    const auto by_mag = [](const Cand& l, const Cand& r) {
        return std::abs(l.value) < std::abs(r.value);
    };
    std::sort(upos.begin(), upos.end(), by_mag);
    std::sort(uneg.begin(), uneg.end(), by_mag);
    std::sort(spos.begin(), spos.end(), by_mag);
    std::sort(sneg.begin(), sneg.end(), by_mag);
    const auto in = [](double t, double lo, double hi) {
        return t >= lo - 1e-12 && t <= hi + 1e-12;
    };

    struct Quad {
        double un, up, sn, sp, len;
    };
    std::vector<Quad> quads;
    const std::size_t limit = 10;
    for (std::size_t iu = 0; iu < std::min(limit, upos.size()); ++iu)
        for (std::size_t ju = 0; ju < std::min(limit, uneg.size()); ++ju)
            for (std::size_t is = 0; is < std::min(limit, spos.size()); ++is)
                for (std::size_t js = 0; js < std::min(limit, sneg.size()); ++js) {
                    const double u1 = upos[iu].value, u0 = uneg[ju].value;
                    const double s1 = spos[is].value, s0 = sneg[js].value;
                    if (!in(upos[iu].partner, s0, s1)) continue;
                    if (!in(uneg[ju].partner, s0, s1)) continue;
                    if (!in(spos[is].partner, u0, u1)) continue;
                    if (!in(sneg[js].partner, u0, u1)) continue;
                    quads.push_back({u0, u1, s0, s1, (u1 - u0) + (s1 - s0)});
                }
    std::sort(quads.begin(), quads.end(),
              [](const Quad& a, const Quad& b) { return a.len < b.len; });

    for (const Quad& q : quads) {
        // Wall network: lattice translates of the two fence segments.
        struct Wall {
            double at, lo, hi;
        };
        std::vector<Wall> vwalls, hwalls;
        for (int a = -5; a <= 5; ++a) {
            for (int b = -5; b <= 5; ++b) {
                const double xi = xi_of(a, b), eta = eta_of(a, b);
                vwalls.push_back({xi, eta + q.sn, eta + q.sp});
                hwalls.push_back({eta, xi + q.un, xi + q.up});
            }
        }

        // Ray-shoot the four walls around (x, y), then validate that the box
        // is a genuine arrangement face: edges covered, interior untouched.
        const auto face_of = [&](double x, double y, double& xlo, double& xhi,
                                 double& ylo, double& yhi) -> bool {
            xlo = -1e300;
            xhi = 1e300;
            for (const Wall& w : vwalls) {
                if (w.lo > y || w.hi < y) continue;
                if (w.at <= x) xlo = std::max(xlo, w.at);
                if (w.at > x) xhi = std::min(xhi, w.at);
            }
            ylo = -1e300;
            yhi = 1e300;
            for (const Wall& w : hwalls) {
                if (w.lo > x || w.hi < x) continue;
                if (w.at <= y) ylo = std::max(ylo, w.at);
                if (w.at > y) yhi = std::min(yhi, w.at);
            }
            if (xlo < -2 || xhi > 2 || ylo < -2 || yhi > 2) return false;

            // Edge coverage.
            const auto edge_covered = [&](const std::vector<Wall>& walls,
                                          double at, double lo, double hi) {
                for (const Wall& w : walls)
                    if (std::abs(w.at - at) < 1e-12 && w.lo <= lo + 1e-12 &&
                        w.hi >= hi - 1e-12)
                        return true;
                return false;
            };
            if (!edge_covered(vwalls, xlo, ylo, yhi)) return false;
            if (!edge_covered(vwalls, xhi, ylo, yhi)) return false;
            if (!edge_covered(hwalls, ylo, xlo, xhi)) return false;
            if (!edge_covered(hwalls, yhi, xlo, xhi)) return false;

            // No wall may cross the interior.
            for (const Wall& w : vwalls)
                if (w.at > xlo + 1e-12 && w.at < xhi - 1e-12 &&
                    w.lo < yhi - 1e-12 && w.hi > ylo + 1e-12)
                    return false;
            for (const Wall& w : hwalls)
                if (w.at > ylo + 1e-12 && w.at < yhi - 1e-12 &&
                    w.lo < xhi - 1e-12 && w.hi > xlo + 1e-12)
                    return false;
            return true;
        };

        std::map<detail::AtomKey, Rectangle> faces;
        double area = 0.0;
        bool bad = false;
        for (int gx = 0; gx < 96 && !bad && area < 1.0 - 1e-9; ++gx) {
            for (int gy = 0; gy < 96 && !bad && area < 1.0 - 1e-9; ++gy) {
                const double px = (gx + 0.382) / 96.0, py = (gy + 0.618) / 96.0;
                const double x = xi_of(px, py), y = eta_of(px, py);
                double xlo, xhi, ylo, yhi;
                if (!face_of(x, y, xlo, xhi, ylo, yhi)) {
                    bad = true;
                    break;
                }
                const double cx = 0.5 * (xlo + xhi), cy = 0.5 * (ylo + yhi);
                // Back to torus coordinates: p = xi e_u + eta e_s.
                const TorusPoint center(cx * fr.e_u.dx + cy * fr.e_s.dx,
                                        cx * fr.e_u.dy + cy * fr.e_s.dy);
                Rectangle rect;
                rect.index = 0;
                rect.anchor = center;
                rect.s_lo = -(yhi - ylo) / 2;
                rect.s_hi = (yhi - ylo) / 2;
                rect.u_lo = -(xhi - xlo) / 2;
                rect.u_hi = (xhi - xlo) / 2;
                const detail::AtomKey key =
                    detail::atom_key(center, rect.s_width(), rect.u_width());
                if (faces.count(key)) continue;
                faces.emplace(key, rect);
                area += rect.s_width() * rect.u_width();
                if (faces.size() > 16) {
                    bad = true;
                    break;
                }
            }
        }
        if (bad || std::abs(area - 1.0) > 1e-9) continue;

        std::vector<Rectangle> out;
        int sym = 0;
        for (auto& [k, rect] : faces) {
            rect.symbol = sym++;
            out.push_back(rect);
        }
        return out;
    }
    throw std::logic_error("no eigen-segment fence tiles the torus");
}

// The face partition replicated on the requested levels of the constant cat
// family.
inline PartitionSequence adler_weiss_cat_partition(int level_lo = 0,
                                                   int level_hi = 1) {
    const std::vector<Rectangle> faces = adler_weiss_cat_rectangles();
    PartitionSequence part;
    for (int lvl = level_lo; lvl <= level_hi; ++lvl) {
        std::vector<Rectangle> copy = faces;
        for (auto& r : copy) r.index = lvl;
        double area = 0.0;
        for (const auto& r : copy) area += r.s_width() * r.u_width();
        part.levels[lvl] = std::move(copy);
        part.stats[lvl] = LevelStats{area, 0.0, 0};
        part.max_cardinality =
            std::max(part.max_cardinality, int(part.levels[lvl].size()));
    }
    return part;
}

}  // namespace hyplab
