#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "hyplab/hyperbolicity.hpp"
#include "hyplab/markov.hpp"
#include "hyplab/shadowing.hpp"

namespace hyplab {

using nlohmann::json;

// Configuration and schema problems; the CLI maps these to exit code 2.
struct ConfigError : std::invalid_argument {
    explicit ConfigError(const std::string& what)
        : std::invalid_argument(what) {}
};

namespace io {

// ---------------------------------------------------------------------------
// JSON: family specifications (shape is normative for the CLI)
// ---------------------------------------------------------------------------

inline json to_json(const MapSpec& m) {
    json j;
    j["kind"] = m.kind == MapSpec::Kind::LinearToral ? "linear" : "perturbed";
    j["matrix"] = {{m.matrix.a, m.matrix.b}, {m.matrix.c, m.matrix.d}};
    if (m.kind == MapSpec::Kind::PerturbedLinear) {
        j["amplitude"] = m.amplitude;
        j["mode"] = {m.mode[0], m.mode[1]};
        j["phase"] = m.phase;
    }
    return j;
}

inline json to_json(const FamilySpec& f) {
    json j;
    j["pattern"] = json::array();
    for (const auto& m : f.pattern) j["pattern"].push_back(to_json(m));
    j["extension"] =
        f.extension == Extension::Periodic ? "periodic" : "constant_tails";
    j["window"] = {f.window_lo, f.window_hi};
    return j;
}

inline void expect_keys(const json& j, const std::vector<std::string>& allowed,
                        const std::string& path) {
    for (const auto& [key, val] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError("unknown key '" + path + "." + key + "'");
    }
}

inline MapSpec map_from_json(const json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path + " must be an object");
    expect_keys(j, {"kind", "matrix", "amplitude", "mode", "phase"}, path);
    if (!j.contains("kind") || !j["kind"].is_string())
        throw ConfigError(path + ".kind must be a string");
    const std::string kind = j["kind"];
    if (!j.contains("matrix") || !j["matrix"].is_array() ||
        j["matrix"].size() != 2 || !j["matrix"][0].is_array() ||
        j["matrix"][0].size() != 2 || j["matrix"][1].size() != 2)
        throw ConfigError(path + ".matrix must be a 2x2 integer array");
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c)
            if (!j["matrix"][std::size_t(r)][std::size_t(c)].is_number_integer())
                throw ConfigError(path + ".matrix[" + std::to_string(r) + "][" +
                                  std::to_string(c) + "] must be an integer");
    const IMat2 mat{j["matrix"][0][0].get<std::int64_t>(),
                    j["matrix"][0][1].get<std::int64_t>(),
                    j["matrix"][1][0].get<std::int64_t>(),
                    j["matrix"][1][1].get<std::int64_t>()};
    try {
        if (kind == "linear") {
            return MapSpec::linear(mat);
        } else if (kind == "perturbed") {
            if (!j.contains("amplitude") || !j["amplitude"].is_number())
                throw ConfigError(path + ".amplitude must be a number");
            if (!j.contains("mode") || !j["mode"].is_array() ||
                j["mode"].size() != 2)
                throw ConfigError(path + ".mode must be an integer pair");
            const double phase = j.value("phase", 0.0);
            return MapSpec::perturbed(
                mat, j["amplitude"].get<double>(),
                {j["mode"][0].get<std::int64_t>(), j["mode"][1].get<std::int64_t>()},
                phase);
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path + ": " + e.what());
    }
    throw ConfigError(path + ".kind must be 'linear' or 'perturbed'");
}

inline FamilySpec family_from_json(const json& j,
                                   const std::string& path = "family") {
    if (!j.is_object()) throw ConfigError(path + " must be an object");
    expect_keys(j, {"pattern", "extension", "window"}, path);
    if (!j.contains("pattern") || !j["pattern"].is_array() ||
        j["pattern"].empty())
        throw ConfigError(path + ".pattern must be a nonempty array");
    FamilySpec f;
    for (std::size_t k = 0; k < j["pattern"].size(); ++k)
        f.pattern.push_back(map_from_json(
            j["pattern"][k], path + ".pattern[" + std::to_string(k) + "]"));
    const std::string ext = j.value("extension", "periodic");
    if (ext == "periodic")
        f.extension = Extension::Periodic;
    else if (ext == "constant_tails")
        f.extension = Extension::ConstantTails;
    else
        throw ConfigError(path + ".extension must be 'periodic' or "
                          "'constant_tails'");
    if (j.contains("window")) {
        if (!j["window"].is_array() || j["window"].size() != 2)
            throw ConfigError(path + ".window must be [lo, hi]");
        f.window_lo = j["window"][0].get<int>();
        f.window_hi = j["window"][1].get<int>();
    } else {
        f.window_lo = 0;
        f.window_hi = int(f.pattern.size()) - 1;
    }
    try {
        f.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return f;
}

// ---------------------------------------------------------------------------
// JSON: results
// ---------------------------------------------------------------------------

inline json to_json(const TorusPoint& p) { return json::array({p.x, p.y}); }

inline TorusPoint point_from_json(const json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw ConfigError(path + " must be [x, y]");
    return TorusPoint(j[0].get<double>(), j[1].get<double>());
}

inline json to_json(const HyperbolicityEstimate& e) {
    return json{{"lambda", e.lambda},
                {"c", e.c},
                {"angle_inf", e.angle_inf},
                {"window", {e.window_lo, e.window_hi}},
                {"sample_count", e.sample_count}};
}

inline HyperbolicityEstimate estimate_from_json(const json& j) {
    HyperbolicityEstimate e;
    e.lambda = j.at("lambda").get<double>();
    e.c = j.at("c").get<double>();
    e.angle_inf = j.at("angle_inf").get<double>();
    e.window_lo = j.at("window")[0].get<int>();
    e.window_hi = j.at("window")[1].get<int>();
    e.sample_count = j.at("sample_count").get<long long>();
    return e;
}

inline json to_json(const C2Certificate& c) {
    return json{{"sup_norm", c.sup_norm}, {"is_member", c.is_member}};
}

inline json to_json(const ShadowResult& r) {
    return json{{"shadow_point", to_json(r.shadow_point)},
                {"max_error", r.max_error},
                {"per_step_error", r.per_step_error}};
}

inline ShadowResult shadow_result_from_json(const json& j) {
    ShadowResult r;
    r.shadow_point = point_from_json(j.at("shadow_point"), "shadow_point");
    r.max_error = j.at("max_error").get<double>();
    r.per_step_error = j.at("per_step_error").get<std::vector<double>>();
    return r;
}

inline json to_json(const Rectangle& r) {
    json poly = json::array();
    for (const auto& v : r.boundary()) poly.push_back({v[0], v[1]});
    return json{{"index", r.index},        {"symbol", r.symbol},
                {"anchor", to_json(r.anchor)}, {"s_extent", {r.s_lo, r.s_hi}},
                {"u_extent", {r.u_lo, r.u_hi}}, {"polygon", poly}};
}

inline json to_json(const PartitionSequence& p) {
    json levels = json::object();
    for (const auto& [lvl, rects] : p.levels) {
        json arr = json::array();
        for (const auto& r : rects) arr.push_back(to_json(r));
        levels[std::to_string(lvl)] = std::move(arr);
    }
    json stats = json::object();
    for (const auto& [lvl, st] : p.stats)
        stats[std::to_string(lvl)] = {{"area_sum", st.area_sum},
                                      {"max_pair_overlap", st.max_pair_overlap},
                                      {"holes", st.holes}};
    return json{{"levels", std::move(levels)},
                {"max_cardinality", p.max_cardinality},
                {"stats", std::move(stats)}};
}

inline json to_json(const TransitionMatrixSequence& t) {
    json mats = json::object();
    for (const auto& [lvl, m] : t.matrices) {
        mats[std::to_string(lvl)] = {{"rows", m.rows},
                                     {"cols", m.cols},
                                     {"row_ones", m.row_ones}};
    }
    return json{{"matrices", std::move(mats)}};
}

inline json to_json(const MarkovReport& r) {
    return json{{"probes_attempted", r.probes_attempted},
                {"probes_used", r.probes_used},
                {"violations", r.violations},
                {"worst_defect", r.worst_defect}};
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline std::string pseudo_orbit_csv(const PseudoOrbit& po) {
    std::string out = "index,x,y\n";
    char buf[96];
    for (std::size_t k = 0; k < po.points.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n",
                      po.start_index + int(k), po.points[k].x, po.points[k].y);
        out += buf;
    }
    return out;
}

// Parses "index,x,y" rows; the claimed jump bound comes from the caller.
inline PseudoOrbit pseudo_orbit_from_csv(std::istream& in,
                                         const FamilySpec& f, double alpha) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("index", 0) != 0)
        throw ConfigError("pseudo-orbit CSV must start with an index,x,y header");
    std::vector<TorusPoint> pts;
    int start = 0;
    int expected = 0;
    bool first = true;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        int idx;
        double x, y;
        if (std::sscanf(line.c_str(), "%d,%lf,%lf", &idx, &x, &y) != 3)
            throw ConfigError("pseudo-orbit CSV line " + std::to_string(lineno) +
                              " is not 'index,x,y'");
        if (first) {
            start = idx;
            expected = idx;
            first = false;
        }
        if (idx != expected)
            throw ConfigError("pseudo-orbit CSV line " + std::to_string(lineno) +
                              " breaks the index sequence");
        ++expected;
        pts.emplace_back(x, y);
    }
    if (pts.empty()) throw ConfigError("pseudo-orbit CSV has no rows");
    return validate_pseudo_orbit(f, start, std::move(pts), alpha);
}

inline std::string manifold_csv(const LocalManifold& m) {
    std::string out = "s,transverse\n";
    char buf[80];
    for (int j = 0; j < LocalManifold::kNodes; ++j) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", m.node(j),
                      m.offsets[std::size_t(j)]);
        out += buf;
    }
    return out;
}

inline std::string per_step_csv(const ShadowResult& r, int start_index) {
    std::string out = "index,error\n";
    char buf[64];
    for (std::size_t k = 0; k < r.per_step_error.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%d,%.17g\n", start_index + int(k),
                      r.per_step_error[k]);
        out += buf;
    }
    return out;
}

// ---------------------------------------------------------------------------
// SVG: partition polygons as static plot data
// ---------------------------------------------------------------------------

inline std::string partition_svg(const FamilySpec& f,
                                 const PartitionSequence& part, int level) {
    const Splitting fr = splitting_at(f, level, {0.1234, 0.5678}, 60);
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 1 1\" "
           "width=\"800\" height=\"800\">\n";
    svg << "<rect width=\"1\" height=\"1\" fill=\"white\"/>\n";
    int idx = 0;
    for (const auto& r : part.levels.at(level)) {
        const int hue = (idx * 47) % 360;
        for (int m = -1; m <= 1; ++m) {
            for (int n = -1; n <= 1; ++n) {
                // Emit only the wrap copies that reach the viewBox.
                double xlo = 2, xhi = -2, ylo = 2, yhi = -2;
                std::array<std::array<double, 2>, 4> pts{};
                int c = 0;
                for (const auto& v : r.boundary()) {
                    const TorusVector w = fr.recompose(v[0], v[1]);
                    const double px = r.anchor.x + w.dx + m;
                    const double py = 1.0 - (r.anchor.y + w.dy + n);
                    pts[std::size_t(c++)] = {px, py};
                    xlo = std::min(xlo, px);
                    xhi = std::max(xhi, px);
                    ylo = std::min(ylo, py);
                    yhi = std::max(yhi, py);
                }
                if (xhi < 0 || xlo > 1 || yhi < 0 || ylo > 1) continue;
                svg << "<polygon points=\"";
                for (const auto& v : pts) {
                    char buf[64];
                    std::snprintf(buf, sizeof buf, "%.6f,%.6f ", v[0], v[1]);
                    svg << buf;
                }
                svg << "\" fill=\"hsl(" << hue
                    << ",70%,60%)\" fill-opacity=\"0.8\" stroke=\"black\" "
                       "stroke-width=\"0.0005\"/>\n";
            }
        }
        ++idx;
    }
    svg << "</svg>\n";
    return svg.str();
}

// ---------------------------------------------------------------------------
// Atomic file output
// ---------------------------------------------------------------------------

inline void atomic_write(const std::filesystem::path& path,
                         const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace io
}  // namespace hyplab
