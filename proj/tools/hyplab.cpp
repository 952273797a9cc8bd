// hyplab: batch front door for the hyperbolic-family laboratory.
//
//   hyplab <command> --config <file> [--output-dir <dir>] [--seed <int>]
//
// Commands: analyze, manifold, bracket, shadow, markov, code. The config is a
// single JSON document; all randomness derives from its seed. Exit codes:
// 0 success, 2 config/validation failure, 3 solver failure.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "hyplab/aw_partition.hpp"
#include "hyplab/io.hpp"

namespace fs = std::filesystem;
using namespace hyplab;
using nlohmann::json;

namespace {

struct Run {
    FamilySpec family;
    json params;
    fs::path config_dir;
    fs::path out_dir;
    std::uint64_t seed = 1;
};

Run load_config(const std::string& config_path, const std::string& out_override,
                std::int64_t seed_override, const char* command,
                const std::vector<std::string>& allowed_params) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config file " + config_path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config parse error: " + std::string(e.what()));
    }
    io::expect_keys(doc, {"family", "command", "params", "output_dir", "seed"},
                    "config");
    if (!doc.contains("family"))
        throw ConfigError("config.family is required");
    if (doc.contains("command") && doc["command"] != command)
        throw ConfigError("config.command is '" +
                          doc["command"].get<std::string>() +
                          "' but the CLI was invoked with '" +
                          std::string(command) + "'");

    Run run;
    run.family = io::family_from_json(doc["family"]);
    run.params = doc.value("params", json::object());
    io::expect_keys(run.params, allowed_params, "config.params");
    run.config_dir = fs::absolute(config_path).parent_path();
    run.out_dir = out_override.empty()
                      ? fs::path(doc.value("output_dir", "."))
                      : fs::path(out_override);
    run.seed = doc.value("seed", std::uint64_t(1));
    if (seed_override >= 0) run.seed = std::uint64_t(seed_override);
    return run;
}

double num(const json& params, const char* key, double fallback) {
    if (!params.contains(key)) return fallback;
    if (!params[key].is_number())
        throw ConfigError(std::string("config.params.") + key +
                          " must be a number");
    return params[key].get<double>();
}

int inum(const json& params, const char* key, int fallback) {
    if (!params.contains(key)) return fallback;
    if (!params[key].is_number_integer())
        throw ConfigError(std::string("config.params.") + key +
                          " must be an integer");
    return params[key].get<int>();
}

double required_num(const json& params, const char* key) {
    if (!params.contains(key))
        throw ConfigError(std::string("config.params.") + key + " is required");
    return num(params, key, 0.0);
}

int run_analyze(const Run& run) {
    const int lo = run.params.contains("window")
                       ? run.params["window"][0].get<int>()
                       : run.family.window_lo;
    const int hi = run.params.contains("window")
                       ? run.params["window"][1].get<int>()
                       : run.family.window_hi;
    const int grid = inum(run.params, "grid", 8);
    const int depth = inum(run.params, "depth", 10);
    const HyperbolicityEstimate est =
        estimate_constants(run.family, lo, hi, grid, depth);
    const C2Certificate cert = c2_certificate(run.family);
    json out{{"estimate", io::to_json(est)}, {"c2_certificate", io::to_json(cert)}};
    io::atomic_write(run.out_dir / "analysis.json", out.dump(2) + "\n");
    return 0;
}

int run_manifold(const Run& run) {
    if (!run.params.contains("point"))
        throw ConfigError("config.params.point is required");
    const TorusPoint p =
        io::point_from_json(run.params["point"], "config.params.point");
    const std::string flavor_s = run.params.value("flavor", "");
    if (flavor_s != "stable" && flavor_s != "unstable")
        throw ConfigError("config.params.flavor must be 'stable' or 'unstable'");
    const Flavor flavor =
        flavor_s == "stable" ? Flavor::Stable : Flavor::Unstable;
    const LocalManifold m = local_manifold(
        run.family, inum(run.params, "index", 0), p, flavor,
        num(run.params, "epsilon", 0.05), inum(run.params, "depth", 40));
    io::atomic_write(run.out_dir / "manifold.csv", io::manifold_csv(m));
    return 0;
}

int run_bracket(const Run& run) {
    if (!run.params.contains("p") || !run.params.contains("q"))
        throw ConfigError("config.params.p and q are required");
    const TorusPoint p = io::point_from_json(run.params["p"], "config.params.p");
    const TorusPoint q = io::point_from_json(run.params["q"], "config.params.q");
    BracketParams bp;
    bp.epsilon = num(run.params, "epsilon", 0.05);
    bp.delta = num(run.params, "delta", 0.012);
    bp.alpha = num(run.params, "alpha", 0.2);
    bp.validate();
    if (run.params.value("calibrate", false))
        bp = calibrate_delta(run.family, bp, inum(run.params, "trials", 200),
                             run.seed);
    const TorusPoint b =
        bracket(run.family, inum(run.params, "index", 0), p, q, bp);
    json out{{"point", io::to_json(b)},
             {"params",
              {{"epsilon", bp.epsilon}, {"delta", bp.delta}, {"alpha", bp.alpha}}}};
    io::atomic_write(run.out_dir / "bracket.json", out.dump(2) + "\n");
    return 0;
}

int run_shadow(const Run& run) {
    if (!run.params.contains("pseudo_orbit"))
        throw ConfigError("config.params.pseudo_orbit is required");
    const fs::path po_path =
        run.config_dir / run.params["pseudo_orbit"].get<std::string>();
    const double beta = required_num(run.params, "beta");

    BracketParams bp;
    bp.epsilon = num(run.params, "epsilon", 0.05);
    bp.delta = num(run.params, "delta", 0.0124);
    bp.validate();
    const HyperbolicityEstimate est = estimate_constants(
        run.family, run.family.window_lo, run.family.window_hi,
        inum(run.params, "grid", 4), inum(run.params, "depth", 8));
    const ShadowParams sp = choose_params(run.family, beta, est, bp,
                                          inum(run.params, "trials", 200),
                                          run.seed);

    std::ifstream in(po_path);
    if (!in) throw ConfigError("cannot open pseudo-orbit file " + po_path.string());
    const PseudoOrbit po = io::pseudo_orbit_from_csv(in, run.family, sp.alpha);
    const ShadowResult res = shadow(run.family, po, sp);

    json out = io::to_json(res);
    out["params"] = {{"beta", sp.beta},   {"epsilon1", sp.epsilon1},
                     {"eta", sp.eta},     {"delta", sp.delta},
                     {"alpha", sp.alpha}, {"lambda", sp.lambda}};
    io::atomic_write(run.out_dir / "shadow_result.json", out.dump(2) + "\n");
    io::atomic_write(run.out_dir / "per_step.csv",
                     io::per_step_csv(res, po.start_index));
    return 0;
}

PartitionSequence build_partition(const Run& run, MarkovParams& mp) {
    const double gamma = required_num(run.params, "gamma");
    mp.alpha = required_num(run.params, "alpha");
    mp.beta = required_num(run.params, "beta");
    mp.build_alpha = num(run.params, "build_alpha", mp.alpha);
    mp.window_n = inum(run.params, "N", 20);
    mp.check_tol = num(run.params, "check_tol", 1e-7);
    mp.seed = run.seed;

    const DenseSet P = dense_set(gamma, run.seed);
    const int budget = inum(run.params, "sample_budget", 0);
    std::map<int, std::vector<Rectangle>> tr;
    for (int lvl = 0; lvl <= run.family.period(); ++lvl) {
        tr[lvl] = build_T_rectangles(run.family, lvl, P, mp, budget);
        for (auto& r : tr[lvl]) r.index = lvl;
    }
    return refine(run.family, tr, mp);
}

int run_markov(const Run& run, bool with_matrices) {
    MarkovParams mp;
    const PartitionSequence part = build_partition(run, mp);
    const MarkovReport rep =
        check_markov(run.family, part, inum(run.params, "probes", 500),
                     run.seed, mp.check_tol);

    io::atomic_write(run.out_dir / "partition.json",
                     io::to_json(part).dump() + "\n");
    io::atomic_write(run.out_dir / "partition.svg",
                     io::partition_svg(run.family, part, 0));
    io::atomic_write(run.out_dir / "markov_report.json",
                     io::to_json(rep).dump(2) + "\n");
    if (with_matrices) {
        if (rep.violations > 0)
            throw Error("markov check reported " +
                        std::to_string(rep.violations) +
                        " violations; refusing to emit transition matrices");
        const TransitionMatrixSequence tm = transition_matrices(run.family, part);
        io::atomic_write(run.out_dir / "matrices.json",
                         io::to_json(tm).dump() + "\n");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"numerical laboratory for non-stationary hyperbolic "
                 "families on the 2-torus"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::int64_t seed_override = -1;

    struct Cmd {
        const char* name;
        const char* help;
        std::vector<std::string> params;
    };
    const std::vector<Cmd> commands{
        {"analyze", "hyperbolicity estimate and C2 certificate",
         {"window", "grid", "depth"}},
        {"manifold", "sample a local stable/unstable manifold graph",
         {"index", "point", "flavor", "epsilon", "depth"}},
        {"bracket", "one-shot canonical-coordinates evaluation",
         {"index", "p", "q", "epsilon", "delta", "alpha", "calibrate", "trials"}},
        {"shadow", "shadow a pseudo-orbit file",
         {"pseudo_orbit", "beta", "epsilon", "delta", "grid", "depth", "trials"}},
        {"markov", "build and audit a Markov partition",
         {"gamma", "alpha", "beta", "build_alpha", "N", "sample_budget",
          "probes", "check_tol"}},
        {"code", "markov plus transition-matrix export",
         {"gamma", "alpha", "beta", "build_alpha", "N", "sample_budget",
          "probes", "check_tol"}},
    };
    for (const Cmd& c : commands) {
        CLI::App* sub = app.add_subcommand(c.name, c.help);
        sub->add_option("--config", config_path, "JSON run configuration")
            ->required();
        sub->add_option("--output-dir", out_dir, "output directory override");
        sub->add_option("--seed", seed_override, "seed override");
    }

    CLI11_PARSE(app, argc, argv);
    const std::string cmd = app.get_subcommands().front()->get_name();

    try {
        const Cmd& c = *std::find_if(commands.begin(), commands.end(),
                                     [&](const Cmd& k) { return cmd == k.name; });
        const Run run =
            load_config(config_path, out_dir, seed_override, c.name, c.params);
        if (cmd == "analyze") return run_analyze(run);
        if (cmd == "manifold") return run_manifold(run);
        if (cmd == "bracket") return run_bracket(run);
        if (cmd == "shadow") return run_shadow(run);
        if (cmd == "markov") return run_markov(run, false);
        if (cmd == "code") return run_markov(run, true);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
