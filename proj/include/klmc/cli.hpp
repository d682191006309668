#pragma once

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "klmc/config.hpp"
#include "klmc/coupling.hpp"
#include "klmc/error.hpp"
#include "klmc/harness.hpp"
#include "klmc/integrators.hpp"
#include "klmc/io.hpp"
#include "klmc/meanfield.hpp"
#include "klmc/metric.hpp"

namespace klmc {

enum ExitCode : int { exit_ok = 0, exit_failure = 1, exit_config = 2, exit_refused = 3 };

struct CliOptions {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::uint64_t> replicas;
    bool strict = false;
    bool json = false;
    std::string prop = "bu";
    std::size_t samples = 10000;
    std::string which = "all";
};

/// Figure presets: BU scheme, both couplings, one curve per friction value.
inline const char* banana_figure_preset() {
    return R"(
[potential]
kind = "banana"

[scheme]
name = "BU"
h = 0.02
gamma = 1.0
n_steps = 15000
stride = 50

[coupling]
mode = "reflection"

[init]
xa = [4.0, 16.0]
va = [0.0, 0.0]
xb = [-4.0, 16.0]
vb = [0.0, 0.0]

[experiment]
seed = 2024
replicas = 10000
gammas = [0.5, 1.0, 2.0, 4.0]
out = "out"
)";
}

inline const char* gmm_figure_preset() {
    return R"(
[potential]
kind = "gmm"
sigma = 0.5
means = [[1.0, 1.0], [2.2, 1.5], [3.3, 2.2], [4.1, 3.2], [4.6, 4.4],
         [5.2, 5.6], [6.0, 6.6], [7.0, 7.4], [8.1, 8.0], [9.0, 9.0]]

[scheme]
name = "BU"
h = 0.02
gamma = 1.0
n_steps = 15000
stride = 50

[coupling]
mode = "reflection"

[init]
xa = [1.0, 1.0]
va = [0.0, 0.0]
xb = [9.0, 9.0]
vb = [0.0, 0.0]

[experiment]
seed = 2024
replicas = 10000
gammas = [0.5, 1.0, 2.0]
out = "out"
)";
}

/// Register every subcommand and flag on app; each carries a description.
inline void configure_app(CLI::App& app, CliOptions& o) {
    app.description("Kinetic Langevin samplers, couplings and contraction experiments");
    app.require_subcommand(1);
    app.fallthrough();
    app.set_help_all_flag("--help-all", "Print help for every subcommand");
    app.add_option("--config", o.config, "TOML config file");
    app.add_option("--set", o.sets, "Override a config key, e.g. --set scheme.h=0.01 (repeatable)");
    app.add_option("--seed", o.seed, "Master seed (overrides experiment.seed)");
    app.add_option("--out", o.out, "Output directory (overrides experiment.out)");
    app.add_option("--replicas", o.replicas, "Replica count (overrides experiment.replicas)");
    app.add_flag("--strict", o.strict, "Refuse to run (exit 3) when validity conditions fail");
    app.add_flag("--json", o.json, "Print results as JSON and write summary.json");

    app.add_subcommand("sample", "Run one chain and write its trace CSV");
    app.add_subcommand("couple", "Run coupled replica ensembles and write decay curves");
    app.add_subcommand("constants", "Print the derived metric constants and validity flags");
    auto* verify = app.add_subcommand("verify", "Check a one-step r_l contraction bound on sampled states");
    verify->add_option("--prop", o.prop, "Statement to check: em or bu")
        ->check(CLI::IsMember({"em", "bu"}));
    verify->add_option("--samples", o.samples, "Number of accepted sample states");
    app.add_subcommand("bias", "Fit bias orders in h with the Gaussian Lyapunov oracle");
    auto* figures = app.add_subcommand("figures", "Write the banana and mixture decay-curve CSV sets");
    figures->add_option("--which", o.which, "Figure set: banana, gmm or all")
        ->check(CLI::IsMember({"banana", "gmm", "all"}));
}

namespace detail {

inline std::vector<std::string> cli_overrides(const CliOptions& o) {
    std::vector<std::string> v = o.sets;
    if (o.seed) v.push_back("experiment.seed=" + std::to_string(*o.seed));
    if (o.out) v.push_back("experiment.out=" + toml_quote(*o.out));
    if (o.replicas) v.push_back("experiment.replicas=" + std::to_string(*o.replicas));
    return v;
}

inline std::uint64_t domain_warnings(const BuiltModel& m) {
    return m.meanfield ? m.meanfield->confining.domain_warning_count() : m.model.domain_warning_count();
}

inline nlohmann::json kv_json(const KeyValues& kv) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : kv) {
        if (v == "true" || v == "false") {
            j[k] = v == "true";
        } else {
            char* end = nullptr;
            const double d = std::strtod(v.c_str(), &end);
            if (end != nullptr && *end == '\0' && !v.empty() && std::isfinite(d))
                j[k] = d;
            else
                j[k] = v;
        }
    }
    return j;
}

inline std::string gamma_tag(double g) { return "g" + fmt_double(g); }

struct Context {
    const CliOptions& opt;
    std::ostream& out;
    std::ostream& err;
    nlohmann::json summary = nlohmann::json::object();
};

/// Validity refusal under --strict; returns true when the run must stop.
inline bool strict_refusal(Context& ctx, const MetricConstants& mc, const BuiltModel& bm) {
    if (!ctx.opt.strict) return false;
    std::vector<std::string> why = mc.validity.failures(mc.scheme);
    if (bm.meanfield && !interaction_is_small(*bm.meanfield))
        why.emplace_back("interaction strength above the smallness threshold");
    if (why.empty()) return false;
    for (const auto& w : why) ctx.err << "strict: " << w << "\n";
    return true;
}

inline bool strict_domain(Context& ctx, const BuiltModel& bm) {
    const std::uint64_t n = domain_warnings(bm);
    if (!ctx.opt.strict || n == 0) return false;
    ctx.err << "strict: " << n << " gradient evaluations outside the declared box\n";
    return true;
}

inline void finish_outputs(Context& ctx, const std::filesystem::path& dir) {
    if (ctx.opt.json) {
        write_file_atomic(dir / "summary.json", ctx.summary.dump(2) + "\n");
        ctx.out << ctx.summary.dump(2) << "\n";
    }
}

inline int cmd_constants(Context& ctx, const ExperimentConfig& cfg) {
    const BuiltModel bm = build_model(cfg.potential, ctx.opt.strict);
    const MetricConstants mc = compute_constants(bm.metric_model, cfg.gamma, cfg.h, cfg.scheme);
    KeyValues kv = constants_kv(mc);
    if (bm.meanfield) kv.emplace_back("interaction_small", interaction_is_small(*bm.meanfield) ? "true" : "false");
    if (ctx.opt.json)
        ctx.out << kv_json(kv).dump(2) << "\n";
    else
        ctx.out << kv_text(kv);
    return strict_refusal(ctx, mc, bm) ? exit_refused : exit_ok;
}

inline int cmd_sample(Context& ctx, const ExperimentConfig& cfg) {
    const BuiltModel bm = build_model(cfg.potential, ctx.opt.strict);
    const MetricConstants mc = compute_constants(bm.metric_model, cfg.gamma, cfg.h, cfg.scheme);
    if (strict_refusal(ctx, mc, bm)) return exit_refused;
    const InitSpec init = build_init(cfg.init);
    const PhasePoint p0 = initial_pair(init, bm.model.dim, cfg.seed, 0).a;
    const SchemeConfig sc{cfg.scheme, cfg.h, cfg.gamma};
    const auto path = run_chain(p0, bm.model, sc, cfg.n_steps, cfg.seed, 0, cfg.stride);
    const std::filesystem::path dir(cfg.out);
    write_file_atomic(dir / "trace.csv", trace_csv(path, cfg.h, cfg.stride));
    write_file_atomic(dir / "manifest.toml", manifest_text(cfg, constants_kv(mc)));
    ctx.summary["trace"] = (dir / "trace.csv").string();
    ctx.summary["records"] = path.size();
    if (!ctx.opt.json) ctx.out << "wrote " << (dir / "trace.csv").string() << " (" << path.size() << " rows)\n";
    finish_outputs(ctx, dir);
    return strict_domain(ctx, bm) ? exit_refused : exit_ok;
}

inline int cmd_couple(Context& ctx, const ExperimentConfig& cfg) {
    const BuiltModel bm = build_model(cfg.potential, ctx.opt.strict);
    const std::filesystem::path dir(cfg.out);
    const InitSpec init = build_init(cfg.init);
    KeyValues extra;
    ctx.summary["curves"] = nlohmann::json::array();
    std::vector<MetricConstants> mcs;
    for (double g : cfg.gamma_list()) {
        mcs.push_back(compute_constants(bm.metric_model, g, cfg.h, cfg.scheme));
        if (strict_refusal(ctx, mcs.back(), bm)) return exit_refused;
    }
    std::size_t gi = 0;
    for (double g : cfg.gamma_list()) {
        const MetricConstants& mc = mcs[gi++];
        for (const auto& [k, v] : constants_kv(mc)) extra.emplace_back(gamma_tag(g) + "." + k, v);
        DecayConfig dc;
        dc.pot = &bm.model;
        dc.scheme = {cfg.scheme, cfg.h, g};
        dc.mode = cfg.mode;
        dc.mc = &mc;
        dc.init = init;
        dc.replicas = cfg.replicas;
        dc.n_steps = cfg.n_steps;
        dc.stride = cfg.stride;
        dc.seed = cfg.seed;
        dc.coalescence_threshold = cfg.threshold;
        dc.max_excluded_fraction = cfg.max_excluded_fraction;
        if (bm.meanfield) dc.particles = ParticleLayout{bm.meanfield->N, bm.meanfield->confining.dim};
        const DecayCurve curve = estimate_decay_curve(dc);
        const std::string stem = gamma_tag(g) + "_" + coupling_mode_name(cfg.mode);
        write_file_atomic(dir / ("decay_" + stem + ".csv"), aggregate_csv(curve));
        write_file_atomic(dir / ("rho_" + stem + ".csv"), rho_csv(curve));
        if (cfg.trace && !bm.meanfield) {
            CoupledRunOptions ro;
            ro.mode = cfg.mode;
            ro.coalescence_threshold = cfg.threshold;
            ro.stride = cfg.stride;
            const CoupledTrace tr = run_coupled(initial_pair(init, bm.model.dim, cfg.seed, 0), bm.model,
                                                dc.scheme, &mc, cfg.n_steps, cfg.seed, 0, ro);
            write_file_atomic(dir / ("trace_" + stem + ".csv"), coupled_trace_csv(tr));
        }
        const RateFit fit = fit_decay_rate(curve);
        nlohmann::json j{{"gamma", g},
                         {"mode", coupling_mode_name(cfg.mode)},
                         {"file", "decay_" + stem + ".csv"},
                         {"final_mean_dist", curve.mean_dist.back()},
                         {"frac_coalesced", curve.frac_coalesced.back()},
                         {"included", curve.included},
                         {"excluded", curve.excluded},
                         {"theoretical_rate", mc.rate()}};
        if (fit.all_coalesced) {
            j["coalescence_time"] = fit.coalescence_time;
        } else {
            j["fitted_rate"] = fit.rate;
            j["rate_ci95"] = fit.ci95;
        }
        ctx.summary["curves"].push_back(j);
        if (!ctx.opt.json) {
            ctx.out << "gamma=" << fmt_double(g) << " mode=" << coupling_mode_name(cfg.mode)
                    << " final_mean_dist=" << fmt_double(curve.mean_dist.back())
                    << " frac_coalesced=" << fmt_double(curve.frac_coalesced.back())
                    << " excluded=" << curve.excluded;
            if (fit.all_coalesced)
                ctx.out << " coalescence_time=" << fmt_double(fit.coalescence_time);
            else
                ctx.out << " fitted_rate=" << fmt_double(fit.rate) << " ci95=" << fmt_double(fit.ci95);
            ctx.out << " theoretical_rate=" << fmt_double(mc.rate()) << "\n";
        }
    }
    write_file_atomic(dir / "manifest.toml", manifest_text(cfg, extra));
    finish_outputs(ctx, dir);
    return strict_domain(ctx, bm) ? exit_refused : exit_ok;
}

inline int cmd_verify(Context& ctx, const ExperimentConfig& cfg) {
    const BuiltModel bm = build_model(cfg.potential, ctx.opt.strict);
    const Scheme s = ctx.opt.prop == "em" ? Scheme::EM : Scheme::BU;
    OneStepReport rep;
    try {
        rep = verify_onestep_proposition(s, bm.metric_model, cfg.gamma, cfg.h, ctx.opt.samples, cfg.seed);
    } catch (const HypothesisError& e) {
        ctx.err << "refused: " << e.clause() << "\n";
        return exit_refused;
    }
    KeyValues kv{{"scheme", scheme_name(s)},
                 {"samples", std::to_string(rep.samples)},
                 {"rejected", std::to_string(rep.rejected)},
                 {"violations", std::to_string(rep.violations)},
                 {"worst_ratio", fmt_double(rep.worst_ratio)},
                 {"bound", fmt_double(rep.bound)},
                 {"tau", fmt_double(rep.tau)},
                 {"script_R", fmt_double(rep.script_R)},
                 {"passed", rep.passed() ? "true" : "false"}};
    if (ctx.opt.json)
        ctx.out << kv_json(kv).dump(2) << "\n";
    else
        ctx.out << kv_text(kv);
    return rep.passed() ? exit_ok : exit_failure;
}

inline int cmd_bias(Context& ctx, const ExperimentConfig& cfg) {
    if (cfg.potential.meanfield || cfg.potential.base.kind != "gaussian")
        throw ConfigError("potential.kind", "bias study needs a gaussian potential");
    std::vector<double> hs = cfg.h_list;
    if (hs.empty()) hs = {0.04, 0.02, 0.01, 0.005};
    const BiasReport r = estimate_bias_order(cfg.scheme, cfg.potential.base.kappa, cfg.gamma, hs,
                                             cfg.potential.base.d);
    std::ostringstream csv;
    csv << "h,bias\n";
    for (std::size_t i = 0; i < r.h.size(); ++i) csv << fmt_double(r.h[i]) << "," << fmt_double(r.bias[i]) << "\n";
    const std::filesystem::path dir(cfg.out);
    const std::string name = std::string("bias_") + scheme_name(cfg.scheme) + ".csv";
    write_file_atomic(dir / name, csv.str());
    write_file_atomic(dir / "manifest.toml",
                      manifest_text(cfg, {{"slope", fmt_double(r.slope)}, {"slope_se", fmt_double(r.slope_se)}}));
    ctx.summary = {{"scheme", scheme_name(cfg.scheme)}, {"h", r.h},          {"bias", r.bias},
                   {"slope", r.slope},                  {"slope_se", r.slope_se}, {"oracle", r.oracle},
                   {"file", name}};
    if (!ctx.opt.json)
        ctx.out << "scheme=" << scheme_name(cfg.scheme) << " slope=" << fmt_double(r.slope)
                << " slope_se=" << fmt_double(r.slope_se) << " oracle=" << r.oracle << "\n";
    finish_outputs(ctx, dir);
    return exit_ok;
}

/// Potential values on a grid spanning the given rectangle.
inline std::string contour_csv(const PotentialModel& pot, double x0, double x1, double y0, double y1,
                               std::size_t n) {
    std::ostringstream os;
    os << "x,y,U\n";
    std::vector<double> p(2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            p[0] = x0 + (x1 - x0) * static_cast<double>(i) / static_cast<double>(n - 1);
            p[1] = y0 + (y1 - y0) * static_cast<double>(j) / static_cast<double>(n - 1);
            os << fmt_double(p[0]) << "," << fmt_double(p[1]) << "," << fmt_double(pot.energy(p)) << "\n";
        }
    }
    return os.str();
}

inline int run_figure(Context& ctx, const std::string& name, const char* preset) {
    const ExperimentConfig cfg =
        load_config(ctx.opt.config, cli_overrides(ctx.opt), parse_toml_text(preset, name + " preset"));
    const BuiltModel bm = build_model(cfg.potential, ctx.opt.strict);
    const std::filesystem::path dir = std::filesystem::path(cfg.out) / name;
    const InitSpec init = build_init(cfg.init);
    std::ostringstream index;
    index << "figure,gamma,mode,file\n";
    nlohmann::json curves = nlohmann::json::array();
    for (double g : cfg.gamma_list()) {
        for (CouplingMode m : {CouplingMode::reflection, CouplingMode::synchronous}) {
            DecayConfig dc;
            dc.pot = &bm.model;
            dc.scheme = {cfg.scheme, cfg.h, g};
            dc.mode = m;
            dc.init = init;
            dc.replicas = cfg.replicas;
            dc.n_steps = cfg.n_steps;
            dc.stride = cfg.stride;
            dc.seed = cfg.seed;
            dc.coalescence_threshold = cfg.threshold;
            dc.max_excluded_fraction = cfg.max_excluded_fraction;
            const DecayCurve curve = estimate_decay_curve(dc);
            const std::string file = "decay_" + gamma_tag(g) + "_" + coupling_mode_name(m) + ".csv";
            write_file_atomic(dir / file, aggregate_csv(curve));
            index << name << "," << fmt_double(g) << "," << coupling_mode_name(m) << "," << file << "\n";
            curves.push_back({{"gamma", g},
                              {"mode", coupling_mode_name(m)},
                              {"file", file},
                              {"initial_mean_dist", curve.mean_dist.front()},
                              {"final_mean_dist", curve.mean_dist.back()},
                              {"excluded", curve.excluded}});
            if (!ctx.opt.json)
                ctx.out << name << " gamma=" << fmt_double(g) << " mode=" << coupling_mode_name(m)
                        << " final_mean_dist=" << fmt_double(curve.mean_dist.back()) << "\n";
        }
    }
    write_file_atomic(dir / "index.csv", index.str());
    if (name == "banana")
        write_file_atomic(dir / "contour.csv", contour_csv(bm.model, -5.0, 5.0, -2.0, 20.0, 101));
    else
        write_file_atomic(dir / "contour.csv", contour_csv(bm.model, -1.0, 11.0, -1.0, 11.0, 121));
    write_file_atomic(dir / "manifest.toml", manifest_text(cfg, {}));
    ctx.summary[name] = curves;
    return strict_domain(ctx, bm) ? exit_refused : exit_ok;
}

inline int cmd_figures(Context& ctx) {
    int rc = exit_ok;
    if (ctx.opt.which == "banana" || ctx.opt.which == "all")
        rc = std::max(rc, run_figure(ctx, "banana", banana_figure_preset()));
    if (ctx.opt.which == "gmm" || ctx.opt.which == "all")
        rc = std::max(rc, run_figure(ctx, "gmm", gmm_figure_preset()));
    if (ctx.opt.json) ctx.out << ctx.summary.dump(2) << "\n";
    return rc;
}

}  // namespace detail

/**
 * @brief Parse argv and dispatch. Exit codes: 0 success, 1 failure,
 * 2 config or usage error, 3 refusal under --strict or failed hypotheses.
 */
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
    CLI::App app{"klmc"};
    app.name("klmc");
    CliOptions opt;
    configure_app(app, opt);
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n";
        return exit_config;
    }
    detail::Context ctx{opt, out, err};
    try {
        const std::string sub = app.get_subcommands().front()->get_name();
        if (sub == "figures") return detail::cmd_figures(ctx);
        const ExperimentConfig cfg = load_config(opt.config, detail::cli_overrides(opt));
        if (sub == "constants") return detail::cmd_constants(ctx, cfg);
        if (sub == "sample") return detail::cmd_sample(ctx, cfg);
        if (sub == "couple") return detail::cmd_couple(ctx, cfg);
        if (sub == "verify") return detail::cmd_verify(ctx, cfg);
        if (sub == "bias") return detail::cmd_bias(ctx, cfg);
        err << "unknown subcommand " << sub << "\n";
        return exit_config;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const HypothesisError& e) {
        err << "refused: " << e.clause() << "\n";
        return exit_refused;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_failure;
    }
}

}  // namespace klmc
