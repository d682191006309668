// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Usage: klmc_acceptance [criterion numbers...]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../unit/test_util.hpp"
#include "klmc/cli.hpp"
#include "klmc/klmc.hpp"

using namespace klmc;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double x, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    return buf;
}

/// Mean and standard error of a sample.
struct Stat {
    double mean = 0.0;
    double se = 0.0;
};

Stat stat_of(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double s = 0.0;
    for (double e : v) s += e;
    const double m = s / n;
    double ss = 0.0;
    for (double e : v) ss += (e - m) * (e - m);
    return {m, std::sqrt(ss / (n - 1.0) / n)};
}

bool within(const Stat& s, double target, double k = 4.0) { return std::abs(s.mean - target) <= k * s.se; }

PhasePoint random_point(Rng& r, std::size_t d, double scale) {
    PhasePoint p{std::vector<double>(d), std::vector<double>(d)};
    for (auto& e : p.x) e = scale * r.normal();
    for (auto& e : p.v) e = scale * r.normal();
    return p;
}

double phase_norm(const PhasePoint& a, const PhasePoint& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.x.size(); ++i)
        s += (a.x[i] - b.x[i]) * (a.x[i] - b.x[i]) + (a.v[i] - b.v[i]) * (a.v[i] - b.v[i]);
    return std::sqrt(s);
}

// 1. OU noise second moments against the isometry values.
Outcome noise_law() {
    const std::size_t n = 1000000;
    Outcome o{true, ""};
    std::uint64_t replica = 0;
    for (auto [g, h] : {std::pair{1.0, 0.1}, std::pair{2.0, 0.05}, std::pair{10.0, 0.01}}) {
        NoiseDraw nd(n);
        draw_noise(nd, Scheme::BU, 11, replica++, 0);
        const OuCoefficients c = ou_coefficients(h, g);
        std::vector<double> z1(n), z2(n);
        sample_ou_noise(c, nd.xi1, nd.xi2, z1, z2);
        std::vector<double> s11(n), s22(n), s12(n);
        for (std::size_t i = 0; i < n; ++i) {
            s11[i] = z1[i] * z1[i];
            s22[i] = z2[i] * z2[i];
            s12[i] = z1[i] * z2[i];
        }
        const double eta = std::exp(-g * h);
        const double t11 = h, t22 = (1 - eta * eta) / (2 * g), t12 = (1 - eta) / g;
        const Stat a = stat_of(s11), b = stat_of(s22), c12 = stat_of(s12);
        const bool ok = within(a, t11) && within(b, t22) && within(c12, t12);
        o.pass = o.pass && ok;
        o.detail += "(g=" + fmt(g) + ",h=" + fmt(h) + ") z-scores " + fmt((a.mean - t11) / a.se, 2) + "/" +
                    fmt((b.mean - t22) / b.se, 2) + "/" + fmt((c12.mean - t12) / c12.se, 2) + "; ";
    }
    return o;
}

// 2. Reflection-maximal draw: marginals, acceptance and first moment.
Outcome coupling_law() {
    const std::size_t n = 100000;
    Outcome o{true, ""};
    for (double qh : {0.01, 0.5, 2.0, 8.0}) {
        // One-dimensional q with beta = 1, so q_hat = q.
        const std::vector<double> q{qh};
        std::vector<double> along(n), across(n), accept(n), absmoment(n);
        for (std::size_t k = 0; k < n; ++k) {
            Rng rng(21, k, Tag::test, static_cast<std::uint64_t>(qh * 1000));
            const ReflectionDraw r = reflection_maximal_draw(q, 1.0, rng);
            along[k] = r.xi_prime[0];
            Rng rng2(22, k, Tag::test, static_cast<std::uint64_t>(qh * 1000));
            const std::vector<double> q2{0.0, qh};
            const ReflectionDraw r2 = reflection_maximal_draw(q2, 1.0, rng2);
            across[k] = r2.xi_prime[0];
            const bool acc = r.decision.branch == Branch::maximal_accept;
            accept[k] = acc ? 1.0 : 0.0;
            // Xi = xi - xi' along e, so an accepted draw has Xi = -q_hat.
            absmoment[k] = std::abs(qh + r.xi[0] - r.xi_prime[0]);
        }
        const double p_along = tu::kolmogorov_pvalue(tu::ks_normal_statistic(along), n);
        const double p_across = tu::kolmogorov_pvalue(tu::ks_normal_statistic(across), n);
        const Stat acc = stat_of(accept), mom = stat_of(absmoment);
        const double acc_target = 2.0 * tu::normal_cdf(-qh / 2.0);
        const bool ok = p_along > 0.01 && p_across > 0.01 && within(acc, acc_target) && within(mom, qh);
        o.pass = o.pass && ok;
        o.detail += "q=" + fmt(qh) + " KS p " + fmt(p_along, 2) + "/" + fmt(p_across, 2) + " accept " +
                    fmt(acc.mean) + " vs " + fmt(acc_target) + " E|q+Xi| " + fmt(mom.mean) + "; ";
    }
    return o;
}

// 3. One-step r_l^2 ratio bounds for EM and BU.
Outcome one_step() {
    Outcome o{true, ""};
    const auto gauss = make_gaussian(2, 1.0);
    const auto well = make_double_well(2, 1.0, 0.5, 0.5, 0.5);
    struct Case {
        const char* name;
        const PotentialModel* pot;
        double gamma, h;
    };
    for (const Case& c : {Case{"gaussian", &gauss, 2.0, 0.01}, Case{"double-well", &well, 9.0, 0.005}}) {
        for (Scheme s : {Scheme::EM, Scheme::BU}) {
            const OneStepReport rep = verify_onestep_proposition(s, *c.pot, c.gamma, c.h, 10000, 3);
            o.pass = o.pass && rep.passed();
            o.detail += std::string(c.name) + "/" + scheme_name(s) + " violations " +
                        std::to_string(rep.violations) + " worst " + fmt(rep.worst_ratio, 6) + " <= " +
                        fmt(rep.bound, 6) + "; ";
        }
    }
    return o;
}

// 4. Metric sandwiches and profile identities.
Outcome metric() {
    Outcome o{true, ""};
    const auto well = make_double_well(2, 1.0, 0.01, 1.0, 0.5);
    const auto gauss = make_gaussian(2, 1.5);
    const MetricConstants models[] = {compute_constants(well, 2.0, 0.01, Scheme::BU),
                                      compute_constants(gauss, 1.0, 0.01, Scheme::EM)};
    std::size_t bad = 0;
    for (const auto& mc : models) {
        Rng r(5, 0, Tag::test, 0);
        for (int k = 0; k < 10000; ++k) {
            const double s = std::pow(10.0, -3.0 + 4.0 * r.uniform());
            const auto a = random_point(r, 2, s), b = random_point(r, 2, s);
            const double rl = r_l(a, b, mc), rs = r_s(a, b, mc), rh = rho(a, b, mc), n = phase_norm(a, b);
            const double tol = 1.0 + 1e-12;
            if (!(2 * mc.epsilon * rl <= rs * tol && rs <= rl / mc.script_E * tol &&
                  n <= mc.N_equiv * rh * tol && mc.N_equiv * rh <= mc.M_equiv * n * tol))
                ++bad;
        }
    }
    o.detail = "sandwich failures " + std::to_string(bad) + "/20000";
    o.pass = bad == 0;

    const MetricConstants& mc = models[0];
    const ConcaveProfile& f = *mc.f;
    const double R1 = mc.R1;
    bool shape = f.eval(0.0) == 0.0 && !f.is_identity();
    double prev = 0.0, prev_slope = 2.0;
    const int n = 4000;
    for (int i = 1; i <= n; ++i) {
        const double r = 1.5 * R1 * i / n;
        const double v = f.eval(r);
        const double slope = (v - prev) / (1.5 * R1 / n);
        shape = shape && slope <= prev_slope + 1e-9 && v <= r * (1 + 1e-12) &&
                v >= mc.fprime_R1 * r * (1 - 1e-12);
        prev = v;
        prev_slope = slope;
    }
    double worst = 0.0;
    const double dr = 1e-5 * R1;
    for (int i = 1; i < 200; ++i) {
        const double r = R1 * i / 200.0;
        const double fd = (f.prime(r + dr) - f.prime(r - dr)) / (2 * dr);
        const double rhs = f.ode_rhs(r);
        worst = std::max(worst, std::abs(fd - rhs) / std::abs(rhs));
    }
    o.pass = o.pass && shape && worst <= 1e-6;
    o.detail += std::string(", profile shape ") + (shape ? "ok" : "broken") + ", ODE worst relative " + fmt(worst, 3);
    return o;
}

// 5. Gaussian contraction with kappa = gamma^2 / 2.
Outcome contraction() {
    Outcome o{true, ""};
    const double gamma = 2.0, h = 0.01;
    const auto pot = make_gaussian(2, gamma * gamma / 2.0);
    for (Scheme s : {Scheme::EM, Scheme::BU, Scheme::UBU}) {
        const auto mc = compute_constants(pot, gamma, h, s);
        DecayConfig cfg;
        cfg.pot = &pot;
        cfg.mc = &mc;
        cfg.scheme = {s, h, gamma};
        cfg.mode = CouplingMode::switching;
        cfg.init.random = true;
        cfg.replicas = 10000;
        cfg.n_steps = 2000;
        cfg.stride = 20;
        cfg.seed = 55;
        const ContractionReport rep = estimate_contraction_rate(cfg);
        const bool ok = s == Scheme::UBU ? rep.transient_ok : rep.rate_ok;
        o.pass = o.pass && ok;
        o.detail += std::string(scheme_name(s)) + " rate " + fmt(rep.fit.rate) + " +- " + fmt(rep.fit.ci95, 2) +
                    " vs c " + fmt(rep.theoretical) + " transient " + fmt(rep.transient_factor, 3) +
                    " <= C " + fmt(rep.C, 3) + "; ";
    }
    return o;
}

// 6. Bias orders from the Lyapunov oracle.
Outcome bias() {
    const std::vector<double> hs{0.04, 0.02, 0.01, 0.005};
    const BiasReport em = estimate_bias_order(Scheme::EM, 1.0, 2.0, hs);
    const BiasReport ubu = estimate_bias_order(Scheme::UBU, 1.0, 2.0, hs);
    Outcome o;
    o.pass = em.slope >= 0.8 && em.slope <= 1.2 && ubu.slope >= 1.8 && ubu.slope <= 2.2;
    o.detail = "EM slope " + fmt(em.slope) + ", UBU slope " + fmt(ubu.slope);
    return o;
}

DecayCurve figure_curve(const ExperimentConfig& cfg, const PotentialModel& pot, double gamma, CouplingMode m) {
    DecayConfig dc;
    dc.pot = &pot;
    dc.scheme = {cfg.scheme, cfg.h, gamma};
    dc.mode = m;
    dc.init = build_init(cfg.init);
    dc.replicas = cfg.replicas;
    dc.n_steps = cfg.n_steps;
    dc.stride = cfg.stride;
    dc.seed = cfg.seed;
    dc.coalescence_threshold = cfg.threshold;
    dc.max_excluded_fraction = cfg.max_excluded_fraction;
    return estimate_decay_curve(dc);
}

// 7. Qualitative figure reproduction: reflection decays, synchronous lags.
Outcome figures() {
    Outcome o{true, ""};
    for (auto [name, preset] : {std::pair{"banana", banana_figure_preset()}, std::pair{"gmm", gmm_figure_preset()}}) {
        const ExperimentConfig cfg = config_from_string(preset);
        const BuiltModel bm = build_model(cfg.potential);
        const std::vector<double> gammas = cfg.gamma_list();
        double refl_smallest = 0.0;
        for (double g : gammas) {
            const DecayCurve c = figure_curve(cfg, bm.model, g, CouplingMode::reflection);
            const double ratio = c.mean_dist.back() / c.mean_dist.front();
            o.pass = o.pass && ratio <= 1e-2;
            if (g == gammas.front()) refl_smallest = c.mean_dist.back();
            o.detail += std::string(name) + " g=" + fmt(g) + " reflection final/initial " + fmt(ratio, 3) + "; ";
        }
        const DecayCurve sync = figure_curve(cfg, bm.model, gammas.front(), CouplingMode::synchronous);
        const bool ordered = sync.mean_dist.back() >= 10.0 * refl_smallest;
        o.pass = o.pass && ordered;
        o.detail += std::string(name) + " g=" + fmt(gammas.front()) + " synchronous final " +
                    fmt(sync.mean_dist.back(), 3) + " vs reflection " + fmt(refl_smallest, 3) + "; ";
    }
    return o;
}

// 8. Mean-field contraction rates independent of the particle count.
Outcome meanfield() {
    Outcome o{true, ""};
    std::vector<double> rates;
    for (std::size_t N : {4u, 16u, 64u}) {
        MeanFieldSpec spec;
        spec.N = N;
        spec.confining = make_gaussian(1, 2.0);
        spec.interaction = make_harmonic_interaction(0.1);
        const PotentialModel pot = make_meanfield(spec);
        const auto mc = compute_constants(particle_model(spec), 2.0, 0.01, Scheme::BU);
        DecayConfig cfg;
        cfg.pot = &pot;
        cfg.mc = &mc;
        cfg.particles = ParticleLayout{N, 1};
        cfg.scheme = {Scheme::BU, 0.01, 2.0};
        cfg.mode = CouplingMode::synchronous;
        cfg.init.random = true;
        cfg.replicas = 500;
        cfg.n_steps = 1000;
        cfg.stride = 10;
        cfg.seed = 88;
        const RateFit fit = fit_decay_rate(estimate_decay_curve(cfg));
        rates.push_back(fit.rate);
        o.detail += "N=" + std::to_string(N) + " rate " + fmt(fit.rate) + "; ";
    }
    const double lo = *std::min_element(rates.begin(), rates.end());
    const double hi = *std::max_element(rates.begin(), rates.end());
    o.pass = lo > 0.0 && hi / lo <= 1.25;
    o.detail += "max/min " + fmt(hi / lo);
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"noise law", noise_law},     {"coupling correctness", coupling_law},
        {"one-step bounds", one_step}, {"metric construction", metric},
        {"gaussian contraction", contraction}, {"bias orders", bias},
        {"figure ordering", figures},  {"mean-field rates", meanfield},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = criteria[i].second();
        } catch (const std::exception& e) {
            out = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!out.pass) ++failures;
        std::printf("[%s] %d %s (%.1f s): %s\n", out.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), secs,
                    out.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
