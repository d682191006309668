#include <gtest/gtest.h>

#include "klmc/harness.hpp"
#include "test_util.hpp"

using namespace klmc;

namespace {

DecayConfig gaussian_decay(const PotentialModel& pot, Scheme s, CouplingMode m) {
    DecayConfig c;
    c.pot = &pot;
    c.scheme = {s, 0.05, 1.0};
    c.mode = m;
    c.init.a = {{2.0, -1.0}, {0.0, 0.5}};
    c.init.b = {{-1.0, 0.5}, {1.0, 0.0}};
    c.replicas = 200;
    c.n_steps = 400;
    c.stride = 20;
    c.chunk = 16;
    c.seed = 17;
    return c;
}

}  // namespace

TEST(Lyapunov, AffineFormMatchesIntegrators) {
    const double kappa = 1.7, gamma = 0.8, h = 0.15;
    const auto pot = make_gaussian(1, kappa);
    NoiseDraw zero(1);
    const std::vector<double> xi{0.0};
    for (Scheme s : {Scheme::EM, Scheme::BU, Scheme::UBU}) {
        const auto st = scheme_affine(s, kappa, gamma, h);
        const SchemeConfig cfg{s, h, gamma};
        auto step = [&](PhasePoint p) {
            return s == Scheme::EM ? em_step(p, pot, cfg, xi)
                                   : (s == Scheme::BU ? bu_step(p, pot, cfg, zero) : ubu_step(p, pot, cfg, zero));
        };
        const auto c0 = step({{1.0}, {0.0}}), c1 = step({{0.0}, {1.0}});
        EXPECT_NEAR(st.A.a11, c0.x[0], 1e-14) << scheme_name(s);
        EXPECT_NEAR(st.A.a21, c0.v[0], 1e-14) << scheme_name(s);
        EXPECT_NEAR(st.A.a12, c1.x[0], 1e-14) << scheme_name(s);
        EXPECT_NEAR(st.A.a22, c1.v[0], 1e-14) << scheme_name(s);
    }
}

TEST(Lyapunov, FixedPointAndContinuumLimit) {
    for (Scheme s : {Scheme::EM, Scheme::BU, Scheme::UBU}) {
        const auto st = scheme_affine(s, 2.0, 1.5, 0.05);
        const Cov2 S = gaussian_lyapunov_oracle(s, 2.0, 1.5, 0.05);
        const Cov2 R = st.A.sandwich(S) + st.Q;
        EXPECT_NEAR(R.xx, S.xx, 1e-12);
        EXPECT_NEAR(R.xv, S.xv, 1e-12);
        EXPECT_NEAR(R.vv, S.vv, 1e-12);
        const Cov2 lim = gaussian_lyapunov_oracle(s, 2.0, 1.5, 1e-5);
        EXPECT_NEAR(lim.xx, 0.5, 1e-4);
        EXPECT_NEAR(lim.vv, 1.0, 1e-4);
        EXPECT_NEAR(lim.xv, 0.0, 1e-4);
    }
}

TEST(Lyapunov, MatchesLongRunSampling) {
    const double kappa = 1.0, gamma = 1.0, h = 0.3;
    const auto pot = make_gaussian(1, kappa);
    for (Scheme s : {Scheme::BU, Scheme::UBU}) {
        const Cov2 S = gaussian_lyapunov_oracle(s, kappa, gamma, h);
        tu::Moments m;
        for (std::uint64_t r = 0; r < 4000; ++r) {
            const auto path = run_chain({{0.0}, {0.0}}, pot, {s, h, gamma}, 100, 99, r, 100);
            m.add(path.back().x[0] * path.back().x[0]);
        }
        EXPECT_NEAR(m.mean(), S.xx, 4 * m.se()) << scheme_name(s);
    }
}

TEST(Lyapunov, UnstableStepRaises) {
    EXPECT_THROW(gaussian_lyapunov_oracle(Scheme::EM, 100.0, 1.0, 0.5), StabilityError);
    EXPECT_THROW(gaussian_lyapunov_oracle(Scheme::BU, 1.0, 1.0, 0.0), ParameterError);
}

TEST(Bias, OrdersInStepSize) {
    const std::vector<double> hs{0.04, 0.02, 0.01, 0.005};
    const auto em = estimate_bias_order(Scheme::EM, 1.0, 2.0, hs);
    const auto bu = estimate_bias_order(Scheme::BU, 1.0, 2.0, hs);
    const auto ubu = estimate_bias_order(Scheme::UBU, 1.0, 2.0, hs);
    EXPECT_NEAR(em.slope, 1.0, 0.15);
    EXPECT_GE(bu.slope, 1.0 - 0.15);
    EXPECT_NEAR(ubu.slope, 2.0, 0.15);
    const auto em4 = estimate_bias_order(Scheme::EM, 1.0, 2.0, hs, 4);
    EXPECT_NEAR(em4.bias[0], 2 * em.bias[0], 1e-15);
    EXPECT_THROW(estimate_bias_order(Scheme::EM, 1.0, 2.0, {0.01}), ParameterError);
}

TEST(LineFitting, ExactLine) {
    const auto f = fit_line({0, 1, 2, 3}, {1, 3, 5, 7});
    EXPECT_NEAR(f.slope, 2.0, 1e-15);
    EXPECT_NEAR(f.intercept, 1.0, 1e-15);
    EXPECT_NEAR(f.r2, 1.0, 1e-15);
    EXPECT_NEAR(f.slope_se, 0.0, 1e-15);
}

TEST(OneStep, GaussianHypothesesHold) {
    const auto pot = make_gaussian(3, 1.0);
    for (Scheme s : {Scheme::EM, Scheme::BU}) {
        const auto rep = verify_onestep_proposition(s, pot, 2.0, 0.01, 3000, 5);
        EXPECT_TRUE(rep.passed()) << scheme_name(s) << " worst " << rep.worst_ratio << " bound " << rep.bound;
        EXPECT_EQ(rep.rejected, 0u);
        EXPECT_LE(rep.worst_ratio, rep.bound);
    }
}

TEST(OneStep, NonconvexRejectsInsideRegion) {
    const auto pot = make_double_well(1, 1.0, 0.05, 0.5, 0.5);
    const auto rep = verify_onestep_proposition(Scheme::BU, pot, 6.0, 0.005, 2000, 6);
    EXPECT_GT(rep.script_R, 0.0);
    EXPECT_GT(rep.rejected, 0u);
    EXPECT_TRUE(rep.passed()) << rep.worst_ratio << " vs " << rep.bound;
}

TEST(OneStep, HypothesisViolationsRaise) {
    const auto pot = make_gaussian(1, 1.0);
    EXPECT_THROW(verify_onestep_proposition(Scheme::EM, pot, 2.0, 0.2, 10), HypothesisError);
    EXPECT_THROW(verify_onestep_proposition(Scheme::UBU, pot, 2.0, 0.01, 10), ParameterError);
}

TEST(InitialPair, RandomIsKeyed) {
    InitSpec init;
    init.random = true;
    init.scale = 2.0;
    const auto a = initial_pair(init, 3, 4, 7), b = initial_pair(init, 3, 4, 7), c = initial_pair(init, 3, 4, 8);
    EXPECT_EQ(a.a, b.a);
    EXPECT_EQ(a.b, b.b);
    EXPECT_NE(a.a, c.a);
    init.random = false;
    EXPECT_THROW(initial_pair(init, 3, 4, 7), ParameterError);
}

TEST(Decay, IdenticalStartsGiveZeroCurve) {
    const auto pot = make_gaussian(2, 1.0);
    auto cfg = gaussian_decay(pot, Scheme::BU, CouplingMode::reflection);
    cfg.init.b = cfg.init.a;
    const auto c = estimate_decay_curve(cfg);
    for (std::size_t i = 0; i < c.t.size(); ++i) {
        EXPECT_EQ(c.mean_dist[i], 0.0);
        EXPECT_EQ(c.frac_coalesced[i], 1.0);
    }
    const auto fit = fit_decay_rate(c);
    EXPECT_TRUE(fit.all_coalesced);
    EXPECT_EQ(fit.coalescence_time, 0.0);
}

TEST(Decay, SynchronousGaussianIsDeterministicRecursion) {
    const auto pot = make_gaussian(2, 1.0);
    auto cfg = gaussian_decay(pot, Scheme::UBU, CouplingMode::synchronous);
    const auto c = estimate_decay_curve(cfg);
    const auto st = scheme_affine(Scheme::UBU, 1.0, 1.0, 0.05);
    double z[2] = {3.0, -1.5}, w[2] = {-1.0, 0.5};
    for (std::size_t k = 0; k <= cfg.n_steps; ++k) {
        if (k % cfg.stride == 0) {
            const double d = std::sqrt(z[0] * z[0] + z[1] * z[1] + w[0] * w[0] + w[1] * w[1]);
            EXPECT_NEAR(c.mean_dist[k / cfg.stride], d, 1e-12 * (1 + d));
            EXPECT_NEAR(c.stderr_dist[k / cfg.stride], 0.0, 1e-7 * (1 + d));
        }
        for (int i = 0; i < 2; ++i) {
            const double nz = st.A.a11 * z[i] + st.A.a12 * w[i], nw = st.A.a21 * z[i] + st.A.a22 * w[i];
            z[i] = nz;
            w[i] = nw;
        }
    }
}

TEST(Decay, WorkerCountDoesNotChangeResults) {
    const auto pot = make_double_well(2, 1.0, 0.5, 0.5, 0.5);
    auto cfg = gaussian_decay(pot, Scheme::BU, CouplingMode::reflection);
    cfg.workers = 1;
    const auto one = estimate_decay_curve(cfg);
    cfg.workers = 8;
    const auto many = estimate_decay_curve(cfg);
    EXPECT_EQ(one.mean_dist, many.mean_dist);
    EXPECT_EQ(one.stderr_dist, many.stderr_dist);
    EXPECT_EQ(one.frac_coalesced, many.frac_coalesced);
    EXPECT_LT(one.mean_dist.back(), 0.5 * one.mean_dist.front());
}

TEST(Decay, ExcludedReplicasAreCounted) {
    PotentialModel pot = make_gaussian(1, 1.0);
    pot.gradient = [](std::span<const double> x, std::span<double> g) { g[0] = x[0] > 2.3 ? NAN : x[0]; };
    DecayConfig cfg;
    cfg.pot = &pot;
    cfg.scheme = {Scheme::BU, 0.05, 1.0};
    cfg.mode = CouplingMode::synchronous;
    cfg.init.random = true;
    cfg.replicas = 2000;
    cfg.n_steps = 1;
    cfg.stride = 1;
    cfg.max_excluded_fraction = 0.1;
    const auto c = estimate_decay_curve(cfg);
    EXPECT_GT(c.excluded, 0u);
    EXPECT_EQ(c.included + c.excluded, 2000u);
    EXPECT_EQ(c.configured, 2000u);
    cfg.max_excluded_fraction = 0.0;
    EXPECT_THROW(estimate_decay_curve(cfg), NumericError);
}

TEST(Decay, RateFitOnSyntheticCurve) {
    DecayCurve c;
    for (int i = 0; i <= 50; ++i) {
        c.t.push_back(0.1 * i);
        c.mean_rho.push_back(3.0 * std::exp(-0.7 * 0.1 * i));
        c.frac_coalesced.push_back(0.0);
    }
    for (int b = 0; b < 4; ++b) {
        c.chunk_count.push_back(10);
        std::vector<double> s;
        for (double v : c.mean_rho) s.push_back(10 * v * (1 + 0.01 * b));
        c.chunk_rho_sum.push_back(s);
    }
    const auto f = fit_decay_rate(c, 0.3, 1.0, 4);
    EXPECT_NEAR(f.rate, 0.7, 1e-12);
    EXPECT_NEAR(f.r2, 1.0, 1e-12);
    EXPECT_EQ(f.batches, 4u);
    EXPECT_NEAR(f.ci95, 0.0, 1e-10);
}

TEST(Contraction, GaussianRateAboveBound) {
    const auto pot = make_gaussian(2, 2.0);
    const auto mc = compute_constants(pot, 2.0, 0.01, Scheme::BU);
    DecayConfig cfg;
    cfg.pot = &pot;
    cfg.mc = &mc;
    cfg.scheme = {Scheme::BU, 0.01, 2.0};
    cfg.mode = CouplingMode::synchronous;
    cfg.init.random = true;
    cfg.replicas = 400;
    cfg.n_steps = 500;
    cfg.stride = 10;
    const auto rep = estimate_contraction_rate(cfg);
    EXPECT_TRUE(rep.rate_ok) << rep.fit.rate << " vs " << rep.theoretical;
    EXPECT_GT(rep.fit.r2, 0.95);
    EXPECT_TRUE(rep.transient_ok) << rep.transient_factor;
    cfg.mc = nullptr;
    EXPECT_THROW(estimate_contraction_rate(cfg), ParameterError);
}
