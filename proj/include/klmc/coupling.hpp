#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "klmc/error.hpp"
#include "klmc/integrators.hpp"
#include "klmc/metric.hpp"
#include "klmc/potentials.hpp"
#include "klmc/rng.hpp"

namespace klmc {

enum class Branch { synchronous, maximal_accept, reflect };

inline const char* branch_name(Branch b) {
    switch (b) {
        case Branch::synchronous: return "synchronous";
        case Branch::maximal_accept: return "maximal-accept";
        case Branch::reflect: return "reflect";
    }
    return "?";
}

/// How the second chain's noise is chosen.
enum class CouplingMode { synchronous, reflection, switching };

inline const char* coupling_mode_name(CouplingMode m) {
    switch (m) {
        case CouplingMode::synchronous: return "synchronous";
        case CouplingMode::reflection: return "reflection";
        case CouplingMode::switching: return "switching";
    }
    return "?";
}

inline CouplingMode parse_coupling_mode(const std::string& s) {
    if (s == "synchronous" || s == "sync") return CouplingMode::synchronous;
    if (s == "reflection") return CouplingMode::reflection;
    if (s == "switching") return CouplingMode::switching;
    throw ParameterError("unknown coupling mode '" + s + "'");
}

struct CouplingDecision {
    Branch branch = Branch::synchronous;
    double u = 0.0;
    double acceptance_ratio = 1.0;
};

struct CoupledState {
    PhasePoint a;
    PhasePoint b;

    std::vector<double> z() const { return differences(a, b).first; }
    std::vector<double> w() const { return differences(a, b).second; }
    std::vector<double> q(double gamma) const {
        auto [z, w] = differences(a, b);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] += w[i] / gamma;
        return z;
    }
};

enum class Proximity { far, near };

/// far (synchronous) iff D_K + epsilon r_l <= r_s.
inline Proximity switching_rule(const CoupledState& cs, const MetricConstants& mc) {
    auto [z, w] = differences(cs.a, cs.b);
    return diff_metrics(z, w, mc).far ? Proximity::far : Proximity::near;
}

/**
 * @brief Reflection-maximal construction of xi' from xi and a uniform u.
 *
 * With qhat = beta q and e = q / |q|: xi' = xi + qhat if
 * u <= phi(e.xi + |qhat|) / phi(e.xi), otherwise xi reflected across the
 * hyperplane normal to e. q = 0 yields xi' = xi.
 */
inline CouplingDecision reflection_maximal_apply(std::span<const double> q, double beta,
                                                 std::span<const double> xi, double u,
                                                 std::span<double> xi_prime) {
    double qn2 = 0.0;
    for (double qi : q) qn2 += qi * qi;
    CouplingDecision d;
    d.u = u;
    if (!(qn2 > 0.0)) {
        std::copy(xi.begin(), xi.end(), xi_prime.begin());
        d.branch = Branch::synchronous;
        return d;
    }
    const double qn = std::sqrt(qn2);
    const double qhat = beta * qn;
    double s = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) s += q[i] / qn * xi[i];
    d.acceptance_ratio = std::min(1.0, std::exp(-qhat * s - 0.5 * qhat * qhat));
    if (u <= d.acceptance_ratio) {
        d.branch = Branch::maximal_accept;
        for (std::size_t i = 0; i < q.size(); ++i) xi_prime[i] = xi[i] + beta * q[i];
    } else {
        d.branch = Branch::reflect;
        for (std::size_t i = 0; i < q.size(); ++i) xi_prime[i] = xi[i] - 2.0 * s * q[i] / qn;
    }
    return d;
}

struct ReflectionDraw {
    std::vector<double> xi;
    std::vector<double> xi_prime;
    CouplingDecision decision;
};

inline ReflectionDraw reflection_maximal_draw(std::span<const double> q, double beta, Rng& rng) {
    ReflectionDraw r;
    r.xi.resize(q.size());
    r.xi_prime.resize(q.size());
    rng.fill_normal(r.xi);
    const double u = rng.uniform();
    r.decision = reflection_maximal_apply(q, beta, r.xi, u, r.xi_prime);
    return r;
}

/**
 * @brief Advances a pair of chains of one scheme under a coupling mode.
 *
 * Chain a consumes exactly the noise an uncoupled chain with the same
 * (seed, replica) would, so its path is identical to run_chain's. Only the
 * first normal vector of the step (EM: xi; BU: xi1; UBU: xi1 of the first
 * half-step) is coupled; everything else is shared.
 */
class CoupledStepper {
public:
    CoupledStepper(const PotentialModel& pot, const SchemeConfig& cfg, const MetricConstants* mc,
                   CouplingMode mode)
        : pot_(pot), sc_(cfg), mc_(mc), mode_(mode), na_(pot.dim), nb_(pot.dim),
          grad_(pot.dim), q_(pot.dim), z_(pot.dim), w_(pot.dim) {
        if (mode == CouplingMode::switching && mc == nullptr)
            throw ParameterError("switching coupling needs metric constants");
        const double h_eff = cfg.scheme == Scheme::UBU ? 0.5 * cfg.h : cfg.h;
        beta_ = 1.0 / std::sqrt(2.0 * h_eff / cfg.gamma);
    }

    double beta() const { return beta_; }

    CouplingDecision step(PhasePoint& a, PhasePoint& b, std::uint64_t seed, std::uint64_t replica,
                          std::uint64_t k, bool force_sync = false) {
        const Scheme s = sc_.cfg.scheme;
        draw_noise(na_, s, seed, replica, k);
        nb_.xi1 = na_.xi1;
        nb_.xi2 = na_.xi2;
        nb_.xi3 = na_.xi3;
        nb_.xi4 = na_.xi4;
        CouplingDecision d;
        bool sync = force_sync || mode_ == CouplingMode::synchronous;
        for (std::size_t i = 0; i < z_.size(); ++i) {
            z_[i] = a.x[i] - b.x[i];
            w_[i] = a.v[i] - b.v[i];
            q_[i] = z_[i] + w_[i] / sc_.cfg.gamma;
        }
        if (!sync && mode_ == CouplingMode::switching) sync = diff_metrics(z_, w_, *mc_).far;
        if (!sync) {
            Rng urng(seed, replica, Tag::accept, k);
            d = reflection_maximal_apply(q_, beta_, na_.xi1, urng.uniform(), nb_.xi1);
        }
        step_inplace(a.x, a.v, pot_, sc_, na_, grad_, k);
        step_inplace(b.x, b.v, pot_, sc_, nb_, grad_, k);
        return d;
    }

private:
    const PotentialModel& pot_;
    StepCoefficients sc_;
    const MetricConstants* mc_;
    CouplingMode mode_;
    double beta_ = 1.0;
    NoiseDraw na_, nb_;
    std::vector<double> grad_, q_, z_, w_;
};

namespace detail {
inline std::pair<CoupledState, CouplingDecision> coupled_step(const CoupledState& cs,
                                                              const PotentialModel& pot,
                                                              const SchemeConfig& cfg,
                                                              const MetricConstants& mc,
                                                              Scheme expected, std::uint64_t seed,
                                                              std::uint64_t replica,
                                                              std::uint64_t k) {
    if (cfg.scheme != expected) throw ParameterError("scheme mismatch in coupled step");
    CoupledState out = cs;
    CoupledStepper st(pot, cfg, &mc, CouplingMode::switching);
    const CouplingDecision d = st.step(out.a, out.b, seed, replica, k);
    return {out, d};
}
}  // namespace detail

inline std::pair<CoupledState, CouplingDecision> coupled_em_step(
    const CoupledState& cs, const PotentialModel& pot, const SchemeConfig& cfg,
    const MetricConstants& mc, std::uint64_t seed, std::uint64_t replica = 0, std::uint64_t k = 0) {
    return detail::coupled_step(cs, pot, cfg, mc, Scheme::EM, seed, replica, k);
}

inline std::pair<CoupledState, CouplingDecision> coupled_bu_step(
    const CoupledState& cs, const PotentialModel& pot, const SchemeConfig& cfg,
    const MetricConstants& mc, std::uint64_t seed, std::uint64_t replica = 0, std::uint64_t k = 0) {
    return detail::coupled_step(cs, pot, cfg, mc, Scheme::BU, seed, replica, k);
}

inline std::pair<CoupledState, CouplingDecision> coupled_ubu_step(
    const CoupledState& cs, const PotentialModel& pot, const SchemeConfig& cfg,
    const MetricConstants& mc, std::uint64_t seed, std::uint64_t replica = 0, std::uint64_t k = 0) {
    return detail::coupled_step(cs, pot, cfg, mc, Scheme::UBU, seed, replica, k);
}

/// One row of a coupled trace.
struct CoupledRecord {
    std::uint64_t step = 0;
    double t = 0.0;
    double dist_euclid = 0.0;
    double r_l = 0.0;
    double r_s = 0.0;
    double rho = 0.0;
    Branch branch = Branch::synchronous;
    bool coalesced = false;
};

using CoupledTrace = std::vector<CoupledRecord>;

struct CoupledRunOptions {
    CouplingMode mode = CouplingMode::switching;
    double coalescence_threshold = 1e-12;
    std::uint64_t stride = 1;
};

inline double euclid_distance(const PhasePoint& a, const PhasePoint& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.x.size(); ++i) {
        s += (a.x[i] - b.x[i]) * (a.x[i] - b.x[i]);
        s += (a.v[i] - b.v[i]) * (a.v[i] - b.v[i]);
    }
    return std::sqrt(s);
}

/// Fill a record for the current pair; metric fields are NaN without mc.
inline CoupledRecord make_record(const PhasePoint& a, const PhasePoint& b, const MetricConstants* mc,
                                 std::uint64_t step, double h, Branch branch, bool coalesced) {
    CoupledRecord r;
    r.step = step;
    r.t = static_cast<double>(step) * h;
    r.dist_euclid = euclid_distance(a, b);
    r.branch = branch;
    r.coalesced = coalesced;
    if (mc != nullptr) {
        auto [z, w] = differences(a, b);
        const DiffMetrics m = diff_metrics(z, w, *mc);
        r.r_l = m.r_l;
        r.r_s = m.r_s;
        r.rho = m.rho;
    } else {
        r.r_l = r.r_s = r.rho = std::numeric_limits<double>::quiet_NaN();
    }
    return r;
}

/**
 * @brief Run a coupled pair for n_steps.
 *
 * Once the Euclidean distance drops below the coalescence threshold the
 * second chain is set equal to the first and noise is shared from then on.
 */
inline CoupledTrace run_coupled(const CoupledState& cs0, const PotentialModel& pot,
                                const SchemeConfig& cfg, const MetricConstants* mc,
                                std::uint64_t n_steps, std::uint64_t seed,
                                std::uint64_t replica = 0, const CoupledRunOptions& opt = {}) {
    if (opt.stride == 0) throw ParameterError("stride must be positive");
    PhasePoint a = cs0.a, b = cs0.b;
    if (a.x.size() != pot.dim || b.x.size() != pot.dim)
        throw ParameterError("initial state dimension does not match potential");
    CoupledStepper st(pot, cfg, mc, opt.mode);
    bool coalesced = euclid_distance(a, b) < opt.coalescence_threshold;
    if (coalesced) b = a;
    CoupledTrace trace{make_record(a, b, mc, 0, cfg.h, Branch::synchronous, coalesced)};
    for (std::uint64_t k = 0; k < n_steps; ++k) {
        const CouplingDecision d = st.step(a, b, seed, replica, k, coalesced);
        if (!a.finite() || !b.finite()) throw NumericError("coupled pair blew up", k + 1, a.x, a.v);
        if (!coalesced && euclid_distance(a, b) < opt.coalescence_threshold) {
            coalesced = true;
            b = a;
        }
        if ((k + 1) % opt.stride == 0)
            trace.push_back(make_record(a, b, mc, k + 1, cfg.h, d.branch, coalesced));
    }
    return trace;
}

}  // namespace klmc
