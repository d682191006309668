#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <openssl/evp.h>

#include "klmc/config.hpp"
#include "klmc/coupling.hpp"
#include "klmc/error.hpp"
#include "klmc/harness.hpp"
#include "klmc/metric.hpp"

namespace klmc {

/// Shortest decimal text that round-trips the double.
inline std::string fmt_double(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

/// Write through a temporary sibling file and rename over the target.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        os << content;
        os.flush();
        if (!os) throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

/// Hex SHA-1 of "blob <size>\0<content>", as git computes object ids.
inline std::string git_blob_sha1(const std::string& content) {
    const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr) throw std::runtime_error("EVP_MD_CTX_new failed");
    const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                    EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                    EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                    EVP_DigestFinal_ex(ctx, md, &len) == 1;
    EVP_MD_CTX_free(ctx);
    if (!ok) throw std::runtime_error("sha1 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV tables.

inline std::string trace_csv(const std::vector<PhasePoint>& path, double h, std::uint64_t stride) {
    std::ostringstream os;
    const std::size_t d = path.empty() ? 0 : path.front().dim();
    os << "step,t";
    for (std::size_t i = 0; i < d; ++i) os << ",x_" << i;
    for (std::size_t i = 0; i < d; ++i) os << ",v_" << i;
    os << "\n";
    for (std::size_t k = 0; k < path.size(); ++k) {
        const std::uint64_t step = k * stride;
        os << step << "," << fmt_double(static_cast<double>(step) * h);
        for (double e : path[k].x) os << "," << fmt_double(e);
        for (double e : path[k].v) os << "," << fmt_double(e);
        os << "\n";
    }
    return os.str();
}

inline std::string coupled_trace_csv(const CoupledTrace& tr) {
    std::ostringstream os;
    os << "step,t,dist_euclid,r_l,r_s,rho,branch,coalesced\n";
    for (const auto& r : tr) {
        os << r.step << "," << fmt_double(r.t) << "," << fmt_double(r.dist_euclid) << ","
           << fmt_double(r.r_l) << "," << fmt_double(r.r_s) << "," << fmt_double(r.rho) << ","
           << branch_name(r.branch) << "," << (r.coalesced ? 1 : 0) << "\n";
    }
    return os.str();
}

/// Aggregate decay curve: t, mean_dist, stderr, frac_coalesced.
inline std::string aggregate_csv(const DecayCurve& c) {
    std::ostringstream os;
    os << "t,mean_dist,stderr,frac_coalesced\n";
    for (std::size_t i = 0; i < c.t.size(); ++i)
        os << fmt_double(c.t[i]) << "," << fmt_double(c.mean_dist[i]) << ","
           << fmt_double(c.stderr_dist[i]) << "," << fmt_double(c.frac_coalesced[i]) << "\n";
    return os.str();
}

inline std::string rho_csv(const DecayCurve& c) {
    std::ostringstream os;
    os << "t,mean_rho,stderr_rho\n";
    for (std::size_t i = 0; i < c.t.size(); ++i)
        os << fmt_double(c.t[i]) << "," << fmt_double(c.mean_rho[i]) << ","
           << fmt_double(c.stderr_rho[i]) << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// Constants as ordered key-value pairs.

using KeyValues = std::vector<std::pair<std::string, std::string>>;

inline KeyValues constants_kv(const MetricConstants& mc) {
    KeyValues kv;
    auto add = [&](const std::string& k, double v) { kv.emplace_back(k, fmt_double(v)); };
    auto flag = [&](const std::string& k, bool b) { kv.emplace_back(k, b ? "true" : "false"); };
    kv.emplace_back("scheme", scheme_name(mc.scheme));
    add("gamma", mc.gamma);
    add("h", mc.h);
    add("kappa", mc.kappa);
    add("L", mc.L);
    add("L_K", mc.L_K);
    add("L_G", mc.L_G);
    add("R", mc.R);
    add("tau", mc.tau);
    add("alpha", mc.alpha);
    add("epsilon", mc.epsilon);
    add("script_E", mc.script_E);
    add("script_R", mc.script_R);
    add("D_K", mc.D_K);
    add("R1", mc.R1);
    add("c_hat", mc.c_hat);
    add("log_c_hat", mc.log_c_hat);
    add("fprime_R1", mc.fprime_R1);
    add("log_fprime_R1", mc.log_fprime_R1);
    add("c_em", mc.rate_em);
    add("c_bu", mc.rate_bu);
    add("c", mc.rate());
    add("C_ubu", mc.C_ubu);
    add("M", mc.M_equiv);
    add("N", mc.N_equiv);
    flag("degenerate", mc.degenerate);
    flag("conservative", mc.conservative);
    flag("valid_em_gamma", mc.validity.em_gamma);
    flag("valid_em_h", mc.validity.em_h);
    flag("valid_bu_gamma", mc.validity.bu_gamma);
    flag("valid_bu_h", mc.validity.bu_h);
    flag("valid", mc.validity.valid_for(mc.scheme));
    return kv;
}

inline std::string kv_text(const KeyValues& kv) {
    std::ostringstream os;
    for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
    return os.str();
}

/**
 * @brief Run manifest: resolved config followed by commented constants.
 *
 * The comment lines are ignored by the parser, so the manifest is itself a
 * valid config reproducing the run.
 */
inline std::string manifest_text(const ExperimentConfig& cfg, const KeyValues& extra) {
    const std::string body = config_text(cfg);
    std::ostringstream os;
    os << "# klmc run manifest\n";
    os << "# config_sha1 = " << git_blob_sha1(body) << "\n";
    for (const auto& [k, v] : extra) os << "# " << k << " = " << v << "\n";
    os << "\n" << body;
    return os.str();
}

}  // namespace klmc
