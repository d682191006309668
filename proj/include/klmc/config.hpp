#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "klmc/coupling.hpp"
#include "klmc/error.hpp"
#include "klmc/harness.hpp"
#include "klmc/integrators.hpp"
#include "klmc/meanfield.hpp"
#include "klmc/potentials.hpp"

namespace klmc {

/// Parameters of a single-system potential; also the confinement V of a mean-field block.
struct PotentialBlock {
    std::string kind = "gaussian";
    std::size_t d = 2;
    double kappa = 1.0;
    // banana
    std::vector<double> box_lo{-6.0, -4.0};
    std::vector<double> box_hi{6.0, 36.0};
    double R = 10.0;
    // gmm
    double sigma = 0.5;
    std::vector<std::vector<double>> means;
    std::vector<double> weights;
    // double_well
    double kappa0 = 1.0;
    double A = 1.0;
    double s = 1.0;
};

struct InteractionBlock {
    std::string kind = "harmonic";
    double lambda = 0.1;
    double depth = 0.1;
    double width = 1.0;
};

struct PotentialConfig {
    bool meanfield = false;
    PotentialBlock base;
    // meanfield
    std::size_t N = 4;
    InteractionBlock W;
    double smallness_factor = 0.25;
};

struct InitConfig {
    bool random = false;
    double scale = 1.0;
    std::vector<double> xa, va, xb, vb;
};

/// One experiment: potential, scheme, coupling, initial pair, replica counts and outputs.
struct ExperimentConfig {
    PotentialConfig potential;
    Scheme scheme = Scheme::BU;
    double h = 0.01;
    double gamma = 1.0;
    std::uint64_t n_steps = 1000;
    std::uint64_t stride = 10;
    CouplingMode mode = CouplingMode::reflection;
    double threshold = 1e-12;
    InitConfig init;
    std::uint64_t seed = 1;
    std::uint64_t replicas = 1000;
    std::vector<double> gammas;
    std::vector<double> h_list;
    std::string out = "out";
    bool trace = false;
    double max_excluded_fraction = 0.01;

    std::vector<double> gamma_list() const { return gammas.empty() ? std::vector<double>{gamma} : gammas; }
};

namespace detail {

class TableReader {
public:
    TableReader(const toml::table& t, std::string prefix) : t_(t), prefix_(std::move(prefix)) {}

    std::string path(const std::string& k) const { return prefix_.empty() ? k : prefix_ + "." + k; }

    bool has(const std::string& k) const { return t_.contains(k); }

    template <class T>
    T get(const std::string& k, T def) {
        used_.insert(k);
        const toml::node* n = t_.get(k);
        if (n == nullptr) return def;
        return convert<T>(*n, path(k));
    }

    const toml::table* sub(const std::string& k) {
        used_.insert(k);
        const toml::node* n = t_.get(k);
        if (n == nullptr) return nullptr;
        if (!n->is_table()) throw ConfigError(path(k), "expected a table");
        return n->as_table();
    }

    void finish() const {
        for (const auto& [k, v] : t_) {
            const std::string key(k.str());
            if (!used_.count(key)) throw ConfigError(path(key), "unknown key");
        }
    }

    template <class T>
    static T convert(const toml::node& n, const std::string& where) {
        if constexpr (std::is_same_v<T, double>) {
            if (auto v = n.value<double>()) return *v;
            throw ConfigError(where, "expected a number");
        } else if constexpr (std::is_same_v<T, bool>) {
            if (auto v = n.value_exact<bool>()) return *v;
            throw ConfigError(where, "expected a boolean");
        } else if constexpr (std::is_same_v<T, std::uint64_t> || std::is_same_v<T, std::size_t>) {
            auto v = n.value_exact<std::int64_t>();
            if (!v || *v < 0) throw ConfigError(where, "expected a nonnegative integer");
            return static_cast<T>(*v);
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (auto v = n.value_exact<std::string>()) return *v;
            throw ConfigError(where, "expected a string");
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
            const toml::array* a = n.as_array();
            if (a == nullptr) throw ConfigError(where, "expected an array of numbers");
            std::vector<double> out;
            for (const auto& e : *a) out.push_back(convert<double>(e, where));
            return out;
        } else if constexpr (std::is_same_v<T, std::vector<std::vector<double>>>) {
            const toml::array* a = n.as_array();
            if (a == nullptr) throw ConfigError(where, "expected an array of arrays");
            std::vector<std::vector<double>> out;
            for (const auto& e : *a) out.push_back(convert<std::vector<double>>(e, where));
            return out;
        } else {
            static_assert(sizeof(T) == 0, "unsupported config type");
        }
    }

private:
    const toml::table& t_;
    std::string prefix_;
    std::set<std::string> used_;
};

inline void require(bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError(key, what);
}

inline PotentialBlock read_base(TableReader& r, const std::string& kind) {
    PotentialBlock b;
    b.kind = kind;
    if (kind == "gaussian") {
        b.d = r.get<std::size_t>("d", b.d);
        b.kappa = r.get<double>("kappa", b.kappa);
    } else if (kind == "banana") {
        b.d = 2;
        b.box_lo = r.get<std::vector<double>>("box_lo", b.box_lo);
        b.box_hi = r.get<std::vector<double>>("box_hi", b.box_hi);
        b.kappa = r.get<double>("kappa", b.kappa);
        b.R = r.get<double>("R", b.R);
        require(b.box_lo.size() == 2 && b.box_hi.size() == 2, r.path("box_lo"), "box must be 2-D");
    } else if (kind == "gmm") {
        b.sigma = r.get<double>("sigma", b.sigma);
        require(r.has("means"), r.path("means"), "gmm needs means");
        b.means = r.get<std::vector<std::vector<double>>>("means", {});
        b.weights = r.get<std::vector<double>>("weights", {});
        require(!b.means.empty(), r.path("means"), "gmm needs at least one mean");
        b.d = b.means.front().size();
    } else if (kind == "double_well") {
        b.d = r.get<std::size_t>("d", b.d);
        b.kappa0 = r.get<double>("kappa0", b.kappa0);
        b.A = r.get<double>("A", b.A);
        b.s = r.get<double>("s", b.s);
        b.kappa = r.get<double>("kappa", 0.5 * b.kappa0);
    } else {
        throw ConfigError(r.path("kind"), "unknown potential kind '" + kind + "'");
    }
    require(b.d > 0, r.path("d"), "dimension must be positive");
    return b;
}

inline void write_base(toml::table& t, const PotentialBlock& b) {
    t.insert_or_assign("kind", b.kind);
    auto arr = [](const std::vector<double>& v) {
        toml::array a;
        for (double e : v) a.push_back(e);
        return a;
    };
    if (b.kind == "gaussian") {
        t.insert_or_assign("d", static_cast<std::int64_t>(b.d));
        t.insert_or_assign("kappa", b.kappa);
    } else if (b.kind == "banana") {
        t.insert_or_assign("box_lo", arr(b.box_lo));
        t.insert_or_assign("box_hi", arr(b.box_hi));
        t.insert_or_assign("kappa", b.kappa);
        t.insert_or_assign("R", b.R);
    } else if (b.kind == "gmm") {
        t.insert_or_assign("sigma", b.sigma);
        toml::array m;
        for (const auto& row : b.means) m.push_back(arr(row));
        t.insert_or_assign("means", m);
        if (!b.weights.empty()) t.insert_or_assign("weights", arr(b.weights));
    } else if (b.kind == "double_well") {
        t.insert_or_assign("d", static_cast<std::int64_t>(b.d));
        t.insert_or_assign("kappa0", b.kappa0);
        t.insert_or_assign("A", b.A);
        t.insert_or_assign("s", b.s);
        t.insert_or_assign("kappa", b.kappa);
    }
}

inline toml::array to_array(const std::vector<double>& v) {
    toml::array a;
    for (double e : v) a.push_back(e);
    return a;
}

inline std::string toml_quote(const std::string& v) {
    std::string q = "\"";
    for (char ch : v) {
        if (ch == '"' || ch == '\\') q += '\\';
        q += ch;
    }
    return q + "\"";
}

inline void deep_merge(toml::table& dst, const toml::table& src) {
    for (const auto& [k, v] : src) {
        if (v.is_table() && dst.contains(k) && dst[k].is_table()) {
            deep_merge(*dst[k].as_table(), *v.as_table());
        } else {
            dst.insert_or_assign(k, v);
        }
    }
}

}  // namespace detail


inline std::size_t state_dim(const PotentialConfig& p) {
    return p.meanfield ? p.base.d * p.N : p.base.d;
}

/// Parse a config table. Unknown keys raise ConfigError naming the key.
inline ExperimentConfig parse_config(const toml::table& root) {
    using detail::require;
    using detail::TableReader;
    ExperimentConfig c;
    TableReader top(root, "");
    const toml::table empty;

    const toml::table* pt = top.sub("potential");
    TableReader rp(pt ? *pt : empty, "potential");
    const std::string kind = rp.get<std::string>("kind", "gaussian");
    if (kind == "meanfield") {
        PotentialConfig& p = c.potential;
        p.meanfield = true;
        p.N = rp.get<std::size_t>("N", p.N);
        p.smallness_factor = rp.get<double>("smallness_factor", p.smallness_factor);
        require(p.N > 0, "potential.N", "particle count must be positive");
        const std::optional<std::size_t> d_outer =
            rp.has("d") ? std::optional{rp.get<std::size_t>("d", 0)} : std::nullopt;
        const toml::table* vt = rp.sub("V");
        toml::table vtab = vt ? *vt : empty;
        const std::string vkind = vtab["kind"].value_or(std::string("gaussian"));
        if (d_outer && !vtab.contains("d") && vkind != "banana" && vkind != "gmm")
            vtab.insert_or_assign("d", static_cast<std::int64_t>(*d_outer));
        TableReader rv(vtab, "potential.V");
        p.base = detail::read_base(rv, rv.get<std::string>("kind", "gaussian"));
        rv.finish();
        require(!d_outer || *d_outer == p.base.d, "potential.d", "disagrees with the dimension of potential.V");
        const toml::table* wt = rp.sub("W");
        TableReader rw(wt ? *wt : empty, "potential.W");
        p.W.kind = rw.get<std::string>("kind", p.W.kind);
        if (p.W.kind == "harmonic") {
            p.W.lambda = rw.get<double>("lambda", p.W.lambda);
        } else if (p.W.kind == "morse") {
            p.W.depth = rw.get<double>("depth", p.W.depth);
            p.W.width = rw.get<double>("width", p.W.width);
        } else {
            throw ConfigError("potential.W.kind", "unknown interaction '" + p.W.kind + "'");
        }
        rw.finish();
    } else {
        c.potential.base = detail::read_base(rp, kind);
    }
    rp.finish();

    const toml::table* st = top.sub("scheme");
    TableReader rs(st ? *st : empty, "scheme");
    const std::string sname = rs.get<std::string>("name", scheme_name(c.scheme));
    try {
        c.scheme = parse_scheme(sname);
    } catch (const ParameterError& e) {
        throw ConfigError("scheme.name", e.what());
    }
    c.h = rs.get<double>("h", c.h);
    c.gamma = rs.get<double>("gamma", c.gamma);
    c.n_steps = rs.get<std::uint64_t>("n_steps", c.n_steps);
    c.stride = rs.get<std::uint64_t>("stride", c.stride);
    rs.finish();
    require(c.h > 0.0, "scheme.h", "must be positive");
    require(c.gamma > 0.0, "scheme.gamma", "must be positive");
    require(c.stride > 0, "scheme.stride", "must be positive");

    const toml::table* ct = top.sub("coupling");
    TableReader rc(ct ? *ct : empty, "coupling");
    const std::string mname = rc.get<std::string>("mode", coupling_mode_name(c.mode));
    try {
        c.mode = parse_coupling_mode(mname);
    } catch (const ParameterError& e) {
        throw ConfigError("coupling.mode", e.what());
    }
    c.threshold = rc.get<double>("threshold", c.threshold);
    rc.finish();
    require(c.threshold >= 0.0, "coupling.threshold", "must be nonnegative");

    const std::size_t dim = state_dim(c.potential);
    const toml::table* it = top.sub("init");
    TableReader ri(it ? *it : empty, "init");
    InitConfig& in = c.init;
    in.random = ri.get<bool>("random", in.random);
    in.scale = ri.get<double>("scale", in.scale);
    in.xa = ri.get<std::vector<double>>("xa", std::vector<double>(dim, 0.0));
    in.va = ri.get<std::vector<double>>("va", std::vector<double>(dim, 0.0));
    in.xb = ri.get<std::vector<double>>("xb", std::vector<double>(dim, 1.0));
    in.vb = ri.get<std::vector<double>>("vb", std::vector<double>(dim, 0.0));
    ri.finish();
    require(in.scale > 0.0, "init.scale", "must be positive");
    for (const auto& [k, v] : {std::pair{"init.xa", &in.xa}, std::pair{"init.va", &in.va},
                               std::pair{"init.xb", &in.xb}, std::pair{"init.vb", &in.vb}})
        require(v->size() == dim, k, "length must equal the state dimension " + std::to_string(dim));

    const toml::table* et = top.sub("experiment");
    TableReader re(et ? *et : empty, "experiment");
    c.seed = re.get<std::uint64_t>("seed", c.seed);
    c.replicas = re.get<std::uint64_t>("replicas", c.replicas);
    c.gammas = re.get<std::vector<double>>("gammas", c.gammas);
    c.h_list = re.get<std::vector<double>>("h_list", c.h_list);
    c.out = re.get<std::string>("out", c.out);
    c.trace = re.get<bool>("trace", c.trace);
    c.max_excluded_fraction = re.get<double>("max_excluded_fraction", c.max_excluded_fraction);
    re.finish();
    require(c.replicas >= 1, "experiment.replicas", "must be at least 1");
    for (double g : c.gammas) require(g > 0.0, "experiment.gammas", "entries must be positive");
    for (double h : c.h_list) require(h > 0.0, "experiment.h_list", "entries must be positive");

    top.finish();
    return c;
}

/// Fully resolved table; parse_config(to_toml(c)) reproduces c.
inline toml::table to_toml(const ExperimentConfig& c) {
    using detail::to_array;
    toml::table pot;
    if (c.potential.meanfield) {
        pot.insert_or_assign("kind", "meanfield");
        pot.insert_or_assign("N", static_cast<std::int64_t>(c.potential.N));
        pot.insert_or_assign("d", static_cast<std::int64_t>(c.potential.base.d));
        pot.insert_or_assign("smallness_factor", c.potential.smallness_factor);
        toml::table v;
        detail::write_base(v, c.potential.base);
        pot.insert_or_assign("V", v);
        toml::table w;
        w.insert_or_assign("kind", c.potential.W.kind);
        if (c.potential.W.kind == "harmonic") {
            w.insert_or_assign("lambda", c.potential.W.lambda);
        } else {
            w.insert_or_assign("depth", c.potential.W.depth);
            w.insert_or_assign("width", c.potential.W.width);
        }
        pot.insert_or_assign("W", w);
    } else {
        detail::write_base(pot, c.potential.base);
    }
    toml::table sch{{"name", scheme_name(c.scheme)},
                    {"h", c.h},
                    {"gamma", c.gamma},
                    {"n_steps", static_cast<std::int64_t>(c.n_steps)},
                    {"stride", static_cast<std::int64_t>(c.stride)}};
    toml::table cpl{{"mode", coupling_mode_name(c.mode)}, {"threshold", c.threshold}};
    toml::table ini{{"random", c.init.random},     {"scale", c.init.scale},
                    {"xa", to_array(c.init.xa)},    {"va", to_array(c.init.va)},
                    {"xb", to_array(c.init.xb)},    {"vb", to_array(c.init.vb)}};
    toml::table exp{{"seed", static_cast<std::int64_t>(c.seed)},
                    {"replicas", static_cast<std::int64_t>(c.replicas)},
                    {"gammas", to_array(c.gammas)},
                    {"h_list", to_array(c.h_list)},
                    {"out", c.out},
                    {"trace", c.trace},
                    {"max_excluded_fraction", c.max_excluded_fraction}};
    return toml::table{{"potential", pot}, {"scheme", sch}, {"coupling", cpl},
                       {"init", ini},      {"experiment", exp}};
}

inline std::string config_text(const ExperimentConfig& c) {
    std::ostringstream os;
    os << to_toml(c) << "\n";
    return os.str();
}

/// Parse "a.b.c=value" into a one-entry table; bare words become strings.
inline toml::table parse_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError(kv, "override must look like key=value");
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    for (char ch : key)
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '.'))
            throw ConfigError(key, "malformed override key");
    try {
        return toml::parse(key + " = " + value);
    } catch (const toml::parse_error&) {
    }
    try {
        return toml::parse(key + " = " + detail::toml_quote(value));
    } catch (const toml::parse_error& e) {
        throw ConfigError(key, std::string("cannot parse override: ") + std::string(e.description()));
    }
}

inline toml::table parse_toml_text(const std::string& text, const std::string& where) {
    try {
        return toml::parse(text);
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << e.description() << " at line " << e.source().begin.line;
        throw ConfigError(where, os.str());
    }
}

/**
 * @brief Layer a base table, a config file and key=value overrides, then parse.
 *
 * Later layers win; overrides apply after file parsing.
 */
inline ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides,
                                    const toml::table& base = {}) {
    toml::table t = base;
    if (!path.empty()) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw ConfigError(path, "cannot open config file");
        std::ostringstream ss;
        ss << is.rdbuf();
        detail::deep_merge(t, parse_toml_text(ss.str(), path));
    }
    for (const auto& kv : overrides) detail::deep_merge(t, parse_override(kv));
    return parse_config(t);
}

inline ExperimentConfig config_from_string(const std::string& text) {
    return parse_config(parse_toml_text(text, ""));
}

// ---------------------------------------------------------------------------
// Model construction.

inline PotentialModel build_base(const PotentialBlock& b, bool strict = false) {
    if (b.kind == "gaussian") return make_gaussian(b.d, b.kappa);
    if (b.kind == "banana") {
        BananaOptions o;
        o.box = {b.box_lo, b.box_hi};
        o.kappa = b.kappa;
        o.R = b.R;
        o.strict = strict;
        return make_banana(o);
    }
    if (b.kind == "gmm") return make_gaussian_mixture(b.means, b.sigma, b.weights);
    if (b.kind == "double_well") return make_double_well(b.d, b.kappa0, b.A, b.s, b.kappa);
    throw ConfigError("potential.kind", "unknown potential kind '" + b.kind + "'");
}

inline Interaction build_interaction(const InteractionBlock& w) {
    if (w.kind == "harmonic") return make_harmonic_interaction(w.lambda);
    return make_morse_interaction(w.depth, w.width);
}

inline MeanFieldSpec build_meanfield_spec(const PotentialConfig& p, bool strict = false) {
    MeanFieldSpec spec;
    spec.N = p.N;
    spec.confining = build_base(p.base, strict);
    spec.interaction = build_interaction(p.W);
    spec.smallness_factor = p.smallness_factor;
    return spec;
}

/// The full-state model, plus the model whose constants define the metric.
struct BuiltModel {
    PotentialModel model;
    PotentialModel metric_model;
    std::optional<MeanFieldSpec> meanfield;
};

inline BuiltModel build_model(const PotentialConfig& p, bool strict = false) {
    BuiltModel out;
    if (p.meanfield) {
        out.meanfield = build_meanfield_spec(p, strict);
        out.model = make_meanfield(*out.meanfield);
        out.metric_model = particle_model(*out.meanfield);
    } else {
        out.model = build_base(p.base, strict);
        out.metric_model = out.model;
    }
    return out;
}

inline InitSpec build_init(const InitConfig& in) {
    InitSpec s;
    s.random = in.random;
    s.scale = in.scale;
    s.a = {in.xa, in.va};
    s.b = {in.xb, in.vb};
    return s;
}

}  // namespace klmc
