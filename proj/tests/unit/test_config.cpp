#include <gtest/gtest.h>

#include <fstream>

#include "klmc/cli.hpp"
#include "klmc/config.hpp"

using namespace klmc;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::filesystem::path config_dir() { return std::filesystem::path(KLMC_SOURCE_DIR) / "configs"; }

std::string key_of(const std::string& text) {
    try {
        config_from_string(text);
    } catch (const ConfigError& e) {
        return e.key();
    }
    return "<none>";
}

}  // namespace

TEST(Config, DefaultsFromEmptyTable) {
    const auto c = config_from_string("");
    EXPECT_EQ(c.potential.base.kind, "gaussian");
    EXPECT_EQ(c.scheme, Scheme::BU);
    EXPECT_EQ(c.mode, CouplingMode::reflection);
    EXPECT_EQ(c.init.xa, std::vector<double>(2, 0.0));
    EXPECT_EQ(c.init.xb, std::vector<double>(2, 1.0));
    EXPECT_EQ(c.gamma_list(), std::vector<double>{1.0});
}

TEST(Config, UnknownKeysAreNamed) {
    EXPECT_EQ(key_of("[scheme]\nhh = 0.1\n"), "scheme.hh");
    EXPECT_EQ(key_of("[sampler]\nh = 0.1\n"), "sampler");
    EXPECT_EQ(key_of("[potential]\nkind = \"gaussian\"\nsigma = 0.5\n"), "potential.sigma");
    EXPECT_EQ(key_of("[potential]\nkind = \"meanfield\"\n[potential.W]\nkind = \"harmonic\"\nwidth = 1.0\n"),
              "potential.W.width");
    EXPECT_EQ(key_of("[experiment]\nreplica = 5\n"), "experiment.replica");
}

TEST(Config, InvalidValuesAreNamed) {
    EXPECT_EQ(key_of("[scheme]\nh = -0.1\n"), "scheme.h");
    EXPECT_EQ(key_of("[scheme]\nname = \"leapfrog\"\n"), "scheme.name");
    EXPECT_EQ(key_of("[scheme]\nn_steps = 1.5\n"), "scheme.n_steps");
    EXPECT_EQ(key_of("[coupling]\nmode = \"maximal\"\n"), "coupling.mode");
    EXPECT_EQ(key_of("[init]\nxa = [1.0]\n"), "init.xa");
    EXPECT_EQ(key_of("[potential]\nkind = \"gmm\"\n"), "potential.means");
    EXPECT_EQ(key_of("[potential]\nkind = \"sphere\"\n"), "potential.kind");
    EXPECT_EQ(key_of("[potential]\nkind = \"meanfield\"\nd = 3\n[potential.V]\nkind = \"gaussian\"\nd = 2\n"),
              "potential.d");
    EXPECT_THROW(config_from_string("[scheme\nh = 1"), ConfigError);
}

TEST(Config, MeanfieldDimensionPropagates) {
    const auto c = config_from_string("[potential]\nkind = \"meanfield\"\nN = 3\nd = 4\n");
    EXPECT_TRUE(c.potential.meanfield);
    EXPECT_EQ(c.potential.base.d, 4u);
    EXPECT_EQ(state_dim(c.potential), 12u);
    EXPECT_EQ(c.init.xb.size(), 12u);
}

TEST(Config, OverridesLayerOnTop) {
    const auto path = config_dir() / "gaussian.toml";
    const auto c = load_config(path.string(), {"scheme.h=0.02", "experiment.out=elsewhere", "coupling.mode=reflection",
                                               "experiment.gammas=[1.0, 3.0]"});
    EXPECT_EQ(c.h, 0.02);
    EXPECT_EQ(c.out, "elsewhere");
    EXPECT_EQ(c.mode, CouplingMode::reflection);
    EXPECT_EQ(c.gammas, (std::vector<double>{1.0, 3.0}));
    EXPECT_EQ(c.potential.base.kappa, 2.0);
    EXPECT_THROW(load_config(path.string(), {"scheme.h"}), ConfigError);
    EXPECT_THROW(load_config(path.string(), {"scheme.bogus=1"}), ConfigError);
    EXPECT_THROW(load_config("/nonexistent/file.toml", {}), ConfigError);
}

TEST(Config, RoundTripThroughToml) {
    for (const auto& entry : std::filesystem::directory_iterator(config_dir())) {
        const auto c = load_config(entry.path().string(), {});
        const std::string text = config_text(c);
        EXPECT_EQ(config_text(config_from_string(text)), text) << entry.path();
    }
}

TEST(Config, FigureConfigsMatchPresets) {
    const auto banana = load_config((config_dir() / "banana_figure.toml").string(), {});
    const auto gmm = load_config((config_dir() / "gmm_figure.toml").string(), {});
    EXPECT_EQ(config_text(banana), config_text(config_from_string(banana_figure_preset())));
    EXPECT_EQ(config_text(gmm), config_text(config_from_string(gmm_figure_preset())));
    EXPECT_EQ(gmm.potential.base.means.size(), 10u);
    EXPECT_EQ(banana.init.xa, (std::vector<double>{4.0, 16.0}));
    EXPECT_EQ(banana.init.xb, (std::vector<double>{-4.0, 16.0}));
    EXPECT_EQ(gmm.init.xa, (std::vector<double>{1.0, 1.0}));
    EXPECT_EQ(gmm.init.xb, (std::vector<double>{9.0, 9.0}));
}

TEST(Config, BuildsEveryExampleModel) {
    for (const auto& entry : std::filesystem::directory_iterator(config_dir())) {
        const auto c = load_config(entry.path().string(), {});
        const auto bm = build_model(c.potential);
        EXPECT_EQ(bm.model.dim, state_dim(c.potential)) << entry.path();
        EXPECT_EQ(bm.meanfield.has_value(), c.potential.meanfield);
    }
}

TEST(Io, BlobHashMatchesGit) {
    // Object ids as printed by `git hash-object`.
    EXPECT_EQ(git_blob_sha1(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    EXPECT_EQ(git_blob_sha1("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST(Io, ShortestRoundTripDoubles) {
    EXPECT_EQ(fmt_double(0.1), "0.1");
    EXPECT_EQ(fmt_double(2.0), "2");
    EXPECT_EQ(std::stod(fmt_double(1.0 / 3.0)), 1.0 / 3.0);
}

TEST(Io, AtomicWriteReplacesContent) {
    const auto dir = std::filesystem::temp_directory_path() / "klmc_io_test";
    std::filesystem::remove_all(dir);
    write_file_atomic(dir / "sub" / "a.txt", "one");
    write_file_atomic(dir / "sub" / "a.txt", "two");
    EXPECT_EQ(slurp(dir / "sub" / "a.txt"), "two");
    EXPECT_FALSE(std::filesystem::exists(dir / "sub" / "a.txt.tmp"));
    std::filesystem::remove_all(dir);
}
