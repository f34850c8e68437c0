#include <chrono>
#include <filesystem>
#include <fstream>
#include <iterator>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "levygal/runner.hpp"

using namespace levygal;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path config_dir() { return LEVYGAL_CONFIG_DIR; }

fs::path scratch(const std::string& name)
{
    const auto p = fs::temp_directory_path() / ("levygal_unit_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

json minimal()
{
    return json::parse(R"({"system": "nse", "n": 8, "ensemble": {"paths": 60}})");
}

json with_a(double a)
{
    auto j = minimal();
    j["noise"]["wiener"]["certificate"] = {{"a", a}, {"lambda", 1.0}, {"kappa", 0.0}};
    return j;
}

}  // namespace

TEST(Config, MinimalGetsDefaults)
{
    const auto c = parse_config(minimal(), true);
    EXPECT_EQ(c.n, 8u);
    EXPECT_EQ(c.sim.dt, 1e-3);
    EXPECT_EQ(c.sim.horizon, 1.0);
    EXPECT_EQ(c.ensemble.paths, 60);
    EXPECT_EQ(c.noise.jumps.rate, 20.0);
    EXPECT_EQ(c.basis_size, 16u);
    for (const char* key : {"time", "noise", "ensemble", "checks", "diagnostics", "output", "physics"})
        EXPECT_TRUE(c.resolved.contains(key)) << key;
    EXPECT_EQ(c.digest.size(), 64u);
}

TEST(Config, CertificateWindow)
{
    EXPECT_NO_THROW(parse_config(with_a(1.9), true));
    try {
        parse_config(with_a(1.5), true);
        FAIL() << "a = 1.5 accepted";
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("(G.2)"), std::string::npos) << what;
        EXPECT_NE(what.find("noise.wiener.certificate.a"), std::string::npos) << what;
    }
}

TEST(Config, StrictRejectsUnknownKeys)
{
    auto j = minimal();
    j["time"]["dtt"] = 0.1;
    EXPECT_THROW(parse_config(j, true), ConfigError);
    EXPECT_NO_THROW(parse_config(j, false));
    try {
        parse_config(j, true);
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("time.dtt"), std::string::npos);
    }
}

TEST(Config, RejectsSmallEnsembles)
{
    auto j = minimal();
    j["ensemble"]["paths"] = 10;
    EXPECT_THROW(parse_config(j, true), ConfigError);
}

TEST(Config, DigestIgnoresKeyOrderButNotValues)
{
    const auto a = json::parse(R"({"n": 8, "system": "nse", "time": {"dt": 0.001, "T": 1}, "ensemble": {"paths": 60}})");
    const auto b = json::parse(R"({"ensemble": {"paths": 60}, "time": {"T": 1, "dt": 0.001}, "system": "nse", "n": 8})");
    EXPECT_EQ(parse_config(a, true).digest, parse_config(b, true).digest);
    auto c = a;
    c["time"]["dt"] = 0.0005;
    EXPECT_NE(parse_config(a, true).digest, parse_config(c, true).digest);
}

TEST(Config, Sha256KnownVector)
{
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Config, ShippedConfigsLoadStrict)
{
    for (const char* name : {"nse_2d.json", "mhd_2d.json", "boussinesq_2d.json"})
        EXPECT_NO_THROW(load_config(config_dir() / name, true)) << name;
}

TEST(Runner, CheckPassesQuickly)
{
    const auto cfg = load_config(config_dir() / "nse_2d.json", true);
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = run(Command::check, cfg, {1, Fault::none, scratch("check")});
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EXPECT_TRUE(out.pass());
    EXPECT_EQ(out.exit_code(), 0);
    EXPECT_LT(seconds, 10.0);
    EXPECT_TRUE(fs::exists(out.root / "manifest"));
    EXPECT_TRUE(fs::exists(out.root / "certificates/operators.txt"));
    fs::remove_all(out.root);
}

TEST(Runner, SimulateIsByteReproducible)
{
    auto cfg = parse_config(minimal(), true);
    const auto a = run(Command::simulate, cfg, {2, Fault::none, scratch("sim_a")});
    const auto b = run(Command::simulate, cfg, {1, Fault::none, scratch("sim_b")});
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(a.root)) {
        if (!e.is_regular_file()) continue;
        ++files;
        const auto rel = fs::relative(e.path(), a.root);
        EXPECT_EQ(slurp(e.path()), slurp(b.root / rel)) << rel;
    }
    EXPECT_GT(files, 3u);
    fs::remove_all(a.root);
    fs::remove_all(b.root);
}

TEST(Runner, BreakAntisymmetryFailsCheck)
{
    const auto cfg = load_config(config_dir() / "nse_2d.json", true);
    const auto out = run(Command::check, cfg, {1, Fault::break_antisymmetry, scratch("broken")});
    EXPECT_EQ(out.exit_code(), 1);
    EXPECT_NE(std::find(out.failures.begin(), out.failures.end(), "operators.antisymmetry"), out.failures.end());
    EXPECT_NE(slurp(out.root / "failures").find("operators.antisymmetry"), std::string::npos);
    fs::remove_all(out.root);
}

TEST(Runner, UncompensatedJumpsFailMartingaleGate)
{
    const auto cfg = load_config(config_dir() / "nse_2d.json", true);
    const auto out = run(Command::simulate, cfg, {4, Fault::uncompensated_jumps, scratch("fault")});
    EXPECT_NE(out.exit_code(), 0);
    EXPECT_NE(std::find(out.failures.begin(), out.failures.end(), "martingale.M"), out.failures.end());
    fs::remove_all(out.root);
}

TEST(Runner, ParseNames)
{
    EXPECT_EQ(parse_command("diagnose"), Command::diagnose);
    EXPECT_EQ(parse_fault("break_antisymmetry"), Fault::break_antisymmetry);
    EXPECT_THROW(parse_command("nope"), std::invalid_argument);
    EXPECT_EQ(to_string(Fault::uncompensated_jumps), "uncompensated_jumps");
}
