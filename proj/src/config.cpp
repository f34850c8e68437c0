#include "levygal/config.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "levygal/numeric_text.hpp"

namespace levygal {

using nlohmann::json;

namespace {

/// One JSON object being read: records which keys were consumed and writes
/// every resolved value (given or default) into `out`.
class Section {
public:
    Section(const json* node, json& out, std::string path) : node_(node), out_(out), path_(std::move(path))
    {
        if (node_ && !node_->is_object()) throw ConfigError(where("") + " must be an object");
        out_ = json::object();
    }

    template <class T>
    T get(const std::string& key, const T& fallback)
    {
        seen_.insert(key);
        T value = fallback;
        if (node_ && node_->contains(key)) {
            try {
                value = node_->at(key).get<T>();
            } catch (const json::exception&) {
                throw ConfigError(where(key) + " has the wrong type");
            }
        }
        out_[key] = value;
        return value;
    }

    bool has(const std::string& key) const { return node_ && node_->contains(key); }

    Section child(const std::string& key)
    {
        seen_.insert(key);
        const json* sub = node_ && node_->contains(key) ? &node_->at(key) : nullptr;
        return Section(sub, out_[key], where(key));
    }

    std::string where(const std::string& key) const
    {
        if (key.empty()) return path_.empty() ? "<root>" : path_;
        return path_.empty() ? key : path_ + "." + key;
    }

    void finish(bool strict) const
    {
        if (!node_ || !strict) return;
        for (const auto& item : node_->items())
            if (!seen_.count(item.key())) throw ConfigError("unknown key '" + where(item.key()) + "'");
    }

private:
    const json* node_;
    json& out_;
    std::string path_;
    std::set<std::string> seen_;
};

[[noreturn]] void fail(const std::string& key, const std::string& what)
{
    throw ConfigError(key + " " + what);
}

void require(bool ok, const std::string& key, const std::string& what)
{
    if (!ok) fail(key, what);
}

/// Runs a component validator and prefixes its message with the config key.
template <class F>
void checked(const std::string& key, F&& body)
{
    try {
        body();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(key + ": " + e.what());
    }
}

Eigen::VectorXd to_vector(const std::vector<double>& v)
{
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string sha256_hex(const std::string& bytes)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 digest failed");
    std::ostringstream hex;
    for (unsigned int i = 0; i < length; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return hex.str();
}

RunConfig parse_config(const json& doc, bool strict)
{
    RunConfig cfg;
    json resolved;
    Section root(&doc, resolved, "");

    // Domain and basis.
    const auto system_name = root.get<std::string>("system", "nse");
    checked("system", [&] { cfg.system.tag = parse_system(system_name); });
    cfg.domain.dim = root.get<int>("dimension", 2);
    if (root.has("box_length") && doc.at("box_length").is_array()) {
        const auto sides = root.get<std::vector<double>>("box_length", {});
        require(sides.size() == static_cast<std::size_t>(cfg.domain.dim), "box_length",
                "must list one length per dimension");
        for (std::size_t a = 0; a < sides.size(); ++a) cfg.domain.length[a] = sides[a];
    } else {
        const double side = root.get<double>("box_length", cfg.domain.length[0]);
        cfg.domain.length = {side, side, side};
    }
    cfg.domain.resolution = root.get<int>("resolution", 16);
    checked("dimension/box_length/resolution", [&] { cfg.domain.validate(); });

    const int n = root.get<int>("n", 8);
    require(n >= 1, "n", "must be >= 1");
    cfg.n = static_cast<std::size_t>(n);
    cfg.sobolev_order = root.get<double>("sobolev_order", 3.0);
    require(cfg.sobolev_order > cfg.domain.dim / 2.0 + 1.0, "sobolev_order", "must exceed dimension/2 + 1");

    {
        auto phys = root.child("physics");
        cfg.system.reynolds = phys.get<double>("Re", 1.0);
        cfg.system.magnetic_reynolds = phys.get<double>("Rm", 1.0);
        cfg.system.hartmann = phys.get<double>("hartmann", 1.0);
        cfg.system.thermal_diffusivity = phys.get<double>("kappa", 1.0);
        cfg.system.buoyancy_axis = phys.get<int>("buoyancy_axis", -1);
        phys.finish(strict);
        checked("physics", [&] { cfg.system.validate(cfg.domain.dim); });
    }

    // Time stepping.
    {
        auto time = root.child("time");
        cfg.sim.horizon = time.get<double>("T", 1.0);
        cfg.sim.dt = time.get<double>("dt", 1e-3);
        cfg.sim.noise_refinement = time.get<long>("noise_refinement", 1);
        const auto scheme = time.get<std::string>("scheme", "explicit");
        time.finish(strict);
        require(cfg.sim.horizon > 0, "time.T", "must be positive");
        require(cfg.sim.dt > 0, "time.dt", "must be positive");
        require(std::abs(std::round(cfg.sim.horizon / cfg.sim.dt) * cfg.sim.dt - cfg.sim.horizon) <=
                    1e-9 * cfg.sim.horizon,
                "time.T", "must be an integer multiple of time.dt");
        require(cfg.sim.noise_refinement >= 1, "time.noise_refinement", "must be >= 1");
        if (scheme == "explicit")
            cfg.sim.scheme = Scheme::explicit_euler;
        else if (scheme == "semi_implicit")
            cfg.sim.scheme = Scheme::semi_implicit;
        else
            fail("time.scheme", "must be 'explicit' or 'semi_implicit', got '" + scheme + "'");
    }
    cfg.sim.level = cfg.n;

    {
        auto init = root.child("initial");
        const auto preset = init.get<std::string>("preset", "low_modes");
        const auto coeffs = init.get<std::vector<double>>("coefficients", {});
        init.finish(strict);
        if (!coeffs.empty()) {
            cfg.sim.initial = to_vector(coeffs);
        } else if (preset == "low_modes") {
            cfg.sim.initial = Eigen::Vector3d(1.0, 0.0, 0.5);
        } else if (preset == "unit") {
            cfg.sim.initial = Eigen::VectorXd::Unit(1, 0);
        } else if (preset == "zero") {
            cfg.sim.initial = Eigen::VectorXd::Zero(1);
        } else {
            fail("initial.preset", "must be 'low_modes', 'unit' or 'zero', got '" + preset + "'");
        }
    }

    {
        auto forcing = root.child("forcing");
        const auto times = forcing.get<std::vector<double>>("times", {});
        const auto values = forcing.get<std::vector<std::vector<double>>>("coefficients", {});
        forcing.finish(strict);
        require(times.size() == values.size(), "forcing.coefficients", "must have one row per entry of forcing.times");
        for (std::size_t i = 1; i < times.size(); ++i)
            require(times[i] > times[i - 1], "forcing.times", "must be strictly increasing");
        cfg.sim.forcing.times = times;
        for (const auto& row : values) cfg.sim.forcing.values.push_back(to_vector(row));
    }

    {
        auto stop = root.child("stopping");
        cfg.sim.stop_radius = stop.get<double>("R_stop", 1e3);
        stop.finish(strict);
        require(cfg.sim.stop_radius > 0, "stopping.R_stop", "must be positive");
    }
    {
        auto cut = root.child("cutoff");
        cfg.sim.cutoff_enabled = cut.get<bool>("enabled", true);
        cfg.sim.cutoff_level = cut.get<double>("level", 0.0);
        cut.finish(strict);
        require(cfg.sim.cutoff_level >= 0, "cutoff.level", "must be >= 0 (0 means the Galerkin level)");
    }

    // Noise.
    {
        auto noise = root.child("noise");
        const double gamma = noise.get<double>("gamma", 2.0);
        require(gamma > 0, "noise.gamma", "must be positive");

        auto wiener = noise.child("wiener");
        auto& w = cfg.noise.wiener;
        w.multipliers = wiener.get<std::vector<double>>("multipliers", {0.5, 0.5});
        const auto adv = wiener.get<std::vector<std::vector<double>>>("advection", {{0.3, 0.0}, {0.0, 0.3}});
        for (const auto& b : adv) {
            require(b.size() == static_cast<std::size_t>(cfg.domain.dim), "noise.wiener.advection",
                    "vectors must have one entry per dimension");
            std::array<double, 3> v{0, 0, 0};
            for (std::size_t a = 0; a < b.size(); ++a) v[a] = b[a];
            w.advection.push_back(v);
        }
        w.additive = wiener.get<std::vector<std::vector<double>>>("additive", {});
        if (wiener.has("certificate")) {
            auto cert = wiener.child("certificate");
            w.certificate.declared = true;
            w.certificate.a = cert.get<double>("a", 2.0);
            w.certificate.lambda = cert.get<double>("lambda", 0.0);
            w.certificate.kappa = cert.get<double>("kappa", 0.0);
            cert.finish(strict);
            const double floor = coercivity_floor(gamma);
            if (!(w.certificate.a > floor && w.certificate.a <= 2.0)) {
                std::ostringstream msg;
                msg << "= " << format_real(w.certificate.a) << " violates coercivity assumption (G.2): a must lie in ("
                    << format_real(floor) << ", 2] for gamma = " << format_real(gamma);
                fail("noise.wiener.certificate.a", msg.str());
            }
            require(w.certificate.lambda >= 0, "noise.wiener.certificate.lambda", "must be >= 0");
            require(w.certificate.kappa >= 0, "noise.wiener.certificate.kappa", "must be >= 0");
        }
        wiener.finish(strict);

        auto jumps = noise.child("jumps");
        auto& j = cfg.noise.jumps;
        const JumpSpec d;
        j.rate = jumps.get<double>("rate", d.rate);
        j.small_radius = jumps.get<double>("small_radius", d.small_radius);
        j.law.weight_plus = jumps.get<double>("weight_plus", d.law.weight_plus);
        j.law.scale_plus = jumps.get<double>("scale_plus", d.law.scale_plus);
        j.law.scale_minus = jumps.get<double>("scale_minus", d.law.scale_minus);
        j.offset_norm = jumps.get<double>("offset_norm", d.offset_norm);
        const int mode = jumps.get<int>("offset_mode", 0);
        j.linear = jumps.get<double>("linear", d.linear);
        jumps.finish(strict);
        require(mode >= 0 && static_cast<std::size_t>(mode) < cfg.n, "noise.jumps.offset_mode", "must lie in [0, n)");
        j.offset_mode = static_cast<std::size_t>(mode);
        j.gamma = gamma;
        checked("noise.jumps", [&] { j.validate(); });
        noise.finish(strict);
    }

    {
        auto ens = root.child("ensemble");
        auto& e = cfg.ensemble;
        e.paths = ens.get<int>("paths", e.paths);
        e.n_sweep = ens.get<std::vector<std::size_t>>("n_sweep", e.n_sweep);
        e.seed = ens.get<std::uint64_t>("seed", e.seed);
        e.uniformity_ratio = ens.get<double>("uniformity_ratio", e.uniformity_ratio);
        e.stored_paths = ens.get<int>("stored_paths", e.stored_paths);
        e.isometry_paths = ens.get<int>("isometry_paths", e.isometry_paths);
        ens.finish(strict);
        require(e.paths >= 50, "ensemble.paths", "must be >= 50 for the martingale gates");
        require(!e.n_sweep.empty(), "ensemble.n_sweep", "must not be empty");
        for (auto level : e.n_sweep) require(level >= 1, "ensemble.n_sweep", "entries must be >= 1");
        require(e.uniformity_ratio > 1, "ensemble.uniformity_ratio", "must exceed 1");
        require(e.stored_paths >= 0 && e.stored_paths <= e.paths, "ensemble.stored_paths", "must lie in [0, paths]");
        require(e.isometry_paths >= 2, "ensemble.isometry_paths", "must be >= 2");
        cfg.sim.seed = e.seed;
    }

    {
        auto chk = root.child("checks");
        auto& c = cfg.checks;
        c.trials = chk.get<int>("trials", c.trials);
        c.tolerance = chk.get<double>("tolerance", c.tolerance);
        c.probes = chk.get<int>("probes", c.probes);
        c.ball_radius = chk.get<double>("ball_radius", c.ball_radius);
        chk.finish(strict);
        require(c.trials >= 1, "checks.trials", "must be >= 1");
        require(c.tolerance > 0, "checks.tolerance", "must be positive");
        require(c.probes >= 100, "checks.probes", "must be >= 100");
        require(c.ball_radius > 0, "checks.ball_radius", "must be positive");
    }

    {
        auto diag = root.child("diagnostics");
        auto& g = cfg.diagnostics;
        g.deltas = diag.get<std::vector<double>>("deltas", g.deltas);
        g.thetas = diag.get<std::vector<double>>("thetas", g.thetas);
        g.etas = diag.get<std::vector<double>>("etas", g.etas);
        g.hitting_levels = diag.get<std::vector<double>>("hitting_levels", g.hitting_levels);
        g.fixed_times = diag.get<std::vector<double>>("fixed_times", g.fixed_times);
        g.windows = diag.get<int>("windows", g.windows);
        g.modulus_paths = diag.get<int>("modulus_paths", g.modulus_paths);
        g.modulus_max_times = diag.get<std::size_t>("modulus_max_times", g.modulus_max_times);
        g.refinement_paths = diag.get<int>("refinement_paths", g.refinement_paths);
        diag.finish(strict);
        for (double v : g.deltas) require(v > 0, "diagnostics.deltas", "entries must be positive");
        for (double v : g.thetas) require(v > 0, "diagnostics.thetas", "entries must be positive");
        for (double v : g.etas) require(v > 0, "diagnostics.etas", "entries must be positive");
        require(g.thetas.size() >= 2, "diagnostics.thetas", "needs at least two entries for the exponent fit");
        for (double v : g.fixed_times)
            require(v >= 0 && v < cfg.sim.horizon, "diagnostics.fixed_times", "entries must lie in [0, T)");
        require(g.windows >= 1, "diagnostics.windows", "must be >= 1");
        require(g.modulus_paths >= 0 && g.modulus_paths <= cfg.ensemble.paths, "diagnostics.modulus_paths",
                "must lie in [0, ensemble.paths]");
        require(g.refinement_paths >= 1, "diagnostics.refinement_paths", "must be >= 1");
    }

    {
        auto out = root.child("output");
        cfg.output_root = out.get<std::string>("root", "levygal_out");
        cfg.store_coefficients = out.get<bool>("store_coefficients", false);
        out.finish(strict);
    }

    std::size_t needed = cfg.n;
    for (auto level : cfg.ensemble.n_sweep) needed = std::max(needed, level);
    const auto basis_size = root.get<std::size_t>("basis_size", 0);
    require(basis_size == 0 || basis_size >= needed, "basis_size", "must cover n and every entry of ensemble.n_sweep");
    cfg.basis_size = basis_size == 0 ? needed : basis_size;
    resolved["basis_size"] = cfg.basis_size;

    root.finish(strict);
    cfg.resolved = std::move(resolved);
    cfg.digest = sha256_hex(cfg.resolved.dump());
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path, bool strict)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(doc, strict);
}

}  // namespace levygal
