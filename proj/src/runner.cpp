#include "levygal/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <thread>

#include "levygal/energy_diagnostics.hpp"
#include "levygal/numeric_text.hpp"

namespace levygal {

namespace fs = std::filesystem;

Command parse_command(std::string_view name)
{
    if (name == "check") return Command::check;
    if (name == "simulate") return Command::simulate;
    if (name == "moments") return Command::moments;
    if (name == "diagnose") return Command::diagnose;
    if (name == "all") return Command::all;
    throw std::invalid_argument("unknown command '" + std::string(name) + "'");
}

Fault parse_fault(std::string_view name)
{
    if (name == "none") return Fault::none;
    if (name == "uncompensated_jumps") return Fault::uncompensated_jumps;
    if (name == "break_antisymmetry") return Fault::break_antisymmetry;
    throw std::invalid_argument("unknown fault '" + std::string(name) + "'");
}

std::string_view to_string(Command command)
{
    switch (command) {
    case Command::check: return "check";
    case Command::simulate: return "simulate";
    case Command::moments: return "moments";
    case Command::diagnose: return "diagnose";
    case Command::all: return "all";
    }
    return "?";
}

std::string_view to_string(Fault fault)
{
    switch (fault) {
    case Fault::none: return "none";
    case Fault::uncompensated_jumps: return "uncompensated_jumps";
    case Fault::break_antisymmetry: return "break_antisymmetry";
    }
    return "?";
}

fs::path resolve_output_root(const RunConfig& cfg)
{
    if (const char* env = std::getenv("LEVYGAL_OUTPUT_ROOT"); env && *env) return env;
    return cfg.output_root;
}

namespace {

constexpr double broken_antisymmetry = 0.05;

/// Runs body(i) for i in [0, count); each index is handled exactly once and
/// results go to caller-owned slots, so the worker count never matters.
template <class F>
void parallel_for(std::size_t count, int workers, F&& body)
{
    std::atomic<std::size_t> next{0};
    auto loop = [&] {
        for (std::size_t i = next++; i < count; i = next++) body(i);
    };
    if (workers <= 1) {
        loop();
        return;
    }
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(loop);
    for (auto& t : pool) t.join();
}

const char* flag(bool ok) { return ok ? "pass" : "fail"; }

std::string path_name(std::uint64_t path)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "path_%04llu.csv", static_cast<unsigned long long>(path));
    return buf;
}

struct Context {
    const RunConfig& cfg;
    RunOptions options;
    fs::path root;
    std::shared_ptr<const SpectralBasis> basis;
    OperatorTriple triple;
    DiscreteNoise noise;
    SimConfig sim;
    std::vector<Gate> gates;
    std::vector<std::string> failures;
    std::optional<std::vector<std::optional<TrajectoryRecord>>> ensemble;

    Context(const RunConfig& c, const RunOptions& o, fs::path r) : cfg(c), options(o), root(std::move(r)) {}

    void gate(const std::string& name, bool pass, const std::string& detail = {})
    {
        gates.push_back({name, pass, detail});
        if (!pass) failures.push_back(name);
    }

    std::ofstream open(const fs::path& rel) const
    {
        std::ofstream out(root / rel, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + (root / rel).string());
        return out;
    }

    const std::vector<std::optional<TrajectoryRecord>>& paths()
    {
        if (ensemble) return *ensemble;
        const auto count = static_cast<std::size_t>(cfg.ensemble.paths);
        std::vector<std::optional<TrajectoryRecord>> slots(count);
        std::vector<std::string> aborts(count);
        parallel_for(count, options.parallel, [&](std::size_t p) {
            try {
                slots[p] = simulate_path(sim, triple, noise, p);
            } catch (const PathAborted& e) {
                aborts[p] = "path_abort " + std::to_string(p) + " t=" + format_real(e.time());
            }
        });
        for (const auto& a : aborts)
            if (!a.empty()) failures.push_back(a);
        ensemble = std::move(slots);
        return *ensemble;
    }

    std::vector<TrajectoryRecord> completed()
    {
        std::vector<TrajectoryRecord> out;
        for (const auto& r : paths())
            if (r) out.push_back(*r);
        return out;
    }
};

void run_check(Context& ctx)
{
    const auto& c = ctx.cfg.checks;
    CheckSettings settings;
    settings.trials = c.trials;
    settings.seed = ctx.cfg.ensemble.seed;
    settings.identity_tolerance = c.tolerance;
    settings.ball_radius = c.ball_radius;
    const auto report = check_assumptions(ctx.triple, settings);
    {
        auto out = ctx.open("certificates/operators.txt");
        write_report(out, report);
    }
    ctx.gate("operators.antisymmetry", report.antisymmetry_pass, "residual " + format_real(report.antisymmetry_residual));
    ctx.gate("operators.energy", report.energy_pass, "residual " + format_real(report.energy_residual));
    ctx.gate("operators.a_form", report.a_form_pass, "residual " + format_real(report.a_form_residual));
    ctx.gate("operators.lipschitz", report.lipschitz_pass,
             "ratio " + format_real(report.lipschitz_ratio) + " bound " + format_real(report.lipschitz_bound));
    ctx.gate("operators.coupling_bound", report.c3_pass, "c3 " + format_real(report.c3));

    CertifySettings cs;
    cs.probes = c.probes;
    cs.seed = ctx.cfg.ensemble.seed;
    const auto cert = certify_noise(ctx.noise, cs);
    {
        auto out = ctx.open("certificates/noise.txt");
        write_certificate(out, cert);
        const auto& declared = ctx.cfg.noise.wiener.certificate;
        if (declared.declared)
            out << "declared_a: " << format_real(declared.a) << '\n'
                << "declared_lambda: " << format_real(declared.lambda) << '\n'
                << "declared_kappa: " << format_real(declared.kappa) << '\n';
    }
    ctx.gate("noise.coercivity", cert.feasible, cert.feasible ? "a " + format_real(cert.a) : cert.message);
}

/// Max ledger residual at dt, dt/2, dt/4 on a shared noise skeleton.
void ledger_convergence(Context& ctx)
{
    const int paths = std::min(ctx.cfg.diagnostics.refinement_paths, ctx.cfg.ensemble.paths);
    constexpr int levels = 3;
    const long fine = ctx.sim.steps() * ctx.sim.noise_refinement * (1L << (levels - 1));
    std::vector<std::array<double, levels>> resid(static_cast<std::size_t>(paths));
    std::vector<std::string> aborts(static_cast<std::size_t>(paths));
    parallel_for(resid.size(), ctx.options.parallel, [&](std::size_t p) {
        const auto skeleton =
            sample_skeleton(ctx.noise.jumps, ctx.noise.directions(), ctx.sim.horizon, fine, ctx.sim.seed, p);
        for (int k = 0; k < levels; ++k) {
            SimConfig c = ctx.sim;
            c.dt = ctx.sim.dt / static_cast<double>(1 << k);
            c.noise_refinement = fine / c.steps();
            try {
                const auto rec = simulate_path(c, ctx.triple, ctx.noise, skeleton, p);
                resid[p][k] = accumulate_ledger(rec, c, ctx.triple, ctx.noise, 2.0).max_abs_residual();
            } catch (const PathAborted& e) {
                aborts[p] = "path_abort " + std::to_string(p) + " t=" + format_real(e.time()) + " (ledger refinement)";
                resid[p][k] = std::numeric_limits<double>::quiet_NaN();
            }
        }
    });
    for (const auto& a : aborts)
        if (!a.empty()) ctx.failures.push_back(a);

    auto out = ctx.open("reports/ledger_convergence.txt");
    out << "# path, dt, max_residual\n";
    std::array<CompensatedSum, levels> mean;
    for (std::size_t p = 0; p < resid.size(); ++p)
        for (int k = 0; k < levels; ++k) {
            out << p << ", " << format_real(ctx.sim.dt / (1 << k)) << ", " << format_real(resid[p][k]) << '\n';
            mean[k].add(resid[p][k]);
        }
    out << "# dt, mean_max_residual, residual_over_dt, ratio_to_previous\n";
    bool ok = true;
    std::string detail;
    for (int k = 0; k < levels; ++k) {
        const double dt = ctx.sim.dt / (1 << k);
        const double m = mean[k].value() / paths;
        out << format_real(dt) << ", " << format_real(m) << ", " << format_real(m / dt);
        if (k > 0) {
            const double ratio = mean[k - 1].value() / mean[k].value();
            out << ", " << format_real(ratio);
            ok = ok && ratio >= 1.5 && ratio <= 2.5;
            detail += (k > 1 ? " " : "ratios ") + format_real(ratio);
        }
        out << '\n';
    }
    ctx.gate("ledger.residual_order", ok, detail);
}

void run_simulate(Context& ctx)
{
    const auto& ens = ctx.paths();
    const auto records = ctx.completed();
    ctx.gate("simulate.no_aborts", records.size() == ens.size(),
             std::to_string(ens.size() - records.size()) + " aborted");

    {
        auto jumps = ctx.open("trajectories/jumps.csv");
        jumps << "# path, time, region, mark\n";
        int stored = 0;
        for (const auto& rec : records) {
            if (stored++ >= ctx.cfg.ensemble.stored_paths) break;
            auto out = ctx.open(fs::path("trajectories") / path_name(rec.path));
            out << "# t, |u|_H, ||u||_V, jump_flag" << (ctx.cfg.store_coefficients ? ", coefficients" : "") << '\n';
            export_trajectory(out, rec, *ctx.basis, ctx.cfg.store_coefficients);
            std::vector<JumpEvent> events;
            for (const auto& j : rec.jumps) events.push_back(j.event);
            export_jump_log(jumps, rec.path, events);
        }
    }

    std::vector<EnergyLedger> ledgers(records.size());
    parallel_for(records.size(), ctx.options.parallel,
                 [&](std::size_t i) { ledgers[i] = accumulate_ledger(records[i], ctx.sim, ctx.triple, ctx.noise, 2.0); });
    double worst = 0.0;
    for (const auto& l : ledgers) worst = std::max(worst, l.max_abs_residual());
    {
        auto out = ctx.open("reports/martingale.txt");
        out << "# gate, mean, stderr, samples, status\n";
        for (auto [name, term] : {std::pair{"martingale.M", LedgerTerm::jumps}, std::pair{"martingale.N", LedgerTerm::wiener}}) {
            if (ledgers.size() < 50) {
                ctx.gate(name, false, "fewer than 50 completed paths");
                continue;
            }
            const auto g = martingale_mean_test(ledgers, term);
            out << name << ", " << format_real(g.mean) << ", " << format_real(g.stderr_) << ", " << g.samples << ", "
                << flag(g.pass) << '\n';
            ctx.gate(name, g.pass, "mean " + format_real(g.mean) + " stderr " + format_real(g.stderr_));
        }
        out << "compensated: " << (ctx.sim.compensate_small_jumps ? "yes" : "no") << '\n';
        out << "max_abs_residual: " << format_real(worst) << '\n';
    }
    ledger_convergence(ctx);
}

void run_moments(Context& ctx)
{
    MomentJob job;
    job.basis = ctx.basis;
    job.noise = ctx.cfg.noise;
    job.config = ctx.sim;
    job.levels = ctx.cfg.ensemble.n_sweep;
    job.paths = ctx.cfg.ensemble.paths;
    job.gamma = ctx.cfg.noise.jumps.gamma;
    job.uniformity_ratio = ctx.cfg.ensemble.uniformity_ratio;
    job.workers = ctx.options.parallel;
    job.break_antisymmetry = ctx.options.inject == Fault::break_antisymmetry;
    const auto rep = estimate_moments(job);
    {
        auto out = ctx.open("reports/moments.txt");
        write_moment_report(out, rep);
    }
    ctx.gate("moments.uniform_sup_h2", rep.uniform_h);
    ctx.gate("moments.uniform_v_integral", rep.uniform_v);
    ctx.gate("moments.bounded", rep.bounded);
    ctx.gate("moments.no_aborts", !rep.any_aborted);
}

void run_diagnose(Context& ctx)
{
    const auto& cfg = ctx.cfg;
    const double T = cfg.sim.horizon;
    const std::vector<std::pair<std::string, JumpIntegrand>> integrands{
        {"linear", [](double, double y) { return y; }},
        {"time_weighted_abs", [T](double t, double y) { return (0.5 + t / T) * std::abs(y); }},
        {"oscillating", [T](double t, double y) { return std::sin(3.0 * y) * (1.0 + t / T); }},
    };
    {
        auto out = ctx.open("reports/isometry.txt");
        out << "# integrand, second_moment, stderr, exact, relative_error, mean, mean_stderr, paths, status\n";
        for (const auto& [name, xi] : integrands) {
            const auto r = compensated_integral_test(ctx.noise.jumps, xi, T, cfg.ensemble.isometry_paths,
                                                     cfg.ensemble.seed);
            out << name << ", " << format_real(r.second_moment) << ", " << format_real(r.second_moment_stderr) << ", "
                << format_real(r.exact) << ", " << format_real(r.relative_error) << ", " << format_real(r.mean) << ", "
                << format_real(r.mean_stderr) << ", " << r.paths << ", " << flag(r.pass) << '\n';
            ctx.gate("isometry." + name, r.pass, "relative error " + format_real(r.relative_error));
        }
    }

    const auto records = ctx.completed();
    if (records.empty()) {
        ctx.gate("diagnose.paths", false, "no completed paths");
        return;
    }
    const auto& d = cfg.diagnostics;
    const auto shown = std::min<std::size_t>(static_cast<std::size_t>(d.modulus_paths), records.size());

    auto deltas = d.deltas;
    std::sort(deltas.begin(), deltas.end());
    std::vector<std::vector<double>> curves(shown);
    parallel_for(shown, ctx.options.parallel, [&](std::size_t i) {
        curves[i] = modulus_curve(records[i].samples, deltas, {}, d.modulus_max_times);
    });
    bool monotone = true;
    {
        auto out = ctx.open("reports/modulus.txt");
        for (std::size_t i = 0; i < shown; ++i) {
            out << "# path " << records[i].path << '\n';
            write_modulus_curve(out, deltas, curves[i]);
            for (std::size_t k = 1; k < curves[i].size(); ++k) monotone = monotone && curves[i][k] >= curves[i][k - 1];
        }
    }
    ctx.gate("modulus.monotone", monotone, std::to_string(shown) + " paths");

    std::vector<StoppingRule> rules;
    for (double t : d.fixed_times) rules.push_back({StoppingRule::Kind::fixed_time, t});
    for (double h : d.hitting_levels) rules.push_back({StoppingRule::Kind::hitting_level, h});
    auto etas = d.etas;
    std::sort(etas.begin(), etas.end());
    auto thetas = d.thetas;
    std::sort(thetas.begin(), thetas.end());
    const auto table = aldous_statistic(records, *ctx.basis, rules, thetas, etas);
    {
        auto out = ctx.open("reports/aldous.txt");
        write_aldous_table(out, table);
    }
    ctx.gate("aldous.beta_positive", table.fit_beta > 0, "beta " + format_real(table.fit_beta));
    ctx.gate("aldous.monotone_in_eta", table.monotone_in_eta());

    const auto windows = nested_windows(ctx.basis->domain(), d.windows);
    {
        auto out = ctx.open("reports/windows.txt");
        out << "# path, window, seminorm\n";
        for (std::size_t i = 0; i < shown; ++i) {
            const auto s = path_seminorms(records[i], *ctx.basis, windows, T);
            for (std::size_t w = 0; w < s.size(); ++w)
                out << records[i].path << ", " << windows[w].index << ", " << format_real(s[w]) << '\n';
        }
        auto rng = make_stream(cfg.ensemble.seed, 0, StreamRole::probes);
        std::normal_distribution<double> normal;
        const auto n = static_cast<Eigen::Index>(cfg.n);
        Eigen::VectorXd u(n), w(n), v(n);
        for (auto* x : {&u, &w, &v})
            for (Eigen::Index i = 0; i < n; ++i) (*x)[i] = normal(rng);
        const auto conv = window_convergence(ctx.triple, ctx.noise, u, w, v, windows.front(), 8);
        out << "# k, seminorm, pairing_gap, jump_gap\n";
        for (std::size_t k = 0; k < conv.seminorm.size(); ++k)
            out << k + 1 << ", " << format_real(conv.seminorm[k]) << ", " << format_real(conv.pairing_gap[k]) << ", "
                << format_real(conv.jump_gap[k]) << '\n';
        ctx.gate("windows.convergence", conv.decreasing);
    }
}

void write_manifest(const Context& ctx, Command command)
{
    auto out = ctx.open("manifest");
    out << "config_digest: " << ctx.cfg.digest << '\n'
        << "code_version: " << code_version << '\n'
        << "command: " << to_string(command) << '\n'
        << "inject: " << to_string(ctx.options.inject) << '\n'
        << "seed: " << ctx.cfg.ensemble.seed << '\n'
        << "seed_rule: mt19937_64 from seed_seq(seed_lo, seed_hi, path_lo, path_hi, role); roles wiener=1 jumps=2 "
           "probes=3 initial=4 isometry=5 certification=6 statistics=7\n"
        << "layout: manifest, config.json, certificates/, trajectories/, reports/, failures\n";
    auto conf = ctx.open("config.json");
    conf << ctx.cfg.resolved.dump(2) << '\n';
}

}  // namespace

RunOutcome run(Command command, const RunConfig& cfg, const RunOptions& options)
{
    Context ctx(cfg, options, options.output_root.empty() ? resolve_output_root(cfg) : options.output_root);
    ctx.options.parallel = std::max(options.parallel, 1);
    for (const char* dir : {"certificates", "trajectories", "reports"}) fs::create_directories(ctx.root / dir);

    ctx.basis = build_basis(cfg.domain, cfg.system, cfg.basis_size, cfg.sobolev_order);
    ctx.triple = make_triple(ctx.basis, cfg.n);
    if (options.inject == Fault::break_antisymmetry)
        ctx.triple = with_tensor(ctx.triple, ctx.triple.tensor->with_broken_antisymmetry(broken_antisymmetry));
    ctx.noise = discretize(cfg.noise, ctx.basis, cfg.n);
    ctx.sim = cfg.sim;
    ctx.sim.level = cfg.n;
    ctx.sim.compensate_small_jumps = options.inject != Fault::uncompensated_jumps;
    ctx.sim.validate(*ctx.basis);

    write_manifest(ctx, command);

    const bool all = command == Command::all;
    if (all || command == Command::check) run_check(ctx);
    if (all || command == Command::simulate) run_simulate(ctx);
    if (all || command == Command::moments) run_moments(ctx);
    if (all || command == Command::diagnose) run_diagnose(ctx);

    {
        auto out = ctx.open("reports/summary.txt");
        out << "command: " << to_string(command) << '\n' << "# gate, status, detail\n";
        for (const auto& g : ctx.gates) out << g.name << ", " << flag(g.pass) << ", " << g.detail << '\n';
        out << "overall: " << flag(ctx.failures.empty()) << '\n';
    }
    {
        auto out = ctx.open("failures");
        for (const auto& f : ctx.failures) out << f << '\n';
    }

    RunOutcome outcome;
    outcome.root = ctx.root;
    outcome.gates = std::move(ctx.gates);
    outcome.failures = std::move(ctx.failures);
    return outcome;
}

}  // namespace levygal
