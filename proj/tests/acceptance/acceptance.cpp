// Acceptance harness: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Usage: levygal_acceptance <configs dir> <scratch dir>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>

#include "levygal/energy_diagnostics.hpp"
#include "levygal/runner.hpp"

using namespace levygal;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(const std::string& id, bool pass, const std::string& detail)
{
    std::cout << (pass ? "PASS " : "FAIL ") << id << "  " << detail << std::endl;
    if (!pass) ++failures;
}

std::string num(double x)
{
    std::ostringstream s;
    s.precision(4);
    s << x;
    return s.str();
}

struct Loaded {
    RunConfig cfg;
    std::shared_ptr<const SpectralBasis> basis;
    OperatorTriple triple;
    DiscreteNoise noise;
};

Loaded load(const fs::path& file)
{
    Loaded l;
    l.cfg = load_config(file, true);
    l.basis = build_basis(l.cfg.domain, l.cfg.system, l.cfg.basis_size, l.cfg.sobolev_order);
    l.triple = make_triple(l.basis, l.cfg.n);
    l.noise = discretize(l.cfg.noise, l.basis, l.cfg.n);
    return l;
}

const Gate* find_gate(const RunOutcome& o, const std::string& name)
{
    for (const auto& g : o.gates)
        if (g.name == name) return &g;
    return nullptr;
}

bool gates_pass(const RunOutcome& o, std::initializer_list<const char*> names, std::string& detail)
{
    bool ok = true;
    for (const char* n : names) {
        const Gate* g = find_gate(o, n);
        const bool p = g && g->pass;
        ok = ok && p;
        detail += std::string(detail.empty() ? "" : "; ") + n + (g ? (p ? " ok" : " FAILED " + g->detail) : " missing");
    }
    return ok;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

/// Relative paths of files whose bytes differ (or exist on one side only).
std::vector<std::string> tree_diff(const fs::path& a, const fs::path& b)
{
    std::vector<std::string> diff;
    std::size_t count_a = 0, count_b = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        ++count_a;
        const auto rel = fs::relative(e.path(), a);
        if (!fs::exists(b / rel) || slurp(e.path()) != slurp(b / rel)) diff.push_back(rel.string());
    }
    for (const auto& e : fs::recursive_directory_iterator(b))
        if (e.is_regular_file()) ++count_b;
    if (count_a != count_b) diff.push_back("file count " + std::to_string(count_a) + " vs " + std::to_string(count_b));
    return diff;
}

void trilinear_and_forms(const fs::path& configs)
{
    bool ok1 = true, ok2 = true;
    std::string d1, d2;
    AssumptionReport bous;
    for (const char* name : {"nse_2d", "mhd_2d", "boussinesq_2d"}) {
        const auto l = load(configs / (std::string(name) + ".json"));
        CheckSettings s;
        s.trials = 1000;
        s.seed = l.cfg.ensemble.seed;
        const auto r = check_assumptions(l.triple, s);
        ok1 = ok1 && r.antisymmetry_residual <= 1e-10 && r.energy_residual <= 1e-10 && l.triple.tensor->entries().size() > 0;
        ok2 = ok2 && r.a_form_residual == 0.0;
        d1 += std::string(name) + " anti " + num(r.antisymmetry_residual) + " energy " + num(r.energy_residual) + "; ";
        d2 += std::string(name) + " " + num(r.a_form_residual) + "; ";
        if (l.cfg.system.tag == SystemTag::boussinesq) bous = r;
    }
    report("AC1 trilinear identities", ok1, d1);
    report("AC2 A-form identity", ok2, d2);
    report("AC3 Boussinesq R bound", bous.trials == 1000 && bous.c3 <= 1.0,
           "max -<R phi, phi> / |phi|^2 = " + num(bous.c3) + " over " + std::to_string(bous.trials) + " probes");
}

void linear_decay(const fs::path& configs)
{
    auto l = load(configs / "nse_2d.json");
    NoiseModel off;
    off.jumps.rate = 0.0;
    off.jumps.offset_norm = 0.0;
    const auto noise = discretize(off, l.basis, l.cfg.n);
    const auto triple = with_tensor(l.triple, l.triple.tensor->scaled(0.0));
    bool ok = true;
    std::string detail;
    for (std::size_t k : {std::size_t{0}, std::size_t{4}, std::size_t{7}}) {
        const double lam = l.basis->mode(k).eigenvalue;
        double err[2];
        for (int h = 0; h < 2; ++h) {
            SimConfig c = l.cfg.sim;
            c.dt = 1e-3 / (1 << h);
            c.horizon = 1.0;
            c.initial = Eigen::VectorXd::Unit(static_cast<Eigen::Index>(l.cfg.n), static_cast<Eigen::Index>(k));
            const auto rec = simulate_path(c, triple, noise, 0);
            const double exact = std::exp(-lam * c.horizon);
            err[h] = std::abs(rec.samples.back().coeffs.norm() - exact) / exact;
            ok = ok && err[h] <= 2.0 * lam * lam * c.dt * c.horizon;
        }
        const double ratio = err[0] / err[1];
        ok = ok && ratio >= 1.6 && ratio <= 2.4;
        detail += "k=" + std::to_string(k) + " rel " + num(err[0]) + " ratio " + num(ratio) + "; ";
    }
    report("AC4 linear decay oracle", ok, detail);
}

void ledger_residual(const fs::path& configs)
{
    const auto l = load(configs / "nse_2d.json");
    const int paths = 4;
    const long fine = l.cfg.sim.steps() * 2;
    double mean[2] = {0, 0};
    for (int p = 0; p < paths; ++p) {
        const auto sk = sample_skeleton(l.noise.jumps, l.noise.directions(), l.cfg.sim.horizon, fine, 11, p);
        for (int h = 0; h < 2; ++h) {
            SimConfig c = l.cfg.sim;
            c.dt = l.cfg.sim.dt / (1 << h);
            c.noise_refinement = fine / c.steps();
            const auto rec = simulate_path(c, l.triple, l.noise, sk, p);
            mean[h] += accumulate_ledger(rec, c, l.triple, l.noise, 2.0).max_abs_residual() / paths;
        }
    }
    const double ratio = mean[0] / mean[1];
    report("AC5 Ito ledger residual", ratio >= 1.5 && ratio <= 2.5,
           "C = residual/dt " + num(mean[0] / l.cfg.sim.dt) + ", " + num(mean[1] / (l.cfg.sim.dt / 2)) + "; ratio " +
               num(ratio));
}

void isometry(const fs::path& configs)
{
    const auto l = load(configs / "nse_2d.json");
    const double T = l.cfg.sim.horizon;
    const std::vector<std::pair<std::string, JumpIntegrand>> xi{
        {"y", [](double, double y) { return y; }},
        {"(0.5+t/T)|y|", [T](double t, double y) { return (0.5 + t / T) * std::abs(y); }},
        {"sin(3y)(1+t/T)", [T](double t, double y) { return std::sin(3 * y) * (1 + t / T); }}};
    bool ok = true;
    std::string detail;
    for (const auto& [name, f] : xi) {
        const auto r = compensated_integral_test(l.noise.jumps, f, T, 2000, l.cfg.ensemble.seed, 3.0);
        ok = ok && r.pass && r.paths == 2000;
        detail += name + " rel " + num(r.relative_error) + "; ";
    }
    report("AC7 Poisson isometry", ok, detail);
}

void coercivity(const fs::path& configs)
{
    const auto l = load(configs / "nse_2d.json");
    const double gamma = l.cfg.noise.jumps.gamma;
    const auto cert = certify_noise(l.noise, CertifySettings{});
    const double lo = 2.0 - 2.0 / (3.0 + gamma);
    const bool shipped = cert.feasible && cert.a > lo && cert.a <= 2.0 && cert.lambda >= 0.0 && cert.kappa >= 0.0;

    NoiseModel strong = l.cfg.noise;
    strong.wiener.advection = {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}};
    const auto bad = certify_noise(discretize(strong, l.basis, l.cfg.n), CertifySettings{});
    const bool rejected = !bad.feasible || bad.a <= lo;
    report("AC9 coercivity window", shipped && rejected,
           "shipped a=" + num(cert.a) + " lambda=" + num(cert.lambda) + " kappa=" + num(cert.kappa) + " in (" + num(lo) +
               ", 2]; over-strong " + (rejected ? "rejected: " + bad.message : "accepted"));
}

bool single_jump_modulus()
{
    std::vector<Sample> path;
    for (int k = 0; k <= 100; ++k) {
        const double t = k / 100.0;
        if (k == 40) {
            path.push_back({t, SampleKind::jump_left, Eigen::VectorXd::Zero(2)});
            path.push_back({t, SampleKind::jump_right, Eigen::VectorXd::Ones(2)});
        } else {
            path.push_back({t, SampleKind::grid, k < 40 ? Eigen::VectorXd::Zero(2) : Eigen::VectorXd::Ones(2)});
        }
    }
    bool ok = true;
    for (double d : {0.001, 0.05, 0.2, 0.39}) ok = ok && modulus(path, d) == 0.0;
    return ok;
}

}  // namespace

int main(int argc, char** argv)
{
    if (argc != 3) {
        std::cerr << "usage: levygal_acceptance <configs dir> <scratch dir>\n";
        return 2;
    }
    const fs::path configs = argv[1], scratch = argv[2];
    fs::remove_all(scratch);

    try {
        trilinear_and_forms(configs);
        linear_decay(configs);
        ledger_residual(configs);

        const auto nse = load_config(configs / "nse_2d.json", true);
        RunOptions par{4, Fault::none, scratch / "parallel"};
        const auto full = run(Command::all, nse, par);

        std::string d6;
        bool ok6 = gates_pass(full, {"martingale.M", "martingale.N"}, d6);
        RunOptions faulty{4, Fault::uncompensated_jumps, scratch / "fault"};
        const auto broken = run(Command::simulate, nse, faulty);
        const Gate* m = find_gate(broken, "martingale.M");
        const bool flipped = m && !m->pass;
        report("AC6 martingale gates", ok6 && flipped,
               d6 + "; uncompensated fault " + (flipped ? "fails M: " + m->detail : "did not fail M"));

        isometry(configs);

        std::string d8;
        const bool ok8 = gates_pass(full, {"moments.uniform_sup_h2", "moments.uniform_v_integral", "moments.bounded",
                                           "moments.no_aborts"},
                                    d8);
        report("AC8 moment uniformity", ok8, d8);

        coercivity(configs);

        std::string d10;
        const bool jump_ok = single_jump_modulus();
        const bool ok10 =
            gates_pass(full, {"modulus.monotone", "aldous.beta_positive", "aldous.monotone_in_eta"}, d10) && jump_ok;
        report("AC10 modulus and Aldous", ok10,
               std::string("single-jump step ") + (jump_ok ? "zero below gap" : "NONZERO below gap") + "; " + d10);

        RunOptions serial{1, Fault::none, scratch / "serial"};
        run(Command::all, nse, serial);
        RunOptions again{4, Fault::none, scratch / "again"};
        run(Command::all, nse, again);
        auto d_rep = tree_diff(full.root, scratch / "again");
        auto d_ser = tree_diff(full.root, scratch / "serial");
        const bool same_moments = slurp(full.root / "reports/moments.txt") ==
                                  slurp(scratch / "serial" / "reports/moments.txt");
        std::string d11 = "repeat diffs " + std::to_string(d_rep.size()) + ", serial-vs-parallel diffs " +
                          std::to_string(d_ser.size());
        for (const auto& d : d_rep) d11 += " " + d;
        for (const auto& d : d_ser) d11 += " " + d;
        report("AC11 reproducibility", d_rep.empty() && d_ser.empty() && same_moments, d11);
    } catch (const std::exception& e) {
        std::cout << "FAIL harness  " << e.what() << std::endl;
        return 1;
    }
    return failures == 0 ? 0 : 1;
}
