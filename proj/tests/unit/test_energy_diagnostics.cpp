#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "levygal/energy_diagnostics.hpp"

using namespace levygal;

namespace {

NoiseModel silent()
{
    NoiseModel m;
    m.jumps.rate = 0.0;
    m.jumps.offset_norm = 0.0;
    return m;
}

NoiseModel full()
{
    NoiseModel m;
    m.wiener.multipliers = {0.5, 0.5};
    m.wiener.advection = {{0.3, 0, 0}, {0, 0.3, 0}};
    return m;
}

struct Bench {
    std::shared_ptr<const SpectralBasis> basis = build_basis(BoxDomain{}, SystemSpec{}, 16, 3.0);
    OperatorTriple triple;
    DiscreteNoise noise;
    SimConfig cfg;

    explicit Bench(const NoiseModel& m, std::size_t n = 8)
    {
        triple = make_triple(basis, n);
        noise = discretize(m, basis, n);
        cfg.level = n;
        cfg.noise_refinement = 1;
        cfg.initial = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
        cfg.initial[0] = 1.0;
        cfg.initial[2] = 0.5;
    }
};

Sample sample(double t, SampleKind kind, double x)
{
    return {t, kind, Eigen::VectorXd::Constant(1, x)};
}

/// Exhaustive minimum over partitions of the grid times with spacing >= delta.
double brute_modulus(const std::vector<Sample>& path, double delta)
{
    std::vector<double> times;
    for (const auto& s : path)
        if (times.empty() || s.time != times.back()) times.push_back(s.time);
    const std::size_t inner = times.size() - 2;
    auto osc = [&](double a, double b) {
        std::vector<double> vals;
        for (std::size_t i = 0; i < path.size(); ++i) {
            const bool last_at_a = path[i].time == a && (i + 1 == path.size() || path[i + 1].time != a);
            if ((path[i].time > a && path[i].time < b) || last_at_a) vals.push_back(path[i].coeffs[0]);
            // left limit at b: first sample carrying time b
            if (path[i].time == b && (i == 0 || path[i - 1].time != b)) vals.push_back(path[i].coeffs[0]);
        }
        const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
        return *hi - *lo;
    };
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t mask = 0; mask < (std::size_t{1} << inner); ++mask) {
        std::vector<double> part{times.front()};
        for (std::size_t q = 0; q < inner; ++q)
            if (mask >> q & 1) part.push_back(times[q + 1]);
        part.push_back(times.back());
        bool ok = true;
        for (std::size_t q = 1; q < part.size(); ++q) ok = ok && part[q] - part[q - 1] >= delta - 1e-12;
        if (!ok) continue;
        double worst = 0.0;
        for (std::size_t q = 1; q < part.size(); ++q) worst = std::max(worst, osc(part[q - 1], part[q]));
        best = std::min(best, worst);
    }
    return best;
}

}  // namespace

TEST(Ledger, NoNoiseDegeneratesToEnergyIdentity)
{
    Bench s(silent());
    double prev = 0.0;
    for (double dt : {2e-3, 1e-3}) {
        s.cfg.dt = dt;
        const auto rec = simulate_path(s.cfg, s.triple, s.noise, 0);
        const auto L = accumulate_ledger(rec, s.cfg, s.triple, s.noise, 2.0);
        for (auto* v : {&L.small, &L.large, &L.wiener, &L.trace, &L.jumps})
            for (double x : *v) EXPECT_EQ(x, 0.0);
        EXPECT_LT(L.max_convection_work, 1e-12);
        if (prev > 0) EXPECT_NEAR(prev / L.max_abs_residual(), 2.0, 0.1);
        prev = L.max_abs_residual();
    }
}

TEST(Ledger, SmallJumpCompensatorClosedForm)
{
    NoiseModel m = silent();
    m.jumps.rate = 30.0;
    m.jumps.small_radius = 1e3;  // every mark is small
    m.jumps.offset_norm = 0.8;
    m.jumps.offset_mode = 1;
    m.jumps.linear = 0.0;
    Bench s(m);
    const auto rec = simulate_path(s.cfg, s.triple, s.noise, 4);
    const auto L = accumulate_ledger(rec, s.cfg, s.triple, s.noise, 2.0);
    const double expect = s.cfg.horizon * 0.64 * m.jumps.abs_moment(2.0, true);
    EXPECT_NEAR(L.small.back(), expect, 1e-12 * expect);
    EXPECT_EQ(L.large.back(), 0.0);
}

TEST(Ledger, FullNoiseResidualIsFirstOrder)
{
    Bench s(full());
    for (std::uint64_t path = 0; path < 3; ++path) {
        double r[2];
        const auto sk = sample_skeleton(s.noise.jumps, s.noise.directions(), 1.0, 2000, 1, path);
        for (int k = 0; k < 2; ++k) {
            SimConfig c = s.cfg;
            c.dt = 1e-3 / (1 << k);
            const auto rec = simulate_path(c, s.triple, s.noise, sk, path);
            r[k] = accumulate_ledger(rec, c, s.triple, s.noise, 2.0).max_abs_residual();
        }
        EXPECT_GE(r[0] / r[1], 1.5) << path;
        EXPECT_LE(r[0] / r[1], 2.5) << path;
    }
}

TEST(Ledger, HigherMomentResidualShrinks)
{
    Bench s(full());
    const auto sk = sample_skeleton(s.noise.jumps, s.noise.directions(), 1.0, 2000, 1, 2);
    double r[2];
    for (int k = 0; k < 2; ++k) {
        SimConfig c = s.cfg;
        c.dt = 1e-3 / (1 << k);
        r[k] = accumulate_ledger(simulate_path(c, s.triple, s.noise, sk, 2), c, s.triple, s.noise, 4.0)
                   .max_abs_residual();
    }
    EXPECT_GT(r[0] / r[1], 1.5);
}

TEST(Ledger, JumpEnergyIntegralAgainstDirectQuadrature)
{
    JumpSpec spec;
    const double a = 1.3, b = -0.4, c = 0.9;
    for (bool small : {true, false}) {
        auto quad2 = integrate_over_marks(
            spec, [&](double y) { return b * y + c * y * y - (small ? b * y : 0.0); }, small);
        EXPECT_NEAR(jump_energy_integral(spec, a, b, c, 2.0, small), quad2, 1e-10);
        // p = 4: (a + b y + c y^2)^2 - a^2 [- 2 a b y]
        auto quad4 = integrate_over_marks(
            spec,
            [&](double y) {
                const double q = a + b * y + c * y * y;
                return q * q - a * a - (small ? 2 * a * b * y : 0.0);
            },
            small);
        EXPECT_NEAR(jump_energy_integral(spec, a, b, c, 4.0, small), quad4, 1e-9 * (1 + std::abs(quad4)));
    }
}

TEST(Martingale, NoNoisePassesTrivially)
{
    Bench s(silent());
    std::vector<EnergyLedger> ls;
    for (std::uint64_t p = 0; p < 50; ++p)
        ls.push_back(accumulate_ledger(simulate_path(s.cfg, s.triple, s.noise, p), s.cfg, s.triple, s.noise, 2.0));
    for (auto term : {LedgerTerm::jumps, LedgerTerm::wiener}) {
        const auto g = martingale_mean_test(ls, term);
        EXPECT_EQ(g.mean, 0.0);
        EXPECT_TRUE(g.pass);
    }
    EXPECT_THROW(martingale_mean_test(std::span(ls).first(10), LedgerTerm::jumps), std::invalid_argument);
}

TEST(CompensatedSum, RecoversCancelledTerms)
{
    CompensatedSum s;
    for (double x : {1.0, 1e100, 1.0, -1e100}) s.add(x);
    EXPECT_EQ(s.value(), 2.0);
}

TEST(Moments, ZeroNoiseSupIsInitialEnergy)
{
    Bench s(silent(), 16);
    MomentJob job;
    job.basis = s.basis;
    job.noise = silent();
    job.config = s.cfg;
    job.levels = {4, 8};
    job.paths = 50;
    const auto rep = estimate_moments(job);
    ASSERT_EQ(rep.rows.size(), 2u);
    for (const auto& r : rep.rows) {
        EXPECT_EQ(r.sup_h2, 1.25);
        EXPECT_EQ(r.sup_h2_stderr, 0.0);
        // int (1 + lambda) u_i^2 dt with u_i = u0_i e^{-lambda_i t}, lambda = 1 for the first four modes
        const double exact = 2.0 * 1.25 * (1.0 - std::exp(-2.0)) / 2.0;
        EXPECT_NEAR(r.v_integral, exact, 2.0 * s.cfg.dt * 2.5);
    }
    EXPECT_TRUE(rep.pass());
}

TEST(Moments, ParallelEqualsSerial)
{
    Bench s(full(), 16);
    MomentJob job;
    job.basis = s.basis;
    job.noise = full();
    job.config = s.cfg;
    job.config.horizon = 0.5;
    job.levels = {4, 8};
    job.paths = 60;
    job.workers = 1;
    const auto a = estimate_moments(job);
    job.workers = 4;
    const auto b = estimate_moments(job);
    std::ostringstream sa, sb;
    write_moment_report(sa, a);
    write_moment_report(sb, b);
    EXPECT_EQ(sa.str(), sb.str());
}

TEST(Modulus, SingleJumpStep)
{
    std::vector<Sample> path;
    for (int k = 0; k <= 100; ++k) {
        const double t = k / 100.0;
        if (k == 30) {
            path.push_back(sample(t, SampleKind::jump_left, 0.0));
            path.push_back(sample(t, SampleKind::jump_right, 1.0));
        } else {
            path.push_back(sample(t, SampleKind::grid, k < 30 ? 0.0 : 1.0));
        }
    }
    for (double d : {0.01, 0.1, 0.29}) EXPECT_EQ(modulus(path, d), 0.0);
    EXPECT_EQ(modulus(path, 0.8), 1.0);
}

TEST(Modulus, ConstantPathIsZero)
{
    std::vector<Sample> path;
    for (int k = 0; k <= 20; ++k) path.push_back(sample(k / 20.0, SampleKind::grid, 3.0));
    for (double d : {0.0, 0.1, 0.5, 2.0}) EXPECT_EQ(modulus(path, d), 0.0);
}

TEST(Modulus, RampMatchesExhaustivePartitions)
{
    std::vector<Sample> path;
    for (int k = 0; k <= 8; ++k) path.push_back(sample(k / 8.0, SampleKind::grid, k / 8.0));
    EXPECT_DOUBLE_EQ(brute_modulus(path, 0.25), 0.25);
    EXPECT_DOUBLE_EQ(modulus(path, 0.25), 0.25);
}

TEST(Modulus, RandomJumpPathsMatchExhaustivePartitions)
{
    std::mt19937_64 rng(17);
    std::normal_distribution<double> z;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Sample> path;
        double x = 0.0;
        for (int k = 0; k <= 11; ++k) {
            x += 0.1 * z(rng);
            if (k == 4 || k == 9) {
                path.push_back(sample(k / 11.0, SampleKind::jump_left, x));
                x += z(rng);
                path.push_back(sample(k / 11.0, SampleKind::jump_right, x));
            } else {
                path.push_back(sample(k / 11.0, SampleKind::grid, x));
            }
        }
        const std::vector<double> deltas{0.05, 0.1, 0.2, 0.3, 0.5};
        const auto curve = modulus_curve(path, deltas);
        for (std::size_t q = 0; q < deltas.size(); ++q) {
            EXPECT_NEAR(curve[q], brute_modulus(path, deltas[q]), 1e-14) << trial << " " << deltas[q];
            if (q) EXPECT_GE(curve[q], curve[q - 1]);
        }
    }
}

TEST(Aldous, FrozenPathHasZeroProbability)
{
    std::vector<TrajectoryRecord> ens(3);
    for (auto& r : ens)
        for (int k = 0; k <= 100; ++k) r.samples.push_back({k / 100.0, SampleKind::grid, Eigen::Vector2d(1.0, -2.0)});
    const auto b = build_basis(BoxDomain{}, SystemSpec{}, 2, 3.0);
    const std::vector<StoppingRule> rules{{StoppingRule::Kind::fixed_time, 0.2}, {StoppingRule::Kind::hitting_level, 0.5}};
    const std::vector<double> thetas{0.01, 0.1}, etas{1e-6, 0.1};
    const auto t = aldous_statistic(ens, *b, rules, thetas, etas);
    for (const auto& row : t.probability)
        for (double p : row) EXPECT_EQ(p, 0.0);
}

TEST(Aldous, LinearDecayGivesUnitExponent)
{
    Bench s(silent());
    s.cfg.initial = Eigen::VectorXd::Unit(8, 0);
    std::vector<TrajectoryRecord> ens{simulate_path(s.cfg, s.triple, s.noise, 0)};
    const std::vector<StoppingRule> rules{{StoppingRule::Kind::fixed_time, 0.0}, {StoppingRule::Kind::fixed_time, 0.3}};
    const std::vector<double> thetas{0.005, 0.01, 0.02, 0.05, 0.1}, etas{0.001, 0.01};
    const auto t = aldous_statistic(ens, *s.basis, rules, thetas, etas);
    EXPECT_NEAR(t.fit_beta, 1.0, 0.2);
    EXPECT_TRUE(t.monotone_in_eta());
}

TEST(Windows, ConvergenceShrinks)
{
    Bench s(full());
    std::mt19937_64 rng(2);
    std::normal_distribution<double> z;
    Eigen::VectorXd u(8), w(8), v(8);
    for (auto* x : {&u, &w, &v})
        for (auto& c : *x) c = z(rng);
    const auto conv = window_convergence(s.triple, s.noise, u, w, v, nested_windows(s.basis->domain(), 3).front(), 6);
    EXPECT_TRUE(conv.decreasing);
    EXPECT_NEAR(conv.seminorm[0] / conv.seminorm[1], 2.0, 1e-12);
}

TEST(Windows, PairingGapThatCrossesZeroStillConverges)
{
    Bench s(full());
    std::mt19937_64 rng(5);
    std::normal_distribution<double> z;
    Eigen::VectorXd u(8), w(8), v(8);
    for (auto* x : {&u, &w, &v})
        for (auto& c : *x) c = z(rng);
    // gap(s) = s c L + s^2 c^2 Q; pick c so it vanishes at s = 0.3
    const auto& B = *s.triple.tensor;
    const double L = (apply_B(B, u, w) + apply_B(B, w, u)).dot(v);
    const double Q = apply_B(B, w, w).dot(v);
    ASSERT_GT(std::abs(L), 1e-3);
    ASSERT_GT(std::abs(Q), 1e-3);
    w *= -L / (0.3 * Q);
    const auto conv = window_convergence(s.triple, s.noise, u, w, v, nested_windows(s.basis->domain(), 3).front(), 8);
    EXPECT_GT(conv.pairing_gap[2], conv.pairing_gap[1]);
    EXPECT_TRUE(conv.decreasing);
}

TEST(Windows, PathSeminormsGrowWithWindow)
{
    Bench s(full());
    const auto rec = simulate_path(s.cfg, s.triple, s.noise, 1);
    const auto windows = nested_windows(s.basis->domain(), 3);
    const auto p = path_seminorms(rec, *s.basis, windows, s.cfg.horizon);
    ASSERT_EQ(p.size(), 3u);
    EXPECT_LE(p[0], p[1]);
    EXPECT_LE(p[1], p[2]);
}
