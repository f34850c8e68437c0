#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "levygal/levy_noise.hpp"

using namespace levygal;

namespace {

std::shared_ptr<const SpectralBasis> nse_basis() { return build_basis(BoxDomain{}, SystemSpec{}, 16, 3.0); }

NoiseModel multiplier_only(double c)
{
    NoiseModel m;
    m.wiener.multipliers = {c, c};
    m.jumps.rate = 0.0;
    m.jumps.offset_norm = 0.0;
    return m;
}

NoiseModel shipped()
{
    NoiseModel m;
    m.wiener.multipliers = {0.5, 0.5};
    m.wiener.advection = {{0.3, 0, 0}, {0, 0.3, 0}};
    return m;
}

}  // namespace

TEST(Wiener, ZeroStepGivesZero)
{
    Engine rng = make_stream(1, 0, StreamRole::wiener);
    EXPECT_EQ(sample_wiener_increment(3, 0.0, rng).norm(), 0.0);
    EXPECT_THROW(sample_wiener_increment(3, -1.0, rng), std::invalid_argument);
}

TEST(Wiener, SampleMeanWithinCltBound)
{
    const double dt = 0.01;
    const int draws = 100000;
    Engine rng = make_stream(3, 0, StreamRole::wiener);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(2);
    for (int i = 0; i < draws; ++i) sum += sample_wiener_increment(2, dt, rng);
    for (int c = 0; c < 2; ++c) EXPECT_LE(std::abs(sum[c] / draws), 3.0 * std::sqrt(dt / draws));
}

TEST(Wiener, SameSeedSameBits)
{
    Engine a = make_stream(5, 9, StreamRole::wiener), b = make_stream(5, 9, StreamRole::wiener);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(sample_wiener_increment(4, 0.1, a), sample_wiener_increment(4, 0.1, b));
    Engine c = make_stream(5, 10, StreamRole::wiener);
    Engine d = make_stream(5, 9, StreamRole::wiener);
    EXPECT_NE(sample_wiener_increment(4, 0.1, c), sample_wiener_increment(4, 0.1, d));
}

TEST(ApplyG, ZeroStateAndDiagonalMultiplier)
{
    const auto b = nse_basis();
    const auto noise = discretize(multiplier_only(0.7), b, 8);
    EXPECT_EQ(apply_G(noise, Eigen::VectorXd::Zero(8), Eigen::Vector2d(1.0, 2.0)).norm(), 0.0);
    Eigen::VectorXd u(8);
    for (int i = 0; i < 8; ++i) u[i] = 0.1 * (i + 1);
    const Eigen::Vector2d dw(0.3, -1.1);
    EXPECT_LT((apply_G(noise, u, dw) - (0.7 * 0.3 + 0.7 * -1.1) * u).norm(), 1e-15);
    EXPECT_NEAR(hs_norm2(noise, u), 2 * 0.49 * u.squaredNorm(), 1e-15);
}

TEST(ApplyG, AdvectionRotatesParityPairs)
{
    // (b . grad) of cos(k.x) is -(b.k) sin(k.x) in the same polarization
    const auto b = nse_basis();
    NoiseModel m;
    m.wiener.advection = {{0.4, -0.25, 0}};
    m.jumps.rate = 0.0;
    m.jumps.offset_norm = 0.0;
    const auto noise = discretize(m, b, 16);
    for (std::size_t i = 0; i < 16; ++i) {
        const auto& mi = b->mode(i);
        const double bk = 0.4 * mi.wave[0] - 0.25 * mi.wave[1];
        const Eigen::VectorXd out = apply_G(noise, Eigen::VectorXd::Unit(16, static_cast<Eigen::Index>(i)),
                                            Eigen::VectorXd::Ones(1));
        Eigen::VectorXd expect = Eigen::VectorXd::Zero(16);
        for (std::size_t j = 0; j < 16; ++j) {
            const auto& mj = b->mode(j);
            if (mj.wave == mi.wave && mj.parity != mi.parity)
                expect[static_cast<Eigen::Index>(j)] = mi.parity == Parity::cosine ? -bk : bk;
        }
        EXPECT_LT((out - expect).norm(), 1e-12) << i;
    }
    // transport by a divergence-free constant field is skew
    const Eigen::MatrixXd& mat = noise.multiplicative.front();
    EXPECT_LT((mat + mat.transpose()).norm(), 1e-12);
}

TEST(ApplyG, AdditiveColumns)
{
    const auto b = nse_basis();
    NoiseModel m;
    m.wiener.additive = {{1.0, 0.0, 2.0}};
    const auto noise = discretize(m, b, 4);
    const Eigen::VectorXd out = apply_G(noise, Eigen::VectorXd::Zero(4), Eigen::VectorXd::Constant(1, 0.5));
    EXPECT_EQ(out, Eigen::Vector4d(0.5, 0.0, 1.0, 0.0));
}

TEST(Jumps, ZeroRateIsEmpty)
{
    JumpSpec s;
    s.rate = 0.0;
    Engine rng = make_stream(1, 0, StreamRole::jumps);
    EXPECT_TRUE(sample_jumps(s, 0.0, 100.0, rng).empty());
}

TEST(Jumps, CountMeanAndPoissonVariance)
{
    JumpSpec s;
    const double dt = 0.05;
    const int intervals = 100000;
    Engine rng = make_stream(2, 0, StreamRole::jumps);
    double sum = 0, sum2 = 0;
    for (int i = 0; i < intervals; ++i) {
        const auto c = static_cast<double>(sample_jumps(s, 0.0, dt, rng).size());
        sum += c;
        sum2 += c * c;
    }
    const double mean = sum / intervals, var = sum2 / intervals - mean * mean;
    const double expect = s.rate * dt;
    EXPECT_LE(std::abs(mean - expect), 3.0 * std::sqrt(expect / intervals));
    EXPECT_NEAR(var / mean, 1.0, 0.05);
}

TEST(Jumps, FirstTenThousandIntervalsMean)
{
    JumpSpec s;
    s.rate = 3.0;
    Engine rng = make_stream(4, 0, StreamRole::jumps);
    double sum = 0;
    for (int i = 0; i < 10000; ++i) sum += static_cast<double>(sample_jumps(s, i, i + 1.0, rng).size());
    EXPECT_LE(std::abs(sum / 10000 - 3.0), 3.0 * std::sqrt(3.0 / 10000));
}

TEST(Jumps, SortedInIntervalWithRegionTags)
{
    JumpSpec s;
    Engine rng = make_stream(8, 0, StreamRole::jumps);
    const auto js = sample_jumps(s, 1.0, 3.0, rng);
    ASSERT_FALSE(js.empty());
    for (std::size_t i = 0; i < js.size(); ++i) {
        EXPECT_GT(js[i].time, 1.0);
        EXPECT_LE(js[i].time, 3.0);
        if (i) EXPECT_LE(js[i - 1].time, js[i].time);
        EXPECT_EQ(js[i].small, std::abs(js[i].mark) < s.small_radius);
    }
}

TEST(MarkLaw, ClosedFormMomentsAgreeWithQuadrature)
{
    JumpSpec s;
    for (double p : {0.0, 1.0, 2.0, 4.0, 8.0})
        for (bool small : {true, false}) {
            const double quad = integrate_over_marks(s, [p](double y) { return std::pow(std::abs(y), p); }, small);
            EXPECT_NEAR(s.abs_moment(p, small), quad, 1e-10 * (1.0 + quad)) << p << small;
        }
    const double signed_small = integrate_over_marks(s, [](double y) { return y; }, true);
    EXPECT_NEAR(s.signed_first_moment(true), signed_small, 1e-12);
    EXPECT_NEAR(s.small_rate() + s.large_rate(), s.rate, 1e-12);
}

TEST(MarkLaw, ExponentialSideMoments)
{
    // one-sided Exp(s): E y^2 = 2 s^2
    JumpSpec s;
    s.rate = 1.0;
    s.law = {1.0, 0.5, 0.5};
    s.small_radius = 1e6;
    EXPECT_NEAR(s.abs_moment(2.0, true), 0.5, 1e-12);
    EXPECT_NEAR(s.signed_first_moment(true), 0.5, 1e-12);
}

TEST(Isometry, ZeroIntegrand)
{
    const auto r = compensated_integral_test(JumpSpec{}, [](double, double) { return 0.0; }, 1.0, 100, 1);
    EXPECT_EQ(r.exact, 0.0);
    EXPECT_EQ(r.second_moment, 0.0);
    EXPECT_TRUE(r.pass);
}

TEST(Isometry, ConstantOnSmallJumps)
{
    JumpSpec s;
    const double c = 1.5, T = 2.0;
    auto xi = [&](double, double y) { return std::abs(y) < s.small_radius ? c : 0.0; };
    const auto r = compensated_integral_test(s, xi, T, 2000, 3);
    EXPECT_NEAR(r.exact, T * s.small_rate() * c * c, 1e-10);
    EXPECT_TRUE(r.pass) << r.second_moment << " vs " << r.exact;
    EXPECT_LE(std::abs(r.mean), 3.0 * r.mean_stderr);
}

TEST(Skeleton, JumpsIndependentOfWienerRefinement)
{
    JumpSpec s;
    const auto a = sample_skeleton(s, 2, 1.0, 100, 7, 3);
    const auto b = sample_skeleton(s, 2, 1.0, 400, 7, 3);
    ASSERT_EQ(a.jumps.size(), b.jumps.size());
    for (std::size_t i = 0; i < a.jumps.size(); ++i) {
        EXPECT_EQ(a.jumps[i].time, b.jumps[i].time);
        EXPECT_EQ(a.jumps[i].mark, b.jumps[i].mark);
    }
    long grid = 0;
    for (std::size_t q = 0; q < a.nodes.size(); ++q) {
        if (q) EXPECT_LE(a.nodes[q - 1].time, a.nodes[q].time);
        if (a.nodes[q].jump < 0) ++grid;
    }
    EXPECT_EQ(grid, 101);
    EXPECT_EQ(a.wiener.col(0).norm(), 0.0);
}

TEST(Certify, ZeroNoiseIsExactlyCoercive)
{
    NoiseModel m;
    m.jumps.rate = 0.0;
    m.jumps.offset_norm = 0.0;
    const auto cert = certify_noise(discretize(m, nse_basis(), 8), CertifySettings{});
    EXPECT_TRUE(cert.feasible);
    EXPECT_EQ(cert.a, 2.0);
    EXPECT_EQ(cert.lambda, 0.0);
    EXPECT_EQ(cert.kappa, 0.0);
}

TEST(Certify, PureMultiplier)
{
    const double c = 0.8;
    const auto cert = certify_noise(discretize(multiplier_only(c), nse_basis(), 8), CertifySettings{});
    EXPECT_TRUE(cert.feasible);
    EXPECT_EQ(cert.a, 2.0);
    EXPECT_NEAR(cert.lambda, 2 * c * c, 1e-12);  // two directions
    EXPECT_EQ(cert.kappa, 0.0);
}

TEST(Certify, ShippedGradientNoiseInsideWindow)
{
    const auto cert = certify_noise(discretize(shipped(), nse_basis(), 8), CertifySettings{});
    EXPECT_TRUE(cert.feasible) << cert.message;
    EXPECT_LT(cert.a, 2.0);
    EXPECT_GT(cert.a, 2.0 - 2.0 / 5.0);
    EXPECT_EQ(cert.violations, 0);
    for (std::size_t i = 1; i < cert.growth.size(); ++i) EXPECT_GT(cert.growth[i].second, 0.0);
}

TEST(Certify, OverStrongGradientRejected)
{
    NoiseModel m = shipped();
    m.wiener.advection = {{1.0, 0, 0}, {0, 1.0, 0}};
    const auto cert = certify_noise(discretize(m, nse_basis(), 8), CertifySettings{});
    EXPECT_FALSE(cert.feasible);
    EXPECT_NE(cert.message.find("(G.2)"), std::string::npos);
    EXPECT_LE(cert.a, cert.floor);
}

TEST(Certify, AdditiveNoiseNeedsKappa)
{
    NoiseModel m = shipped();
    m.wiener.additive = {{0.5}, {0.0, 0.5}};
    const auto cert = certify_noise(discretize(m, nse_basis(), 8), CertifySettings{});
    EXPECT_TRUE(cert.feasible);
    EXPECT_GT(cert.kappa, 0.0);
}

TEST(Certify, WienerLipschitzOfPureTransport)
{
    // sum_i M_i^T M_i = diag((b.k)^2) summed over directions = |k|^2 * 0.09, against lambda = |k|^2
    NoiseModel m;
    m.wiener.advection = {{0.3, 0, 0}, {0, 0.3, 0}};
    m.jumps.rate = 0.0;
    m.jumps.offset_norm = 0.0;
    const auto cert = certify_noise(discretize(m, nse_basis(), 8), CertifySettings{});
    EXPECT_NEAR(cert.wiener_lipschitz, 0.09, 1e-12);
}
