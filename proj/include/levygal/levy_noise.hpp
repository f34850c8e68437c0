#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "levygal/operators.hpp"
#include "levygal/rng.hpp"
#include "levygal/spectral_core.hpp"

namespace levygal {

/// G(u) dW = sum_i [c_i u + (b_i . grad) u + g_i] dbeta_i with constant c_i, b_i.
struct WienerSpec {
    std::vector<double> multipliers;                 // c_i
    std::vector<std::array<double, 3>> advection;    // b_i
    std::vector<std::vector<double>> additive;       // g_i in basis coordinates, zero padded
    struct Certificate {
        bool declared = false;
        double a = 2.0, lambda = 0.0, kappa = 0.0;
    } certificate;

    std::size_t directions() const;
};

/// Two-sided exponential: +Exp(scale_plus) w.p. weight_plus, else -Exp(scale_minus).
struct MarkLaw {
    double weight_plus = 0.6;
    double scale_plus = 0.3;
    double scale_minus = 0.3;
};

/// Finite-activity Poisson random measure on R with F(u; y) = y (h0 + linear * u),
/// h0 = offset_norm * e_{offset_mode}.
struct JumpSpec {
    double rate = 20.0;
    double small_radius = 1.0;
    MarkLaw law;
    double offset_norm = 2.0;
    std::size_t offset_mode = 0;
    double linear = 0.1;
    double gamma = 2.0;

    void validate() const;
    /// int_{region} |y|^p mu(dy); region: small = {|y| < r}, large = complement.
    double abs_moment(double p, bool small) const;
    /// int_{region} y mu(dy).
    double signed_first_moment(bool small) const;
    double small_rate() const { return abs_moment(0.0, true); }
    double large_rate() const { return abs_moment(0.0, false); }
};

struct NoiseModel {
    WienerSpec wiener;
    JumpSpec jumps;
};

/// Lower end of the admissible coercivity window, 2 - 2/(3 + gamma).
double coercivity_floor(double gamma);

/// Noise operators on the leading `level` modes of a basis.
struct DiscreteNoise {
    std::shared_ptr<const SpectralBasis> basis;
    std::size_t level = 0;
    std::vector<Eigen::MatrixXd> multiplicative;  // M_i
    std::vector<Eigen::VectorXd> additive;        // g_i
    Eigen::VectorXd offset;                       // h0
    JumpSpec jumps;

    std::size_t directions() const { return multiplicative.size(); }
};

DiscreteNoise discretize(const NoiseModel& model, std::shared_ptr<const SpectralBasis> basis, std::size_t level);

Eigen::VectorXd sample_wiener_increment(std::size_t directions, double dt, Engine& rng);

/// sum_i (M_i u + g_i) dW_i
Eigen::VectorXd apply_G(const DiscreteNoise& noise, const Eigen::VectorXd& u, const Eigen::VectorXd& dW);
GalerkinState apply_G(const DiscreteNoise& noise, const GalerkinState& u, const Eigen::VectorXd& dW);
/// G_i(u) = M_i u + g_i
Eigen::VectorXd g_column(const DiscreteNoise& noise, const Eigen::VectorXd& u, std::size_t i);
/// ||G(u)||_HS^2
double hs_norm2(const DiscreteNoise& noise, const Eigen::VectorXd& u);

/// h0 + linear * u, so that F(u; y) = y * jump_direction(u).
Eigen::VectorXd jump_direction(const DiscreteNoise& noise, const Eigen::VectorXd& u);
/// int_{Y0} F(u; y) mu(dy), the small-jump compensation drift.
Eigen::VectorXd small_jump_mean(const DiscreteNoise& noise, const Eigen::VectorXd& u);
/// int_{Y \ Y0} F(u; y) mu(dy).
Eigen::VectorXd large_jump_mean(const DiscreteNoise& noise, const Eigen::VectorXd& u);

struct JumpEvent {
    double time = 0.0;
    double mark = 0.0;
    bool small = true;
};

double sample_mark(const MarkLaw& law, Engine& rng);
/// Jumps of the random measure in (t0, t1], sorted by time.
std::vector<JumpEvent> sample_jumps(const JumpSpec& spec, double t0, double t1, Engine& rng);

/// Per-path noise realization shared by every step size that divides
/// `fine_steps`: jump list plus the Wiener path on the fine grid merged with
/// the jump times.
struct NoiseSkeleton {
    struct Node {
        double time = 0.0;
        long fine_index = -1;  // -1 for jump nodes
        int jump = -1;         // index into jumps, -1 for grid nodes
    };
    double horizon = 0.0;
    long fine_steps = 0;
    std::vector<JumpEvent> jumps;
    std::vector<Node> nodes;
    Eigen::MatrixXd wiener;  // directions x nodes, cumulative W(node time)
};

NoiseSkeleton sample_skeleton(const JumpSpec& jumps, std::size_t directions, double horizon, long fine_steps,
                              std::uint64_t seed, std::uint64_t path);

void export_jump_log(std::ostream& out, std::uint64_t path, const std::vector<JumpEvent>& jumps);

struct IsometryReport {
    double second_moment = 0.0;  // Monte-Carlo E|I|^2
    double second_moment_stderr = 0.0;
    double exact = 0.0;          // int int |xi|^2 ds dmu
    double relative_error = 0.0;
    double mean = 0.0;
    double mean_stderr = 0.0;
    int paths = 0;
    bool pass = false;
};

using JumpIntegrand = std::function<double(double t, double y)>;

/// I = int int xi d(eta - ds mu) over [0, T] x Y, Monte Carlo vs. the exact isometry value.
IsometryReport compensated_integral_test(const JumpSpec& spec, const JumpIntegrand& xi, double horizon, int paths,
                                         std::uint64_t seed, double level = 3.0);
/// int_{region} g(y) mu(dy) by composite Gauss-Legendre on each side of the origin.
double integrate_over_marks(const JumpSpec& spec, const std::function<double(double)>& g, bool small);
/// int_0^T int_Y xi(s, y) mu(dy) ds by Gauss-Legendre quadrature, split at |y| = r.
double integrate_against_intensity(const JumpSpec& spec, const JumpIntegrand& xi, double horizon);

struct CertifySettings {
    int probes = 400;
    std::uint64_t seed = 1;
    double step = 1e-4;          // sweep resolution in a
    double kappa_margin = 0.1;   // extra lambda spent absorbing the additive cross term
    std::vector<double> moment_orders;  // empty: {1, 2, 2+g, 4, 4+2g}
};

struct NoiseCertificate {
    bool feasible = false;
    double a = 0.0, lambda = 0.0, kappa = 0.0;
    double floor = 0.0;
    std::string message;
    std::vector<std::pair<double, double>> growth;  // (p, C_p)
    double jump_lipschitz = 0.0;                    // L
    double wiener_lipschitz = 0.0;                  // L_G
    int probe_count = 0;
    int violations = 0;
};

/// Tightest coercivity triple over the probe set plus growth/Lipschitz constants.
NoiseCertificate certify_noise(const DiscreteNoise& noise, const CertifySettings& settings);

void write_certificate(std::ostream& out, const NoiseCertificate& cert);

}  // namespace levygal
