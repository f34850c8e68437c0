#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "levygal/levy_noise.hpp"
#include "levygal/operators.hpp"

namespace levygal {

/// Piecewise-constant forcing: values[i] holds on [times[i], times[i+1]).
struct ForcingTable {
    std::vector<double> times;
    std::vector<Eigen::VectorXd> values;

    /// Zero before the first knot or when empty; padded/truncated to `level`.
    Eigen::VectorXd at(double t, std::size_t level) const;
};

enum class Scheme { explicit_euler, semi_implicit };

struct SimConfig {
    std::size_t level = 8;
    double dt = 1e-3;
    double horizon = 1.0;
    Eigen::VectorXd initial;      // basis coordinates, padded/truncated to `level`
    ForcingTable forcing;
    double stop_radius = 1e3;
    bool cutoff_enabled = true;
    double cutoff_level = 0.0;    // <= 0 resolves to the Galerkin level
    Scheme scheme = Scheme::explicit_euler;
    long noise_refinement = 16;   // Wiener grid points per step in the skeleton
    bool compensate_small_jumps = true;  // false only for fault injection
    std::uint64_t seed = 1;

    long steps() const;
    double resolved_cutoff_level() const { return cutoff_level > 0 ? cutoff_level : static_cast<double>(level); }
    void validate(const SpectralBasis& basis) const;
};

/// Raised when a coordinate stops being finite.
class PathAborted : public std::runtime_error {
public:
    PathAborted(double time, const std::string& what) : std::runtime_error(what), time_(time) {}
    double time() const { return time_; }

private:
    double time_;
};

enum class SampleKind { grid, jump_left, jump_right };

struct Sample {
    double time = 0.0;
    SampleKind kind = SampleKind::grid;
    Eigen::VectorXd coeffs;
};

/// Continuous piece of the path between two consecutive samples.
struct Substep {
    std::size_t from = 0, to = 0;
    double h = 0.0;
    Eigen::VectorXd dW;
    double theta = 1.0;
};

struct JumpRecord {
    std::size_t left = 0, right = 0;  // sample indices
    JumpEvent event;
};

struct TrajectoryRecord {
    std::uint64_t path = 0;
    std::vector<Sample> samples;
    std::vector<Substep> substeps;
    std::vector<JumpRecord> jumps;
    bool stopped = false;
    double tau = 0.0;
    long cutoff_activations = 0;
    bool compensated = true;
};

/// Smooth transition: 1 on r <= n, 0 on r >= n + 1, C-infinity in between.
double cutoff_factor(double r, double n);
/// theta_n(|u|_{U'}) u
GalerkinState cutoff(const GalerkinState& u, double n);

/// Phi_n(u) = -A u - theta B(u, u) - R u + f(t); `theta` receives the factor used.
Eigen::VectorXd galerkin_drift(const SimConfig& cfg, const OperatorTriple& triple, const Eigen::VectorXd& u, double t,
                               double* theta = nullptr);

/// One Euler-Maruyama step over [t, t + h] with Wiener increment dW; no jumps.
Eigen::VectorXd euler_step(const SimConfig& cfg, const OperatorTriple& triple, const DiscreteNoise& noise,
                           const Eigen::VectorXd& u, double t, double h, const Eigen::VectorXd& dW,
                           double* theta = nullptr);

/// u + P_n F(u; y)
Eigen::VectorXd apply_jump(const DiscreteNoise& noise, const Eigen::VectorXd& u, double mark);

NoiseSkeleton path_skeleton(const SimConfig& cfg, const DiscreteNoise& noise, std::uint64_t path);

/// Jump-adapted Euler-Maruyama on the given skeleton, whose fine grid must
/// refine the step grid.
TrajectoryRecord simulate_path(const SimConfig& cfg, const OperatorTriple& triple, const DiscreteNoise& noise,
                               const NoiseSkeleton& skeleton, std::uint64_t path);
TrajectoryRecord simulate_path(const SimConfig& cfg, const OperatorTriple& triple, const DiscreteNoise& noise,
                               std::uint64_t path);

/// `t, |u|_H, ||u||_V, jump_flag[, coefficients]`; jump_flag 0 grid, 1 left limit, 2 post-jump.
void export_trajectory(std::ostream& out, const TrajectoryRecord& record, const SpectralBasis& basis,
                       bool coefficients);

}  // namespace levygal
