#include "levygal/galerkin_sim.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include "levygal/numeric_text.hpp"

namespace levygal {

Eigen::VectorXd ForcingTable::at(double t, std::size_t level) const
{
    Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(level));
    std::size_t hit = times.size();
    for (std::size_t i = 0; i < times.size(); ++i)
        if (times[i] <= t) hit = i;
    if (hit == times.size()) return f;
    const auto& v = values[hit];
    const auto keep = std::min<Eigen::Index>(v.size(), f.size());
    f.head(keep) = v.head(keep);
    return f;
}

long SimConfig::steps() const { return std::lround(horizon / dt); }

void SimConfig::validate(const SpectralBasis& basis) const
{
    if (!(dt > 0)) throw std::invalid_argument("time.dt must be positive");
    if (!(horizon >= dt)) throw std::invalid_argument("time.T must be at least dt");
    if (std::abs(static_cast<double>(steps()) * dt - horizon) > 1e-9 * horizon)
        throw std::invalid_argument("time.T must be an integer multiple of time.dt");
    if (!(stop_radius > 0)) throw std::invalid_argument("stopping.R_stop must be positive");
    if (level < 1 || level > basis.size()) throw std::invalid_argument("n must lie in [1, basis size]");
    if (noise_refinement < 1) throw std::invalid_argument("time.noise_refinement must be >= 1");
    if (forcing.times.size() != forcing.values.size())
        throw std::invalid_argument("forcing times and values differ in length");
    if (scheme == Scheme::explicit_euler && dt * basis.max_eigenvalue(level) >= 1.0) {
        std::ostringstream msg;
        msg << "time.dt = " << format_real(dt) << " violates the explicit stability guard dt * lambda_max < 1 (lambda_max = "
            << format_real(basis.max_eigenvalue(level)) << ")";
        throw std::invalid_argument(msg.str());
    }
}

double cutoff_factor(double r, double n)
{
    auto psi = [](double x) { return x > 0 ? std::exp(-1.0 / x) : 0.0; };
    if (r <= n) return 1.0;
    if (r >= n + 1) return 0.0;
    const double up = psi(n + 1 - r), down = psi(r - n);
    return up / (up + down);
}

GalerkinState cutoff(const GalerkinState& u, double n)
{
    const double theta = cutoff_factor(dual_norm_u(*u.basis, u.coeffs), n);
    GalerkinState out = u;
    if (theta != 1.0) out.coeffs *= theta;
    return out;
}

Eigen::VectorXd galerkin_drift(const SimConfig& cfg, const OperatorTriple& triple, const Eigen::VectorXd& u, double t,
                               double* theta)
{
    const auto& basis = *triple.basis;
    Eigen::VectorXd conv = apply_B(*triple.tensor, u, u);
    double th = 1.0;
    if (cfg.cutoff_enabled) {
        th = cutoff_factor(dual_norm_u(basis, u), cfg.resolved_cutoff_level());
        if (th != 1.0) conv *= th;
    }
    if (theta) *theta = th;
    return -apply_A(basis, u) - conv - apply_R(triple.coupling, u) + cfg.forcing.at(t, static_cast<std::size_t>(u.size()));
}

Eigen::VectorXd euler_step(const SimConfig& cfg, const OperatorTriple& triple, const DiscreteNoise& noise,
                           const Eigen::VectorXd& u, double t, double h, const Eigen::VectorXd& dW, double* theta)
{
    Eigen::VectorXd drift = galerkin_drift(cfg, triple, u, t, theta);
    if (cfg.compensate_small_jumps && noise.jumps.rate > 0) drift -= small_jump_mean(noise, u);
    Eigen::VectorXd next = u + h * drift + apply_G(noise, u, dW);
    if (cfg.scheme == Scheme::semi_implicit) {
        const auto& basis = *triple.basis;
        for (Eigen::Index i = 0; i < u.size(); ++i) {
            const double lam = basis.mode(static_cast<std::size_t>(i)).eigenvalue;
            next[i] = (next[i] + h * lam * u[i]) / (1.0 + h * lam);
        }
    }
    return next;
}

Eigen::VectorXd apply_jump(const DiscreteNoise& noise, const Eigen::VectorXd& u, double mark)
{
    return u + mark * jump_direction(noise, u);
}

NoiseSkeleton path_skeleton(const SimConfig& cfg, const DiscreteNoise& noise, std::uint64_t path)
{
    return sample_skeleton(noise.jumps, noise.directions(), cfg.horizon, cfg.steps() * cfg.noise_refinement, cfg.seed,
                           path);
}

namespace {

void require_finite(const Eigen::VectorXd& u, double t)
{
    if (!u.allFinite()) {
        std::ostringstream msg;
        msg << "non-finite coordinate at t = " << format_real(t);
        throw PathAborted(t, msg.str());
    }
}

}  // namespace

TrajectoryRecord simulate_path(const SimConfig& cfg, const OperatorTriple& triple, const DiscreteNoise& noise,
                               const NoiseSkeleton& skeleton, std::uint64_t path)
{
    const auto& basis = *triple.basis;
    cfg.validate(basis);
    if (triple.level() < cfg.level || noise.level != cfg.level)
        throw ContractViolation("operators, noise and configuration disagree on the Galerkin level");
    const long steps = cfg.steps();
    if (skeleton.fine_steps % steps != 0 || skeleton.horizon != cfg.horizon)
        throw ContractViolation("noise skeleton does not refine the step grid");
    const long ratio = skeleton.fine_steps / steps;

    TrajectoryRecord rec;
    rec.path = path;
    rec.compensated = cfg.compensate_small_jumps;
    rec.tau = cfg.horizon;

    const auto n = static_cast<Eigen::Index>(cfg.level);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
    const auto keep = std::min<Eigen::Index>(cfg.initial.size(), n);
    u.head(keep) = cfg.initial.head(keep);

    auto record = [&](double t, SampleKind kind) {
        rec.samples.push_back({t, kind, u});
        if (!rec.stopped && kind != SampleKind::jump_left && u.norm() >= cfg.stop_radius) {
            rec.stopped = true;
            rec.tau = t;
        }
    };
    record(0.0, SampleKind::grid);

    std::size_t last_node = 0;
    auto advance = [&](std::size_t node, SampleKind kind) {
        const double t0 = rec.samples.back().time;
        const double t1 = skeleton.nodes[node].time;
        Substep s;
        s.from = rec.samples.size() - 1;
        s.h = t1 - t0;
        s.dW = skeleton.wiener.col(static_cast<Eigen::Index>(node)) -
               skeleton.wiener.col(static_cast<Eigen::Index>(last_node));
        u = euler_step(cfg, triple, noise, u, t0, s.h, s.dW, &s.theta);
        if (s.theta != 1.0) ++rec.cutoff_activations;
        require_finite(u, t1);
        last_node = node;
        record(t1, kind);
        s.to = rec.samples.size() - 1;
        rec.substeps.push_back(std::move(s));
    };

    for (std::size_t q = 1; q < skeleton.nodes.size(); ++q) {
        const auto& node = skeleton.nodes[q];
        if (node.jump >= 0) {
            advance(q, SampleKind::jump_left);
            const auto& ev = skeleton.jumps[static_cast<std::size_t>(node.jump)];
            JumpRecord jr;
            jr.left = rec.samples.size() - 1;
            jr.event = ev;
            u = apply_jump(noise, u, ev.mark);
            require_finite(u, node.time);
            record(node.time, SampleKind::jump_right);
            jr.right = rec.samples.size() - 1;
            rec.jumps.push_back(jr);
        } else if (node.fine_index % ratio == 0) {
            advance(q, SampleKind::grid);
        }
    }
    return rec;
}

TrajectoryRecord simulate_path(const SimConfig& cfg, const OperatorTriple& triple, const DiscreteNoise& noise,
                               std::uint64_t path)
{
    return simulate_path(cfg, triple, noise, path_skeleton(cfg, noise, path), path);
}

void export_trajectory(std::ostream& out, const TrajectoryRecord& record, const SpectralBasis& basis,
                       bool coefficients)
{
    for (const auto& s : record.samples) {
        double v2 = 0.0;
        for (Eigen::Index i = 0; i < s.coeffs.size(); ++i)
            v2 += (1.0 + basis.mode(static_cast<std::size_t>(i)).eigenvalue) * s.coeffs[i] * s.coeffs[i];
        const int flag = s.kind == SampleKind::grid ? 0 : s.kind == SampleKind::jump_left ? 1 : 2;
        out << format_real(s.time) << ", " << format_real(s.coeffs.norm()) << ", " << format_real(std::sqrt(v2)) << ", "
            << flag;
        if (coefficients)
            for (Eigen::Index i = 0; i < s.coeffs.size(); ++i) out << ", " << format_real(s.coeffs[i]);
        out << '\n';
    }
}

}  // namespace levygal
