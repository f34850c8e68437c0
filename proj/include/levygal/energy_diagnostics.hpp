#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "levygal/galerkin_sim.hpp"

namespace levygal {

/// Running totals of the Ito decomposition of |u|^p, one entry per sample.
struct EnergyLedger {
    double p = 2.0;
    std::vector<double> times;
    std::vector<double> drift;     // int p|u|^{p-2} <Phi_n(u), u> ds
    std::vector<double> small;     // I: small-jump compensator term
    std::vector<double> large;     // K: large-jump drift term
    std::vector<double> wiener;    // N: Wiener martingale (with its discrete quadratic-variation correction)
    std::vector<double> trace;     // J: Ito trace correction
    std::vector<double> jumps;     // M: compensated jump martingale
    std::vector<double> residual;  // |u(t)|^p - |u(0)|^p - sum of the above
    double max_convection_work = 0.0;  // max |<B_n(u), u>| over substeps

    double max_abs_residual() const;
};

/// Left-point discrete ledger matching the stepper on `record`.
EnergyLedger accumulate_ledger(const TrajectoryRecord& record, const SimConfig& cfg, const OperatorTriple& triple,
                               const DiscreteNoise& noise, double p);

/// int_{region} g(y) mu(dy) for g(y) = (a + b y + c y^2)^{p/2} - a^{p/2} [- p/2 a^{p/2-1} b y when small].
double jump_energy_integral(const JumpSpec& spec, double a, double b, double c, double p, bool small);

enum class LedgerTerm { jumps, wiener };

struct GateResult {
    std::string name;
    double mean = 0.0;
    double stderr_ = 0.0;
    int samples = 0;
    bool pass = false;
};

/// |mean of the terminal value| <= level * standard error.
GateResult martingale_mean_test(std::span<const EnergyLedger> ledgers, LedgerTerm term, double level = 3.0);

/// Neumaier-compensated running sum.
class CompensatedSum {
public:
    void add(double x);
    double value() const { return sum_ + carry_; }

private:
    double sum_ = 0.0, carry_ = 0.0;
};

struct MomentRow {
    std::size_t level = 0;
    int paths = 0;
    int aborted = 0;
    double sup_h2 = 0.0, sup_h2_stderr = 0.0;        // E sup |u|^2
    double sup_hp = 0.0, sup_hp_stderr = 0.0;        // E sup |u|^{2+gamma}
    double v_integral = 0.0, v_integral_stderr = 0.0;  // E int ||u||_V^2 dt
    double sup_hp_ess = 0.0;                         // (sum x)^2 / sum x^2 for sup|u|^{2+gamma}
    long cutoff_activations = 0;
    long stopped = 0;
};

struct MomentReport {
    double gamma = 2.0;
    double uniformity_ratio = 1.5;
    std::vector<MomentRow> rows;
    bool uniform_h = false;
    bool uniform_v = false;
    bool bounded = false;    // every estimate <= 10x the first level's
    bool any_aborted = false;

    bool pass() const { return uniform_h && uniform_v && bounded && !any_aborted; }
};

struct MomentJob {
    std::shared_ptr<const SpectralBasis> basis;
    NoiseModel noise;
    SimConfig config;  // level is overridden per sweep entry
    std::vector<std::size_t> levels{4, 8, 16};
    int paths = 200;
    double gamma = 2.0;
    double uniformity_ratio = 1.5;
    int workers = 1;
    bool break_antisymmetry = false;
};

/// Same per-path seeds at every level (common random numbers); results are
/// reduced in path order so the worker count never changes a bit.
MomentReport estimate_moments(const MomentJob& job);

void write_moment_report(std::ostream& out, const MomentReport& report);

/// w_[0,T](u, delta) with the weighted norm sum_i w_i x_i^2 (empty = H-norm).
double modulus(std::span<const Sample> path, double delta, const Eigen::VectorXd& weights = {});

/// Modulus over several deltas sharing one oscillation table. `max_times`
/// thins the grid times (jump times always kept); 0 keeps every time.
std::vector<double> modulus_curve(std::span<const Sample> path, std::span<const double> deltas,
                                  const Eigen::VectorXd& weights = {}, std::size_t max_times = 0);

struct StoppingRule {
    enum class Kind { fixed_time, hitting_level } kind = Kind::fixed_time;
    double value = 0.0;
};

struct AldousTable {
    std::vector<double> thetas, etas;
    std::vector<std::vector<double>> probability;  // [theta][eta], max over rules
    std::vector<double> moment;                    // E |increment|^alpha, max over rules
    double alpha = 1.0;
    double fit_c = 0.0, fit_beta = 0.0;

    bool monotone_in_eta() const;
};

AldousTable aldous_statistic(std::span<const TrajectoryRecord> ensemble, const SpectralBasis& basis,
                             std::span<const StoppingRule> rules, std::span<const double> thetas,
                             std::span<const double> etas, double alpha = 1.0);

/// p_{T,R} for each window, from the grid samples of a record.
std::vector<double> path_seminorms(const TrajectoryRecord& record, const SpectralBasis& basis,
                                   std::span<const LocalWindow> windows, double horizon);

/// Finite-window continuity check: u_k = u + 2^-k w for k = 1..levels, reporting
/// the window seminorm of u_k - u and |<B(u_k) - B(u), v>| for a fixed v.
struct WindowConvergence {
    std::vector<double> seminorm;
    std::vector<double> pairing_gap;
    std::vector<double> jump_gap;  // |int F(u_k) - F(u) dmu|_H
    bool decreasing = false;
};

WindowConvergence window_convergence(const OperatorTriple& triple, const DiscreteNoise& noise,
                                     const Eigen::VectorXd& u, const Eigen::VectorXd& w, const Eigen::VectorXd& v,
                                     const LocalWindow& window, int levels);

void write_modulus_curve(std::ostream& out, std::span<const double> deltas, std::span<const double> values);
void write_aldous_table(std::ostream& out, const AldousTable& table);

}  // namespace levygal
