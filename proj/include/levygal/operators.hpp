#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "levygal/spectral_core.hpp"

namespace levygal {

struct TensorEntry {
    std::uint32_t i, j, k;
    double value;
};

/// Sparse B_ijk = <B(e_i, e_j), e_k>, grouped so that the entries of any
/// leading level n form a prefix.
class TrilinearTensor {
public:
    TrilinearTensor() = default;
    TrilinearTensor(std::size_t level, std::vector<TensorEntry> entries);

    std::size_t level() const { return level_; }
    /// Entries with max(i, j, k) < n.
    std::span<const TensorEntry> entries(std::size_t n) const;
    std::span<const TensorEntry> entries() const { return entries_; }
    double at(std::size_t i, std::size_t j, std::size_t k) const;

    TrilinearTensor scaled(double factor) const;
    /// Fault injection: inflate entries with j < k so that B_ijk != -B_ikj.
    TrilinearTensor with_broken_antisymmetry(double relative) const;

private:
    std::size_t level_ = 0;
    std::vector<TensorEntry> entries_;
    std::vector<std::size_t> prefix_;  // prefix_[n] = number of entries with max index < n
};

/// Grid quadrature of the system's trilinear form over triad-admissible triples.
TrilinearTensor assemble_tensor(const SpectralBasis& basis, std::size_t level);

/// Sparse symmetric coupling R_kl = <R e_l, e_k>; empty except for Boussinesq.
struct CouplingMatrix {
    std::vector<TensorEntry> entries;  // k in .i, l in .j
};

CouplingMatrix assemble_coupling(const SpectralBasis& basis, std::size_t level);

/// (A, B, R) on the leading `level` modes of one basis.
struct OperatorTriple {
    std::shared_ptr<const SpectralBasis> basis;
    std::shared_ptr<const TrilinearTensor> tensor;
    CouplingMatrix coupling;

    std::size_t level() const { return tensor->level(); }
};

OperatorTriple make_triple(std::shared_ptr<const SpectralBasis> basis, std::size_t level);
OperatorTriple with_tensor(const OperatorTriple& triple, TrilinearTensor tensor);

Eigen::VectorXd apply_A(const SpectralBasis& basis, const Eigen::VectorXd& u);
/// out_k = sum_ij B_ijk u_i v_j over the leading u.size() modes.
Eigen::VectorXd apply_B(const TrilinearTensor& tensor, const Eigen::VectorXd& u, const Eigen::VectorXd& v);
Eigen::VectorXd apply_R(const CouplingMatrix& coupling, const Eigen::VectorXd& u);

GalerkinState apply_A(const GalerkinState& u);
GalerkinState apply_B(const TrilinearTensor& tensor, const GalerkinState& u, const GalerkinState& v);
GalerkinState apply_R(const OperatorTriple& triple, const GalerkinState& u);

/// Coordinate dual norms: weights (1 + lambda_i)^-1 and lambda_i^-m.
double dual_norm_v(const SpectralBasis& basis, const Eigen::VectorXd& x);
double dual_norm_u(const SpectralBasis& basis, const Eigen::VectorXd& x);

struct CheckSettings {
    int trials = 1000;
    std::uint64_t seed = 1;
    double identity_tolerance = 1e-10;
    double ball_radius = 1.0;
    double coupling_bound = 1.0;  // admissible c3
    int refinements = 4;          // alternating-maximization sweeps for c1/c2
};

struct AssumptionReport {
    std::string system;
    std::size_t level = 0;
    int trials = 0;
    double antisymmetry_residual = 0.0;
    double energy_residual = 0.0;
    double a_form_residual = 0.0;
    double c1 = 0.0;
    double c2 = 0.0;
    double lipschitz_ratio = 0.0;
    double lipschitz_bound = 0.0;
    double c3 = 0.0;
    bool antisymmetry_pass = false;
    bool energy_pass = false;
    bool a_form_pass = false;
    bool lipschitz_pass = false;
    bool c3_pass = false;

    bool pass() const { return antisymmetry_pass && energy_pass && a_form_pass && lipschitz_pass && c3_pass; }
};

/// Randomized probes of the structural identities plus empirical c1, c2, L_r, c3.
/// Constants are probe maxima, not proved bounds.
AssumptionReport check_assumptions(const OperatorTriple& triple, const CheckSettings& settings);

void export_tensor(std::ostream& out, const TrilinearTensor& tensor);
void write_report(std::ostream& out, const AssumptionReport& report);

}  // namespace levygal
