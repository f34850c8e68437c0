#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace levygal {

/// Raised when two objects that must share a basis/level do not, or a
/// documented precondition is broken by the caller.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// The quadrature grid cannot integrate the requested products exactly.
class AliasingError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class SystemTag { nse, mhd, boussinesq };
enum class Block { velocity, magnetic, temperature };
enum class Parity { cosine, sine };

std::string_view to_string(SystemTag tag);
std::string_view to_string(Block block);
SystemTag parse_system(std::string_view name);

struct BoxDomain {
    int dim = 2;
    std::array<double, 3> length{2 * std::numbers::pi, 2 * std::numbers::pi, 2 * std::numbers::pi};
    int resolution = 16;  // points per axis, power of two

    void validate() const;
    std::size_t points() const;
    double volume() const;
    double cell_volume() const;
    std::array<double, 3> coordinate(std::size_t point) const;
    std::array<double, 3> wavevector(const std::array<int, 3>& index) const;
};

/// Physical constants and block layout of one shipped system.
struct SystemSpec {
    SystemTag tag = SystemTag::nse;
    double reynolds = 1.0;
    double magnetic_reynolds = 1.0;
    double hartmann = 1.0;          // s, weights the magnetic H-inner product
    double thermal_diffusivity = 1.0;
    int buoyancy_axis = -1;         // -1 resolves to the last axis

    void validate(int dim) const;
    int resolved_buoyancy_axis(int dim) const;
    bool has_block(Block block) const;
};

struct Mode {
    Block block = Block::velocity;
    std::array<int, 3> wave{0, 0, 0};     // integer wave index m, k = 2*pi*m/L
    int polarization = 0;
    Parity parity = Parity::cosine;
    double eigenvalue = 0.0;
    std::array<double, 3> direction{0, 0, 0};  // unit polarization, scalar modes use [0]
    double amplitude = 0.0;
};

/// Component layout of sampled fields for a system: velocity components,
/// then magnetic, then temperature; `weight` is the H-inner-product weight.
struct FieldLayout {
    int components = 0;
    std::vector<Block> block;
    std::vector<double> weight;
    int offset(Block b) const;
};

/// Real field sampled on the quadrature grid, component-major storage.
struct GridField {
    BoxDomain domain;
    int components = 0;
    std::vector<double> values;

    GridField() = default;
    GridField(const BoxDomain& d, int comps);
    double& at(int component, std::size_t point) { return values[component * domain.points() + point]; }
    double at(int component, std::size_t point) const { return values[component * domain.points() + point]; }
};

class SpectralBasis {
public:
    SpectralBasis(BoxDomain domain, SystemSpec system, double sobolev_order, std::vector<Mode> modes);

    const BoxDomain& domain() const { return domain_; }
    const SystemSpec& system() const { return system_; }
    double sobolev_order() const { return sobolev_order_; }
    std::size_t size() const { return modes_.size(); }
    const Mode& mode(std::size_t i) const { return modes_.at(i); }
    std::span<const Mode> modes() const { return modes_; }

    /// Eigenvalues of the first n modes.
    Eigen::VectorXd eigenvalues(std::size_t n) const;
    double max_eigenvalue(std::size_t n) const;
    /// Largest |m_a| over the first n modes.
    int max_wave_index(std::size_t n) const;
    const FieldLayout& layout() const { return layout_; }

    /// Grid samples of mode i (all components, zero outside its block).
    GridField sample(std::size_t i) const;
    /// d/dx_axis of mode i.
    GridField sample_gradient(std::size_t i, int axis) const;

private:
    BoxDomain domain_;
    SystemSpec system_;
    double sobolev_order_;
    std::vector<Mode> modes_;
    FieldLayout layout_;
};

/// Orthonormal trigonometric eigenbasis of the block Stokes/Laplace operator,
/// ordered by eigenvalue with wavevector-lexicographic tiebreak.
std::shared_ptr<const SpectralBasis> build_basis(const BoxDomain& domain, const SystemSpec& system,
                                                 std::size_t count, double sobolev_order);

FieldLayout make_layout(const BoxDomain& domain, const SystemSpec& system);

struct GalerkinState {
    std::shared_ptr<const SpectralBasis> basis;
    Eigen::VectorXd coeffs;
    double time = 0.0;

    std::size_t level() const { return static_cast<std::size_t>(coeffs.size()); }
    double norm_h() const { return coeffs.norm(); }
    double norm_v() const;
};

GalerkinState make_state(std::shared_ptr<const SpectralBasis> basis, std::size_t level);
GalerkinState unit_state(std::shared_ptr<const SpectralBasis> basis, std::size_t level, std::size_t index);

/// P_n applied to a sampled field: coordinate i is <field, e_i>_H.
GalerkinState project(std::shared_ptr<const SpectralBasis> basis, const GridField& field, std::size_t n);
/// P_n applied to a functional given by its pairings <u*, e_i>.
GalerkinState project(std::shared_ptr<const SpectralBasis> basis, const Eigen::VectorXd& pairings, std::size_t n);
/// P_n applied to a state of any level in the same basis.
GalerkinState project(const GalerkinState& state, std::size_t n);

double inner_h(const GalerkinState& x, const GalerkinState& y);
double inner_dirichlet(const GalerkinState& x, const GalerkinState& y);
double norm_v(const GalerkinState& x);

/// Sum_i coeffs_i e_i on the grid.
GridField reconstruct(const SpectralBasis& basis, const Eigen::VectorXd& coeffs);
/// H-weighted rectangle-rule inner product of two sampled fields.
double quadrature_inner(const FieldLayout& layout, const GridField& f, const GridField& g);

/// Axis-aligned sub-box in grid-index units, [lo, hi) per axis.
struct LocalWindow {
    int index = 1;
    std::array<int, 3> lo{0, 0, 0};
    std::array<int, 3> hi{1, 1, 1};

    bool contains(const BoxDomain& domain, std::size_t point) const;
    double volume(const BoxDomain& domain) const;
};

/// `count` nested centred windows; the last one is the full box.
std::vector<LocalWindow> nested_windows(const BoxDomain& domain, int count);

/// (int_0^T int_{O_R} |u|^2 dx dt)^{1/2}: rectangle rule in space, trapezoid in
/// time over a uniform time grid.
double seminorm_local(const FieldLayout& layout, std::span<const GridField> trajectory,
                      const LocalWindow& window, double horizon);

/// `index, block, wavevector, eigenvalue` records.
void export_basis(std::ostream& out, const SpectralBasis& basis);

}  // namespace levygal
