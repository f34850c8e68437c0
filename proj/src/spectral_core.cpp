#include "levygal/spectral_core.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <tuple>

#include "levygal/numeric_text.hpp"

namespace levygal {

std::string_view to_string(SystemTag tag)
{
    switch (tag) {
    case SystemTag::nse: return "nse";
    case SystemTag::mhd: return "mhd";
    case SystemTag::boussinesq: return "boussinesq";
    }
    return "unknown";
}

std::string_view to_string(Block block)
{
    switch (block) {
    case Block::velocity: return "velocity";
    case Block::magnetic: return "magnetic";
    case Block::temperature: return "temperature";
    }
    return "unknown";
}

SystemTag parse_system(std::string_view name)
{
    if (name == "nse") return SystemTag::nse;
    if (name == "mhd") return SystemTag::mhd;
    if (name == "boussinesq") return SystemTag::boussinesq;
    throw std::invalid_argument("unknown system '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// BoxDomain

void BoxDomain::validate() const
{
    if (dim != 2 && dim != 3) throw std::invalid_argument("domain dimension must be 2 or 3");
    if (resolution < 4 || (resolution & (resolution - 1)) != 0)
        throw std::invalid_argument("domain resolution must be a power of two >= 4");
    for (int a = 0; a < dim; ++a)
        if (!(length[a] > 0.0)) throw std::invalid_argument("domain side lengths must be positive");
}

std::size_t BoxDomain::points() const
{
    std::size_t p = 1;
    for (int a = 0; a < dim; ++a) p *= static_cast<std::size_t>(resolution);
    return p;
}

double BoxDomain::volume() const
{
    double v = 1.0;
    for (int a = 0; a < dim; ++a) v *= length[a];
    return v;
}

double BoxDomain::cell_volume() const { return volume() / static_cast<double>(points()); }

std::array<double, 3> BoxDomain::coordinate(std::size_t point) const
{
    std::array<double, 3> x{0, 0, 0};
    for (int a = 0; a < dim; ++a) {
        const auto i = point % static_cast<std::size_t>(resolution);
        point /= static_cast<std::size_t>(resolution);
        x[a] = static_cast<double>(i) * length[a] / resolution;
    }
    return x;
}

std::array<double, 3> BoxDomain::wavevector(const std::array<int, 3>& index) const
{
    std::array<double, 3> k{0, 0, 0};
    for (int a = 0; a < dim; ++a) k[a] = 2 * std::numbers::pi * index[a] / length[a];
    return k;
}

// ---------------------------------------------------------------------------
// SystemSpec

void SystemSpec::validate(int dim) const
{
    if (!(reynolds > 0) || !(magnetic_reynolds > 0) || !(hartmann > 0) || !(thermal_diffusivity > 0))
        throw std::invalid_argument("physical constants must be strictly positive");
    const int axis = resolved_buoyancy_axis(dim);
    if (axis < 0 || axis >= dim) throw std::invalid_argument("buoyancy axis out of range");
}

int SystemSpec::resolved_buoyancy_axis(int dim) const { return buoyancy_axis < 0 ? dim - 1 : buoyancy_axis; }

bool SystemSpec::has_block(Block block) const
{
    switch (block) {
    case Block::velocity: return true;
    case Block::magnetic: return tag == SystemTag::mhd;
    case Block::temperature: return tag == SystemTag::boussinesq;
    }
    return false;
}

// ---------------------------------------------------------------------------
// Layout and fields

int FieldLayout::offset(Block b) const
{
    for (int c = 0; c < components; ++c)
        if (block[c] == b) return c;
    return -1;
}

FieldLayout make_layout(const BoxDomain& domain, const SystemSpec& system)
{
    FieldLayout layout;
    auto add = [&](Block b, int count, double w) {
        for (int c = 0; c < count; ++c) {
            layout.block.push_back(b);
            layout.weight.push_back(w);
        }
        layout.components += count;
    };
    add(Block::velocity, domain.dim, 1.0);
    if (system.has_block(Block::magnetic)) add(Block::magnetic, domain.dim, system.hartmann);
    if (system.has_block(Block::temperature)) add(Block::temperature, 1, 1.0);
    return layout;
}

GridField::GridField(const BoxDomain& d, int comps)
    : domain(d), components(comps), values(static_cast<std::size_t>(comps) * d.points(), 0.0)
{
}

// ---------------------------------------------------------------------------
// Basis construction

namespace {

std::array<double, 3> polarization(const BoxDomain& domain, const std::array<double, 3>& k, int which)
{
    const double kn = std::sqrt(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]);
    if (domain.dim == 2) return {-k[1] / kn, k[0] / kn, 0.0};

    int axis = 0;
    for (int a = 1; a < 3; ++a)
        if (std::abs(k[a]) < std::abs(k[axis])) axis = a;
    std::array<double, 3> e{0, 0, 0};
    e[axis] = 1.0;
    auto cross = [](const std::array<double, 3>& x, const std::array<double, 3>& y) {
        return std::array<double, 3>{x[1] * y[2] - x[2] * y[1], x[2] * y[0] - x[0] * y[2],
                                     x[0] * y[1] - x[1] * y[0]};
    };
    auto normalized = [](std::array<double, 3> v) {
        const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        for (auto& c : v) c /= n;
        return v;
    };
    const auto p1 = normalized(cross(k, e));
    if (which == 0) return p1;
    const std::array<double, 3> khat{k[0] / kn, k[1] / kn, k[2] / kn};
    return normalized(cross(khat, p1));
}

bool canonical(const std::array<int, 3>& m, int dim)
{
    for (int a = 0; a < dim; ++a) {
        if (m[a] > 0) return true;
        if (m[a] < 0) return false;
    }
    return false;  // zero wavevector excluded
}

double block_eigenvalue(Block block, double k2, const SystemSpec& system)
{
    switch (block) {
    case Block::velocity: return k2 / system.reynolds;
    case Block::magnetic: return k2 / system.magnetic_reynolds;
    case Block::temperature: return 1.0 + system.thermal_diffusivity * k2;
    }
    return 0.0;
}

auto mode_key(const Mode& m)
{
    return std::make_tuple(m.eigenvalue, m.wave[0], m.wave[1], m.wave[2], static_cast<int>(m.block),
                           m.polarization, static_cast<int>(m.parity));
}

std::vector<Mode> enumerate_modes(const BoxDomain& domain, const SystemSpec& system, int bound)
{
    std::vector<Mode> modes;
    const int lo2 = domain.dim == 3 ? -bound : 0;
    const int hi2 = domain.dim == 3 ? bound : 0;
    const double volume = domain.volume();
    for (int m0 = -bound; m0 <= bound; ++m0)
        for (int m1 = -bound; m1 <= bound; ++m1)
            for (int m2 = lo2; m2 <= hi2; ++m2) {
                const std::array<int, 3> m{m0, m1, m2};
                if (!canonical(m, domain.dim)) continue;
                const auto k = domain.wavevector(m);
                const double k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
                for (Block block : {Block::velocity, Block::magnetic, Block::temperature}) {
                    if (!system.has_block(block)) continue;
                    const int pols = block == Block::temperature ? 1 : domain.dim - 1;
                    for (int pol = 0; pol < pols; ++pol)
                        for (Parity parity : {Parity::cosine, Parity::sine}) {
                            Mode mode;
                            mode.block = block;
                            mode.wave = m;
                            mode.polarization = pol;
                            mode.parity = parity;
                            mode.eigenvalue = block_eigenvalue(block, k2, system);
                            mode.direction = block == Block::temperature ? std::array<double, 3>{1, 0, 0}
                                                                         : polarization(domain, k, pol);
                            const double weight = block == Block::magnetic ? system.hartmann : 1.0;
                            mode.amplitude = std::sqrt(2.0 / (weight * volume));
                            modes.push_back(mode);
                        }
                }
            }
    std::sort(modes.begin(), modes.end(), [](const Mode& a, const Mode& b) { return mode_key(a) < mode_key(b); });
    return modes;
}

/// Smallest eigenvalue any mode outside the enumeration box [-bound, bound]^d can have.
double outside_bound(const BoxDomain& domain, const SystemSpec& system, int bound)
{
    double kmin2 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < domain.dim; ++a) {
        const double k = 2 * std::numbers::pi * (bound + 1) / domain.length[a];
        kmin2 = std::min(kmin2, k * k);
    }
    double lo = std::numeric_limits<double>::infinity();
    for (Block block : {Block::velocity, Block::magnetic, Block::temperature})
        if (system.has_block(block)) lo = std::min(lo, block_eigenvalue(block, kmin2, system));
    return lo;
}

}  // namespace

SpectralBasis::SpectralBasis(BoxDomain domain, SystemSpec system, double sobolev_order, std::vector<Mode> modes)
    : domain_(domain), system_(system), sobolev_order_(sobolev_order), modes_(std::move(modes)),
      layout_(make_layout(domain_, system_))
{
}

Eigen::VectorXd SpectralBasis::eigenvalues(std::size_t n) const
{
    if (n > modes_.size()) throw ContractViolation("level exceeds basis size");
    Eigen::VectorXd lam(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) lam[static_cast<Eigen::Index>(i)] = modes_[i].eigenvalue;
    return lam;
}

double SpectralBasis::max_eigenvalue(std::size_t n) const
{
    double lam = 0.0;
    for (std::size_t i = 0; i < std::min(n, modes_.size()); ++i) lam = std::max(lam, modes_[i].eigenvalue);
    return lam;
}

int SpectralBasis::max_wave_index(std::size_t n) const
{
    int m = 0;
    for (std::size_t i = 0; i < std::min(n, modes_.size()); ++i)
        for (int a = 0; a < domain_.dim; ++a) m = std::max(m, std::abs(modes_[i].wave[a]));
    return m;
}

GridField SpectralBasis::sample(std::size_t i) const
{
    const Mode& m = modes_.at(i);
    GridField f(domain_, layout_.components);
    const auto k = domain_.wavevector(m.wave);
    const int off = layout_.offset(m.block);
    const int comps = m.block == Block::temperature ? 1 : domain_.dim;
    for (std::size_t p = 0; p < domain_.points(); ++p) {
        const auto x = domain_.coordinate(p);
        const double phase = k[0] * x[0] + k[1] * x[1] + k[2] * x[2];
        const double trig = m.parity == Parity::cosine ? std::cos(phase) : std::sin(phase);
        for (int c = 0; c < comps; ++c) f.at(off + c, p) = m.amplitude * m.direction[c] * trig;
    }
    return f;
}

GridField SpectralBasis::sample_gradient(std::size_t i, int axis) const
{
    const Mode& m = modes_.at(i);
    GridField f(domain_, layout_.components);
    const auto k = domain_.wavevector(m.wave);
    const int off = layout_.offset(m.block);
    const int comps = m.block == Block::temperature ? 1 : domain_.dim;
    for (std::size_t p = 0; p < domain_.points(); ++p) {
        const auto x = domain_.coordinate(p);
        const double phase = k[0] * x[0] + k[1] * x[1] + k[2] * x[2];
        const double dtrig = m.parity == Parity::cosine ? -std::sin(phase) : std::cos(phase);
        for (int c = 0; c < comps; ++c) f.at(off + c, p) = m.amplitude * m.direction[c] * k[axis] * dtrig;
    }
    return f;
}

std::shared_ptr<const SpectralBasis> build_basis(const BoxDomain& domain, const SystemSpec& system,
                                                 std::size_t count, double sobolev_order)
{
    domain.validate();
    system.validate(domain.dim);
    if (count < 1) throw std::invalid_argument("basis size must be at least 1");
    if (!(sobolev_order > domain.dim / 2.0 + 1.0))
        throw std::invalid_argument("sobolev order m must exceed d/2 + 1");

    int bound = 1;
    std::vector<Mode> modes;
    for (;;) {
        modes = enumerate_modes(domain, system, bound);
        if (modes.size() >= count && modes[count - 1].eigenvalue < outside_bound(domain, system, bound)) break;
        ++bound;
        // 2*bound must stay below the resolution for pairwise products to be exact
        if (2 * bound >= domain.resolution + 2 && modes.size() >= count) break;
    }
    modes.resize(count);

    SpectralBasis basis(domain, system, sobolev_order, std::move(modes));
    const int kmax = basis.max_wave_index(count);
    if (2 * kmax >= domain.resolution) {
        std::ostringstream msg;
        msg << "aliasing: " << count << " modes reach wave index " << kmax << ", which a resolution of "
            << domain.resolution << " cannot dealias";
        throw AliasingError(msg.str());
    }
    return std::make_shared<const SpectralBasis>(std::move(basis));
}

// ---------------------------------------------------------------------------
// States

double GalerkinState::norm_v() const { return levygal::norm_v(*this); }

GalerkinState make_state(std::shared_ptr<const SpectralBasis> basis, std::size_t level)
{
    if (level > basis->size()) throw ContractViolation("level exceeds basis size");
    return GalerkinState{std::move(basis), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(level)), 0.0};
}

GalerkinState unit_state(std::shared_ptr<const SpectralBasis> basis, std::size_t level, std::size_t index)
{
    auto s = make_state(std::move(basis), level);
    if (index < level) s.coeffs[static_cast<Eigen::Index>(index)] = 1.0;
    return s;
}

GalerkinState project(std::shared_ptr<const SpectralBasis> basis, const GridField& field, std::size_t n)
{
    if (n > basis->size()) throw ContractViolation("projection level exceeds basis size");
    if (field.components != basis->layout().components) throw ContractViolation("field layout does not match basis");
    auto s = make_state(basis, n);
    for (std::size_t i = 0; i < n; ++i)
        s.coeffs[static_cast<Eigen::Index>(i)] = quadrature_inner(basis->layout(), field, basis->sample(i));
    return s;
}

GalerkinState project(std::shared_ptr<const SpectralBasis> basis, const Eigen::VectorXd& pairings, std::size_t n)
{
    if (n > basis->size()) throw ContractViolation("projection level exceeds basis size");
    auto s = make_state(std::move(basis), n);
    const auto keep = std::min<Eigen::Index>(pairings.size(), static_cast<Eigen::Index>(n));
    s.coeffs.head(keep) = pairings.head(keep);
    return s;
}

GalerkinState project(const GalerkinState& state, std::size_t n)
{
    auto s = project(state.basis, state.coeffs, n);
    s.time = state.time;
    return s;
}

namespace {
void require_compatible(const GalerkinState& x, const GalerkinState& y)
{
    if (x.basis != y.basis) throw ContractViolation("states belong to different bases");
    if (x.level() != y.level()) throw ContractViolation("states have different Galerkin levels");
}
}  // namespace

double inner_h(const GalerkinState& x, const GalerkinState& y)
{
    require_compatible(x, y);
    return x.coeffs.dot(y.coeffs);
}

double inner_dirichlet(const GalerkinState& x, const GalerkinState& y)
{
    require_compatible(x, y);
    // plain index-order loop; apply_A paired with inner_h reproduces it bit for bit
    double s = 0.0;
    for (std::size_t i = 0; i < x.level(); ++i) {
        const auto e = static_cast<Eigen::Index>(i);
        s += (x.basis->mode(i).eigenvalue * x.coeffs[e]) * y.coeffs[e];
    }
    return s;
}

double norm_v(const GalerkinState& x) { return std::sqrt(inner_h(x, x) + inner_dirichlet(x, x)); }

GridField reconstruct(const SpectralBasis& basis, const Eigen::VectorXd& coeffs)
{
    GridField f(basis.domain(), basis.layout().components);
    for (Eigen::Index i = 0; i < coeffs.size(); ++i) {
        if (coeffs[i] == 0.0) continue;
        const auto e = basis.sample(static_cast<std::size_t>(i));
        for (std::size_t q = 0; q < f.values.size(); ++q) f.values[q] += coeffs[i] * e.values[q];
    }
    return f;
}

double quadrature_inner(const FieldLayout& layout, const GridField& f, const GridField& g)
{
    const std::size_t np = f.domain.points();
    double total = 0.0;
    for (int c = 0; c < layout.components; ++c) {
        double s = 0.0;
        for (std::size_t p = 0; p < np; ++p) s += f.at(c, p) * g.at(c, p);
        total += layout.weight[c] * s;
    }
    return total * f.domain.cell_volume();
}

// ---------------------------------------------------------------------------
// Local windows and seminorms

bool LocalWindow::contains(const BoxDomain& domain, std::size_t point) const
{
    for (int a = 0; a < domain.dim; ++a) {
        const int i = static_cast<int>(point % static_cast<std::size_t>(domain.resolution));
        point /= static_cast<std::size_t>(domain.resolution);
        if (i < lo[a] || i >= hi[a]) return false;
    }
    return true;
}

double LocalWindow::volume(const BoxDomain& domain) const
{
    double cells = 1.0;
    for (int a = 0; a < domain.dim; ++a) cells *= hi[a] - lo[a];
    return cells * domain.cell_volume();
}

std::vector<LocalWindow> nested_windows(const BoxDomain& domain, int count)
{
    if (count < 1) throw std::invalid_argument("window count must be positive");
    std::vector<LocalWindow> windows;
    const int n = domain.resolution;
    for (int r = 1; r <= count; ++r) {
        const int half = std::max((n / 2 * r + count - 1) / count, 1);
        LocalWindow w;
        w.index = r;
        for (int a = 0; a < domain.dim; ++a) {
            w.lo[a] = r == count ? 0 : n / 2 - half;
            w.hi[a] = r == count ? n : n / 2 + half;
        }
        windows.push_back(w);
    }
    return windows;
}

double seminorm_local(const FieldLayout& layout, std::span<const GridField> trajectory, const LocalWindow& window,
                      double horizon)
{
    if (trajectory.empty()) throw std::invalid_argument("seminorm of an empty trajectory");
    const auto& domain = trajectory.front().domain;
    auto slice = [&](const GridField& f) {
        double s = 0.0;
        for (std::size_t p = 0; p < domain.points(); ++p) {
            if (!window.contains(domain, p)) continue;
            for (int c = 0; c < layout.components; ++c) s += layout.weight[c] * f.at(c, p) * f.at(c, p);
        }
        return s * domain.cell_volume();
    };
    if (trajectory.size() == 1) return std::sqrt(slice(trajectory.front()) * horizon);
    const double dt = horizon / static_cast<double>(trajectory.size() - 1);
    double total = 0.0;
    for (std::size_t i = 0; i < trajectory.size(); ++i) {
        const double w = (i == 0 || i + 1 == trajectory.size()) ? 0.5 : 1.0;
        total += w * slice(trajectory[i]);
    }
    return std::sqrt(total * dt);
}

void export_basis(std::ostream& out, const SpectralBasis& basis)
{
    const auto& d = basis.domain();
    for (std::size_t i = 0; i < basis.size(); ++i) {
        const Mode& m = basis.mode(i);
        const auto k = d.wavevector(m.wave);
        out << i << ", " << to_string(m.block) << ", [";
        for (int a = 0; a < d.dim; ++a) out << (a ? " " : "") << format_real(k[a]);
        out << "], " << format_real(m.eigenvalue) << '\n';
    }
}

}  // namespace levygal
