#include "levygal/operators.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <sstream>

#include "levygal/numeric_text.hpp"
#include "levygal/rng.hpp"

namespace levygal {

// ---------------------------------------------------------------------------
// TrilinearTensor

TrilinearTensor::TrilinearTensor(std::size_t level, std::vector<TensorEntry> entries)
    : level_(level), entries_(std::move(entries))
{
    auto top = [](const TensorEntry& e) { return std::max({e.i, e.j, e.k}); };
    std::stable_sort(entries_.begin(), entries_.end(), [&](const TensorEntry& a, const TensorEntry& b) {
        return std::make_tuple(top(a), a.i, a.j, a.k) < std::make_tuple(top(b), b.i, b.j, b.k);
    });
    prefix_.assign(level_ + 1, 0);
    std::size_t pos = 0;
    for (std::size_t n = 0; n <= level_; ++n) {
        while (pos < entries_.size() && top(entries_[pos]) < n) ++pos;
        prefix_[n] = pos;
    }
}

std::span<const TensorEntry> TrilinearTensor::entries(std::size_t n) const
{
    if (n > level_) throw ContractViolation("tensor level exceeded");
    return std::span<const TensorEntry>(entries_).first(prefix_[n]);
}

double TrilinearTensor::at(std::size_t i, std::size_t j, std::size_t k) const
{
    for (const auto& e : entries_)
        if (e.i == i && e.j == j && e.k == k) return e.value;
    return 0.0;
}

TrilinearTensor TrilinearTensor::scaled(double factor) const
{
    auto copy = entries_;
    for (auto& e : copy) e.value *= factor;
    return TrilinearTensor(level_, std::move(copy));
}

TrilinearTensor TrilinearTensor::with_broken_antisymmetry(double relative) const
{
    auto copy = entries_;
    for (auto& e : copy)
        if (e.j < e.k) e.value *= 1.0 + relative;
    return TrilinearTensor(level_, std::move(copy));
}

namespace {

/// Block coefficient of the system's trilinear form for the block triple (i, j, k).
double block_rule(const SystemSpec& system, Block bi, Block bj, Block bk)
{
    using enum Block;
    switch (system.tag) {
    case SystemTag::nse:
        return 1.0;
    case SystemTag::mhd: {
        const double s = system.hartmann;
        if (bi == velocity && bj == velocity && bk == velocity) return 1.0;
        if (bi == magnetic && bj == magnetic && bk == velocity) return -s;
        if (bi == velocity && bj == magnetic && bk == magnetic) return s;
        if (bi == magnetic && bj == velocity && bk == magnetic) return -s;
        return 0.0;
    }
    case SystemTag::boussinesq:
        if (bi != velocity) return 0.0;
        if (bj == velocity && bk == velocity) return 1.0;
        if (bj == temperature && bk == temperature) return 1.0;
        return 0.0;
    }
    return 0.0;
}

bool triad(const Mode& a, const Mode& b, const Mode& c)
{
    for (int sb : {-1, 1})
        for (int sc : {-1, 1}) {
            bool zero = true;
            for (int x = 0; x < 3; ++x) zero = zero && a.wave[x] + sb * b.wave[x] + sc * c.wave[x] == 0;
            if (zero) return true;
        }
    return false;
}

int block_width(const BoxDomain& domain, Block b) { return b == Block::temperature ? 1 : domain.dim; }

// Entries below this are parity zeros left over from quadrature roundoff.
constexpr double structural_zero = 1e-13;

}  // namespace

TrilinearTensor assemble_tensor(const SpectralBasis& basis, std::size_t level)
{
    if (level > basis.size()) throw ContractViolation("tensor level exceeds basis size");
    const auto& domain = basis.domain();
    const int kmax = basis.max_wave_index(level);
    if (3 * kmax >= domain.resolution) {
        std::ostringstream msg;
        msg << "aliasing: triple products up to wave index " << 3 * kmax << " need a resolution above "
            << 3 * kmax << ", have " << domain.resolution;
        throw AliasingError(msg.str());
    }

    const auto& layout = basis.layout();
    const std::size_t np = domain.points();
    std::vector<GridField> value(level);
    std::vector<std::vector<GridField>> grad(level);
    for (std::size_t i = 0; i < level; ++i) {
        value[i] = basis.sample(i);
        for (int a = 0; a < domain.dim; ++a) grad[i].push_back(basis.sample_gradient(i, a));
    }

    std::vector<TensorEntry> entries;
    std::vector<double> transport(np * 3);
    for (std::size_t i = 0; i < level; ++i) {
        const Mode& mi = basis.mode(i);
        const int oi = layout.offset(mi.block);
        for (std::size_t j = 0; j < level; ++j) {
            const Mode& mj = basis.mode(j);
            const int oj = layout.offset(mj.block);
            const int wj = block_width(domain, mj.block);
            bool any = false;
            for (std::size_t k = 0; k < level && !any; ++k)
                any = block_rule(basis.system(), mi.block, mj.block, basis.mode(k).block) != 0.0 &&
                      triad(mi, mj, basis.mode(k));
            if (!any || mi.block == Block::temperature) continue;

            // (e_i . grad) e_j on the grid
            std::fill(transport.begin(), transport.end(), 0.0);
            for (int c = 0; c < wj; ++c)
                for (int a = 0; a < domain.dim; ++a)
                    for (std::size_t p = 0; p < np; ++p)
                        transport[c * np + p] += value[i].at(oi + a, p) * grad[j][a].at(oj + c, p);

            for (std::size_t k = 0; k < level; ++k) {
                const Mode& mk = basis.mode(k);
                const double rule = block_rule(basis.system(), mi.block, mj.block, mk.block);
                if (rule == 0.0 || block_width(domain, mk.block) != wj || !triad(mi, mj, mk)) continue;
                const int ok = layout.offset(mk.block);
                double sum = 0.0;
                for (int c = 0; c < wj; ++c)
                    for (std::size_t p = 0; p < np; ++p) sum += transport[c * np + p] * value[k].at(ok + c, p);
                const double v = rule * sum * domain.cell_volume();
                if (std::abs(v) > structural_zero)
                    entries.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                                       static_cast<std::uint32_t>(k), v});
            }
        }
    }
    return TrilinearTensor(level, std::move(entries));
}

CouplingMatrix assemble_coupling(const SpectralBasis& basis, std::size_t level)
{
    CouplingMatrix r;
    if (basis.system().tag != SystemTag::boussinesq) return r;
    const auto& domain = basis.domain();
    const auto& layout = basis.layout();
    const int axis = layout.offset(Block::velocity) + basis.system().resolved_buoyancy_axis(domain.dim);
    const int temp = layout.offset(Block::temperature);
    std::vector<GridField> value(level);
    for (std::size_t i = 0; i < level; ++i) value[i] = basis.sample(i);

    for (std::size_t k = 0; k < level; ++k)
        for (std::size_t l = 0; l < level; ++l) {
            const Block bk = basis.mode(k).block;
            const Block bl = basis.mode(l).block;
            int ck = -1, cl = -1;
            if (bk == Block::velocity && bl == Block::temperature) {
                ck = axis;
                cl = temp;
            } else if (bk == Block::temperature && bl == Block::velocity) {
                ck = temp;
                cl = axis;
            } else {
                continue;
            }
            double sum = 0.0;
            for (std::size_t p = 0; p < domain.points(); ++p) sum += value[k].at(ck, p) * value[l].at(cl, p);
            const double v = -sum * domain.cell_volume();
            if (std::abs(v) > structural_zero)
                r.entries.push_back(
                    {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(l), 0u, v});
        }
    return r;
}

OperatorTriple make_triple(std::shared_ptr<const SpectralBasis> basis, std::size_t level)
{
    OperatorTriple t;
    t.tensor = std::make_shared<const TrilinearTensor>(assemble_tensor(*basis, level));
    t.coupling = assemble_coupling(*basis, level);
    t.basis = std::move(basis);
    return t;
}

OperatorTriple with_tensor(const OperatorTriple& triple, TrilinearTensor tensor)
{
    OperatorTriple t = triple;
    t.tensor = std::make_shared<const TrilinearTensor>(std::move(tensor));
    return t;
}

// ---------------------------------------------------------------------------
// Actions

Eigen::VectorXd apply_A(const SpectralBasis& basis, const Eigen::VectorXd& u)
{
    Eigen::VectorXd out(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) out[i] = basis.mode(static_cast<std::size_t>(i)).eigenvalue * u[i];
    return out;
}

Eigen::VectorXd apply_B(const TrilinearTensor& tensor, const Eigen::VectorXd& u, const Eigen::VectorXd& v)
{
    if (u.size() != v.size()) throw ContractViolation("apply_B arguments have different levels");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(u.size());
    for (const auto& e : tensor.entries(static_cast<std::size_t>(u.size()))) out[e.k] += e.value * u[e.i] * v[e.j];
    return out;
}

Eigen::VectorXd apply_R(const CouplingMatrix& coupling, const Eigen::VectorXd& u)
{
    Eigen::VectorXd out = Eigen::VectorXd::Zero(u.size());
    const auto n = static_cast<std::uint32_t>(u.size());
    for (const auto& e : coupling.entries)
        if (e.i < n && e.j < n) out[e.i] += e.value * u[e.j];
    return out;
}

GalerkinState apply_A(const GalerkinState& u)
{
    return GalerkinState{u.basis, apply_A(*u.basis, u.coeffs), u.time};
}

GalerkinState apply_B(const TrilinearTensor& tensor, const GalerkinState& u, const GalerkinState& v)
{
    if (u.basis != v.basis) throw ContractViolation("apply_B arguments belong to different bases");
    return GalerkinState{u.basis, apply_B(tensor, u.coeffs, v.coeffs), u.time};
}

GalerkinState apply_R(const OperatorTriple& triple, const GalerkinState& u)
{
    if (u.basis != triple.basis) throw ContractViolation("state does not belong to the triple's basis");
    return GalerkinState{u.basis, apply_R(triple.coupling, u.coeffs), u.time};
}

double dual_norm_v(const SpectralBasis& basis, const Eigen::VectorXd& x)
{
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        s += x[i] * x[i] / (1.0 + basis.mode(static_cast<std::size_t>(i)).eigenvalue);
    return std::sqrt(s);
}

double dual_norm_u(const SpectralBasis& basis, const Eigen::VectorXd& x)
{
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        s += x[i] * x[i] * std::pow(basis.mode(static_cast<std::size_t>(i)).eigenvalue, -basis.sobolev_order());
    return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Assumption checks

namespace {

Eigen::VectorXd gaussian(Engine& rng, Eigen::Index n)
{
    std::normal_distribution<double> z;
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = z(rng);
    return v;
}

/// Matrix of v -> B(u, v) (fix_first) or u -> B(u, v).
Eigen::MatrixXd slice(const TrilinearTensor& t, const Eigen::VectorXd& fixed, bool fix_first)
{
    const auto n = fixed.size();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (const auto& e : t.entries(static_cast<std::size_t>(n))) {
        if (fix_first)
            m(e.k, e.j) += e.value * fixed[e.i];
        else
            m(e.k, e.i) += e.value * fixed[e.j];
    }
    return m;
}

/// max |B(u,v)|_out / (|u|_in |v|_in) by alternating top singular vectors,
/// with diagonal weights: |x|_in^2 = sum w_in x^2, |x|_out^2 = sum w_out x^2.
double bilinear_norm(const TrilinearTensor& t, const Eigen::VectorXd& w_in, const Eigen::VectorXd& w_out, Engine& rng,
                     int starts, int sweeps)
{
    const auto n = w_in.size();
    const Eigen::VectorXd in_half = w_in.cwiseSqrt();
    const Eigen::VectorXd in_inv = in_half.cwiseInverse();
    const Eigen::VectorXd out_half = w_out.cwiseSqrt();
    double best = 0.0;
    for (int s = 0; s < starts; ++s) {
        Eigen::VectorXd fixed = gaussian(rng, n).cwiseProduct(in_inv);
        bool first = true;
        for (int sweep = 0; sweep < 2 * sweeps; ++sweep) {
            const double scale = fixed.cwiseProduct(in_half).norm();
            if (scale == 0.0) break;
            fixed /= scale;
            const Eigen::MatrixXd w = out_half.asDiagonal() * slice(t, fixed, first) * in_inv.asDiagonal();
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(w, Eigen::ComputeThinV);
            best = std::max(best, svd.singularValues()[0]);
            fixed = in_inv.cwiseProduct(svd.matrixV().col(0));
            first = !first;
        }
    }
    return best;
}

}  // namespace

AssumptionReport check_assumptions(const OperatorTriple& triple, const CheckSettings& settings)
{
    if (settings.trials < 1) throw std::invalid_argument("check trials must be at least 1");
    const auto& basis = *triple.basis;
    const auto& tensor = *triple.tensor;
    const auto n = static_cast<Eigen::Index>(triple.level());
    AssumptionReport r;
    r.system = std::string(to_string(basis.system().tag));
    r.level = triple.level();
    r.trials = settings.trials;

    Engine rng = make_stream(settings.seed, 0, StreamRole::probes);
    auto unit = [&] {
        Eigen::VectorXd v = gaussian(rng, n);
        return Eigen::VectorXd(v / v.norm());
    };

    for (int t = 0; t < settings.trials; ++t) {
        const auto u = unit(), v = unit(), w = unit();
        r.antisymmetry_residual =
            std::max(r.antisymmetry_residual, std::abs(apply_B(tensor, u, v).dot(w) + apply_B(tensor, u, w).dot(v)));
        r.energy_residual = std::max(r.energy_residual, std::abs(apply_B(tensor, u, u).dot(u)));

        const Eigen::VectorXd au = apply_A(basis, u);
        double form = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) form += au[i] * u[i];
        GalerkinState s{triple.basis, u, 0.0};
        r.a_form_residual = std::max(r.a_form_residual, std::abs(form - inner_dirichlet(s, s)));

        r.c3 = std::max(r.c3, -apply_R(triple.coupling, u).dot(u));
    }

    const Eigen::VectorXd lam = basis.eigenvalues(triple.level());
    const Eigen::VectorXd v_weight = (lam.array() + 1.0).matrix();
    const Eigen::VectorXd u_dual = lam.array().pow(-basis.sobolev_order()).matrix();
    const int starts = std::clamp(settings.trials / 50, 1, 16);
    r.c1 = bilinear_norm(tensor, v_weight, v_weight.cwiseInverse(), rng, starts, settings.refinements);
    r.c2 = bilinear_norm(tensor, Eigen::VectorXd::Ones(n), u_dual, rng, starts, settings.refinements);

    auto norm_v_weighted = [&](const Eigen::VectorXd& x) { return std::sqrt(x.cwiseProduct(x).dot(v_weight)); };
    std::uniform_real_distribution<double> radius(0.0, 1.0);
    for (int t = 0; t < settings.trials; ++t) {
        Eigen::VectorXd a = gaussian(rng, n), b = gaussian(rng, n);
        a *= settings.ball_radius * radius(rng) / norm_v_weighted(a);
        b *= settings.ball_radius * radius(rng) / norm_v_weighted(b);
        const double gap = norm_v_weighted(a - b);
        if (gap == 0.0) continue;
        const double num = dual_norm_v(basis, apply_B(tensor, a, a) - apply_B(tensor, b, b));
        r.lipschitz_ratio = std::max(r.lipschitz_ratio, num / gap);
    }
    r.lipschitz_bound = 2.0 * settings.ball_radius * r.c1;

    r.antisymmetry_pass = r.antisymmetry_residual <= settings.identity_tolerance;
    r.energy_pass = r.energy_residual <= settings.identity_tolerance;
    r.a_form_pass = r.a_form_residual == 0.0;
    r.lipschitz_pass = r.lipschitz_ratio <= r.lipschitz_bound * (1.0 + 1e-9);
    r.c3_pass = r.c3 <= settings.coupling_bound * (1.0 + 1e-12);
    return r;
}

void export_tensor(std::ostream& out, const TrilinearTensor& tensor)
{
    for (const auto& e : tensor.entries())
        out << e.i << ", " << e.j << ", " << e.k << ", " << format_real(e.value) << '\n';
}

void write_report(std::ostream& out, const AssumptionReport& r)
{
    auto flag = [](bool b) { return b ? "pass" : "fail"; };
    out << "system: " << r.system << '\n'
        << "level: " << r.level << '\n'
        << "trials: " << r.trials << '\n'
        << "antisymmetry_residual: " << format_real(r.antisymmetry_residual) << '\n'
        << "antisymmetry: " << flag(r.antisymmetry_pass) << '\n'
        << "energy_residual: " << format_real(r.energy_residual) << '\n'
        << "energy: " << flag(r.energy_pass) << '\n'
        << "a_form_residual: " << format_real(r.a_form_residual) << '\n'
        << "a_form: " << flag(r.a_form_pass) << '\n'
        << "c1: " << format_real(r.c1) << '\n'
        << "c2: " << format_real(r.c2) << '\n'
        << "lipschitz_ratio: " << format_real(r.lipschitz_ratio) << '\n'
        << "lipschitz_bound: " << format_real(r.lipschitz_bound) << '\n'
        << "lipschitz: " << flag(r.lipschitz_pass) << '\n'
        << "c3: " << format_real(r.c3) << '\n'
        << "c3_bound: " << flag(r.c3_pass) << '\n'
        << "overall: " << flag(r.pass()) << '\n';
}

}  // namespace levygal
