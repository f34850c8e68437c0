#include "levygal/levy_noise.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <sstream>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "levygal/numeric_text.hpp"

namespace levygal {

std::size_t WienerSpec::directions() const
{
    return std::max({multipliers.size(), advection.size(), additive.size()});
}

// ---------------------------------------------------------------------------
// Jump law

void JumpSpec::validate() const
{
    if (!(rate >= 0) || !std::isfinite(rate)) throw std::invalid_argument("jump rate must be finite and >= 0");
    if (!(small_radius > 0)) throw std::invalid_argument("small-jump radius must be positive");
    if (!(law.weight_plus >= 0 && law.weight_plus <= 1)) throw std::invalid_argument("weight_plus must lie in [0, 1]");
    if (!(law.scale_plus > 0) || !(law.scale_minus > 0)) throw std::invalid_argument("mark scales must be positive");
    if (!(gamma > 0)) throw std::invalid_argument("gamma must be positive");
    if (!(offset_norm >= 0)) throw std::invalid_argument("offset_norm must be >= 0");
}

namespace {

/// int over one half-line piece of y^p e^{-y/s}/s dy, piece = [0, r) or [r, inf).
double half_moment(double p, double s, double r, bool inner)
{
    const double whole = std::pow(s, p) * boost::math::tgamma(p + 1.0);
    return whole * (inner ? boost::math::gamma_p(p + 1.0, r / s) : boost::math::gamma_q(p + 1.0, r / s));
}

}  // namespace

double JumpSpec::abs_moment(double p, bool small) const
{
    const double wp = law.weight_plus, wm = 1.0 - law.weight_plus;
    return rate * (wp * half_moment(p, law.scale_plus, small_radius, small) +
                   wm * half_moment(p, law.scale_minus, small_radius, small));
}

double JumpSpec::signed_first_moment(bool small) const
{
    const double wp = law.weight_plus, wm = 1.0 - law.weight_plus;
    return rate * (wp * half_moment(1.0, law.scale_plus, small_radius, small) -
                   wm * half_moment(1.0, law.scale_minus, small_radius, small));
}

double coercivity_floor(double gamma) { return 2.0 - 2.0 / (3.0 + gamma); }

double sample_mark(const MarkLaw& law, Engine& rng)
{
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < law.weight_plus) return std::exponential_distribution<double>(1.0 / law.scale_plus)(rng);
    return -std::exponential_distribution<double>(1.0 / law.scale_minus)(rng);
}

std::vector<JumpEvent> sample_jumps(const JumpSpec& spec, double t0, double t1, Engine& rng)
{
    if (!(t1 >= t0)) throw std::invalid_argument("jump interval must have t1 >= t0");
    std::vector<JumpEvent> out;
    const double mean = spec.rate * (t1 - t0);
    if (mean <= 0.0) return out;
    const auto count = std::poisson_distribution<long>(mean)(rng);
    std::uniform_real_distribution<double> when(t0, t1);
    for (long c = 0; c < count; ++c) {
        JumpEvent e;
        e.time = when(rng);
        e.mark = sample_mark(spec.law, rng);
        e.small = std::abs(e.mark) < spec.small_radius;
        out.push_back(e);
    }
    std::stable_sort(out.begin(), out.end(), [](const JumpEvent& a, const JumpEvent& b) { return a.time < b.time; });
    return out;
}

// ---------------------------------------------------------------------------
// Discrete noise operators

DiscreteNoise discretize(const NoiseModel& model, std::shared_ptr<const SpectralBasis> basis, std::size_t level)
{
    if (level > basis->size()) throw ContractViolation("noise level exceeds basis size");
    model.jumps.validate();
    const auto n = static_cast<Eigen::Index>(level);
    const auto& domain = basis->domain();
    const auto& layout = basis->layout();

    DiscreteNoise noise;
    noise.basis = basis;
    noise.level = level;
    noise.jumps = model.jumps;

    const std::size_t k_dirs = model.wiener.directions();
    const bool any_advection = std::any_of(model.wiener.advection.begin(), model.wiener.advection.end(),
                                           [](const auto& b) { return b[0] != 0 || b[1] != 0 || b[2] != 0; });
    std::vector<GridField> value;
    if (any_advection)
        for (std::size_t i = 0; i < level; ++i) value.push_back(basis->sample(i));

    for (std::size_t d = 0; d < k_dirs; ++d) {
        const double c = d < model.wiener.multipliers.size() ? model.wiener.multipliers[d] : 0.0;
        std::array<double, 3> b{0, 0, 0};
        if (d < model.wiener.advection.size()) b = model.wiener.advection[d];
        Eigen::MatrixXd m = c * Eigen::MatrixXd::Identity(n, n);
        if (b[0] != 0 || b[1] != 0 || b[2] != 0) {
            for (std::size_t l = 0; l < level; ++l) {
                GridField transported(domain, layout.components);
                for (int a = 0; a < domain.dim; ++a) {
                    if (b[a] == 0) continue;
                    const auto g = basis->sample_gradient(l, a);
                    for (std::size_t q = 0; q < g.values.size(); ++q) transported.values[q] += b[a] * g.values[q];
                }
                for (std::size_t k = 0; k < level; ++k) {
                    const double v = quadrature_inner(layout, transported, value[k]);
                    if (std::abs(v) > 1e-13) m(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) += v;
                }
            }
        }
        noise.multiplicative.push_back(std::move(m));

        Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
        if (d < model.wiener.additive.size()) {
            const auto& src = model.wiener.additive[d];
            for (std::size_t i = 0; i < std::min(src.size(), level); ++i) g[static_cast<Eigen::Index>(i)] = src[i];
        }
        noise.additive.push_back(std::move(g));
    }

    noise.offset = Eigen::VectorXd::Zero(n);
    if (model.jumps.offset_norm != 0.0) {
        if (model.jumps.offset_mode >= level) throw ContractViolation("jump offset mode lies outside the Galerkin level");
        noise.offset[static_cast<Eigen::Index>(model.jumps.offset_mode)] = model.jumps.offset_norm;
    }
    return noise;
}

Eigen::VectorXd sample_wiener_increment(std::size_t directions, double dt, Engine& rng)
{
    if (dt < 0) throw std::invalid_argument("Wiener increment needs dt >= 0");
    Eigen::VectorXd dw = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(directions));
    if (dt == 0.0) return dw;
    std::normal_distribution<double> z(0.0, std::sqrt(dt));
    for (Eigen::Index i = 0; i < dw.size(); ++i) dw[i] = z(rng);
    return dw;
}

Eigen::VectorXd g_column(const DiscreteNoise& noise, const Eigen::VectorXd& u, std::size_t i)
{
    return noise.multiplicative[i] * u + noise.additive[i];
}

Eigen::VectorXd apply_G(const DiscreteNoise& noise, const Eigen::VectorXd& u, const Eigen::VectorXd& dW)
{
    if (static_cast<std::size_t>(u.size()) != noise.level) throw ContractViolation("state level does not match noise");
    if (static_cast<std::size_t>(dW.size()) != noise.directions())
        throw ContractViolation("increment length does not match Wiener directions");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(u.size());
    for (std::size_t i = 0; i < noise.directions(); ++i) out += g_column(noise, u, i) * dW[static_cast<Eigen::Index>(i)];
    return out;
}

GalerkinState apply_G(const DiscreteNoise& noise, const GalerkinState& u, const Eigen::VectorXd& dW)
{
    if (u.basis != noise.basis) throw ContractViolation("state does not belong to the noise basis");
    return GalerkinState{u.basis, apply_G(noise, u.coeffs, dW), u.time};
}

double hs_norm2(const DiscreteNoise& noise, const Eigen::VectorXd& u)
{
    double s = 0.0;
    for (std::size_t i = 0; i < noise.directions(); ++i) s += g_column(noise, u, i).squaredNorm();
    return s;
}

Eigen::VectorXd jump_direction(const DiscreteNoise& noise, const Eigen::VectorXd& u)
{
    return noise.offset + noise.jumps.linear * u;
}

Eigen::VectorXd small_jump_mean(const DiscreteNoise& noise, const Eigen::VectorXd& u)
{
    return noise.jumps.signed_first_moment(true) * jump_direction(noise, u);
}

Eigen::VectorXd large_jump_mean(const DiscreteNoise& noise, const Eigen::VectorXd& u)
{
    return noise.jumps.signed_first_moment(false) * jump_direction(noise, u);
}

// ---------------------------------------------------------------------------
// Skeleton

NoiseSkeleton sample_skeleton(const JumpSpec& jumps, std::size_t directions, double horizon, long fine_steps,
                              std::uint64_t seed, std::uint64_t path)
{
    if (!(horizon > 0) || fine_steps < 1) throw std::invalid_argument("skeleton needs T > 0 and fine_steps >= 1");
    NoiseSkeleton sk;
    sk.horizon = horizon;
    sk.fine_steps = fine_steps;
    Engine jump_rng = make_stream(seed, path, StreamRole::jumps);
    sk.jumps = sample_jumps(jumps, 0.0, horizon, jump_rng);

    std::size_t next_jump = 0;
    for (long k = 0; k <= fine_steps; ++k) {
        const double t = horizon * static_cast<double>(k) / static_cast<double>(fine_steps);
        while (next_jump < sk.jumps.size() && sk.jumps[next_jump].time < t) {
            sk.nodes.push_back({sk.jumps[next_jump].time, -1, static_cast<int>(next_jump)});
            ++next_jump;
        }
        sk.nodes.push_back({t, k, -1});
    }
    // jumps landing exactly on T (or beyond by rounding) close the path
    for (; next_jump < sk.jumps.size(); ++next_jump)
        sk.nodes.push_back({sk.jumps[next_jump].time, -1, static_cast<int>(next_jump)});

    const auto dirs = static_cast<Eigen::Index>(directions);
    sk.wiener = Eigen::MatrixXd::Zero(dirs, static_cast<Eigen::Index>(sk.nodes.size()));
    Engine w_rng = make_stream(seed, path, StreamRole::wiener);
    for (std::size_t q = 1; q < sk.nodes.size(); ++q) {
        const double h = std::max(sk.nodes[q].time - sk.nodes[q - 1].time, 0.0);
        const auto col = static_cast<Eigen::Index>(q);
        sk.wiener.col(col) = sk.wiener.col(col - 1) + sample_wiener_increment(static_cast<std::size_t>(dirs), h, w_rng);
    }
    return sk;
}

void export_jump_log(std::ostream& out, std::uint64_t path, const std::vector<JumpEvent>& jumps)
{
    for (const auto& j : jumps)
        out << path << ", " << format_real(j.time) << ", " << (j.small ? "small" : "large") << ", "
            << format_real(j.mark) << '\n';
}

// ---------------------------------------------------------------------------
// Isometry

namespace {

using Rule = boost::math::quadrature::gauss<double, 20>;

template <class F>
double composite(F&& f, double a, double b, int panels)
{
    double s = 0.0;
    const double w = (b - a) / panels;
    for (int q = 0; q < panels; ++q) s += Rule::integrate(f, a + q * w, a + (q + 1) * w);
    return s;
}

// mark densities are negligible past this many scales
constexpr double tail_scales = 60.0;

}  // namespace

double integrate_over_marks(const JumpSpec& spec, const std::function<double(double)>& g, bool small)
{
    if (spec.rate == 0.0) return 0.0;
    const double r = spec.small_radius;
    double total = 0.0;
    for (int side : {1, -1}) {
        const double scale = side > 0 ? spec.law.scale_plus : spec.law.scale_minus;
        const double weight = side > 0 ? spec.law.weight_plus : 1.0 - spec.law.weight_plus;
        if (weight == 0.0) continue;
        auto density = [&](double y) { return g(side * y) * std::exp(-y / scale) / scale; };
        total += weight * (small ? composite(density, 0.0, r, 8) : composite(density, r, r + tail_scales * scale, 32));
    }
    return spec.rate * total;
}

double integrate_against_intensity(const JumpSpec& spec, const JumpIntegrand& xi, double horizon)
{
    if (spec.rate == 0.0 || horizon == 0.0) return 0.0;
    auto marks = [&](double t) {
        auto at_t = [&](double y) { return xi(t, y); };
        return integrate_over_marks(spec, at_t, true) + integrate_over_marks(spec, at_t, false);
    };
    return composite(marks, 0.0, horizon, 4);
}

IsometryReport compensated_integral_test(const JumpSpec& spec, const JumpIntegrand& xi, double horizon, int paths,
                                         std::uint64_t seed, double level)
{
    if (paths < 2) throw std::invalid_argument("isometry test needs at least 2 paths");
    IsometryReport rep;
    rep.paths = paths;
    const double compensator = integrate_against_intensity(spec, xi, horizon);
    rep.exact = integrate_against_intensity(
        spec, [&](double t, double y) { const double v = xi(t, y); return v * v; }, horizon);

    std::vector<double> value(static_cast<std::size_t>(paths));
    for (int p = 0; p < paths; ++p) {
        Engine rng = make_stream(seed, static_cast<std::uint64_t>(p), StreamRole::isometry);
        double s = 0.0;
        for (const auto& j : sample_jumps(spec, 0.0, horizon, rng)) s += xi(j.time, j.mark);
        value[static_cast<std::size_t>(p)] = s - compensator;
    }
    auto mean_and_se = [&](auto&& f) {
        double m = 0.0;
        for (double v : value) m += f(v);
        m /= paths;
        double var = 0.0;
        for (double v : value) var += (f(v) - m) * (f(v) - m);
        var /= paths - 1;
        return std::pair{m, std::sqrt(var / paths)};
    };
    std::tie(rep.mean, rep.mean_stderr) = mean_and_se([](double v) { return v; });
    std::tie(rep.second_moment, rep.second_moment_stderr) = mean_and_se([](double v) { return v * v; });
    const double gap = std::abs(rep.second_moment - rep.exact);
    rep.relative_error = rep.exact != 0.0 ? gap / rep.exact : gap;
    rep.pass = gap <= level * rep.second_moment_stderr + 1e-12 * rep.exact &&
               std::abs(rep.mean) <= level * rep.mean_stderr + 1e-12;
    return rep;
}

// ---------------------------------------------------------------------------
// Certification

NoiseCertificate certify_noise(const DiscreteNoise& noise, const CertifySettings& settings)
{
    if (settings.probes < 100) throw std::invalid_argument("certify_noise needs at least 100 probes");
    const auto& basis = *noise.basis;
    const auto n = static_cast<Eigen::Index>(noise.level);
    const Eigen::VectorXd lam = basis.eigenvalues(noise.level);
    NoiseCertificate cert;
    cert.floor = coercivity_floor(noise.jumps.gamma);

    // probe set: every single mode, then random unit combinations
    std::vector<Eigen::VectorXd> probes;
    for (Eigen::Index i = 0; i < n; ++i) probes.push_back(Eigen::VectorXd::Unit(n, i));
    Engine rng = make_stream(settings.seed, 0, StreamRole::certification);
    std::normal_distribution<double> z;
    while (static_cast<int>(probes.size()) < settings.probes + n) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = z(rng);
        probes.push_back(v / v.norm());
    }
    cert.probe_count = static_cast<int>(probes.size());

    auto homogeneous_hs = [&](const Eigen::VectorXd& u) {
        double s = 0.0;
        for (const auto& m : noise.multiplicative) s += (m * u).squaredNorm();
        return s;
    };
    std::vector<double> x, y;
    for (const auto& u : probes) {
        x.push_back(u.cwiseProduct(u).dot(lam));
        y.push_back(homogeneous_hs(u));
    }
    const auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
    const double mid = 0.5 * (*xmin + *xmax);

    // Largest a whose required lambda is not set by the stiffest probes: a
    // finite-level stand-in for lambda staying bounded as n grows.
    auto required = [&](double a, bool low_only) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t q = 0; q < x.size(); ++q)
            if (!low_only || x[q] <= mid) best = std::max(best, y[q] - (2.0 - a) * x[q]);
        return best;
    };
    double a = 2.0;
    bool found = false;
    for (long step = 0; a >= 0.0; ++step) {
        a = 2.0 - static_cast<double>(step) * settings.step;
        const double all = required(a, false), low = required(a, true);
        if (all <= low + 1e-9 * (1.0 + std::abs(low))) {
            found = true;
            break;
        }
    }
    if (!found) {
        cert.message = "coercivity assumption (G.2) violated: no a in [0, 2] fits the probe set";
        return cert;
    }
    cert.a = a;
    cert.lambda = std::max(required(a, false), 0.0);

    double g_energy = 0.0;
    Eigen::VectorXd cross = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < noise.directions(); ++i) {
        g_energy += noise.additive[i].squaredNorm();
        cross += noise.multiplicative[i].transpose() * noise.additive[i];
    }
    if (g_energy > 0.0) {
        cert.lambda += settings.kappa_margin;
        cert.kappa = g_energy + cross.squaredNorm() / settings.kappa_margin;
    }

    // recheck the full inequality, additive part included, at several scales
    for (const auto& u : probes)
        for (double t : {0.25, 1.0, 4.0}) {
            const Eigen::VectorXd v = t * u;
            const double lhs = 2.0 * v.cwiseProduct(v).dot(lam) - hs_norm2(noise, v);
            const double rhs = cert.a * v.cwiseProduct(v).dot(lam) - cert.lambda * v.squaredNorm() - cert.kappa;
            if (lhs < rhs - 1e-9 * (1.0 + std::abs(rhs))) ++cert.violations;
        }

    cert.feasible = cert.a > cert.floor && cert.violations == 0;
    std::ostringstream msg;
    if (cert.a <= cert.floor)
        msg << "coercivity assumption (G.2) violated: a = " << format_real(cert.a) << " is not in ("
            << format_real(cert.floor) << ", 2]";
    else if (cert.violations > 0)
        msg << "coercivity inequality fails on " << cert.violations << " probes";
    else
        msg << "ok";
    cert.message = msg.str();

    // growth and Lipschitz constants of the jump coefficient on |u| <= 1
    std::vector<double> orders = settings.moment_orders;
    const double g = noise.jumps.gamma;
    if (orders.empty()) orders = {1.0, 2.0, 2.0 + g, 4.0, 4.0 + 2.0 * g};
    for (double p : orders) {
        const double mass = noise.jumps.abs_moment(p, true) + noise.jumps.abs_moment(p, false);
        double cp = 0.0;
        for (const auto& u : probes)
            for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) {
                const Eigen::VectorXd v = t * u;
                cp = std::max(cp, mass * std::pow(jump_direction(noise, v).norm(), p) / (1.0 + std::pow(t, p)));
            }
        cert.growth.emplace_back(p, cp);
    }
    const double m2 = noise.jumps.abs_moment(2.0, true) + noise.jumps.abs_moment(2.0, false);
    for (std::size_t q = 0; q + 1 < probes.size(); ++q) {
        const Eigen::VectorXd d = probes[q] - probes[q + 1];
        if (d.squaredNorm() == 0.0) continue;
        const Eigen::VectorXd diff = jump_direction(noise, probes[q]) - jump_direction(noise, probes[q + 1]);
        cert.jump_lipschitz = std::max(cert.jump_lipschitz, m2 * diff.squaredNorm() / d.squaredNorm());
    }

    // L_G: top eigenvalue of sum M_i^T M_i against the Dirichlet form
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
    for (const auto& m : noise.multiplicative) gram += m.transpose() * m;
    const Eigen::VectorXd inv_root = lam.cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd scaled = inv_root.asDiagonal() * gram * inv_root.asDiagonal();
    if (n > 0) cert.wiener_lipschitz = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(scaled).eigenvalues().maxCoeff();
    return cert;
}

void write_certificate(std::ostream& out, const NoiseCertificate& c)
{
    out << "feasible: " << (c.feasible ? "pass" : "fail") << '\n'
        << "a: " << format_real(c.a) << '\n'
        << "lambda: " << format_real(c.lambda) << '\n'
        << "kappa: " << format_real(c.kappa) << '\n'
        << "a_floor: " << format_real(c.floor) << '\n'
        << "message: " << c.message << '\n';
    for (const auto& [p, cp] : c.growth) out << "growth_p" << format_real(p) << ": " << format_real(cp) << '\n';
    out << "jump_lipschitz: " << format_real(c.jump_lipschitz) << '\n'
        << "wiener_lipschitz: " << format_real(c.wiener_lipschitz) << '\n'
        << "probes: " << c.probe_count << '\n'
        << "violations: " << c.violations << '\n';
}

}  // namespace levygal
