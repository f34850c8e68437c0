#include "levygal/energy_diagnostics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <thread>

#include "levygal/numeric_text.hpp"

namespace levygal {

// ---------------------------------------------------------------------------
// Ledger

double EnergyLedger::max_abs_residual() const
{
    double m = 0.0;
    for (double r : residual) m = std::max(m, std::abs(r));
    return m;
}

double jump_energy_integral(const JumpSpec& spec, double a, double b, double c, double p, bool small)
{
    if (spec.rate == 0.0) return 0.0;
    if (p == 2.0) {
        // (a + b y + c y^2) - a, minus b y on the small region
        const double quad = c * spec.abs_moment(2.0, small);
        return small ? quad : quad + b * spec.signed_first_moment(false);
    }
    const double half = p / 2.0;
    const double base = std::pow(a, half);
    const double slope = a > 0 ? half * std::pow(a, half - 1.0) * b : 0.0;
    auto g = [&](double y) {
        const double q = std::max(a + b * y + c * y * y, 0.0);
        double v = std::pow(q, half) - base;
        if (small) v -= slope * y;
        return v;
    };
    return integrate_over_marks(spec, g, small);
}

EnergyLedger accumulate_ledger(const TrajectoryRecord& record, const SimConfig& cfg, const OperatorTriple& triple,
                               const DiscreteNoise& noise, double p)
{
    if (p < 2.0) throw std::invalid_argument("ledger moment order must be >= 2");
    if (noise.basis != triple.basis || noise.level != cfg.level || triple.level() < cfg.level)
        throw ContractViolation("ledger models do not match the trajectory");
    if (record.samples.empty()) throw ContractViolation("empty trajectory");
    if (static_cast<std::size_t>(record.samples.front().coeffs.size()) != cfg.level)
        throw ContractViolation("trajectory level does not match the configuration");
    if (record.compensated != cfg.compensate_small_jumps)
        throw ContractViolation("trajectory and configuration disagree on jump compensation");

    const std::size_t count = record.samples.size();
    EnergyLedger L;
    L.p = p;
    for (auto* v : {&L.times, &L.drift, &L.small, &L.large, &L.wiener, &L.trace, &L.jumps, &L.residual})
        v->assign(count, 0.0);

    // which event produced each sample
    std::vector<const Substep*> by_substep(count, nullptr);
    std::vector<const JumpRecord*> by_jump(count, nullptr);
    for (const auto& s : record.substeps) by_substep[s.to] = &s;
    for (const auto& j : record.jumps) by_jump[j.right] = &j;

    auto power = [&](const Eigen::VectorXd& x) { return std::pow(x.squaredNorm(), p / 2.0); };
    const double start = power(record.samples.front().coeffs);
    const double m1_small = noise.jumps.signed_first_moment(true);
    double drift = 0, small = 0, large = 0, wiener = 0, trace = 0, jumps = 0;

    for (std::size_t idx = 0; idx < count; ++idx) {
        const auto& sample = record.samples[idx];
        if (const Substep* s = by_substep[idx]) {
            const Eigen::VectorXd& x = record.samples[s->from].coeffs;
            const double t = record.samples[s->from].time;
            const double r2 = x.squaredNorm();
            const double a1 = p == 2.0 ? 2.0 : (r2 > 0 ? p * std::pow(r2, (p - 2.0) / 2.0) : 0.0);
            const double a2 = p == 2.0 ? 0.0 : (r2 > 0 ? p * (p - 2.0) * std::pow(r2, (p - 4.0) / 2.0) : 0.0);
            auto q_form = [&](const Eigen::VectorXd& v) {
                const double xv = x.dot(v);
                return a1 * v.squaredNorm() + a2 * xv * xv;
            };

            double theta = 1.0;
            const Eigen::VectorXd phi = galerkin_drift(cfg, triple, x, t, &theta);
            drift += a1 * phi.dot(x) * s->h;
            L.max_convection_work =
                std::max(L.max_convection_work, std::abs(theta * apply_B(*triple.tensor, x, x).dot(x)));

            const Eigen::VectorXd gdw = apply_G(noise, x, s->dW);
            double column_q = 0.0;
            for (std::size_t i = 0; i < noise.directions(); ++i) column_q += q_form(g_column(noise, x, i));
            wiener += a1 * x.dot(gdw) + 0.5 * (q_form(gdw) - column_q * s->h);
            trace += 0.5 * column_q * s->h;

            const Eigen::VectorXd d = jump_direction(noise, x);
            const double a = r2, b = 2.0 * x.dot(d), c = d.squaredNorm();
            const double k_int = jump_energy_integral(noise.jumps, a, b, c, p, false);
            large += s->h * k_int;
            if (record.compensated) {
                const double i_int = jump_energy_integral(noise.jumps, a, b, c, p, true);
                small += s->h * i_int;
                jumps -= s->h * (i_int + 0.5 * a1 * b * m1_small + k_int);
            } else {
                jumps -= s->h * k_int;
            }
        } else if (const JumpRecord* j = by_jump[idx]) {
            const Eigen::VectorXd& left = record.samples[j->left].coeffs;
            jumps += power(sample.coeffs) - power(left);
        }
        L.times[idx] = sample.time;
        L.drift[idx] = drift;
        L.small[idx] = small;
        L.large[idx] = large;
        L.wiener[idx] = wiener;
        L.trace[idx] = trace;
        L.jumps[idx] = jumps;
        L.residual[idx] = power(sample.coeffs) - start - (drift + small + large + wiener + trace + jumps);
    }
    return L;
}

GateResult martingale_mean_test(std::span<const EnergyLedger> ledgers, LedgerTerm term, double level)
{
    if (ledgers.size() < 50) throw std::invalid_argument("martingale mean test needs at least 50 paths");
    GateResult g;
    g.name = term == LedgerTerm::jumps ? "martingale_M" : "martingale_N";
    g.samples = static_cast<int>(ledgers.size());
    CompensatedSum sum;
    std::vector<double> v;
    for (const auto& l : ledgers) {
        v.push_back(term == LedgerTerm::jumps ? l.jumps.back() : l.wiener.back());
        sum.add(v.back());
    }
    g.mean = sum.value() / static_cast<double>(v.size());
    CompensatedSum sq;
    for (double x : v) sq.add((x - g.mean) * (x - g.mean));
    g.stderr_ = std::sqrt(sq.value() / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
    g.pass = std::abs(g.mean) <= level * g.stderr_;
    return g;
}

void CompensatedSum::add(double x)
{
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
        carry_ += (sum_ - t) + x;
    else
        carry_ += (x - t) + sum_;
    sum_ = t;
}

// ---------------------------------------------------------------------------
// Moments

namespace {

struct PathMoments {
    bool aborted = false;
    double sup_h2 = 0.0, sup_hp = 0.0, v_integral = 0.0;
    long cutoff = 0;
    bool stopped = false;
};

std::pair<double, double> mean_stderr(const std::vector<double>& xs)
{
    if (xs.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    CompensatedSum s;
    for (double x : xs) s.add(x);
    const double m = s.value() / static_cast<double>(xs.size());
    if (xs.size() < 2) return {m, 0.0};
    CompensatedSum q;
    for (double x : xs) q.add((x - m) * (x - m));
    return {m, std::sqrt(q.value() / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()))};
}

}  // namespace

MomentReport estimate_moments(const MomentJob& job)
{
    if (job.paths < 50) throw std::invalid_argument("moment estimation needs at least 50 paths");
    if (job.levels.empty()) throw std::invalid_argument("empty n-sweep");
    MomentReport rep;
    rep.gamma = job.gamma;
    rep.uniformity_ratio = job.uniformity_ratio;

    struct Level {
        SimConfig cfg;
        OperatorTriple triple;
        DiscreteNoise noise;
    };
    std::vector<Level> setups;
    for (std::size_t n : job.levels) {
        Level l;
        l.cfg = job.config;
        l.cfg.level = n;
        l.cfg.validate(*job.basis);
        l.triple = make_triple(job.basis, n);
        if (job.break_antisymmetry) l.triple = with_tensor(l.triple, l.triple.tensor->with_broken_antisymmetry(0.05));
        l.noise = discretize(job.noise, job.basis, n);
        setups.push_back(std::move(l));
    }

    const std::size_t paths = static_cast<std::size_t>(job.paths);
    const std::size_t tasks = setups.size() * paths;
    std::vector<PathMoments> slots(tasks);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t task = next++; task < tasks; task = next++) {
            const auto& l = setups[task / paths];
            const auto path = static_cast<std::uint64_t>(task % paths);
            PathMoments& out = slots[task];
            try {
                const auto rec = simulate_path(l.cfg, l.triple, l.noise, path);
                for (const auto& s : rec.samples) {
                    const double h2 = s.coeffs.squaredNorm();
                    out.sup_h2 = std::max(out.sup_h2, h2);
                    out.sup_hp = std::max(out.sup_hp, std::pow(h2, (2.0 + job.gamma) / 2.0));
                }
                CompensatedSum v;
                for (const auto& st : rec.substeps) {
                    const auto& x = rec.samples[st.from].coeffs;
                    double vn = 0.0;
                    for (Eigen::Index i = 0; i < x.size(); ++i)
                        vn += (1.0 + job.basis->mode(static_cast<std::size_t>(i)).eigenvalue) * x[i] * x[i];
                    v.add(st.h * vn);
                }
                out.v_integral = v.value();
                out.cutoff = rec.cutoff_activations;
                out.stopped = rec.stopped;
            } catch (const PathAborted&) {
                out.aborted = true;
            }
        }
    };
    const int workers = std::max(job.workers, 1);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    for (std::size_t li = 0; li < setups.size(); ++li) {
        MomentRow row;
        row.level = job.levels[li];
        row.paths = job.paths;
        std::vector<double> h2, hp, vi;
        for (std::size_t p = 0; p < paths; ++p) {
            const auto& r = slots[li * paths + p];
            if (r.aborted) {
                ++row.aborted;
                continue;
            }
            h2.push_back(r.sup_h2);
            hp.push_back(r.sup_hp);
            vi.push_back(r.v_integral);
            row.cutoff_activations += r.cutoff;
            row.stopped += r.stopped ? 1 : 0;
        }
        std::tie(row.sup_h2, row.sup_h2_stderr) = mean_stderr(h2);
        std::tie(row.sup_hp, row.sup_hp_stderr) = mean_stderr(hp);
        std::tie(row.v_integral, row.v_integral_stderr) = mean_stderr(vi);
        CompensatedSum s, s2;
        for (double x : hp) {
            s.add(x);
            s2.add(x * x);
        }
        row.sup_hp_ess = s2.value() > 0 ? s.value() * s.value() / s2.value() : 0.0;
        rep.any_aborted = rep.any_aborted || row.aborted > 0;
        rep.rows.push_back(row);
    }

    auto spread = [&](auto field) {
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        for (const auto& r : rep.rows) {
            lo = std::min(lo, r.*field);
            hi = std::max(hi, r.*field);
        }
        return std::pair{lo, hi};
    };
    const auto [h_lo, h_hi] = spread(&MomentRow::sup_h2);
    const auto [v_lo, v_hi] = spread(&MomentRow::v_integral);
    rep.uniform_h = h_lo > 0 ? h_hi / h_lo < job.uniformity_ratio : h_hi == 0.0;
    rep.uniform_v = v_lo > 0 ? v_hi / v_lo < job.uniformity_ratio : v_hi == 0.0;
    rep.bounded = true;
    for (const auto& r : rep.rows)
        rep.bounded = rep.bounded && r.sup_h2 <= 10.0 * rep.rows.front().sup_h2 &&
                      r.v_integral <= 10.0 * rep.rows.front().v_integral;
    return rep;
}

void write_moment_report(std::ostream& out, const MomentReport& rep)
{
    out << "# n, p, estimate, stderr, M\n";
    const std::string p_high = format_real(2.0 + rep.gamma);
    for (const auto& r : rep.rows) {
        const int m = r.paths - r.aborted;
        out << r.level << ", 2, " << format_real(r.sup_h2) << ", " << format_real(r.sup_h2_stderr) << ", " << m << '\n';
        out << r.level << ", " << p_high << ", " << format_real(r.sup_hp) << ", " << format_real(r.sup_hp_stderr)
            << ", " << m << '\n';
        out << r.level << ", V, " << format_real(r.v_integral) << ", " << format_real(r.v_integral_stderr) << ", "
            << m << '\n';
    }
    out << "# n, aborted, stopped, cutoff_activations, ess\n";
    for (const auto& r : rep.rows)
        out << r.level << ", " << r.aborted << ", " << r.stopped << ", " << r.cutoff_activations << ", "
            << format_real(r.sup_hp_ess) << '\n';
    auto flag = [](bool b) { return b ? "pass" : "fail"; };
    out << "uniform_sup_h2: " << flag(rep.uniform_h) << '\n'
        << "uniform_v_integral: " << flag(rep.uniform_v) << '\n'
        << "bounded: " << flag(rep.bounded) << '\n'
        << "aborts: " << flag(!rep.any_aborted) << '\n';
}

// ---------------------------------------------------------------------------
// Modulus

namespace {

double weighted_distance(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w)
{
    const Eigen::VectorXd d = x - y;
    if (w.size() == 0) return d.norm();
    return std::sqrt(d.cwiseProduct(d).dot(w));
}

// beyond this many samples the pairwise table is recomputed on the fly
constexpr std::size_t table_limit = 3000;

}  // namespace

std::vector<double> modulus_curve(std::span<const Sample> path, std::span<const double> deltas,
                                  const Eigen::VectorXd& weights, std::size_t max_times)
{
    if (path.empty()) throw std::invalid_argument("modulus of an empty path");
    const std::size_t count = path.size();

    // groups of samples sharing a time; group_start[g] is also the left value at that time
    std::vector<std::size_t> group_start;
    std::vector<bool> has_jump;
    for (std::size_t i = 0; i < count; ++i) {
        if (i == 0 || path[i].time != path[i - 1].time) {
            group_start.push_back(i);
            has_jump.push_back(false);
        }
        if (path[i].kind != SampleKind::grid) has_jump.back() = true;
    }
    group_start.push_back(count);
    const std::size_t groups = group_start.size() - 1;

    std::vector<std::size_t> cand;
    const std::size_t stride = max_times > 0 && groups > max_times ? (groups + max_times - 1) / max_times : 1;
    for (std::size_t g = 0; g < groups; ++g)
        if (g == 0 || g + 1 == groups || has_jump[g] || g % stride == 0) cand.push_back(g);

    std::vector<double> table;
    const bool tabulate = count <= table_limit;
    if (tabulate) {
        table.assign(count * count, 0.0);
        for (std::size_t i = 0; i < count; ++i)
            for (std::size_t j = i + 1; j < count; ++j)
                table[i * count + j] = table[j * count + i] = weighted_distance(path[i].coeffs, path[j].coeffs, weights);
    }
    auto dist = [&](std::size_t i, std::size_t j) {
        return tabulate ? table[i * count + j] : weighted_distance(path[i].coeffs, path[j].coeffs, weights);
    };

    // osc[a][b]: diameter of u(t_a), the samples in (t_a, t_b) and the left value at t_b;
    // u(t_a) is the last sample of its group (post-jump when t_a is a jump time)
    const std::size_t m = cand.size();
    std::vector<double> osc(m * m, 0.0);
    for (std::size_t a = 0; a < m; ++a) {
        const std::size_t first = group_start[cand[a] + 1] - 1;
        double diam = 0.0;
        std::size_t end = first;  // samples [first, end) are in the set
        for (std::size_t b = a + 1; b < m; ++b) {
            const std::size_t stop = group_start[cand[b]];
            for (; end < stop; ++end)
                for (std::size_t w = first; w < end; ++w) diam = std::max(diam, dist(end, w));
            double with_left = diam;
            for (std::size_t w = first; w < end; ++w) with_left = std::max(with_left, dist(stop, w));
            osc[a * m + b] = with_left;
        }
    }

    const double horizon = path.back().time - path.front().time;
    std::vector<double> out;
    for (double delta : deltas) {
        if (delta > horizon || m < 2) {
            out.push_back(m < 2 ? 0.0 : osc[m - 1]);
            continue;
        }
        const double slack = 1e-12 * std::max(1.0, horizon);
        std::vector<double> best(m, std::numeric_limits<double>::infinity());
        best[0] = 0.0;
        for (std::size_t b = 1; b < m; ++b)
            for (std::size_t a = 0; a < b; ++a) {
                if (path[group_start[cand[b]]].time - path[group_start[cand[a]]].time < delta - slack) break;
                best[b] = std::min(best[b], std::max(best[a], osc[a * m + b]));
            }
        out.push_back(best[m - 1]);
    }
    return out;
}

double modulus(std::span<const Sample> path, double delta, const Eigen::VectorXd& weights)
{
    const double d[] = {delta};
    return modulus_curve(path, d, weights).front();
}

// ---------------------------------------------------------------------------
// Aldous

bool AldousTable::monotone_in_eta() const
{
    for (const auto& row : probability)
        for (std::size_t e = 1; e < row.size(); ++e)
            if (row[e] > row[e - 1]) return false;
    return true;
}

AldousTable aldous_statistic(std::span<const TrajectoryRecord> ensemble, const SpectralBasis& basis,
                             std::span<const StoppingRule> rules, std::span<const double> thetas,
                             std::span<const double> etas, double alpha)
{
    if (ensemble.empty() || rules.empty()) throw std::invalid_argument("Aldous statistic needs paths and rules");
    AldousTable tab;
    tab.thetas.assign(thetas.begin(), thetas.end());
    tab.etas.assign(etas.begin(), etas.end());
    tab.alpha = alpha;
    tab.probability.assign(thetas.size(), std::vector<double>(etas.size(), 0.0));
    tab.moment.assign(thetas.size(), 0.0);

    const auto n = ensemble.front().samples.front().coeffs.size();
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i)
        w[i] = std::pow(basis.mode(static_cast<std::size_t>(i)).eigenvalue, -basis.sobolev_order());

    for (const auto& rule : rules) {
        std::vector<std::vector<double>> incr(thetas.size());
        for (const auto& rec : ensemble) {
            const auto& s = rec.samples;
            const double horizon = s.back().time;
            std::size_t tau = s.size() - 1;
            for (std::size_t i = 0; i < s.size(); ++i) {
                if (s[i].kind == SampleKind::jump_left) continue;
                const bool hit = rule.kind == StoppingRule::Kind::fixed_time ? s[i].time >= rule.value
                                                                             : s[i].coeffs.norm() >= rule.value;
                if (hit) {
                    tau = i;
                    break;
                }
            }
            for (std::size_t q = 0; q < thetas.size(); ++q) {
                const double target = std::min(s[tau].time + thetas[q], horizon);
                std::size_t at = tau;
                for (std::size_t i = tau; i < s.size() && s[i].time <= target + 1e-12; ++i)
                    if (s[i].kind != SampleKind::jump_left) at = i;
                incr[q].push_back(weighted_distance(s[at].coeffs, s[tau].coeffs, w));
            }
        }
        for (std::size_t q = 0; q < thetas.size(); ++q) {
            const double m = static_cast<double>(incr[q].size());
            CompensatedSum mom;
            for (double d : incr[q]) mom.add(std::pow(d, alpha));
            tab.moment[q] = std::max(tab.moment[q], mom.value() / m);
            for (std::size_t e = 0; e < etas.size(); ++e) {
                const double hits =
                    static_cast<double>(std::count_if(incr[q].begin(), incr[q].end(), [&](double d) { return d >= etas[e]; }));
                tab.probability[q][e] = std::max(tab.probability[q][e], hits / m);
            }
        }
    }

    // least squares of log moment on log theta
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int k = 0;
    for (std::size_t q = 0; q < thetas.size(); ++q) {
        if (!(tab.moment[q] > 0) || !(thetas[q] > 0)) continue;
        const double x = std::log(thetas[q]), y = std::log(tab.moment[q]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++k;
    }
    if (k >= 2 && k * sxx - sx * sx > 0) {
        tab.fit_beta = (k * sxy - sx * sy) / (k * sxx - sx * sx);
        tab.fit_c = std::exp((sy - tab.fit_beta * sx) / k);
    }
    return tab;
}

// ---------------------------------------------------------------------------
// Windows

std::vector<double> path_seminorms(const TrajectoryRecord& record, const SpectralBasis& basis,
                                   std::span<const LocalWindow> windows, double horizon)
{
    std::vector<GridField> frames;
    for (const auto& s : record.samples)
        if (s.kind == SampleKind::grid) frames.push_back(reconstruct(basis, s.coeffs));
    std::vector<double> out;
    for (const auto& w : windows) out.push_back(seminorm_local(basis.layout(), frames, w, horizon));
    return out;
}

WindowConvergence window_convergence(const OperatorTriple& triple, const DiscreteNoise& noise,
                                     const Eigen::VectorXd& u, const Eigen::VectorXd& w, const Eigen::VectorXd& v,
                                     const LocalWindow& window, int levels)
{
    const auto& basis = *triple.basis;
    WindowConvergence out;
    const Eigen::VectorXd base = apply_B(*triple.tensor, u, u);
    const double m1 = noise.jumps.signed_first_moment(true) + noise.jumps.signed_first_moment(false);
    for (int k = 1; k <= levels; ++k) {
        const Eigen::VectorXd step = std::ldexp(1.0, -k) * w;
        const Eigen::VectorXd uk = u + step;
        const GridField diff = reconstruct(basis, step);
        out.seminorm.push_back(seminorm_local(basis.layout(), std::span<const GridField>(&diff, 1), window, 1.0));
        out.pairing_gap.push_back(std::abs((apply_B(*triple.tensor, uk, uk) - base).dot(v)));
        out.jump_gap.push_back(std::abs(m1) * (jump_direction(noise, uk) - jump_direction(noise, u)).norm());
    }
    // The pairing gap is s*linear + s^2*quadratic and can pass through zero at
    // coarse s when the two terms have opposite signs, so only the second half
    // of the dyadic sequence has to be monotone.
    auto shrinking = [](const std::vector<double>& xs) {
        if (xs.size() < 2) return true;
        for (std::size_t i = xs.size() / 2 + 1; i < xs.size(); ++i)
            if (xs[i] > xs[i - 1]) return false;
        const double peak = *std::max_element(xs.begin(), xs.end());
        return peak == 0.0 || xs.back() <= 0.1 * peak;
    };
    out.decreasing = shrinking(out.seminorm) && shrinking(out.pairing_gap) && shrinking(out.jump_gap);
    return out;
}

void write_modulus_curve(std::ostream& out, std::span<const double> deltas, std::span<const double> values)
{
    out << "# delta, w\n";
    for (std::size_t i = 0; i < deltas.size(); ++i) out << format_real(deltas[i]) << ", " << format_real(values[i]) << '\n';
}

void write_aldous_table(std::ostream& out, const AldousTable& t)
{
    out << "# theta, eta, prob\n";
    for (std::size_t q = 0; q < t.thetas.size(); ++q)
        for (std::size_t e = 0; e < t.etas.size(); ++e)
            out << format_real(t.thetas[q]) << ", " << format_real(t.etas[e]) << ", "
                << format_real(t.probability[q][e]) << '\n';
    out << "# theta, moment\n";
    for (std::size_t q = 0; q < t.thetas.size(); ++q)
        out << format_real(t.thetas[q]) << ", " << format_real(t.moment[q]) << '\n';
    out << "fit_c: " << format_real(t.fit_c) << '\n' << "fit_beta: " << format_real(t.fit_beta) << '\n';
}

}  // namespace levygal
