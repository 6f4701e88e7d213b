#include "branchlab/bbm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "branchlab/errors.hpp"

namespace branchlab {

namespace {

void validate_config(const bbm_config& cfg) {
    if (!std::isfinite(cfg.mu))
        throw error(errc::validation, "drift must be finite");
    if (std::isfinite(cfg.L) && !(cfg.L > 1))
        throw error(errc::validation, "finite box needs L > 1");
    double cap = 1e-3;
    if (cfg.rate_bound > 0) cap = std::min(cap, 0.01 / cfg.rate_bound);
    if (!(cfg.dt > 0) || cfg.dt > cap * (1 + 1e-12))
        throw error(errc::validation, "dt must satisfy dt <= min(1e-3, 0.01/rate_bound)");
    if (cfg.rate_bound > 0 && cfg.rate_bound < 0.5 * (1.0 + cfg.W.max()) - 1e-12)
        throw error(errc::validation, "rate_bound below the actual branching rate");
    if (cfg.particle_cap == 0)
        throw error(errc::validation, "particle cap must be positive");
}

struct step_mode {
    double drift;        // signed velocity
    double L;            // right absorbing boundary, +inf for none
    double rate_bound;   // thinning proposal rate; 0 disables branching
    const potential* W;  // null: constant rate 1/2 (reversed process)
    double dt;
    std::uint64_t cap;
};

// One Euler step for every particle.  Draw layout per particle: normal (2
// words), branch proposal (1), thinning accept (1), all from one Philox block
// at counter sys.steps of the (ctx key, particle uid) stream.  Survivors are
// compacted in place; the two children of a branch replace their parent.
void advance(particle_system& sys, const step_mode& md, const rng& ctx) {
    const double sdt = std::sqrt(md.dt);
    const double shift = md.drift * md.dt;
    const double pb = md.rate_bound * md.dt;
    const double birth = double(sys.steps + 1) * md.dt;
    const std::size_t n0 = sys.particles.size();
    std::size_t keep = 0;
    for (std::size_t i = 0; i < n0; ++i) {
        bbm_particle p = sys.particles[i];
        rng r = ctx.stream(p.uid);
        r.seek(sys.steps);
        double x = p.x + shift + sdt * r.normal();
        if (x <= 0) {
            ++sys.absorbed0;
            continue;
        }
        if (x >= md.L) {
            ++sys.absorbedL;
            continue;
        }
        p.x = x;
        bool split = false;
        if (pb > 0 && r.uniform() < pb) {
            if (md.W == nullptr)
                split = true;
            else
                split = r.uniform() * md.rate_bound < 0.5 * (1.0 + (*md.W)(x));
        }
        if (split) {
            rng spawner = ctx.stream(p.uid);
            for (std::uint64_t c = 0; c < 2; ++c) {
                sys.particles.push_back({x, sys.log.size(), spawner.child(c).uid()});
                sys.log.push_back({p.id, birth});
            }
        } else {
            sys.particles[keep++] = p;
        }
    }
    const std::size_t total = sys.particles.size();
    for (std::size_t j = n0; j < total; ++j) sys.particles[keep++] = sys.particles[j];
    sys.particles.resize(keep);
    ++sys.steps;
    sys.time = double(sys.steps) * md.dt;
    sys.peak = std::max<std::uint64_t>(sys.peak, sys.particles.size());
    if (sys.particles.size() > md.cap)
        throw error(errc::explosion, "population exceeded the particle cap");
}

std::uint64_t step_count(double horizon, double dt) {
    double want = horizon / dt;
    auto n = std::uint64_t(std::llround(want));
    if (std::abs(double(n) * dt - horizon) > 1e-9) n = std::uint64_t(std::ceil(want - 1e-12));
    return n;
}

}  // namespace

bbm_config make_bbm_config(potential W, double mu, double L, double dt) {
    bbm_config cfg;
    cfg.W = std::move(W);
    cfg.mu = mu;
    cfg.L = L;
    cfg.dt = dt;
    cfg.rate_bound = 0.5 * (1.0 + cfg.W.max());
    validate_config(cfg);
    return cfg;
}

particle_system particle_system::start(double x0, const rng& ctx) {
    particle_system sys;
    sys.particles.push_back({x0, 0, ctx.uid()});
    sys.log.push_back({0, 0.0});
    return sys;
}

void step(particle_system& sys, const bbm_config& cfg, const rng& ctx) {
    step_mode md{-cfg.mu, cfg.L, cfg.rate_bound, &cfg.W, cfg.dt, cfg.particle_cap};
    advance(sys, md, ctx);
}

void step_reversed(particle_system& sys, double mu, double dt, const rng& ctx,
                   std::uint64_t particle_cap) {
    step_mode md{mu,      std::numeric_limits<double>::infinity(), 0.5, nullptr,
                 dt,      particle_cap};
    advance(sys, md, ctx);
}

double divergence_time(const particle_system& sys, std::uint64_t a, std::uint64_t b) {
    if (a >= sys.log.size() || b >= sys.log.size())
        throw error(errc::validation, "id beyond the lineage log");
    if (a == b) return sys.time;
    double split = sys.time;
    while (a != b) {
        // step the later-born chain; the root (birth 0) is never stepped
        if (sys.log[a].birth >= sys.log[b].birth) {
            split = sys.log[a].birth;
            a = sys.log[a].parent;
        } else {
            split = sys.log[b].birth;
            b = sys.log[b].parent;
        }
    }
    return split;
}

std::vector<std::size_t> planar_order(const particle_system& sys) {
    const std::size_t n = sys.log.size();
    // children arena, per parent in id (= birth) order
    std::vector<std::size_t> head(n + 1, 0);
    for (std::size_t id = 1; id < n; ++id) ++head[sys.log[id].parent + 1];
    for (std::size_t i = 0; i < n; ++i) head[i + 1] += head[i];
    std::vector<std::size_t> kids(n > 0 ? n - 1 : 0);
    {
        std::vector<std::size_t> fill(head.begin(), head.end() - 1);
        for (std::size_t id = 1; id < n; ++id) kids[fill[sys.log[id].parent]++] = id;
    }
    std::vector<std::ptrdiff_t> slot(n, -1);
    for (std::size_t i = 0; i < sys.particles.size(); ++i)
        slot[sys.particles[i].id] = std::ptrdiff_t(i);
    std::vector<std::size_t> out;
    out.reserve(sys.particles.size());
    std::vector<std::size_t> stack;
    if (n > 0) stack.push_back(0);
    while (!stack.empty()) {
        std::size_t id = stack.back();
        stack.pop_back();
        if (slot[id] >= 0) out.push_back(std::size_t(slot[id]));
        for (std::size_t j = head[id + 1]; j > head[id]; --j)  // reversed: first child on top
            stack.push_back(kids[j - 1]);
    }
    return out;
}

mmm_sample extract_mmm(const particle_system& sys, mmm_weight weighting, double gamma,
                       const std::function<double(double)>& h) {
    if (sys.particles.empty())
        throw error(errc::empty_population, "no particles to sample");
    if (weighting == mmm_weight::h_biased && !h)
        throw error(errc::validation, "h-biased weighting needs h");
    auto ord = planar_order(sys);
    const std::size_t k = ord.size();
    std::vector<double> H(k - 1), marks(k), wts(k);
    for (std::size_t i = 0; i < k; ++i) marks[i] = sys.particles[ord[i]].x;
    for (std::size_t i = 0; i + 1 < k; ++i)
        H[i] = sys.time -
               divergence_time(sys, sys.particles[ord[i]].id, sys.particles[ord[i + 1]].id);
    double flat = std::pow(double(k), -gamma);
    for (std::size_t i = 0; i < k; ++i)
        wts[i] = weighting == mmm_weight::uniform ? flat : h(marks[i]);
    return {ultrametric::from_depths(H), std::move(marks), std::move(wts), k};
}

bbm_model::bbm_model(bbm_config cfg, double spectral_tol) : cfg_(std::move(cfg)) {
    validate_config(cfg_);
    if (!std::isfinite(cfg_.L))
        throw error(errc::validation, "the boxed model needs a finite L");
    sol_ = solve_slp(cfg_.W, cfg_.L, spectral_tol);
    sol_inf_ = solve_slp(cfg_.W, 2.0 * cfg_.L, spectral_tol);
    hf_ = harmonic_pair(sol_, cfg_.mu);
    hf_inf_ = harmonic_pair(sol_inf_, cfg_.mu);
    w_eff_ = 0.5 * (cfg_.mu * cfg_.mu - 1.0) - sol_.lambda1;
}

double bbm_model::gamma_exponent() const {
    if (!(sol_.alpha > 1))
        throw error(errc::regime, "gamma = 1/(alpha-1) needs the pushed regime");
    return 1.0 / (sol_.alpha - 1.0);
}

run_result bbm_model::run(double x0, double horizon, const observable_request& req,
                          const rng& base) const {
    if (!(x0 > 0) || !(x0 < cfg_.L))
        throw error(errc::validation, "start position outside (0, L)");
    if (!(horizon > 0))
        throw error(errc::validation, "horizon must be positive");
    for (std::size_t i = 0; i < req.times.size(); ++i)
        if (req.times[i] < 0 || req.times[i] > horizon + 0.5 * cfg_.dt ||
            (i > 0 && req.times[i] < req.times[i - 1]))
            throw error(errc::validation, "record times must ascend within [0, horizon]");

    const std::uint64_t nsteps = step_count(horizon, cfg_.dt);
    particle_system sys = particle_system::start(x0, base);
    run_result out;
    std::size_t ti = 0;
    auto record = [&](double at) {
        series_point sp;
        sp.t = at;
        sp.z = sys.particles.size();
        sp.absorbed0 = sys.absorbed0;
        sp.absorbedL = sys.absorbedL;
        if (req.histogram_bins > 0) sp.histogram.assign(req.histogram_bins, 0.0);
        for (const auto& p : sys.particles) {
            if (req.track_w) sp.w += hf_.h.value(p.x);
            if (req.track_w_inf) sp.w_inf += hf_inf_.h.value(p.x);
            if (req.histogram_bins > 0) {
                auto b = std::size_t(p.x / cfg_.L * double(req.histogram_bins));
                sp.histogram[std::min(b, req.histogram_bins - 1)] += 1.0;
            }
        }
        out.series.push_back(std::move(sp));
    };
    for (std::uint64_t k = 0;; ++k) {
        double now = double(k) * cfg_.dt;
        while (ti < req.times.size() && now >= req.times[ti] - 0.5 * cfg_.dt) {
            record(req.times[ti]);
            ++ti;
        }
        if (k == nsteps || sys.particles.empty()) break;
        step(sys, cfg_, base);
    }
    // extinct before the horizon: the remaining schedule sees the empty state
    while (ti < req.times.size()) {
        record(req.times[ti]);
        ++ti;
    }
    out.extinct = sys.particles.empty();
    out.peak = sys.peak;
    if (req.final_mmm && !out.extinct) {
        double g = sol_.alpha > 1 ? 1.0 / (sol_.alpha - 1.0) : 0.0;
        out.final_sample = extract_mmm(sys, req.weighting, g,
                                       [this](double x) { return hf_.h.value(x); });
    }
    return out;
}

double bbm_model::tuple_sum(const particle_system& sys, std::size_t k,
                            const functional& G) const {
    auto ord = planar_order(sys);
    const std::size_t Z = ord.size();
    std::vector<double> hv(Z), xs(Z);
    std::vector<std::uint64_t> ids(Z);
    for (std::size_t i = 0; i < Z; ++i) {
        xs[i] = sys.particles[ord[i]].x;
        hv[i] = hf_.h.value(xs[i]);
        ids[i] = sys.particles[ord[i]].id;
    }
    if (k == 1) {
        dense_matrix one(1);
        double s = 0;
        for (std::size_t i = 0; i < Z; ++i) s += G.eval(one, {xs[i]}) * hv[i];
        return s;
    }
    const double fact = k == 2 ? 2.0 : k == 3 ? 6.0 : 24.0;
    if (G.kind() == functional::node::constant) {
        // constant G: the ordered-tuple sum is k! e_k of the h values
        double p[5] = {0, 0, 0, 0, 0};
        for (std::size_t i = 0; i < Z; ++i) {
            double acc = hv[i];
            for (std::size_t j = 1; j <= k; ++j) {
                p[j] += acc;
                acc *= hv[i];
            }
        }
        double ek = 0;
        if (k == 2)
            ek = (p[1] * p[1] - p[2]) / 2;
        else if (k == 3)
            ek = (p[1] * p[1] * p[1] - 3 * p[1] * p[2] + 2 * p[3]) / 6;
        else
            ek = (p[1] * p[1] * p[1] * p[1] - 6 * p[1] * p[1] * p[2] + 3 * p[2] * p[2] +
                  8 * p[1] * p[3] - 6 * p[4]) /
                 24;
        return G.constant_value() * fact * ek;
    }
    if (Z < k) return 0.0;
    double combos = 1;
    for (std::size_t j = 1; j <= k; ++j) combos = combos * double(Z - j + 1) / double(j);
    if (combos * fact > 2e6)
        throw error(errc::combinatorial_blowup, "tuple enumeration over budget");

    std::vector<std::size_t> c(k), P(k);
    std::vector<double> H(k - 1), mk(k), mp(k);
    for (std::size_t i = 0; i < k; ++i) c[i] = i;
    double total = 0;
    while (true) {
        for (std::size_t i = 0; i + 1 < k; ++i)
            H[i] = sys.time - divergence_time(sys, ids[c[i]], ids[c[i + 1]]);
        ultrametric D = ultrametric::from_depths(H);
        double ph = 1;
        for (std::size_t i = 0; i < k; ++i) {
            ph *= hv[c[i]];
            mk[i] = xs[c[i]];
        }
        std::iota(P.begin(), P.end(), std::size_t(0));
        double gsum = 0;
        do {
            dense_matrix Dp = permute(D, P);
            for (std::size_t i = 0; i < k; ++i) mp[i] = mk[P[i]];
            // a reordered tuple matrix can lose planarity; product
            // functionals are zero there (no consecutive-block decomposition)
            if (G.kind() == functional::node::product && !is_planar(Dp)) continue;
            gsum += G.eval(Dp, mp);
        } while (std::next_permutation(P.begin(), P.end()));
        total += gsum * ph;

        std::size_t pos = k;
        while (pos > 0 && c[pos - 1] == Z - k + pos - 1) --pos;
        if (pos == 0) break;
        ++c[pos - 1];
        for (std::size_t i = pos; i < k; ++i) c[i] = c[i - 1] + 1;
    }
    return total;
}

mc_estimate bbm_model::many_to_few_lhs(double x0, int k, double t, const functional& G,
                                       int n, const rng& base) const {
    if (k < 1 || k > 4)
        throw error(errc::validation, "tuple order must be between 1 and 4");
    if (!(x0 > 0) || !(x0 < cfg_.L))
        throw error(errc::validation, "start position outside (0, L)");
    if (!(t > 0))
        throw error(errc::validation, "horizon must be positive");
    if (n < 2)
        throw error(errc::validation, "need at least two replicates");
    const std::uint64_t nsteps = step_count(t, cfg_.dt);
    double s1 = 0, s2 = 0;
    for (int rep = 0; rep < n; ++rep) {
        rng rr = base.child(std::uint64_t(rep));
        particle_system sys = particle_system::start(x0, rr);
        for (std::uint64_t j = 0; j < nsteps && !sys.particles.empty(); ++j)
            step(sys, cfg_, rr);
        double val = sys.particles.empty() ? 0.0 : tuple_sum(sys, std::size_t(k), G);
        s1 += val;
        s2 += val * val;
    }
    double mean = s1 / n;
    double var = std::max(0.0, (s2 - double(n) * mean * mean) / double(n - 1));
    return {mean, std::sqrt(var / double(n)), std::uint64_t(n)};
}

reversed_model::reversed_model(const potential& W, double L_proxy, double spectral_tol) {
    if (!std::isfinite(L_proxy) || !(L_proxy > 1))
        throw error(errc::validation, "proxy box must be finite and > 1");
    sol_ = solve_slp(W, L_proxy, spectral_tol);
    if (!(sol_.lambda1_inf > 0))
        throw error(errc::regime, "reversed process needs the pushed regime");
    beta_ = sol_.beta;
    mu_ = sol_.mu;
    alpha_ = sol_.alpha;
    c_inf_ = sol_.cL;
    v_norm2_ = sol_.v1_norm2;
}

double reversed_model::v1(double z) const { return 2.0 * std::exp(beta_) * std::sinh(beta_ * z); }

double reversed_model::h(double z) const {
    return v1(z) * std::exp(-mu_ * z) / (c_inf_ * v_norm2_);
}

double reversed_model::h_tilde(double z) const { return c_inf_ * v1(z) * std::exp(mu_ * z); }

double reversed_model::pi(double z) const {
    double v = v1(z);
    return v * v / v_norm2_;
}

double reversed_model::green(double z, double y) const {
    if (!(z > 0) || !(y > 0))
        throw error(errc::boundary_singularity, "occupation kernel needs z, y > 0");
    double a = std::max(z, y);
    // (coth(beta a) - 1)/(4 e^{2 beta} beta), via coth(x)-1 = 2/(e^{2x}-1) so
    // the far tail underflows to zero instead of cancelling
    double tail = 0.5 / (beta_ * std::exp(2.0 * beta_) * std::expm1(2.0 * beta_ * a));
    double vy = v1(y);
    return vy * vy * tail;
}

reversed_run run_reversed(const reversed_model& m, double z0, const std::vector<double>& times,
                          double dt, const rng& base, double prune_threshold,
                          std::uint64_t particle_cap) {
    if (!(z0 > 0))
        throw error(errc::validation, "start must be positive");
    if (!(dt > 0) || dt > 1e-3 * (1 + 1e-12))
        throw error(errc::validation, "dt must lie in (0, 1e-3]");
    if (times.empty())
        throw error(errc::validation, "need at least one record time");
    for (std::size_t i = 0; i < times.size(); ++i)
        if (!(times[i] > 0) || (i > 0 && times[i] < times[i - 1]))
            throw error(errc::validation, "record times must be positive and ascending");

    const std::uint64_t nsteps = step_count(times.back(), dt);
    step_mode md{m.mu(), std::numeric_limits<double>::infinity(), 0.5, nullptr, dt,
                 particle_cap};
    particle_system sys = particle_system::start(z0, base);
    reversed_run out;
    double banked = 0, runmin = z0;
    std::size_t ti = 0;
    for (std::uint64_t k = 0;; ++k) {
        double now = double(k) * dt;
        while (ti < times.size() && now >= times[ti] - 0.5 * dt) {
            reversed_point rp{times[ti], banked, sys.particles.size(), runmin};
            for (const auto& p : sys.particles) rp.w += m.h(p.x);
            out.series.push_back(rp);
            ++ti;
        }
        if (k == nsteps || sys.particles.empty()) break;
        advance(sys, md, base);
        for (const auto& p : sys.particles) runmin = std::min(runmin, p.x);
        // pruning banks h of far-right particles into the tracked martingale:
        // E[W_t] is unchanged (optional stopping), work stays bounded
        if (prune_threshold > 0 && (k & 15u) == 15u) {
            std::size_t keep = 0;
            for (const auto& p : sys.particles) {
                double hv = m.h(p.x);
                if (hv < prune_threshold)
                    banked += hv;
                else
                    sys.particles[keep++] = p;
            }
            sys.particles.resize(keep);
        }
    }
    while (ti < times.size()) {
        out.series.push_back({times[ti], banked, sys.particles.size(), runmin});
        for (const auto& p : sys.particles) out.series.back().w += m.h(p.x);
        ++ti;
    }
    out.pruned_mass = banked;
    out.extinct = sys.particles.empty();
    out.peak = sys.peak;
    return out;
}

reversed_moment_table lambda_estimator(const reversed_model& m, const std::vector<double>& zs,
                                       double horizon, int n, const rng& base, double dt) {
    if (zs.empty())
        throw error(errc::validation, "need at least one start height");
    for (double z : zs)
        if (!(z > 0)) throw error(errc::validation, "start heights must be positive");
    if (!(horizon > 0))
        throw error(errc::validation, "horizon must be positive");
    if (n < 16)
        throw error(errc::validation, "need at least 16 replicates");

    reversed_moment_table out;
    out.horizon = horizon;
    out.replicates = n;
    for (std::size_t zi = 0; zi < zs.size(); ++zi) {
        const double z = zs[zi];
        const double thr = 1e-4 * m.h(z);
        double s[5] = {0, 0, 0, 0, 0}, s2[5] = {0, 0, 0, 0, 0};
        double sd = 0, sd2 = 0;
        rng zbase = base.child(zi);
        for (int rep = 0; rep < n; ++rep) {
            rng rr = zbase.child(std::uint64_t(rep));
            reversed_run rv = run_reversed(m, z, {0.5 * horizon, horizon}, dt, rr, thr);
            const double wh = rv.series[0].w, wt = rv.series[1].w;
            double acc = 1;
            for (int kk = 1; kk <= 4; ++kk) {
                acc *= wt;
                s[kk] += acc;
                s2[kk] += acc * acc;
            }
            double d = wt * wt - wh * wh;
            sd += d;
            sd2 += d * d;
        }
        // plateau gate on the second moment: paired drift between T/2 and T
        // must sit inside 1% plus its own MC noise
        double m2 = s[2] / n;
        double drift = std::abs(sd / n);
        double vd = std::max(0.0, (sd2 - sd * sd / n) / double(n - 1));
        if (drift > 0.01 * m2 + 3.0 * std::sqrt(vd / n))
            throw error(errc::horizon_too_short, "reversed martingale has not plateaued");
        reversed_moment_row row;
        row.z = z;
        double fact = 1;
        for (int kk = 1; kk <= 4; ++kk) {
            fact *= kk;
            double mean = s[kk] / n;
            double var = std::max(0.0, (s2[kk] - s[kk] * s[kk] / n) / double(n - 1));
            double se = std::sqrt(var / n);
            row.raw[kk - 1] = mean;
            row.raw_se[kk - 1] = se;
            row.scaled[kk - 1] = m.h_tilde(z) * mean;
            row.scaled_se[kk - 1] = m.h_tilde(z) * se;
            row.m_inf[kk - 1] = mean / (fact * m.h(z));
            row.m_inf_se[kk - 1] = se / (fact * m.h(z));
        }
        out.rows.push_back(row);
    }
    return out;
}

double mhat_limit(const reversed_model& m, const reversed_moment_table& table, int k,
                  double A) {
    if (k < 2 || k > 4)
        throw error(errc::validation, "jump moments need k between 2 and 4");
    if (!(A > 0))
        throw error(errc::validation, "window scale must be positive");
    if (table.rows.empty())
        throw error(errc::validation, "empty moment table");
    const reversed_moment_row* best = &table.rows[0];
    for (const auto& r : table.rows)
        if (r.z > best->z) best = &r;
    return std::pow(A, double(k) - m.alpha()) * (m.beta() / m.v_norm2()) * best->scaled[k - 1];
}

}  // namespace branchlab
