#include "branchlab/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "branchlab/errors.hpp"

namespace branchlab {

namespace {

// Piece of [0,L] on which W is affine; is_const marks the exactly solvable
// case used by the transfer-matrix fast path.
struct span_piece {
    double x0, x1;
    double w0, w1;
    bool is_const;
};

std::vector<span_piece> build_spans(const potential& W, double L) {
    std::vector<double> cuts{0.0};
    for (double b : W.breakpoints())
        if (b > 0 && b < L) cuts.push_back(b);
    cuts.push_back(L);
    std::sort(cuts.begin(), cuts.end());
    std::vector<span_piece> spans;
    for (size_t i = 0; i + 1 < cuts.size(); ++i) {
        double a = cuts[i], b = cuts[i + 1];
        if (b - a < 1e-15 * L) continue;
        span_piece p;
        p.x0 = a;
        p.x1 = b;
        double wc;
        if (W.constant_on(a, b, wc)) {
            p.w0 = p.w1 = wc;
            p.is_const = true;
        } else {
            // affine between tabulated breakpoints; sample just inside to
            // avoid the neighbor's value at the shared edge
            double eps = (b - a) * 1e-9;
            p.w0 = W(a + eps);
            p.w1 = W(b - eps);
            p.is_const = std::abs(p.w1 - p.w0) < 1e-14 * (1 + std::abs(p.w0));
        }
        spans.push_back(p);
    }
    return spans;
}

struct state2 {
    double v, dv;
};

// Exact propagation over width tau (may be negative) at constant
// kappa = 2 lambda - W.
inline void const_step(state2& s, double kappa, double tau) {
    if (std::abs(kappa) < 1e-300) {
        s.v += tau * s.dv;
        return;
    }
    if (kappa > 0) {
        double k = std::sqrt(kappa);
        double c = std::cosh(k * tau), sn = std::sinh(k * tau);
        double v = c * s.v + sn / k * s.dv;
        double dv = k * sn * s.v + c * s.dv;
        s.v = v;
        s.dv = dv;
    } else {
        double q = std::sqrt(-kappa);
        double c = std::cos(q * tau), sn = std::sin(q * tau);
        double v = c * s.v + sn / q * s.dv;
        double dv = -q * sn * s.v + c * s.dv;
        s.v = v;
        s.dv = dv;
    }
}

// RK4 over [x, x+tau] for v'' = (2 lambda - W(x)) v with W affine on the span.
inline void rk4_step(state2& s, double x, double tau, double lam, const span_piece& p) {
    auto wat = [&](double xx) {
        double t = (xx - p.x0) / (p.x1 - p.x0);
        return p.w0 + t * (p.w1 - p.w0);
    };
    int nsub = 4;
    double dt = tau / nsub;
    for (int i = 0; i < nsub; ++i) {
        double x0 = x + i * dt;
        auto f = [&](double xx, state2 y) {
            return state2{y.dv, (2 * lam - wat(xx)) * y.v};
        };
        state2 k1 = f(x0, s);
        state2 k2 = f(x0 + dt / 2, {s.v + dt / 2 * k1.v, s.dv + dt / 2 * k1.dv});
        state2 k3 = f(x0 + dt / 2, {s.v + dt / 2 * k2.v, s.dv + dt / 2 * k2.dv});
        state2 k4 = f(x0 + dt, {s.v + dt * k3.v, s.dv + dt * k3.dv});
        s.v += dt / 6 * (k1.v + 2 * k2.v + 2 * k3.v + k4.v);
        s.dv += dt / 6 * (k1.dv + 2 * k2.dv + 2 * k3.dv + k4.dv);
    }
}

class slp_integrator {
  public:
    slp_integrator(const potential& W, double L) : L_(L), spans_(build_spans(W, L)) {
        double want = std::max(4096.0, std::ceil(2048.0 * L));
        n_ = static_cast<size_t>(want);
        if (n_ % 2) ++n_;
        h_ = L / static_cast<double>(n_);
    }

    size_t cells() const { return n_; }
    double h() const { return h_; }

    // Sign-meaningful v(L) for shooting; magnitude is rescaled to avoid
    // overflow, so only the sign may be consumed.
    double shoot(double lam) const {
        state2 s{0.0, 1.0};
        for (const auto& p : spans_) walk_span(p, lam, s, nullptr, nullptr);
        return s.v;
    }

    // Full node trace at a converged eigenvalue.  No rescale is legal here:
    // the principal eigenfunction stays O(L)-bounded for the admissible
    // potentials, so hitting the guard means the resolution is wrong.
    void trace(double lam, std::vector<double>& v, std::vector<double>& dv) const {
        v.assign(n_ + 1, 0.0);
        dv.assign(n_ + 1, 0.0);
        state2 s{0.0, 1.0};
        v[0] = 0.0;
        dv[0] = 1.0;
        bool rescaled = false;
        for (const auto& p : spans_) walk_span(p, lam, s, &v, &dv, &rescaled);
        if (rescaled)
            throw error(errc::resolution, "eigenfunction magnitude overflow while tracing");
    }

  private:
    double L_;
    std::vector<span_piece> spans_;
    size_t n_ = 0;
    double h_ = 0;

    // Advance through one span, stopping at every grid node inside it.  The
    // store buffers are optional (shoot mode passes null).
    void walk_span(const span_piece& p, double lam, state2& s, std::vector<double>* v,
                   std::vector<double>* dv, bool* rescaled = nullptr) const {
        size_t j0 = static_cast<size_t>(std::ceil(p.x0 / h_ - 1e-9));
        size_t j1 = static_cast<size_t>(std::floor(p.x1 / h_ + 1e-9));
        if (j1 > n_) j1 = n_;
        double kappa = 2 * lam - p.w0;
        // cache the per-cell transfer for constant spans
        double cc = 0, sn = 0, k = 0;
        bool cached = false;
        if (p.is_const && std::abs(kappa) >= 1e-300) {
            k = std::sqrt(std::abs(kappa));
            if (kappa > 0) {
                cc = std::cosh(k * h_);
                sn = std::sinh(k * h_);
            } else {
                cc = std::cos(k * h_);
                sn = std::sin(k * h_);
            }
            cached = true;
        }
        double x = p.x0;
        for (size_t j = j0; j <= j1; ++j) {
            double xn = static_cast<double>(j) * h_;
            if (xn > p.x1 + 1e-9 * h_) break;
            double tau = xn - x;
            if (tau > 1e-15 * L_) advance(p, lam, x, tau, s, cached, kappa, cc, sn, k);
            x = xn;
            if (v) {
                (*v)[j] = s.v;
                (*dv)[j] = s.dv;
            }
            maybe_rescale(s, rescaled);
        }
        if (p.x1 - x > 1e-15 * L_) {
            advance(p, lam, x, p.x1 - x, s, false, kappa, 0, 0, 0);
            maybe_rescale(s, rescaled);
        }
    }

    void advance(const span_piece& p, double lam, double x, double tau, state2& s, bool cached,
                 double kappa, double cc, double sn, double k) const {
        if (p.is_const) {
            if (cached && std::abs(tau - h_) < 1e-12 * h_) {
                double v, dv;
                if (kappa > 0) {
                    v = cc * s.v + sn / k * s.dv;
                    dv = k * sn * s.v + cc * s.dv;
                } else {
                    v = cc * s.v + sn / k * s.dv;
                    dv = -k * sn * s.v + cc * s.dv;
                }
                s.v = v;
                s.dv = dv;
            } else {
                const_step(s, kappa, tau);
            }
        } else {
            rk4_step(s, x, tau, lam, p);
        }
    }

    static void maybe_rescale(state2& s, bool* rescaled) {
        if (std::abs(s.v) + std::abs(s.dv) > 1e150) {
            s.v *= 1e-150;
            s.dv *= 1e-150;
            if (rescaled) *rescaled = true;
        }
    }
};

int count_interior_nodes(const std::vector<double>& v) {
    int nodes = 0;
    for (size_t j = 1; j + 2 < v.size(); ++j)
        if (v[j] * v[j + 1] < 0) ++nodes;
    return nodes;
}

// Principal eigenvalue by top-down scan plus bisection.  The scan window and
// initial stride are fixed; if the converged root carries interior nodes the
// scan missed a higher eigenvalue, so rescan the sliver above it at a finer
// stride.
double eigen_lambda1(const slp_integrator& integ, const potential& W, double tol) {
    double lo_bound = -1.0;
    double hi_bound = 1.0 + W.max();
    double stride = 1e-2;
    double search_top = hi_bound;
    for (int attempt = 0; attempt < 5; ++attempt) {
        double prev_lam = search_top;
        double prev_sign = integ.shoot(prev_lam);
        double bracket_lo = 0, bracket_hi = 0;
        bool found = false;
        for (double lam = search_top - stride; lam >= lo_bound - stride / 2; lam -= stride) {
            if (lam < lo_bound) lam = lo_bound;
            double sgn = integ.shoot(lam);
            if (sgn == 0.0) {
                bracket_lo = lam;
                bracket_hi = lam;
                found = true;
                break;
            }
            if ((sgn > 0) != (prev_sign > 0)) {
                bracket_lo = lam;
                bracket_hi = prev_lam;
                found = true;
                break;
            }
            prev_lam = lam;
            prev_sign = sgn;
            if (lam == lo_bound) break;
        }
        if (!found)
            throw error(errc::solver_bracket,
                        "no sign change for v(L) in the eigenvalue scan window");
        double a = bracket_lo, b = bracket_hi;
        double fa = integ.shoot(a);
        double width_tol = std::max(tol, 1e-15 * std::max(1.0, std::abs(a)));
        for (int it = 0; it < 200 && (b - a) > width_tol; ++it) {
            double m = 0.5 * (a + b);
            double fm = integ.shoot(m);
            if (fm == 0.0) {
                a = b = m;
                break;
            }
            if ((fm > 0) == (fa > 0)) {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        // Report the upper bracket endpoint: just above the root the shooting
        // solution has no interior zeros, while the midpoint can sit a hair
        // below it, where the admixed growing mode drags the far tail through
        // zero and fakes a node.
        double lam_star = b;
        std::vector<double> v, dv;
        integ.trace(lam_star, v, dv);
        if (count_interior_nodes(v) == 0) return lam_star;
        // root has nodes: the principal lies above; tighten the scan there
        search_top = hi_bound;
        lo_bound = lam_star + stride * 1e-3;
        stride /= 10;
    }
    throw error(errc::solver_bracket, "eigenvalue scan kept landing on an excited state");
}

sampled_function trace_normalized(const slp_integrator& integ, double lam, double L) {
    std::vector<double> v, dv;
    integ.trace(lam, v, dv);
    sampled_function raw(0.0, L, v, dv);
    double scale = raw(1.0);
    if (!(scale > 0))
        throw error(errc::solver_bracket, "traced eigenfunction is not positive at x=1");
    for (auto& x : v) x /= scale;
    for (auto& x : dv) x /= scale;
    return sampled_function(0.0, L, std::move(v), std::move(dv));
}

double simpson_of(const sampled_function& f, const std::function<double(double, double)>& map) {
    std::vector<double> y(f.nodes());
    for (size_t i = 0; i < y.size(); ++i) y[i] = map(f.node_x(i), f.node_value(i));
    return simpson(y, f.step());
}

// Scaled half-line solution primitive: the decaying normalized solution is a
// ratio of these, so only the unscaled branch value is needed, but keep both
// value and slope helpers together.
double osc_val(double kappa, double u) {
    if (kappa > 0) return std::sinh(std::sqrt(kappa) * u);
    if (kappa < 0) return std::sin(std::sqrt(-kappa) * u);
    return 0.0;
}

double osc_slope(double kappa, double u) {  // d/du of osc_val
    if (kappa > 0) return std::sqrt(kappa) * std::cosh(std::sqrt(kappa) * u);
    if (kappa < 0) return std::sqrt(-kappa) * std::cos(std::sqrt(-kappa) * u);
    return 0.0;
}

}  // namespace

const char* classify_regime(double lambda1_inf) {
    if (lambda1_inf <= 0) return "pulled";
    if (lambda1_inf < 1.0 / 16.0) return "semi-pushed";
    return "fully-pushed";
}

spectral_solution solve_slp(const potential& W, double L, double tol) {
    if (!(L > 1)) throw error(errc::validation, "domain length must exceed 1");
    if (!(tol > 0) || !std::isfinite(tol))
        throw error(errc::validation, "eigenvalue tolerance must be positive");
    slp_integrator integ(W, L);
    double lam1 = eigen_lambda1(integ, W, tol);

    slp_integrator integ2(W, 2 * L);
    double lam_inf = eigen_lambda1(integ2, W, tol);

    spectral_solution sol;
    sol.W = W;
    sol.L = L;
    sol.lambda1 = lam1;
    sol.lambda1_inf = lam_inf;
    sol.w = std::max(0.0, lam_inf - lam1);
    double disc = 1 + 2 * lam_inf;
    if (disc < 0)
        throw error(errc::regime, "speed parameter undefined: 1 + 2 lambda1_inf is negative");
    sol.mu = std::sqrt(disc);
    sol.beta = lam_inf > 0 ? std::sqrt(2 * lam_inf) : 0.0;
    sol.alpha = sol.beta > 0 ? (sol.mu + sol.beta) / (sol.mu - sol.beta) : 1.0;
    sol.regime = classify_regime(lam_inf);
    sol.v1 = trace_normalized(integ, lam1, L);

    double mass = simpson_of(sol.v1, [&](double x, double v) { return std::exp(-sol.mu * x) * v; });
    if (!(mass > 0) || !std::isfinite(mass))
        throw error(errc::quadrature, "weighted eigenfunction mass is not positive");
    sol.cL = 1.0 / mass;
    double n2 = simpson_of(sol.v1, [](double, double v) { return v * v; });
    sol.v1_norm2 = std::sqrt(n2);
    return sol;
}

double verify_v1_tail(const spectral_solution& sol) {
    if (!(sol.lambda1 > 0))
        throw error(errc::regime, "tail comparison needs a positive principal eigenvalue");
    double k = std::sqrt(2 * sol.lambda1);
    double den = std::sinh(k * (sol.L - 1));
    double sup = 0;
    for (size_t i = 0; i < sol.v1.nodes(); ++i) {
        double x = sol.v1.node_x(i);
        if (x < 1.0) continue;
        double ref = std::sinh(k * (sol.L - x)) / den;
        sup = std::max(sup, std::abs(sol.v1.node_value(i) - ref));
    }
    return sup;
}

harmonic_functions harmonic_pair(const spectral_solution& sol, double mu) {
    if (!std::isfinite(mu)) throw error(errc::validation, "drift must be finite");
    size_t n = sol.v1.nodes();
    const auto& v = sol.v1.values();
    const auto& dv = sol.v1.derivs();
    double h = sol.v1.step();
    double a = sol.v1.a(), b = sol.v1.b();

    std::vector<double> wt(n);
    for (size_t i = 0; i < n; ++i) wt[i] = std::exp(-mu * sol.v1.node_x(i)) * v[i];
    double mass = simpson(wt, h);
    if (!(mass > 0) || !std::isfinite(mass))
        throw error(errc::quadrature, "weighted eigenfunction mass is not positive");
    double c = 1.0 / mass;

    std::vector<double> n2(n);
    for (size_t i = 0; i < n; ++i) n2[i] = v[i] * v[i];
    double norm2sq = simpson(n2, h);

    std::vector<double> ht(n), dht(n), hh(n), dhh(n), pi(n), dpi(n);
    for (size_t i = 0; i < n; ++i) {
        double x = sol.v1.node_x(i);
        double em = std::exp(-mu * x), ep = std::exp(mu * x);
        ht[i] = c * em * v[i];
        dht[i] = c * em * (dv[i] - mu * v[i]);
        hh[i] = ep * v[i] / (c * norm2sq);
        dhh[i] = ep * (dv[i] + mu * v[i]) / (c * norm2sq);
        pi[i] = v[i] * v[i] / norm2sq;
        dpi[i] = 2 * v[i] * dv[i] / norm2sq;
    }
    harmonic_functions out;
    out.cL = c;
    out.norm2sq = norm2sq;
    out.h_tilde = sampled_function(a, b, std::move(ht), std::move(dht));
    out.h = sampled_function(a, b, std::move(hh), std::move(dhh));
    out.pi = sampled_function(a, b, std::move(pi), std::move(dpi));
    return out;
}

gap_scaling_result gap_scaling(const potential& W, const std::vector<double>& lengths,
                               double tol) {
    if (lengths.size() < 4)
        throw error(errc::validation, "gap scaling needs at least four lengths");
    for (size_t i = 0; i + 1 < lengths.size(); ++i)
        if (!(lengths[i] < lengths[i + 1]))
            throw error(errc::validation, "lengths must be strictly increasing");
    if (!(lengths.front() > 1)) throw error(errc::validation, "lengths must exceed 1");

    gap_scaling_result res;
    res.lengths = lengths;
    slp_integrator big(W, 2 * lengths.back());
    res.lambda1_inf = eigen_lambda1(big, W, tol);
    if (!(res.lambda1_inf > 0))
        throw error(errc::regime, "gap scaling requires a pushed potential");
    res.beta = std::sqrt(2 * res.lambda1_inf);

    for (double L : lengths) {
        slp_integrator integ(W, L);
        double lam1 = eigen_lambda1(integ, W, tol);
        double w = res.lambda1_inf - lam1;
        if (!(w > 0))
            throw error(errc::regime, "nonpositive spectral gap in scaling study");
        res.w.push_back(w);
    }
    // least squares slope of log w against L
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    double n = static_cast<double>(lengths.size());
    for (size_t i = 0; i < lengths.size(); ++i) {
        double x = lengths[i], y = std::log(res.w[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    res.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return res;
}

fundamental_pair fundamental_solutions(const spectral_solution& sol, double xi) {
    if (!(xi > 0)) throw error(errc::domain, "resolvent rate must be positive");
    if (xi > 1.0 / (10.0 * sol.L))
        throw error(errc::green_argument_too_large,
                    "resolvent rate exceeds the 1/(10 L) trust window");
    double lam = sol.lambda1 + xi;
    double L = sol.L;
    slp_integrator integ(sol.W, L);

    // g: forward shot with v1's left slope
    std::vector<double> gv, gdv;
    integ.trace(lam, gv, gdv);
    double s0 = sol.v1.derivs().front();
    for (auto& x : gv) x *= s0;
    for (auto& x : gdv) x *= s0;
    sampled_function g(0.0, L, std::move(gv), std::move(gdv));

    // d: closed form on [1,L], ODE extension below 1.  The normalizer is the
    // same expression at lambda1, which matches v1's tail normalization.
    double den = osc_val(2 * sol.lambda1, L - 1);
    if (std::abs(den) < 1e-300)
        throw error(errc::degenerate_wronskian, "tail normalizer vanished at lambda1");
    if (std::abs(2 * lam) < 1e-14)
        throw error(errc::degenerate_wronskian,
                    "decaying solution degenerates at zero energy");
    size_t n = g.nodes();
    std::vector<double> dv(n, 0.0), ddv(n, 0.0);
    size_t j_one = 0;
    for (size_t i = 0; i < n; ++i) {
        double x = g.node_x(i);
        if (x >= 1.0 - 1e-12) {
            if (j_one == 0) j_one = i;
            dv[i] = osc_val(2 * lam, L - x) / den;
            ddv[i] = -osc_slope(2 * lam, L - x) / den;
        }
    }
    // integrate backward from the first node at or above 1
    {
        state2 s{dv[j_one], ddv[j_one]};
        auto spans = build_spans(sol.W, L);
        for (size_t i = j_one; i-- > 0;) {
            double xhi = g.node_x(i + 1), xlo = g.node_x(i);
            // step backward across [xlo, xhi], splitting at span boundaries
            double x = xhi;
            while (x > xlo + 1e-15 * L) {
                const span_piece* pc = nullptr;
                for (const auto& p : spans)
                    if (x > p.x0 + 1e-15 * L && x <= p.x1 + 1e-12) {
                        pc = &p;
                        break;
                    }
                double target = std::max(xlo, pc ? pc->x0 : xlo);
                double tau = target - x;  // negative
                if (pc && pc->is_const) {
                    const_step(s, 2 * lam - pc->w0, tau);
                } else if (pc) {
                    rk4_step(s, x, tau, lam, *pc);
                } else {
                    const_step(s, 2 * lam, tau);
                }
                x = target;
            }
            dv[i] = s.v;
            ddv[i] = s.dv;
        }
    }
    sampled_function d(0.0, L, std::move(dv), std::move(ddv));

    double g1 = g(1.0), gp1 = g.deriv(1.0);
    double d1 = d(1.0), dp1 = d.deriv(1.0);
    double omega = 0.5 * (d1 * gp1 - dp1 * g1);
    double scale = std::max(1.0, std::abs(d1 * gp1) + std::abs(dp1 * g1));
    if (std::abs(omega) < 1e-12 * scale)
        throw error(errc::degenerate_wronskian, "fundamental pair is numerically dependent");

    fundamental_pair fp;
    fp.g = std::move(g);
    fp.d = std::move(d);
    fp.omega = omega;
    fp.lambda = lam;
    return fp;
}

green_kernel::green_kernel(const spectral_solution& sol, double xi)
    : sol_(&sol), fp_(fundamental_solutions(sol, xi)) {}

double green_kernel::operator()(double x, double y) const {
    double L = sol_->L;
    if (x <= 0 || x >= L)
        throw error(errc::singular_argument, "source point must be interior");
    if (y < 0 || y > L) throw error(errc::domain, "field point outside the domain");
    if (y <= 0 || y >= L) return 0.0;
    double lo = std::min(x, y), hi = std::max(x, y);
    double v1x = sol_->v1(x), v1y = sol_->v1(y);
    return (v1y / v1x) * fp_.d(hi) * fp_.g(lo) / fp_.omega;
}

double green_function(const spectral_solution& sol, double xi, double x, double y) {
    return green_kernel(sol, xi)(x, y);
}

cutoff_geometry make_cutoff_geometry(const spectral_solution& sol, double N, double A,
                                     double delta1) {
    if (!(N > 1)) throw error(errc::validation, "population size must exceed 1");
    if (!(A >= 1)) throw error(errc::validation, "cutoff amplitude must be at least 1");
    if (!(delta1 > 0 && delta1 < 1))
        throw error(errc::validation, "delta1 must lie in (0,1)");
    if (sol.regime != "semi-pushed")
        throw error(errc::regime, "cutoff geometry is defined in the semi-pushed regime only");
    cutoff_geometry geo;
    geo.N = N;
    geo.A = A;
    geo.delta1 = delta1;
    geo.gamma = 1.0 / (sol.alpha - 1.0);
    geo.L_NA = std::log(N) / (2 * sol.beta) + std::log(A) / (sol.mu - sol.beta);
    geo.delta2 = (1 - delta1) * (sol.mu - sol.beta) / (2 * sol.beta) - 1;
    if (!(geo.delta2 > 0))
        throw error(errc::validation,
                    "delta2 is not positive; decrease delta1 for this regime");
    geo.epsilon = (1 - delta1) / sol.beta * geo.L_NA;
    double alt = 2 * (1 + geo.delta2) / (sol.mu - sol.beta) * geo.L_NA;
    if (std::abs(alt - geo.epsilon) > 1e-9 * std::max(1.0, geo.epsilon))
        throw error(errc::validation, "inconsistent bulk window endpoints");
    return geo;
}

}  // namespace branchlab
