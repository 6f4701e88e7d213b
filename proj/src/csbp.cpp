#include "branchlab/csbp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <numbers>
#include <unordered_map>

#include "branchlab/errors.hpp"
#include "branchlab/grid.hpp"

namespace branchlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// e^{-y} - 1 + y, stable near zero
std::complex<double> comp1(std::complex<double> y) {
    if (std::abs(y) <= 0.5) {
        std::complex<double> term = y * y * 0.5, acc = term;
        for (int n = 3; n <= 22; ++n) {
            term *= -y / double(n);
            acc += term;
        }
        return acc;
    }
    return std::exp(-y) - 1.0 + y;
}

}  // namespace

momented_measure::momented_measure() = default;

momented_measure momented_measure::lebesgue01() { return momented_measure(); }

momented_measure momented_measure::atoms(std::vector<std::pair<double, double>> xw) {
    if (xw.empty()) throw error(errc::validation, "atom list must be nonempty");
    for (auto [x, w] : xw)
        if (!(x > 0) || !std::isfinite(x) || !(w >= 0) || !std::isfinite(w))
            throw error(errc::validation, "atoms need positive positions and nonnegative weights");
    momented_measure m;
    m.lebesgue_ = false;
    m.atoms_ = std::move(xw);
    return m;
}

double momented_measure::moment(int p) const {
    if (p < 0) throw error(errc::domain, "moment order must be nonnegative");
    if (lebesgue_) return 1.0 / (p + 1);
    double acc = 0;
    for (auto [x, w] : atoms_) acc += w * std::pow(x, p);
    return acc;
}

double momented_measure::total() const { return lebesgue_ ? 1.0 : moment(0); }

std::complex<double> momented_measure::compensated(std::complex<double> z) const {
    if (lebesgue_) {
        // int_0^1 (e^{-zx} - 1 + zx) dx = (1 - e^{-z})/z - 1 + z/2
        if (std::abs(z) <= 0.5) {
            // sum_{n>=2} (-1)^n z^n / (n+1)!
            std::complex<double> term = z * z / 6.0, acc = term;
            for (int n = 3; n <= 22; ++n) {
                term *= -z / double(n + 1);
                acc += term;
            }
            return acc;
        }
        return (1.0 - std::exp(-z)) / z - 1.0 + z * 0.5;
    }
    std::complex<double> acc = 0;
    for (auto [x, w] : atoms_) acc += w * comp1(z * x);
    return acc;
}

double momented_measure::derivative_part(double theta) const {
    if (lebesgue_) {
        // int_0^1 x (1 - e^{-theta x}) dx
        if (std::abs(theta) <= 0.5) {
            // sum_{n>=1} (-1)^{n+1} theta^n / (n! (n+2))
            double term = theta / 3.0, acc = term;
            for (int n = 1; n <= 20; ++n) {
                term *= -theta * (n + 2) / double((n + 1) * (n + 3));
                acc += term;
            }
            return acc;
        }
        return 0.5 - (1.0 - (1.0 + theta) * std::exp(-theta)) / (theta * theta);
    }
    double acc = 0;
    for (auto [x, w] : atoms_) acc += w * x * (-std::expm1(-theta * x));
    return acc;
}

mechanism mechanism::feller(double d, double b) {
    if (!(d >= 0) || !std::isfinite(d) || !std::isfinite(b))
        throw error(errc::validation, "diffusion part needs finite b and d >= 0");
    mechanism m;
    m.b = b;
    m.d = d;
    return m;
}

mechanism mechanism::linear(double b) { return feller(0.0, b); }

mechanism mechanism::stable(double C, double alpha, double b, double d) {
    if (!(C > 0) || !std::isfinite(C)) throw error(errc::validation, "stable weight must be positive");
    if (!(alpha > 1) || !(alpha < 2)) throw error(errc::validation, "stable index must lie in (1,2)");
    mechanism m = feller(d, b);
    m.jump = jump_kind::alpha_stable;
    m.C = C;
    m.alpha = alpha;
    return m;
}

mechanism mechanism::cutoff(double A, double alpha, momented_measure base, double b, double d) {
    if (!(A >= 1) || !std::isfinite(A)) throw error(errc::validation, "cutoff scale must be >= 1");
    if (!(alpha > 1) || !(alpha < 2)) throw error(errc::validation, "cutoff index must lie in (1,2)");
    mechanism m = feller(d, b);
    m.jump = jump_kind::cutoff_stable;
    m.A = A;
    m.alpha = alpha;
    m.base = std::move(base);
    return m;
}

mechanism mechanism::with_atoms(std::vector<std::pair<double, double>> xw, double b, double d) {
    mechanism m = feller(d, b);
    m.jump = jump_kind::tabulated;
    m.base = momented_measure::atoms(std::move(xw));
    return m;
}

double mechanism::jump_moment(int p) const {
    switch (jump) {
        case jump_kind::none: return 0.0;
        case jump_kind::alpha_stable: return kInf;
        case jump_kind::cutoff_stable: return std::pow(A, p - alpha) * base.moment(p);
        case jump_kind::tabulated: return base.moment(p);
    }
    return 0.0;
}

std::string mechanism::describe() const {
    char buf[128];
    switch (jump) {
        case jump_kind::none:
            std::snprintf(buf, sizeof buf, "b=%g d=%g", b, d);
            break;
        case jump_kind::alpha_stable:
            std::snprintf(buf, sizeof buf, "b=%g d=%g stable(C=%g,alpha=%g)", b, d, C, alpha);
            break;
        case jump_kind::cutoff_stable:
            std::snprintf(buf, sizeof buf, "b=%g d=%g cutoff(A=%g,alpha=%g)", b, d, A, alpha);
            break;
        case jump_kind::tabulated:
            std::snprintf(buf, sizeof buf, "b=%g d=%g atoms(%zu)", b, d, base.atom_list().size());
            break;
    }
    return buf;
}

double psi_eval(const mechanism& m, double theta) {
    if (!(theta >= 0) || !std::isfinite(theta))
        throw error(errc::domain, "psi is evaluated on theta >= 0");
    double acc = m.b * theta + 0.5 * m.d * theta * theta;
    switch (m.jump) {
        case mechanism::jump_kind::none: break;
        case mechanism::jump_kind::alpha_stable:
            acc += m.C * std::pow(theta, m.alpha);
            break;
        case mechanism::jump_kind::cutoff_stable:
            acc += std::pow(m.A, -m.alpha) * m.base.compensated(theta * m.A).real();
            break;
        case mechanism::jump_kind::tabulated:
            acc += m.base.compensated(theta).real();
            break;
    }
    return acc;
}

double psi_prime(const mechanism& m, double theta) {
    if (!(theta >= 0) || !std::isfinite(theta))
        throw error(errc::domain, "psi' is evaluated on theta >= 0");
    double acc = m.b + m.d * theta;
    switch (m.jump) {
        case mechanism::jump_kind::none: break;
        case mechanism::jump_kind::alpha_stable:
            acc += m.C * m.alpha * std::pow(theta, m.alpha - 1);
            break;
        case mechanism::jump_kind::cutoff_stable:
            acc += std::pow(m.A, 1 - m.alpha) * m.base.derivative_part(theta * m.A);
            break;
        case mechanism::jump_kind::tabulated:
            acc += m.base.derivative_part(theta);
            break;
    }
    return acc;
}

std::complex<double> psi_complex(const mechanism& m, std::complex<double> z) {
    std::complex<double> acc = m.b * z + 0.5 * m.d * z * z;
    switch (m.jump) {
        case mechanism::jump_kind::none: break;
        case mechanism::jump_kind::alpha_stable:
            throw error(errc::domain, "the stable jump part is not entire");
        case mechanism::jump_kind::cutoff_stable:
            acc += std::pow(m.A, -m.alpha) * m.base.compensated(z * m.A);
            break;
        case mechanism::jump_kind::tabulated:
            acc += m.base.compensated(z);
            break;
    }
    return acc;
}

namespace {

// time the flow needs to cross [a, b], 0 < a < b, with psi of one sign inside;
// integrates dz/psi in log coordinates
double seg_time(const mechanism& m, double a, double b, double tol, bool negative) {
    if (b <= a * (1 + 1e-15)) return 0.0;
    auto f = [&](double y) {
        double z = std::exp(y);
        double p = psi_eval(m, z);
        return negative ? z / -p : z / p;
    };
    return adaptive_quad(f, std::log(a), std::log(b), tol, 44);
}

// decreasing branch: psi(theta) > 0, solve int_u^theta dz/psi = t for u
double flow_down(const mechanism& m, double theta, double t) {
    double tol = 1e-12 * t;
    double ub = theta, t_ub = 0;  // running upper edge with T(ub) accumulated
    double lb = -1, t_lb = 0;
    for (int i = 0; i < 4000; ++i) {
        double cand = ub * 0.5;
        int guard = 0;
        while (psi_eval(m, cand) <= 0 && guard++ < 300) cand = std::sqrt(cand * ub);
        if (guard >= 300) return ub;  // wedged against a root of psi
        double inc = seg_time(m, cand, ub, tol, false);
        if (t_ub + inc >= t) {
            lb = cand;
            t_lb = t_ub + inc;
            break;
        }
        ub = cand;
        t_ub += inc;
        if (ub < 1e-280) return 0.0;
    }
    if (lb < 0) return ub;
    for (int i = 0; i < 200 && lb < ub * (1 - 1e-14); ++i) {
        double mid = std::sqrt(lb * ub);
        double tm = t_ub + seg_time(m, mid, ub, tol, false);
        if (std::abs(tm - t) <= 2 * tol) return mid;
        if (tm >= t) {
            lb = mid;
            t_lb = tm;
        } else {
            ub = mid;
            t_ub = tm;
        }
    }
    (void)t_lb;
    return std::sqrt(lb * ub);
}

// increasing branch: psi(theta) < 0, solve int_theta^u dz/(-psi) = t for u
double flow_up(const mechanism& m, double theta, double t) {
    double tol = 1e-12 * t;
    double lb = theta, t_lb = 0;
    double ub = -1, t_ub = 0;
    for (int i = 0; i < 4000; ++i) {
        double cand = lb * 2.0;
        int guard = 0;
        while (psi_eval(m, cand) >= 0 && guard++ < 300) cand = std::sqrt(cand * lb);
        if (guard >= 300) return lb;  // wedged against the root from below
        double inc = seg_time(m, lb, cand, tol, true);
        if (t_lb + inc >= t) {
            ub = cand;
            t_ub = t_lb + inc;
            break;
        }
        lb = cand;
        t_lb += inc;
        if (lb > 1e290) return lb;
    }
    if (ub < 0) return lb;
    for (int i = 0; i < 200 && lb < ub * (1 - 1e-14); ++i) {
        double mid = std::sqrt(lb * ub);
        double tm = t_lb + seg_time(m, lb, mid, tol, true);
        if (std::abs(tm - t) <= 2 * tol) return mid;
        if (tm >= t) {
            ub = mid;
            t_ub = tm;
        } else {
            lb = mid;
            t_lb = tm;
        }
    }
    (void)t_ub;
    return std::sqrt(lb * ub);
}

bool check_grey(const mechanism& m) {
    double theta0 = 0;
    for (double th = 1.0; th <= 1e6; th *= 10)
        if (psi_eval(m, th) > 0 && psi_prime(m, th) > 0) {
            theta0 = th;
            break;
        }
    if (theta0 == 0) return false;
    // psi is convex with psi(0) = 0, so it stays positive past theta0; Grey
    // needs the decade integrals of 1/psi to decay geometrically
    double prev = -1, ratio = 1;
    for (int k = 0; k < 9; ++k) {
        double a = theta0 * std::pow(10.0, k), b = 10 * a;
        double rough = std::abs(seg_time(m, a, b, 0.1 * (b - a) / psi_eval(m, std::sqrt(a * b)), false));
        double ik = seg_time(m, a, b, 1e-8 * std::max(rough, 1e-280), false);
        if (!std::isfinite(ik) || !(ik > 0)) return false;
        if (prev > 0) ratio = ik / prev;
        prev = ik;
    }
    return ratio < 0.99;
}

}  // namespace

laplace_flow::laplace_flow(mechanism m) : m_(std::move(m)) {
    if (!(m_.d >= 0) || !std::isfinite(m_.d) || !std::isfinite(m_.b))
        throw error(errc::validation, "mechanism needs finite b and d >= 0");
    switch (m_.jump) {
        case mechanism::jump_kind::none: break;
        case mechanism::jump_kind::alpha_stable:
            if (!(m_.C > 0) || !(m_.alpha > 1) || !(m_.alpha < 2))
                throw error(errc::validation, "stable jump needs C > 0 and alpha in (1,2)");
            break;
        case mechanism::jump_kind::cutoff_stable:
            if (!(m_.A >= 1) || !(m_.alpha > 1) || !(m_.alpha < 2))
                throw error(errc::validation, "cutoff jump needs A >= 1 and alpha in (1,2)");
            break;
        case mechanism::jump_kind::tabulated: break;
    }
    grey_ = check_grey(m_);
}

double laplace_flow::u(double theta, double t) const {
    if (!(theta >= 0) || !std::isfinite(theta))
        throw error(errc::domain, "the flow starts from theta >= 0");
    if (!(t >= 0) || !std::isfinite(t)) throw error(errc::domain, "the flow runs forward in time");
    if (t == 0 || theta == 0) return theta;
    if (m_.jump == mechanism::jump_kind::none) {
        if (m_.d == 0) return theta * std::exp(-m_.b * t);
        if (m_.b == 0) return theta / (1.0 + 0.5 * m_.d * theta * t);
        double bt = m_.b * t;
        if (m_.b < 0 && bt < -600) return -2.0 * m_.b / m_.d;  // settled on the root
        return m_.b * theta * std::exp(-bt) / (m_.b - 0.5 * m_.d * theta * std::expm1(-bt));
    }
    if (m_.jump == mechanism::jump_kind::alpha_stable && m_.b == 0 && m_.d == 0) {
        double am1 = m_.alpha - 1;
        return std::pow(std::pow(theta, -am1) + am1 * m_.C * t, -1.0 / am1);
    }
    double p = psi_eval(m_, theta);
    if (p == 0) return theta;
    return p > 0 ? flow_down(m_, theta, t) : flow_up(m_, theta, t);
}

double laplace_flow::ubar(double t) const {
    if (!grey_)
        throw error(errc::no_extinction, "ubar is finite only under Grey's condition");
    if (!(t > 0) || !std::isfinite(t)) throw error(errc::domain, "ubar needs t > 0");
    if (m_.jump == mechanism::jump_kind::none) {
        if (m_.b == 0) return 2.0 / (m_.d * t);
        return m_.b * std::exp(-m_.b * t) / (-0.5 * m_.d * std::expm1(-m_.b * t));
    }
    if (m_.jump == mechanism::jump_kind::alpha_stable && m_.b == 0 && m_.d == 0) {
        double am1 = m_.alpha - 1;
        return std::pow(am1 * m_.C * t, -1.0 / am1);
    }
    // theta ladder: push the start up a decade until u_t stabilizes
    double th = 1e2, prev = u(th, t);
    for (int i = 0; i < 40; ++i) {
        double cur = u(th * 10, t);
        if (std::abs(prev - cur) <= 1e-9 * std::abs(cur)) return cur;
        prev = cur;
        th *= 10;
    }
    throw error(errc::resolution, "ubar ladder did not stabilize");
}

double laplace_exponent(const laplace_flow& flow, double theta, double t) {
    return flow.u(theta, t);
}

double grey_ubar(const laplace_flow& flow, double t) { return flow.ubar(t); }

// ---------------------------------------------------------------------------
// reduced process rates

namespace {

constexpr int kHazardCells = 1024;
constexpr int kMaxOffspring = 64;

double rate_from_ubar(const mechanism& m, double u) {
    return psi_prime(m, u) - psi_eval(m, u) / u;
}

// offspring weights r_j, j = 2..kMaxOffspring, of the generating series
//   r(theta) = theta psi'(ubar) - (psi(ubar) - psi((1-theta) ubar)) / ubar
// extracted by Cauchy integrals on the circle |theta| = 2.  Certification:
// the analytic total r(1) bounds the truncated tail, and the extraction noise
// (machine epsilon times the circle maximum) must sit far below the 1e-8
// tail budget or the table is rejected.
std::vector<double> extract_table(const mechanism& m, double ubar) {
    constexpr int M = 256;
    constexpr double rho = 2.0;
    double psi_u = psi_eval(m, ubar);
    double psip_u = psi_prime(m, ubar);
    double r_tot = psip_u - psi_u / ubar;
    if (!(r_tot > 0)) throw error(errc::truncation, "offspring series has no positive mass");

    std::complex<double> vals[M];
    double maxabs = 0;
    for (int j = 0; j < M; ++j) {
        double ph = 2 * std::numbers::pi * j / M;
        std::complex<double> theta = rho * std::complex<double>(std::cos(ph), std::sin(ph));
        std::complex<double> v =
            theta * psip_u - (psi_u - psi_complex(m, (1.0 - theta) * ubar)) / ubar;
        vals[j] = v;
        maxabs = std::max(maxabs, std::abs(v));
    }
    if (!std::isfinite(maxabs) || 2e-15 * maxabs > 1e-9 * r_tot)
        throw error(errc::truncation,
                    "offspring tail is not certifiable at this ubar (series extraction noise)");

    std::vector<double> p(kMaxOffspring - 1, 0.0);  // index i holds K = i + 2
    double sum = 0;
    for (int k = 2; k <= kMaxOffspring; ++k) {
        std::complex<double> acc = 0;
        for (int j = 0; j < M; ++j) {
            double ph = -2 * std::numbers::pi * double(k) * j / M;
            acc += vals[j] * std::complex<double>(std::cos(ph), std::sin(ph));
        }
        double ck = acc.real() / (M * std::pow(rho, k));
        if (ck < 0) ck = 0;
        p[k - 2] = ck;
        sum += ck;
    }
    double tail = r_tot - sum;
    if (tail > 1e-8 * r_tot)
        throw error(errc::truncation, "offspring tail mass past K=64 exceeds 1e-8");
    for (double& x : p) x /= sum;
    return p;
}

}  // namespace

struct reduced_rates::impl {
    laplace_flow flow;
    double t = 0, tau_min = 0;
    double l0 = 0, dlt = 0;               // hazard grid: ln tau_min + j dlt
    std::vector<double> ubar_g;           // ubar at grid nodes (interp grade)
    std::vector<double> hazard;           // R at grid nodes, R(tau_min) = 0
    enum class law { fixed_two, sibuya, table } kind = law::fixed_two;

    mutable std::mutex mu;
    mutable std::vector<std::vector<double>> tables;       // cumulative, lazily built
    mutable std::unordered_map<double, double> ubar_cache;  // exact accessor values

    impl(const laplace_flow& fl, double horizon) : flow(fl), t(horizon) {
        if (!(t > 0) || !std::isfinite(t)) throw error(errc::domain, "horizon must be positive");
        if (!flow.grey_ok())
            throw error(errc::no_extinction, "the reduced process needs Grey's condition");
        tau_min = t * 0x1p-20;
        l0 = std::log(tau_min);
        dlt = std::log(0x1p20) / kHazardCells;

        const mechanism& m = flow.mech();
        ubar_g.resize(kHazardCells + 1);
        bool closed = m.jump == mechanism::jump_kind::none ||
                      (m.jump == mechanism::jump_kind::alpha_stable && m.b == 0 && m.d == 0);
        if (closed) {
            for (int j = 0; j <= kHazardCells; ++j) ubar_g[j] = flow.ubar(std::exp(l0 + j * dlt));
        } else {
            fill_ubar_grid();
        }

        std::vector<double> g(kHazardCells + 1);
        for (int j = 0; j <= kHazardCells; ++j)
            g[j] = rate_from_ubar(m, ubar_g[j]) * std::exp(l0 + j * dlt);
        hazard = prefix_integral(g, dlt);

        if (m.jump == mechanism::jump_kind::none)
            kind = law::fixed_two;
        else if (m.jump == mechanism::jump_kind::alpha_stable)
            kind = law::sibuya;
        else
            kind = law::table;
        tables.resize(kHazardCells + 1);
    }

    // ubar on the grid for mechanisms without a closed form: accumulate
    // T(u) = int_u^inf dz/psi on a fine log-u lattice once and invert by
    // interpolation (interpolation grade ~1e-7, enough for hazard and tables)
    void fill_ubar_grid() {
        const mechanism& m = flow.mech();
        double u_bot = 0.5 * ubar_exact(t);
        double u_top = ubar_exact(tau_min);
        double u_hi = std::max(u_top * 1e4, 1e8);
        const int NU = 20000;
        double ly0 = std::log(u_bot), dly = (std::log(u_hi) - ly0) / NU;
        auto f = [&](double y) {
            double z = std::exp(y);
            return z / psi_eval(m, z);
        };
        std::vector<double> T(NU + 1);
        if (m.d > 0)
            T[NU] = 2.0 / (m.d * u_hi);
        else if (m.jump == mechanism::jump_kind::alpha_stable)
            T[NU] = std::pow(u_hi, 1 - m.alpha) / (m.C * (m.alpha - 1));
        else
            throw error(errc::no_extinction, "flow tail is not integrable");
        for (int j = NU; j-- > 0;) {
            double a = ly0 + j * dly, b = a + dly;
            T[j] = T[j + 1] + dly / 6.0 * (f(a) + 4 * f(0.5 * (a + b)) + f(b));
        }
        if (!(T[0] >= t) || !(T[NU] <= tau_min))
            throw error(errc::resolution, "ubar lattice failed to cover the horizon range");
        for (int j = 0; j <= kHazardCells; ++j) {
            double tau = std::exp(l0 + j * dlt);
            // T decreases along the lattice; find the cell containing tau
            int lo = 0, hi = NU;
            while (hi - lo > 1) {
                int mid = (lo + hi) / 2;
                (T[mid] >= tau ? lo : hi) = mid;
            }
            double w = (T[lo] - tau) / (T[lo] - T[hi]);
            ubar_g[j] = std::exp(ly0 + (lo + w) * dly);
        }
    }

    double ubar_exact(double tau) const {
        {
            std::lock_guard<std::mutex> lock(mu);
            auto it = ubar_cache.find(tau);
            if (it != ubar_cache.end()) return it->second;
        }
        double v = flow.ubar(tau);
        std::lock_guard<std::mutex> lock(mu);
        ubar_cache.emplace(tau, v);
        return v;
    }

    double ubar_interp(double tau) const {
        double x = (std::log(std::clamp(tau, tau_min, t)) - l0) / dlt;
        int j = std::clamp(int(x), 0, kHazardCells - 1);
        double w = x - j;
        return ubar_g[j] * (1 - w) + ubar_g[j + 1] * w;
    }

    void check_tau(double tau) const {
        if (!(tau > 0) || !(tau <= t * (1 + 1e-12)))
            throw error(errc::domain, "time-to-horizon must lie in (0, t]");
    }

    const std::vector<double>& table_at(int idx) const {
        std::lock_guard<std::mutex> lock(mu);
        if (tables[idx].empty()) {
            std::vector<double> p = extract_table(flow.mech(), ubar_g[idx]);
            double acc = 0;
            for (double& x : p) {
                acc += x;
                x = acc;
            }
            tables[idx] = std::move(p);
        }
        return tables[idx];
    }
};

reduced_rates::reduced_rates(const laplace_flow& flow, double t)
    : impl_(std::make_unique<impl>(flow, t)) {}
reduced_rates::~reduced_rates() = default;
reduced_rates::reduced_rates(reduced_rates&&) noexcept = default;
reduced_rates& reduced_rates::operator=(reduced_rates&&) noexcept = default;

double reduced_rates::horizon() const { return impl_->t; }
double reduced_rates::tau_min() const { return impl_->tau_min; }
const mechanism& reduced_rates::mech() const { return impl_->flow.mech(); }

double reduced_rates::ubar_at(double tau) const {
    impl_->check_tau(tau);
    return impl_->ubar_exact(tau);
}

double reduced_rates::rate(double tau) const {
    impl_->check_tau(tau);
    return rate_from_ubar(impl_->flow.mech(), impl_->ubar_exact(tau));
}

double reduced_rates::m(double tau) const {
    impl_->check_tau(tau);
    double u = impl_->ubar_exact(tau);
    return psi_eval(impl_->flow.mech(), u) / u - impl_->flow.mech().b;
}

double reduced_rates::factorial_moment(int k, double tau) const {
    impl_->check_tau(tau);
    if (k < 2) throw error(errc::domain, "factorial moments start at k = 2");
    const mechanism& m = impl_->flow.mech();
    double u = impl_->ubar_exact(tau);
    double mk = (k == 2 ? m.d : 0.0) + m.jump_moment(k);
    return std::pow(u, k - 1) * mk;
}

int reduced_rates::sample_offspring(double tau, rng& gen) const {
    impl_->check_tau(tau);
    const impl& im = *impl_;
    switch (im.kind) {
        case impl::law::fixed_two:
            return 2;
        case impl::law::sibuya: {
            const mechanism& m = im.flow.mech();
            double alpha = m.alpha;
            if (m.d > 0) {
                double u = im.ubar_interp(tau);
                double p2x = 0.5 * m.d * u / rate_from_ubar(m, u);
                if (gen.uniform() < p2x) return 2;
            }
            // inversion walk on (-1)^j binom(alpha, j) / (alpha - 1), j >= 2
            double uu = gen.uniform();
            double q = alpha / 2, cum = q;
            int j = 2;
            while (uu > cum) {
                q *= (j - alpha) / (j + 1);
                ++j;
                cum += q;
                if (j > 100000000) throw error(errc::explosion, "offspring inversion ran away");
            }
            return j;
        }
        case impl::law::table: {
            double x = (std::log(std::clamp(tau, im.tau_min, im.t)) - im.l0) / im.dlt;
            int j = std::clamp(int(x), 0, kHazardCells - 1);
            double w = x - j;
            int pick = (gen.uniform() < w) ? j + 1 : j;
            const std::vector<double>& cum = im.table_at(pick);
            double uu = gen.uniform();
            auto it = std::lower_bound(cum.begin(), cum.end(), uu);
            return 2 + int(it - cum.begin());
        }
    }
    return 2;
}

std::vector<double> reduced_rates::offspring_table(double tau) const {
    impl_->check_tau(tau);
    const mechanism& m = impl_->flow.mech();
    double u = impl_->ubar_exact(tau);
    switch (impl_->kind) {
        case impl::law::fixed_two:
            return {1.0};
        case impl::law::sibuya: {
            // leading probabilities of the exact mixture (support is unbounded)
            double r_tot = rate_from_ubar(m, u);
            double p2x = m.d > 0 ? 0.5 * m.d * u / r_tot : 0.0;
            std::vector<double> p(kMaxOffspring - 1, 0.0);
            double q = m.alpha / 2;
            for (int j = 2; j <= kMaxOffspring; ++j) {
                p[j - 2] = (1 - p2x) * q + (j == 2 ? p2x : 0.0);
                q *= (j - m.alpha) / (j + 1);
            }
            return p;
        }
        case impl::law::table:
            return extract_table(m, u);
    }
    return {1.0};
}

double reduced_rates::cumulative_hazard(double tau) const {
    const impl& im = *impl_;
    if (tau <= im.tau_min) return 0.0;
    if (tau >= im.t) return im.hazard.back();
    double x = (std::log(tau) - im.l0) / im.dlt;
    int j = std::clamp(int(x), 0, kHazardCells - 1);
    double w = x - j;
    return im.hazard[j] * (1 - w) + im.hazard[j + 1] * w;
}

double reduced_rates::invert_hazard(double target) const {
    const impl& im = *impl_;
    if (target <= 0) return im.tau_min;
    if (target >= im.hazard.back()) return im.t;
    int lo = 0, hi = kHazardCells;
    while (hi - lo > 1) {
        int mid = (lo + hi) / 2;
        (im.hazard[mid] <= target ? lo : hi) = mid;
    }
    double w = (target - im.hazard[lo]) / (im.hazard[hi] - im.hazard[lo]);
    return std::exp(im.l0 + (lo + w) * im.dlt);
}

// ---------------------------------------------------------------------------
// reduced trees

reduced_tree simulate_reduced(const reduced_rates& rates, double t, rng& gen,
                              double resolve_until) {
    if (!(std::abs(t - rates.horizon()) <= 1e-12 * rates.horizon()))
        throw error(errc::validation, "tree horizon must match the rates horizon");
    if (resolve_until < 0) resolve_until = t;
    resolve_until = std::min(resolve_until, t);

    reduced_tree tree;
    tree.t = t;
    tree.resolve_until = resolve_until;

    struct frame {
        int parent;
        double sigma;
    };
    std::vector<frame> stack{{-1, 0.0}};
    while (!stack.empty()) {
        frame fr = stack.back();
        stack.pop_back();
        if (tree.nodes.size() >= 10000000)
            throw error(errc::explosion, "reduced tree exceeded 1e7 nodes");
        double tau_b = t - fr.sigma;
        double target = rates.cumulative_hazard(tau_b) - gen.exponential();
        reduced_node node;
        node.sigma = fr.sigma;
        node.parent = fr.parent;
        if (target <= 0) {
            node.omega = tau_b;  // survives to the horizon
        } else {
            double tau_d = rates.invert_hazard(target);
            node.omega = tau_b - tau_d;
            double death = fr.sigma + node.omega;
            if (death < resolve_until) {
                node.k = rates.sample_offspring(tau_d, gen);
                int idx = int(tree.nodes.size());
                for (int c = node.k; c-- > 0;) stack.push_back({idx, death});
            }
        }
        tree.nodes.push_back(node);
    }
    return tree;
}

int count_alive(const reduced_tree& tree, double s) {
    if (!(s >= 0) || !(s < tree.t))
        throw error(errc::domain, "population slices need 0 <= s < t");
    if (s > tree.resolve_until)
        throw error(errc::resolution, "tree is not resolved up to the requested slice");
    int n = 0;
    for (const reduced_node& nd : tree.nodes)
        if (nd.sigma <= s && s < nd.sigma + nd.omega) ++n;
    return n;
}

genealogy genealogy_at(const reduced_rates& rates, const reduced_tree& tree, double s) {
    double t = tree.t;
    double probe = t - t / 64.0;
    if (!(s >= 0) || !(s < t)) throw error(errc::domain, "genealogy slices need 0 <= s < t");
    if (s > probe) throw error(errc::resolution, "slice lies past the descendant probe");
    if (tree.resolve_until < probe)
        throw error(errc::resolution, "tree is not resolved up to the descendant probe");

    int n = int(tree.nodes.size());
    std::vector<int> leaf_pos(n, -1);
    std::vector<int> leaves;
    for (int i = 0; i < n; ++i) {
        const reduced_node& nd = tree.nodes[i];
        if (nd.sigma <= s && s < nd.sigma + nd.omega) {
            leaf_pos[i] = int(leaves.size());
            leaves.push_back(i);
        }
    }
    if (leaves.empty()) throw error(errc::empty_population, "no individual is alive at the slice");
    int k = int(leaves.size());

    // descendant counts at the probe: ascend each alive node to its slice-s
    // ancestor; the chain walk is memoized through ancestor_leaf
    std::vector<int> counts(k, 0);
    std::vector<int> ancestor_leaf(n, -1);
    for (int i = 0; i < n; ++i) {
        const reduced_node& nd = tree.nodes[i];
        if (!(nd.sigma <= probe && probe < nd.sigma + nd.omega)) continue;
        int v = i;
        std::vector<int> chain;
        while (v >= 0 && ancestor_leaf[v] < 0 && tree.nodes[v].sigma > s) {
            chain.push_back(v);
            v = tree.nodes[v].parent;
        }
        int leaf = (v >= 0 && ancestor_leaf[v] >= 0) ? ancestor_leaf[v]
                                                     : (v >= 0 ? leaf_pos[v] : -1);
        for (int c : chain) ancestor_leaf[c] = leaf;
        if (leaf >= 0) ++counts[leaf];
    }

    double c = rates.ubar_at(t) / rates.ubar_at(t - probe) * std::exp(probe * rates.mech().b);

    // adjacent split depths in planar (preorder) order determine the matrix
    std::vector<double> H(k - 1);
    std::vector<int> mark(n, -1);
    for (int i = 0; i + 1 < k; ++i) {
        int a = leaves[i];
        for (int v = a; v >= 0; v = tree.nodes[v].parent) mark[v] = i;
        int v = leaves[i + 1];
        while (v >= 0 && mark[v] != i) v = tree.nodes[v].parent;
        const reduced_node& anc = tree.nodes[v];
        H[i] = s - (anc.sigma + anc.omega);
    }

    genealogy g{ultrametric::from_depths(H), {}, std::move(leaves), 0.0, probe};
    g.theta_hat.resize(k);
    for (int i = 0; i < k; ++i) {
        g.theta_hat[i] = c * counts[i];
        g.w_hat += g.theta_hat[i];
    }
    return g;
}

entrance_result entrance_law_check(const mechanism& m, double t, double theta, int n_samples,
                                   rng& gen) {
    if (!(theta >= 0) || !std::isfinite(theta))
        throw error(errc::domain, "Laplace argument must be nonnegative");
    if (!(t > 0) || !std::isfinite(t)) throw error(errc::domain, "horizon must be positive");
    if (n_samples < 16) throw error(errc::validation, "need at least 16 samples");

    laplace_flow flow(m);
    reduced_rates rates(flow, t);
    double sp = t * (1.0 - 0x1p-11);
    double c = flow.ubar(t) / flow.ubar(t * 0x1p-11) * std::exp(sp * m.b);

    double mean = 0, m2 = 0;
    for (int i = 0; i < n_samples; ++i) {
        reduced_tree tree = simulate_reduced(rates, t, gen, sp);
        double x = std::exp(-theta * c * count_alive(tree, sp));
        double delta = x - mean;
        mean += delta / (i + 1);
        m2 += delta * (x - mean);
    }

    entrance_result out;
    out.lhs = mean;
    out.lhs_se = std::sqrt(m2 / double(n_samples - 1) / n_samples);
    double ub = flow.ubar(t);
    out.rhs = 1.0 - flow.u(theta * ub * std::exp(m.b * t), t) / ub;
    out.z = out.lhs_se > 0 ? (out.lhs - out.rhs) / out.lhs_se
                           : (out.lhs == out.rhs ? 0.0 : kInf);
    return out;
}

std::vector<double> convolution_sequence(double R, double u1, int kmax) {
    if (!(R > 0) || !(u1 > 0) || kmax < 1)
        throw error(errc::validation, "need R > 0, u1 > 0, kmax >= 1");
    std::vector<double> u{u1};
    for (int k = 2; k <= kmax; ++k) {
        double acc = 0;
        for (int i = 1; i < k; ++i) acc += u[i - 1] * u[k - i - 1];
        u.push_back(R * acc);
    }
    return u;
}

bool convolution_bound_holds(double R, double u1, int kmax) {
    std::vector<double> u = convolution_sequence(R, u1, kmax);
    for (int k = 1; k <= kmax; ++k) {
        double bound = std::pow(u1, k) * std::pow(R, k - 1) * std::pow(4.0, k);
        if (u[k - 1] > bound * (1 + 1e-12)) return false;
    }
    return true;
}

std::vector<double> carleman_ratios(const mechanism& m, int kmax) {
    if (!m.has_all_moments())
        throw error(errc::domain, "Carleman ratios need finite jump moments");
    if (kmax < 2) throw error(errc::validation, "need kmax >= 2");
    std::vector<double> out;
    for (int k = 2; k <= kmax; ++k) out.push_back(std::pow(m.jump_moment(k), 1.0 / k) / k);
    return out;
}

}  // namespace branchlab
