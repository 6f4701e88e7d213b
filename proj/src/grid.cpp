#include "branchlab/grid.hpp"

#include <algorithm>
#include <cmath>

#include "branchlab/errors.hpp"

namespace branchlab {

sampled_function::sampled_function(double a, double b, std::vector<double> values,
                                   std::vector<double> derivs)
    : a_(a), b_(b), v_(std::move(values)), dv_(std::move(derivs)) {
    if (v_.size() < 2 || v_.size() != dv_.size() || !(b_ > a_))
        throw error(errc::validation, "sampled_function needs >=2 nodes and b > a");
    h_ = (b_ - a_) / double(v_.size() - 1);
}

double sampled_function::value(double x) const {
    if (x <= a_) return v_.front();
    if (x >= b_) return v_.back();
    double u = (x - a_) / h_;
    std::size_t i = std::min(std::size_t(u), v_.size() - 2);
    double s = u - double(i);
    double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * v_[i] + (s3 - 2 * s2 + s) * h_ * dv_[i] +
           (-2 * s3 + 3 * s2) * v_[i + 1] + (s3 - s2) * h_ * dv_[i + 1];
}

double sampled_function::deriv(double x) const {
    if (x <= a_) return dv_.front();
    if (x >= b_) return dv_.back();
    double u = (x - a_) / h_;
    std::size_t i = std::min(std::size_t(u), v_.size() - 2);
    double s = u - double(i);
    double s2 = s * s;
    return (6 * s2 - 6 * s) * (v_[i] - v_[i + 1]) / h_ + (3 * s2 - 4 * s + 1) * dv_[i] +
           (3 * s2 - 2 * s) * dv_[i + 1];
}

double simpson(const std::vector<double>& y, double h) {
    if (y.size() < 2) return 0.0;
    std::size_t cells = y.size() - 1;
    double acc = 0.0;
    std::size_t i = 0;
    for (; i + 2 <= cells; i += 2) acc += (h / 3.0) * (y[i] + 4.0 * y[i + 1] + y[i + 2]);
    if (i < cells) acc += 0.5 * h * (y[i] + y[i + 1]);
    return acc;
}

std::vector<double> prefix_integral(const std::vector<double>& y, double h) {
    std::vector<double> out(y.size(), 0.0);
    for (std::size_t j = 1; j < y.size(); ++j) {
        if (j % 2 == 0)
            out[j] = out[j - 2] + (h / 3.0) * (y[j - 2] + 4.0 * y[j - 1] + y[j]);
        else
            out[j] = out[j - 1] + 0.5 * h * (y[j - 1] + y[j]);
    }
    return out;
}

namespace {

double adaptive_step(const std::function<double(double)>& f, double a, double b,
                     double fa, double fm, double fb, double whole, double tol,
                     int depth) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    double delta = left + right - whole;
    if (depth <= 0) throw error(errc::quadrature, "adaptive Simpson depth exhausted");
    if (std::fabs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return adaptive_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace

double adaptive_quad(const std::function<double(double)>& f, double a, double b,
                     double tol, int max_depth) {
    if (a == b) return 0.0;
    double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_step(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

}  // namespace branchlab
