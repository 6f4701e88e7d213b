#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace branchlab {

// Function sampled on a uniform grid with derivatives at the nodes.
// Off-grid queries use the per-cell cubic Hermite, so value() is C^1 and
// deriv() is its exact derivative; both are what the spine drift needs.
class sampled_function {
  public:
    sampled_function() = default;
    sampled_function(double a, double b, std::vector<double> values,
                     std::vector<double> derivs);

    double a() const { return a_; }
    double b() const { return b_; }
    std::size_t nodes() const { return v_.size(); }
    double step() const { return h_; }
    double node_x(std::size_t i) const { return a_ + h_ * double(i); }
    double node_value(std::size_t i) const { return v_[i]; }
    double node_deriv(std::size_t i) const { return dv_[i]; }
    const std::vector<double>& values() const { return v_; }
    const std::vector<double>& derivs() const { return dv_; }

    double value(double x) const;
    double deriv(double x) const;
    double operator()(double x) const { return value(x); }

  private:
    double a_ = 0.0, b_ = 1.0, h_ = 1.0;
    std::vector<double> v_, dv_;
};

// Composite Simpson over equally spaced samples; a trailing odd cell is
// closed with the trapezoid rule.
double simpson(const std::vector<double>& y, double h);

// Cumulative integral at every node (prefix Simpson, trapezoid on the most
// recent odd cell).  out[0] = 0, out[j] = integral over the first j cells.
std::vector<double> prefix_integral(const std::vector<double>& y, double h);

// Adaptive Simpson quadrature.
double adaptive_quad(const std::function<double(double)>& f, double a, double b,
                     double tol, int max_depth = 40);

}  // namespace branchlab
