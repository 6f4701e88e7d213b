#pragma once

#include <string>
#include <vector>

namespace branchlab {

// Branching-rate potential W >= 0 with support inside [0,1].  Tabulated
// potentials are piecewise linear between their grid points and zero outside
// the tabulated range.
class potential {
  public:
    enum class kind { zero, step, tabulated };

    potential() = default;  // the zero potential
    static potential zero();
    static potential step(double height, double edge);
    static potential tabulated(std::vector<double> xs, std::vector<double> ws);

    kind type() const { return kind_; }
    double height() const { return height_; }
    double edge() const { return edge_; }
    const std::vector<double>& xs() const { return xs_; }
    const std::vector<double>& ws() const { return ws_; }

    double operator()(double x) const;
    double max() const;

    // Abscissae where W is not smooth; the ODE integrator splits cells there.
    std::vector<double> breakpoints() const;

    // True if W is constant on the open interval (a,b); value returned via w.
    bool constant_on(double a, double b, double& w) const;

    std::string describe() const;

  private:
    kind kind_ = kind::zero;
    double height_ = 0.0, edge_ = 0.0;
    std::vector<double> xs_, ws_;
};

}  // namespace branchlab
