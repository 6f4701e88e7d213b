#pragma once

#include <string>
#include <vector>

#include "branchlab/grid.hpp"
#include "branchlab/potential.hpp"

namespace branchlab {

// Principal eigenpair of  (1/2)v'' + (1/2)W v = lambda v  on [0,L] with
// v(0)=v(L)=0, normalized v(1)=1, plus the derived criticality parameters.
// lambda1_inf comes from re-solving at 2L; the finite-size gap is
// w = lambda1_inf - lambda1 >= 0.
struct spectral_solution {
    potential W;
    double L = 0;
    double lambda1 = 0;
    double lambda1_inf = 0;
    double w = 0;
    double mu = 0;     // sqrt(1 + 2 lambda1_inf)
    double beta = 0;   // sqrt(2 lambda1_inf) if positive, else 0
    double alpha = 1;  // (mu+beta)/(mu-beta) for beta > 0
    double cL = 0;     // normalizer of h_tilde at drift mu
    double v1_norm2 = 0;  // L2 norm of v1 (not squared)
    sampled_function v1;
    std::string regime;  // "pulled" | "semi-pushed" | "fully-pushed"
};

spectral_solution solve_slp(const potential& W, double L, double tol);

// sup_{x in [1,L]} |v1(x) - sinh(sqrt(2 lambda1)(L-x))/sinh(sqrt(2 lambda1)(L-1))|
// Only meaningful in the pushed regime (lambda1 > 0).
double verify_v1_tail(const spectral_solution& sol);

struct harmonic_functions {
    sampled_function h, h_tilde, pi;
    double cL = 0;       // 1 / int e^{-mu x} v1
    double norm2sq = 0;  // int v1^2
};

// h_tilde = cL e^{-mu x} v1 (unit mass), h = e^{mu x} v1 / (cL ||v1||^2),
// Pi = h h_tilde = v1^2/||v1||^2.  mu is a free parameter here; the
// solution's own mu reproduces the equilibrium triple.
harmonic_functions harmonic_pair(const spectral_solution& sol, double mu);

struct gap_scaling_result {
    std::vector<double> lengths;
    std::vector<double> w;
    double lambda1_inf = 0;  // from the largest length doubled
    double slope = 0;        // regression slope of log w on L, expect -2 beta
    double beta = 0;
};

gap_scaling_result gap_scaling(const potential& W, const std::vector<double>& lengths,
                               double tol = 1e-13);

// Fundamental pair at energy lambda = lambda1 + xi: g matches v1 at the left
// boundary (g(0)=0, g'(0)=v1'(0)), d is the decaying normalized solution
// d(x) = sinh(sqrt(2 lambda)(L-x))/sinh(sqrt(2 lambda1)(L-1)) on [1,L]
// (trigonometric branch for negative arguments) extended below 1 by the ODE.
// omega = (d g' - d' g)/2 carries the Sturm-Liouville p = 1/2 factor, so the
// Green function flux jump is -2 and d(omega)/d(lambda) at lambda1 is
// int v1^2.
struct fundamental_pair {
    sampled_function g, d;
    double omega = 0;
    double lambda = 0;
};

fundamental_pair fundamental_solutions(const spectral_solution& sol, double xi);

// Resolvent kernel of the spine at rate xi:
// G_xi(x,y) = omega^{-1} (v1(y)/v1(x)) d(x v y) g(x ^ y).
// Admissible xi range is (0, 1/(10 L)].
class green_kernel {
  public:
    green_kernel(const spectral_solution& sol, double xi);
    double operator()(double x, double y) const;
    double omega() const { return fp_.omega; }
    const fundamental_pair& pair() const { return fp_; }

  private:
    const spectral_solution* sol_;
    fundamental_pair fp_;
};

double green_function(const spectral_solution& sol, double xi, double x, double y);

struct cutoff_geometry {
    double N = 0, A = 1;
    double gamma = 0;    // 1/(alpha-1)
    double L_NA = 0;     // log N/(2 beta) + log A/(mu-beta)
    double epsilon = 0;  // (1-delta1)/beta * L_NA
    double delta1 = 0, delta2 = 0;
};

cutoff_geometry make_cutoff_geometry(const spectral_solution& sol, double N, double A,
                                     double delta1 = 0.2);

const char* classify_regime(double lambda1_inf);

}  // namespace branchlab
