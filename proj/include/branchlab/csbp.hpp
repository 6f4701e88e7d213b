#pragma once

#include <complex>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "branchlab/rng.hpp"
#include "branchlab/ultrametric.hpp"

namespace branchlab {

// Jump-measure base with all moments and a finite exponential moment.  The
// two representations used by experiments are Lebesgue measure on [0,1] and
// finite atom lists.
class momented_measure {
  public:
    momented_measure();  // Lebesgue on [0,1]
    static momented_measure lebesgue01();
    static momented_measure atoms(std::vector<std::pair<double, double>> xw);

    double moment(int p) const;  // int x^p dLambda0
    double total() const;        // Lambda0 mass
    // int (e^{-zx} - 1 + zx) dLambda0, entire in z
    std::complex<double> compensated(std::complex<double> z) const;
    // int x (1 - e^{-theta x}) dLambda0
    double derivative_part(double theta) const;
    bool is_lebesgue() const { return lebesgue_; }
    const std::vector<std::pair<double, double>>& atom_list() const { return atoms_; }

  private:
    bool lebesgue_ = true;
    std::vector<std::pair<double, double>> atoms_;
};

// psi(theta) = b theta + (d/2) theta^2 + int (e^{-theta x} - 1 + theta x) Lambda(dx).
// The jump part is one of: none, alpha-stable (psi contribution C theta^alpha),
// a cutoff-stable rescaling Lambda_A(f) = A^{-alpha} int f(A x) Lambda0(dx),
// or a plain atom list.
struct mechanism {
    enum class jump_kind { none, alpha_stable, cutoff_stable, tabulated };

    double b = 0;
    double d = 0;
    jump_kind jump = jump_kind::none;
    double C = 0, alpha = 0;  // alpha_stable
    double A = 1;             // cutoff_stable
    momented_measure base;    // cutoff_stable / tabulated

    static mechanism feller(double d = 1.0, double b = 0.0);
    static mechanism linear(double b);
    static mechanism stable(double C, double alpha, double b = 0.0, double d = 0.0);
    static mechanism cutoff(double A, double alpha, momented_measure base, double b = 0.0,
                            double d = 0.0);
    static mechanism with_atoms(std::vector<std::pair<double, double>> xw, double b = 0.0,
                                double d = 0.0);

    // int x^p Lambda(dx); infinite for the alpha-stable jump when p >= 2
    double jump_moment(int p) const;
    bool has_all_moments() const { return jump != jump_kind::alpha_stable; }
    std::string describe() const;
};

double psi_eval(const mechanism& m, double theta);
double psi_prime(const mechanism& m, double theta);
// Entire continuation used by the offspring series extraction; rejects the
// alpha-stable jump (branch cut).
std::complex<double> psi_complex(const mechanism& m, std::complex<double> z);

// Laplace-exponent flow u_t(theta): du/dt = -psi(u), u_0 = theta, computed by
// inverting t = int_{u}^{theta} dz/psi(z) with log-substituted adaptive
// quadrature.  u itself never needs Grey's condition; ubar does.
class laplace_flow {
  public:
    explicit laplace_flow(mechanism m);
    const mechanism& mech() const { return m_; }
    double u(double theta, double t) const;
    double ubar(double t) const;  // throws no-extinction if Grey fails
    bool grey_ok() const { return grey_; }

  private:
    mechanism m_;
    bool grey_ = false;
};

double laplace_exponent(const laplace_flow& flow, double theta, double t);
double grey_ubar(const laplace_flow& flow, double t);

// Rates of the reduced (horizon-t) process at time-to-horizon tau:
//   r_tau = psi'(ubar_tau) - (psi(ubar_tau) - psi(0))/ubar_tau
//   m_tau = psi(ubar_tau)/ubar_tau - b
// plus the offspring law K_tau.  The cumulative hazard and the offspring
// tables live on a 1024-point log grid over [t 2^-20, t].
class reduced_rates {
  public:
    reduced_rates(const laplace_flow& flow, double t);
    ~reduced_rates();
    reduced_rates(reduced_rates&&) noexcept;
    reduced_rates& operator=(reduced_rates&&) noexcept;

    double horizon() const;
    double tau_min() const;
    const mechanism& mech() const;

    double ubar_at(double tau) const;
    double rate(double tau) const;
    double m(double tau) const;
    // r_tau E[K^(k)] = ubar^{k-1} (1_{k=2} d + int x^k Lambda)
    double factorial_moment(int k, double tau) const;
    int sample_offspring(double tau, rng& gen) const;
    // offspring law at tau (index j = P(K = j+2)); throws truncation error
    // when the renormalized tail past K_max = 64 is not certifiably < 1e-8
    std::vector<double> offspring_table(double tau) const;

    double cumulative_hazard(double tau) const;       // R(tau) = int_{tau_min}^tau r
    double invert_hazard(double target) const;        // R(tau) = target

  private:
    struct impl;
    std::unique_ptr<impl> impl_;
};

// Ulam-Harris reduced tree in depth-first preorder; children of a node are
// contiguous in birth order.  resolve_until < t leaves late subtrees
// unexpanded: every node dying before that time has its children attached, so
// population counts at s <= resolve_until are exact.
struct reduced_node {
    double sigma = 0;  // birth
    double omega = 0;  // life length (capped at t - sigma)
    int k = 0;         // sampled offspring count (0 when unexpanded or capped)
    int parent = -1;
};

struct reduced_tree {
    double t = 0;
    double resolve_until = 0;
    std::vector<reduced_node> nodes;
};

reduced_tree simulate_reduced(const reduced_rates& rates, double t, rng& gen,
                              double resolve_until = -1);

int count_alive(const reduced_tree& tree, double s);  // Z_{s,t}

struct genealogy {
    ultrametric matrix;            // planar distances among leaves alive at s
    std::vector<double> theta_hat; // per-leaf martingale weight estimates
    std::vector<int> leaves;       // node indices, planar order
    double w_hat = 0;              // sum of theta_hat
    double probe = 0;              // descendant-count probe time s'
};

genealogy genealogy_at(const reduced_rates& rates, const reduced_tree& tree, double s);

// Planar moment measures M-hat^{k,t}[G] by the branching recursion; G must be
// a product functional with eps = 0 and composition total k.
double csbp_moments(const mechanism& m, int k, double t, const functional& G);

// sum over all k! permutations P of M^{k,t}[G o P] with M = M-hat / ubar_t
double unplanarize(const mechanism& m, int k, double t, const functional& G);

struct entrance_result {
    double lhs = 0, lhs_se = 0, rhs = 0, z = 0;
};

// lhs: Monte Carlo E[exp(-theta W-hat_t)] from reduced trees; rhs:
// 1 - u_t(theta ubar_t e^{bt})/ubar_t
entrance_result entrance_law_check(const mechanism& m, double t, double theta, int n_samples,
                                   rng& gen);

// u_k = R sum_{i=1}^{k-1} u_i u_{k-i}; the closed bound is u1^k R^{k-1} 4^k
std::vector<double> convolution_sequence(double R, double u1, int kmax);
bool convolution_bound_holds(double R, double u1, int kmax);

// m_k^{1/k}/k for the mechanism's jump moments, k = 2..kmax
std::vector<double> carleman_ratios(const mechanism& m, int kmax);

}  // namespace branchlab
