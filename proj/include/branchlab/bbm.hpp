#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "branchlab/potential.hpp"
#include "branchlab/rng.hpp"
#include "branchlab/spectral.hpp"
#include "branchlab/ultrametric.hpp"

namespace branchlab {

// Euler-Maruyama branching diffusion on (0, L): drift -mu, dyadic branching
// at rate r(x) = (1 + W(x))/2 realized by thinning against rate_bound,
// killing where the post-step position leaves the interval.  L may be
// infinite, which removes the right boundary (the monotone-coupling partner
// and the reversed process live on the half line).  rate_bound = 0 disables
// branching entirely; tests use that as the degenerate one-particle hook.
struct bbm_config {
    potential W;
    double mu = 1.0;
    double L = 0.0;
    double dt = 1e-3;
    double rate_bound = 0.5;  // (1 + max W)/2
    std::uint64_t particle_cap = 10000000;
};

// Fills rate_bound from W and validates dt <= min(1e-3, 0.01/rate_bound)
// (keeps the thinning proposal probability a valid, small per-step rate)
// and L > 1 when finite.
bbm_config make_bbm_config(potential W, double mu, double L, double dt = 1e-3);

struct bbm_particle {
    double x = 0;
    std::uint64_t id = 0;   // index into the lineage log
    std::uint64_t uid = 0;  // rng stream id, inherited deterministically
};

struct lineage_record {
    std::uint64_t parent = 0;  // own id for the root
    double birth = 0;
};

// Particle cloud plus the append-only birth log genealogies are read from.
// Every particle that ever existed has a log entry at index id; alive
// particles are leaves of the logged forest.
struct particle_system {
    double time = 0;
    std::uint64_t steps = 0;
    std::vector<bbm_particle> particles;
    std::vector<lineage_record> log;
    std::uint64_t absorbed0 = 0;
    std::uint64_t absorbedL = 0;
    std::uint64_t peak = 1;

    // Single particle at x0 with a stream id taken from ctx.
    static particle_system start(double x0, const rng& ctx);

    std::uint64_t parent_of(std::uint64_t id) const { return log[id].parent; }
    double birth_of(std::uint64_t id) const { return log[id].birth; }
};

// One forward step.  ctx supplies the key only: each particle draws from the
// (key, uid) stream at counter position sys.steps, consuming exactly one
// Philox block (normal = 2 words, branch proposal = 1, thinning accept = 1).
// Two systems sharing ctx and a start are therefore coupled pathwise, and a
// lineage follows the same trajectory in both until one of them absorbs it.
void step(particle_system& sys, const bbm_config& cfg, const rng& ctx);

// Reversed-process step: drift +mu, branching rate 1/2, killing at 0 only.
void step_reversed(particle_system& sys, double mu, double dt, const rng& ctx,
                   std::uint64_t particle_cap = 10000000);

// Birth time of the most recent common ancestor's split between two logged
// ids, by walking parent chains (the later-born walker steps first).  Equal
// ids give the current time, so time - divergence_time is the genealogical
// distance d_t in both cases.
double divergence_time(const particle_system& sys, std::uint64_t a, std::uint64_t b);

// Indices into sys.particles in depth-first genealogical order (children in
// birth order).  Distance matrices read off in this order are planar.
std::vector<std::size_t> planar_order(const particle_system& sys);

enum class mmm_weight { uniform, h_biased };

// Empirical marked metric measure sample: planar genealogy matrix of the
// alive particles, position marks, and either flat N^-gamma weights or
// h-biased ones.
struct mmm_sample {
    ultrametric matrix;
    std::vector<double> marks;
    std::vector<double> weights;
    std::size_t total_size = 0;
};

// h is required for h_biased weighting and ignored otherwise.  Throws
// empty_population on an extinct system.
mmm_sample extract_mmm(const particle_system& sys, mmm_weight weighting, double gamma,
                       const std::function<double(double)>& h = {});

struct observable_request {
    std::vector<double> times;  // ascending record schedule, within [0, horizon]
    bool track_w = true;        // sum of h(X_v) under the box harmonic
    bool track_w_inf = false;   // sum of h_inf(X_v)
    std::size_t histogram_bins = 0;
    bool final_mmm = false;
    mmm_weight weighting = mmm_weight::uniform;
};

struct series_point {
    double t = 0;
    std::uint64_t z = 0;
    double w = 0;
    double w_inf = 0;
    std::uint64_t absorbed0 = 0;
    std::uint64_t absorbedL = 0;
    std::vector<double> histogram;
};

struct run_result {
    std::vector<series_point> series;
    std::optional<mmm_sample> final_sample;
    bool extinct = false;
    std::uint64_t peak = 0;
};

struct mc_estimate {
    double mean = 0;
    double se = 0;
    std::uint64_t n = 0;
};

// Forward model on a finite box: owns the spectral data of W at L (box
// harmonic h, effective decay w_eff = (mu^2-1)/2 - lambda1) and at 2L (the
// infinite-line proxy h_inf used by absorption bounds).
class bbm_model {
  public:
    explicit bbm_model(bbm_config cfg, double spectral_tol = 1e-11);

    const bbm_config& config() const { return cfg_; }
    const spectral_solution& spectral() const { return sol_; }
    const harmonic_functions& harmonics() const { return hf_; }
    double h(double x) const { return hf_.h.value(x); }
    double h_inf(double x) const { return hf_inf_.h.value(x); }
    double w_eff() const { return w_eff_; }
    // 1/(alpha - 1); regime error outside the semi-pushed phase.
    double gamma_exponent() const;

    // Single trajectory from x0 with observables recorded on req.times.
    run_result run(double x0, double horizon, const observable_request& req,
                   const rng& base) const;

    // MC estimate over n replicates of
    //   E_x[ sum over distinct ordered k-tuples of alive particles of
    //        G(d_t, marks) * prod_i h(X_{v_i}(t)) ],
    // with the tuple matrix relabeled by every ordering; product functionals
    // evaluate to 0 on orderings whose matrix is not planar.  k <= 4.
    mc_estimate many_to_few_lhs(double x0, int k, double t, const functional& G, int n,
                                const rng& base) const;

  private:
    double tuple_sum(const particle_system& sys, std::size_t k, const functional& G) const;

    bbm_config cfg_;
    spectral_solution sol_;
    spectral_solution sol_inf_;
    harmonic_functions hf_;
    harmonic_functions hf_inf_;
    double w_eff_ = 0;
};

// Reversed-process constants and kernels on the half line.  The process has
// constant branching rate 1/2, so its eigenfunction is exactly
// v1(z) = 2 e^beta sinh(beta z); the normalizing constants beta, mu, c_inf
// and ||v_{1,inf}||_2 come from the forward potential's infinite-line
// spectral data, solved on a proxy box long enough that the eigenpair has
// converged to machine precision.  Requires the pushed regime.
class reversed_model {
  public:
    explicit reversed_model(const potential& W, double L_proxy = 60.0,
                            double spectral_tol = 1e-11);

    double beta() const { return beta_; }
    double mu() const { return mu_; }
    double alpha() const { return alpha_; }
    double c_inf() const { return c_inf_; }
    double v_norm2() const { return v_norm2_; }  // ||v_{1,inf}||_2, not squared

    double v1(double z) const;       // 2 e^beta sinh(beta z)
    double h(double z) const;        // v1(z) e^{-mu z} / (c_inf ||v||_2), bounded
    double h_tilde(double z) const;  // c_inf v1(z) e^{mu z}
    double pi(double z) const;       // v1(z)^2 / ||v||_2

    // Expected occupation kernel as printed: v1(y)^2 int_{z v y} v1^-2.
    // The defining integral has the closed form
    //   int_a^inf v1^-2 = (coth(beta a) - 1) / (4 e^{2 beta} beta).
    // Throws boundary_singularity when z or y is not strictly positive.
    double green(double z, double y) const;

  private:
    spectral_solution sol_;
    double beta_ = 0, mu_ = 0, alpha_ = 0, c_inf_ = 0, v_norm2_ = 0;
};

struct reversed_point {
    double t = 0;
    double w = 0;  // sum of h over alive particles plus pruned mass
    std::uint64_t z = 0;
    double min_x = 0;  // running minimum position over the whole run so far
};

struct reversed_run {
    std::vector<reversed_point> series;
    double pruned_mass = 0;
    bool extinct = false;
    std::uint64_t peak = 0;
};

// Reversed process from z0 with W recorded at the given times.  Particles
// whose h-value falls below prune_threshold are removed and their h banked
// into the tracked martingale, which keeps E[W_t] exact while bounding the
// work done on far-right particles.
reversed_run run_reversed(const reversed_model& m, double z0, const std::vector<double>& times,
                          double dt, const rng& base, double prune_threshold = 0,
                          std::uint64_t particle_cap = 10000000);

struct reversed_moment_row {
    double z = 0;
    std::array<double, 4> raw{};        // E_z[W_T^k]
    std::array<double, 4> raw_se{};
    std::array<double, 4> scaled{};     // h_tilde(z) E_z[W_T^k]
    std::array<double, 4> scaled_se{};
    std::array<double, 4> m_inf{};      // E_z[W_T^k] / (k! h(z))
    std::array<double, 4> m_inf_se{};
};

struct reversed_moment_table {
    std::vector<reversed_moment_row> rows;
    double horizon = 0;
    int replicates = 0;
};

// Moment table of the reversed martingale limit, k = 1..4, with W_infty
// proxied by W_T.  Each row also measures W at T/2; a second moment that has
// not plateaued (drift above 1% plus MC noise) throws horizon_too_short.
reversed_moment_table lambda_estimator(const reversed_model& m, const std::vector<double>& zs,
                                       double horizon, int n, const rng& base,
                                       double dt = 1e-3);

// Limiting k-th jump moment at window scale A, read from the table's
// largest-z row: A^{k-alpha} (beta/||v||_2) * scaled_k.  The A-dependence is
// the exact prefactor, so doubling A scales the result by 2^{k-alpha}.
double mhat_limit(const reversed_model& m, const reversed_moment_table& table, int k,
                  double A);

}  // namespace branchlab
