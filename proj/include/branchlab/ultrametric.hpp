#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace branchlab {

// Dense k x k matrix of times.  Plain storage; planarity is a property of the
// validated wrapper below.
struct dense_matrix {
    std::size_t k = 0;
    std::vector<double> e;  // row-major

    dense_matrix() = default;
    explicit dense_matrix(std::size_t n) : k(n), e(n * n, 0.0) {}
    double& at(std::size_t i, std::size_t j) { return e[i * k + j]; }
    double at(std::size_t i, std::size_t j) const { return e[i * k + j]; }
};

struct composition {
    std::vector<std::size_t> parts;
    std::size_t total() const {
        std::size_t s = 0;
        for (auto p : parts) s += p;
        return s;
    }
    bool operator==(const composition& o) const { return parts == o.parts; }
    bool operator!=(const composition& o) const { return !(*this == o); }
};

// Validated planar ultrametric matrix: symmetric, zero diagonal, and
// U_{ij} = max(U_{il}, U_{lj}) for all i < l < j (exact equality; genealogy
// construction produces entries that satisfy it bitwise).
class ultrametric {
  public:
    static ultrametric validate(dense_matrix m);
    // U_{ij} = max(H_i..H_{j-1}); k = |H|+1.  Always planar by construction.
    static ultrametric from_depths(const std::vector<double>& H);

    std::size_t k() const { return m_.k; }
    double at(std::size_t i, std::size_t j) const { return m_.at(i, j); }
    const dense_matrix& raw() const { return m_; }

    double tau() const;  // max entry; 0 for k = 1

    bool operator==(const ultrametric& o) const { return m_.k == o.m_.k && m_.e == o.m_.e; }

  private:
    explicit ultrametric(dense_matrix m) : m_(std::move(m)) {}
    dense_matrix m_;
};

struct decomposition {
    composition comp;
    std::vector<ultrametric> blocks;
    std::vector<std::pair<std::size_t, std::size_t>> ranges;  // [begin, end)
};

// True iff m would pass ultrametric::validate: symmetric, zero diagonal,
// finite nonnegative entries, and planar (U_{ij} = max over intermediates).
// Permuted matrices are screened with this before product-functional
// evaluation, which rejects non-planar input.
bool is_planar(const dense_matrix& m);

// Level-s split: i ~ j iff U_{ij} < s (strict).  Blocks are consecutive index
// intervals in leaf order; s <= 0 gives all singletons, s > tau one block.
decomposition decompose_at(const ultrametric& U, double s);

// Concatenate sub-matrices with cross-block entries equal to tau.  Strict
// nesting tau(sub) < tau is required, except for the degenerate all-zero
// round trip where both depths are 0.
ultrametric reconstruct(double tau, const composition& c, const std::vector<ultrametric>& subs);

// Entries U_{P(i),P(j)}.  The result may violate planarity, which is why it
// comes back as a raw matrix.
dense_matrix permute(const ultrametric& U, const std::vector<std::size_t>& P);

struct marked_matrix {
    ultrametric matrix;
    std::vector<double> marks;  // one position in (0, inf) per leaf
};

marked_matrix make_marked(ultrametric U, std::vector<double> marks);

// Recursive product functional
//   G(U) = 1{c^{tau-eps}(U) = c} f(tau(U)) prod_i F_i(U_i^{tau-eps})
// with plain evaluators (constant, depth polynomial, custom) at the leaves.
class functional {
  public:
    enum class node { constant, poly, product, custom };

    static functional constant(double v);
    static functional depth_polynomial(std::vector<double> coeffs);
    static functional indicator(composition c, double eps = 0);
    static functional product(composition c, std::function<double(double)> f,
                              std::vector<functional> children, double eps = 0);
    static functional custom(
        std::function<double(const dense_matrix&, const std::vector<double>&)> fn);

    double eval(const dense_matrix& U, const std::vector<double>& marks) const;
    double operator()(const marked_matrix& M) const { return eval(M.matrix.raw(), M.marks); }

    // structural accessors used by the moment recursion
    node kind() const { return kind_; }
    double constant_value() const { return value_; }
    const composition& parts() const { return comp_; }
    double eps() const { return eps_; }
    double depth_value(double t) const;  // f(t) for product / poly / constant nodes
    const std::vector<functional>& children() const { return children_; }

  private:
    functional() = default;
    node kind_ = node::constant;
    double value_ = 0;
    std::vector<double> coeffs_;
    composition comp_;
    double eps_ = 0;
    std::function<double(double)> depth_f_;
    std::vector<functional> children_;
    std::function<double(const dense_matrix&, const std::vector<double>&)> custom_;
};

double eval_functional(const functional& G, const marked_matrix& M);

// CSV layout: header line "k", then the leaf count, then k comma-separated
// rows.  Values print with enough digits to round trip bitwise.
std::string to_csv(const ultrametric& U);
ultrametric ultrametric_from_csv(const std::string& text);

std::string composition_to_json(const composition& c);
composition composition_from_json(const std::string& text);

// Named functional library: {"type": "constant" | "indicator" |
// "depth-polynomial" | "product", ...}
functional functional_from_json(const std::string& text);

}  // namespace branchlab
