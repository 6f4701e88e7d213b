#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <utility>
#include <vector>

#include "branchlab/csbp.hpp"
#include "branchlab/errors.hpp"
#include "branchlab/grid.hpp"

namespace branchlab {

namespace {

constexpr int kCells = 512;

// The recursion needs product structure above the leaves: arity-n branch
// points carry weight m_n / n!, children recurse on the composition parts.
void check_structure(const functional& G, std::size_t k) {
    if (k == 1) return;  // single-leaf blocks evaluate any node directly
    if (G.kind() != functional::node::product)
        throw error(errc::unsupported_functional, "k >= 2 moments need a product functional");
    if (G.eps() > 0)
        throw error(errc::unsupported_functional,
                    "positive-gap indicators have no moment recursion");
    if (G.parts().total() != k)
        throw error(errc::validation, "functional composition must total the moment order");
    const auto& parts = G.parts().parts;
    for (std::size_t i = 0; i < parts.size(); ++i) check_structure(G.children()[i], parts[i]);
}

// G evaluated on the trivial single-leaf matrix
double leaf_value(const functional& G) {
    switch (G.kind()) {
        case functional::node::constant:
            return G.constant_value();
        case functional::node::poly:
            return G.depth_value(0.0);
        case functional::node::product:
            // composition total is 1, so the block structure is trivial
            return G.depth_value(0.0) * leaf_value(G.children()[0]);
        case functional::node::custom: {
            dense_matrix one(1);
            return G.eval(one, {});
        }
    }
    return 0;
}

struct engine {
    const mechanism* mech;
    double t, dt;
    std::vector<double> zero;
    std::map<std::pair<const functional*, std::vector<std::size_t>>, std::vector<double>> memo;

    engine(const mechanism* m, double horizon)
        : mech(m), t(horizon), dt(horizon / kCells), zero(kCells + 1, 0.0) {}

    // M-hat^{k, s_j}[G o P] on the shared grid, j = 0..kCells
    std::vector<double> compute(const functional& G, const std::vector<std::size_t>& P) {
        double b = mech->b;
        std::size_t k = P.size();
        std::vector<double> out(kCells + 1);
        if (k == 1) {
            double g0 = leaf_value(G);
            for (int j = 0; j <= kCells; ++j) out[j] = std::exp(-b * dt * j) * g0;
            return out;
        }
        const auto& parts = G.parts().parts;
        std::size_t n = parts.size();
        if (n < 2) return zero;  // a single block at positive depth never occurs

        // G o P vanishes unless every block's image is a planar interval
        std::vector<const std::vector<double>*> ch(n);
        std::size_t pos = 0;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t lo = P[pos], hi = P[pos];
            for (std::size_t a = 1; a < parts[i]; ++a) {
                lo = std::min(lo, P[pos + a]);
                hi = std::max(hi, P[pos + a]);
            }
            if (hi - lo + 1 != parts[i]) return zero;
            std::vector<std::size_t> q(parts[i]);
            for (std::size_t a = 0; a < parts[i]; ++a) q[a] = P[pos + a] - lo;
            ch[i] = &values(G.children()[i], std::move(q));
            pos += parts[i];
        }

        double mn = (n == 2 ? mech->d : 0.0) + mech->jump_moment(int(n));
        if (mn == 0) return zero;
        double fact = 1;
        for (std::size_t i = 2; i <= n; ++i) fact *= double(i);

        std::vector<double> y(kCells + 1);
        for (int j = 0; j <= kCells; ++j) {
            double s = dt * j;
            double prod = G.depth_value(s);
            for (std::size_t i = 0; i < n; ++i) prod *= (*ch[i])[j];
            y[j] = std::exp(b * s) * prod;
        }
        std::vector<double> J = prefix_integral(y, dt);
        for (int j = 0; j <= kCells; ++j) out[j] = (mn / fact) * std::exp(-b * dt * j) * J[j];
        return out;
    }

    const std::vector<double>& values(const functional& G, std::vector<std::size_t> P) {
        auto key = std::make_pair(&G, std::move(P));
        auto it = memo.find(key);
        if (it != memo.end()) return it->second;
        std::vector<double> v = compute(G, key.second);
        return memo.emplace(std::move(key), std::move(v)).first->second;
    }
};

void check_inputs(const mechanism& m, int k, double t) {
    if (k < 1) throw error(errc::domain, "moment order must be at least 1");
    if (!(t >= 0) || !std::isfinite(t)) throw error(errc::domain, "horizon must be finite");
    if (!m.has_all_moments())
        throw error(errc::domain, "the moment recursion needs finite jump moments");
}

}  // namespace

double csbp_moments(const mechanism& m, int k, double t, const functional& G) {
    check_inputs(m, k, t);
    check_structure(G, std::size_t(k));
    if (t == 0) return k == 1 ? leaf_value(G) : 0.0;
    engine e(&m, t);
    std::vector<std::size_t> id(k);
    std::iota(id.begin(), id.end(), std::size_t{0});
    return e.compute(G, id).back();
}

double unplanarize(const mechanism& m, int k, double t, const functional& G) {
    check_inputs(m, k, t);
    if (k > 8)
        throw error(errc::combinatorial_blowup, "unplanarized moments are capped at k = 8");
    check_structure(G, std::size_t(k));
    laplace_flow flow(m);
    double ub = flow.ubar(t);  // requires Grey's condition and t > 0
    engine e(&m, t);
    std::vector<std::size_t> P(k);
    std::iota(P.begin(), P.end(), std::size_t{0});
    double acc = 0;
    do {
        acc += e.compute(G, P).back();
    } while (std::next_permutation(P.begin(), P.end()));
    return acc / ub;
}

}  // namespace branchlab
