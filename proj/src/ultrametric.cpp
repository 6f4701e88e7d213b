#include "branchlab/ultrametric.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "branchlab/errors.hpp"
#include "json.hpp"

namespace branchlab {

namespace {

void check_planar_shape(const dense_matrix& m) {
    if (m.k == 0) throw error(errc::validation, "matrix must have at least one leaf");
    if (m.e.size() != m.k * m.k)
        throw error(errc::validation, "entry storage does not match the declared size");
    for (std::size_t i = 0; i < m.k; ++i)
        for (std::size_t j = 0; j < m.k; ++j) {
            double v = m.at(i, j);
            if (!(v >= 0) || !std::isfinite(v))
                throw error(errc::validation, "entries must be finite and nonnegative");
        }
    for (std::size_t i = 0; i < m.k; ++i)
        if (m.at(i, i) != 0.0)
            throw error(errc::nonzero_diagonal, "diagonal entry is not zero");
    for (std::size_t i = 0; i < m.k; ++i)
        for (std::size_t j = i + 1; j < m.k; ++j)
            if (m.at(i, j) != m.at(j, i))
                throw error(errc::asymmetry, "matrix is not symmetric");
    for (std::size_t i = 0; i < m.k; ++i)
        for (std::size_t l = i + 1; l < m.k; ++l)
            for (std::size_t j = l + 1; j < m.k; ++j)
                if (m.at(i, j) != std::max(m.at(i, l), m.at(l, j)))
                    throw error(errc::planar_violation,
                                "U(i,j) != max(U(i,l), U(l,j)) for i<l<j");
}

}  // namespace

bool is_planar(const dense_matrix& m) {
    try {
        check_planar_shape(m);
        return true;
    } catch (const error&) {
        return false;
    }
}

ultrametric ultrametric::validate(dense_matrix m) {
    check_planar_shape(m);
    return ultrametric(std::move(m));
}

ultrametric ultrametric::from_depths(const std::vector<double>& H) {
    for (double h : H)
        if (!(h >= 0) || !std::isfinite(h))
            throw error(errc::validation, "depths must be finite and nonnegative");
    std::size_t k = H.size() + 1;
    dense_matrix m(k);
    for (std::size_t i = 0; i < k; ++i) {
        double run = 0;
        for (std::size_t j = i + 1; j < k; ++j) {
            run = std::max(run, H[j - 1]);
            m.at(i, j) = run;
            m.at(j, i) = run;
        }
    }
    return ultrametric(std::move(m));
}

double ultrametric::tau() const {
    double t = 0;
    for (double v : m_.e) t = std::max(t, v);
    return t;
}

decomposition decompose_at(const ultrametric& U, double s) {
    std::size_t k = U.k();
    decomposition out;
    std::size_t begin = 0;
    for (std::size_t i = 1; i <= k; ++i) {
        // adjacent relation suffices: U_{ij} over a block is the max of the
        // adjacent entries it spans
        bool cut = (i == k) || !(U.at(i - 1, i) < s);
        if (!cut) continue;
        std::size_t len = i - begin;
        out.comp.parts.push_back(len);
        out.ranges.emplace_back(begin, i);
        dense_matrix sub(len);
        for (std::size_t a = 0; a < len; ++a)
            for (std::size_t b = 0; b < len; ++b)
                sub.at(a, b) = U.at(begin + a, begin + b);
        out.blocks.push_back(ultrametric::validate(std::move(sub)));
        begin = i;
    }
    return out;
}

ultrametric reconstruct(double tau, const composition& c,
                        const std::vector<ultrametric>& subs) {
    if (!(tau >= 0) || !std::isfinite(tau))
        throw error(errc::validation, "depth must be finite and nonnegative");
    if (c.parts.empty()) throw error(errc::validation, "composition must be nonempty");
    if (c.parts.size() != subs.size())
        throw error(errc::validation, "composition and block list sizes differ");
    for (std::size_t i = 0; i < subs.size(); ++i) {
        if (c.parts[i] == 0) throw error(errc::validation, "composition parts must be positive");
        if (subs[i].k() != c.parts[i])
            throw error(errc::validation, "block size does not match its composition part");
        double ti = subs[i].tau();
        if (!(ti < tau) && !(ti == 0.0 && tau == 0.0))
            throw error(errc::nesting, "block depth must be strictly below the join depth");
    }
    std::size_t k = c.total();
    dense_matrix m(k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
            if (i != j) m.at(i, j) = tau;
    std::size_t off = 0;
    for (std::size_t b = 0; b < subs.size(); ++b) {
        std::size_t len = c.parts[b];
        for (std::size_t a = 0; a < len; ++a)
            for (std::size_t d = 0; d < len; ++d)
                m.at(off + a, off + d) = subs[b].at(a, d);
        off += len;
    }
    return ultrametric::validate(std::move(m));
}

dense_matrix permute(const ultrametric& U, const std::vector<std::size_t>& P) {
    std::size_t k = U.k();
    if (P.size() != k) throw error(errc::validation, "permutation length must equal k");
    std::vector<bool> seen(k, false);
    for (auto p : P) {
        if (p >= k || seen[p]) throw error(errc::validation, "not a permutation of the leaves");
        seen[p] = true;
    }
    dense_matrix m(k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) m.at(i, j) = U.at(P[i], P[j]);
    return m;
}

marked_matrix make_marked(ultrametric U, std::vector<double> marks) {
    if (marks.size() != U.k())
        throw error(errc::validation, "marks length must equal the leaf count");
    for (double x : marks)
        if (!(x > 0) || !std::isfinite(x))
            throw error(errc::validation, "marks must be finite and positive");
    return marked_matrix{std::move(U), std::move(marks)};
}

functional functional::constant(double v) {
    functional g;
    g.kind_ = node::constant;
    g.value_ = v;
    return g;
}

functional functional::depth_polynomial(std::vector<double> coeffs) {
    functional g;
    g.kind_ = node::poly;
    g.coeffs_ = std::move(coeffs);
    return g;
}

functional functional::indicator(composition c, double eps) {
    std::vector<functional> ones(c.parts.size(), constant(1.0));
    return product(std::move(c), [](double) { return 1.0; }, std::move(ones), eps);
}

functional functional::product(composition c, std::function<double(double)> f,
                               std::vector<functional> children, double eps) {
    if (c.parts.empty()) throw error(errc::validation, "composition must be nonempty");
    for (auto p : c.parts)
        if (p == 0) throw error(errc::validation, "composition parts must be positive");
    if (children.size() != c.parts.size())
        throw error(errc::validation, "one child functional per composition part");
    if (!(eps >= 0)) throw error(errc::validation, "gap must be nonnegative");
    functional g;
    g.kind_ = node::product;
    g.comp_ = std::move(c);
    g.eps_ = eps;
    g.depth_f_ = std::move(f);
    g.children_ = std::move(children);
    return g;
}

functional functional::custom(
    std::function<double(const dense_matrix&, const std::vector<double>&)> fn) {
    functional g;
    g.kind_ = node::custom;
    g.custom_ = std::move(fn);
    return g;
}

double functional::depth_value(double t) const {
    switch (kind_) {
        case node::constant:
            return value_;
        case node::poly: {
            double acc = 0;
            for (std::size_t i = coeffs_.size(); i-- > 0;) acc = acc * t + coeffs_[i];
            return acc;
        }
        case node::product:
            return depth_f_ ? depth_f_(t) : 1.0;
        case node::custom:
            throw error(errc::unsupported_functional, "custom nodes have no depth profile");
    }
    return 0;
}

double functional::eval(const dense_matrix& U, const std::vector<double>& marks) const {
    switch (kind_) {
        case node::constant:
            return value_;
        case node::poly: {
            double t = 0;
            for (double v : U.e) t = std::max(t, v);
            double acc = 0;
            for (std::size_t i = coeffs_.size(); i-- > 0;) acc = acc * t + coeffs_[i];
            return acc;
        }
        case node::custom:
            return custom_(U, marks);
        case node::product:
            break;
    }
    if (comp_.total() != U.k) return 0.0;  // indicator cannot match
    if (!is_planar(U))
        throw error(errc::planar_violation,
                    "product functionals need a planar ultrametric input");
    ultrametric V = ultrametric::validate(U);
    double t = V.tau();
    auto dec = decompose_at(V, t - eps_);
    if (dec.comp != comp_) return 0.0;
    double acc = depth_f_ ? depth_f_(t) : 1.0;
    for (std::size_t b = 0; b < dec.blocks.size() && acc != 0.0; ++b) {
        auto [lo, hi] = dec.ranges[b];
        std::vector<double> sub_marks;
        if (!marks.empty())
            sub_marks.assign(marks.begin() + static_cast<long>(lo),
                             marks.begin() + static_cast<long>(hi));
        acc *= children_[b].eval(dec.blocks[b].raw(), sub_marks);
    }
    return acc;
}

double eval_functional(const functional& G, const marked_matrix& M) { return G(M); }

std::string to_csv(const ultrametric& U) {
    std::string out = "k\n" + std::to_string(U.k()) + "\n";
    char buf[40];
    for (std::size_t i = 0; i < U.k(); ++i) {
        for (std::size_t j = 0; j < U.k(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", U.at(i, j));
            out += buf;
            out += (j + 1 < U.k()) ? ',' : '\n';
        }
    }
    return out;
}

ultrametric ultrametric_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw error(errc::validation, "empty matrix file");
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line != "k") throw error(errc::validation, "matrix file must start with a 'k' header");
    if (!std::getline(in, line)) throw error(errc::validation, "missing leaf count");
    std::size_t k = 0;
    try {
        k = static_cast<std::size_t>(std::stoul(line));
    } catch (...) {
        throw error(errc::validation, "leaf count is not an integer");
    }
    if (k == 0) throw error(errc::validation, "leaf count must be positive");
    dense_matrix m(k);
    for (std::size_t i = 0; i < k; ++i) {
        if (!std::getline(in, line)) throw error(errc::validation, "matrix row missing");
        std::istringstream row(line);
        std::string cell;
        for (std::size_t j = 0; j < k; ++j) {
            if (!std::getline(row, cell, ','))
                throw error(errc::validation, "matrix row has too few entries");
            try {
                m.at(i, j) = std::stod(cell);
            } catch (...) {
                throw error(errc::validation, "matrix entry is not a number");
            }
        }
    }
    return ultrametric::validate(std::move(m));
}

std::string composition_to_json(const composition& c) {
    nlohmann::json j = c.parts;
    return j.dump();
}

composition composition_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (...) {
        throw error(errc::validation, "composition is not valid JSON");
    }
    if (!j.is_array()) throw error(errc::validation, "composition must be a JSON array");
    composition c;
    for (const auto& v : j) {
        if (!v.is_number_unsigned() || v.get<std::size_t>() == 0)
            throw error(errc::validation, "composition parts must be positive integers");
        c.parts.push_back(v.get<std::size_t>());
    }
    if (c.parts.empty()) throw error(errc::validation, "composition must be nonempty");
    return c;
}

namespace {

functional functional_from_node(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string())
        throw error(errc::unsupported_functional, "functional spec needs a string 'type'");
    std::string type = j["type"].get<std::string>();
    if (type == "constant") {
        if (!j.contains("value") || !j["value"].is_number())
            throw error(errc::unsupported_functional, "constant needs a numeric 'value'");
        return functional::constant(j["value"].get<double>());
    }
    if (type == "depth-polynomial") {
        if (!j.contains("coeffs") || !j["coeffs"].is_array())
            throw error(errc::unsupported_functional, "depth-polynomial needs 'coeffs'");
        std::vector<double> coeffs;
        for (const auto& v : j["coeffs"]) {
            if (!v.is_number())
                throw error(errc::unsupported_functional, "coefficients must be numbers");
            coeffs.push_back(v.get<double>());
        }
        return functional::depth_polynomial(std::move(coeffs));
    }
    auto parse_comp = [&]() {
        if (!j.contains("composition"))
            throw error(errc::unsupported_functional, "missing 'composition'");
        return composition_from_json(j["composition"].dump());
    };
    double eps = 0;
    if (j.contains("eps")) {
        if (!j["eps"].is_number() || j["eps"].get<double>() < 0)
            throw error(errc::unsupported_functional, "'eps' must be a nonnegative number");
        eps = j["eps"].get<double>();
    }
    if (type == "indicator") return functional::indicator(parse_comp(), eps);
    if (type == "product") {
        composition c = parse_comp();
        std::function<double(double)> f = [](double) { return 1.0; };
        if (j.contains("f")) {
            functional leaf = functional_from_node(j["f"]);
            f = [leaf](double t) {
                dense_matrix probe(2);
                probe.at(0, 1) = probe.at(1, 0) = t;
                return leaf.eval(probe, {});
            };
        }
        std::vector<functional> children;
        if (!j.contains("children") || !j["children"].is_array())
            throw error(errc::unsupported_functional, "product needs 'children'");
        for (const auto& ch : j["children"]) children.push_back(functional_from_node(ch));
        return functional::product(std::move(c), std::move(f), std::move(children), eps);
    }
    throw error(errc::unsupported_functional, "unknown functional type: " + type);
}

}  // namespace

functional functional_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (...) {
        throw error(errc::unsupported_functional, "functional spec is not valid JSON");
    }
    return functional_from_node(j);
}

}  // namespace branchlab
