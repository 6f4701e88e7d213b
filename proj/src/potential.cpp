#include "branchlab/potential.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "branchlab/errors.hpp"

namespace branchlab {

potential potential::zero() { return potential(); }

potential potential::step(double height, double edge) {
    if (height < 0) throw error(errc::validation, "step height must be >= 0");
    if (!(edge > 0) || edge > 1)
        throw error(errc::validation, "step support edge must lie in (0,1]");
    potential p;
    p.kind_ = kind::step;
    p.height_ = height;
    p.edge_ = edge;
    return p;
}

potential potential::tabulated(std::vector<double> xs, std::vector<double> ws) {
    if (xs.size() != ws.size() || xs.size() < 2)
        throw error(errc::validation, "tabulated potential needs >=2 (x,W) pairs");
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i] < 0 || xs[i] > 1)
            throw error(errc::validation, "tabulated grid must lie in [0,1]");
        if (i > 0 && !(xs[i] > xs[i - 1]))
            throw error(errc::validation, "tabulated grid must be strictly increasing");
        if (ws[i] < 0) throw error(errc::validation, "potential values must be >= 0");
    }
    potential p;
    p.kind_ = kind::tabulated;
    p.xs_ = std::move(xs);
    p.ws_ = std::move(ws);
    return p;
}

double potential::operator()(double x) const {
    switch (kind_) {
        case kind::zero: return 0.0;
        case kind::step: return (x >= 0.0 && x <= edge_) ? height_ : 0.0;
        case kind::tabulated: {
            if (x < xs_.front() || x > xs_.back()) return 0.0;
            auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
            if (it == xs_.begin()) return ws_.front();
            std::size_t i = std::size_t(it - xs_.begin()) - 1;
            if (i + 1 >= xs_.size()) return ws_.back();
            double t = (x - xs_[i]) / (xs_[i + 1] - xs_[i]);
            return ws_[i] + t * (ws_[i + 1] - ws_[i]);
        }
    }
    return 0.0;
}

double potential::max() const {
    switch (kind_) {
        case kind::zero: return 0.0;
        case kind::step: return height_;
        case kind::tabulated: return *std::max_element(ws_.begin(), ws_.end());
    }
    return 0.0;
}

std::vector<double> potential::breakpoints() const {
    switch (kind_) {
        case kind::zero: return {};
        case kind::step: return {edge_};
        case kind::tabulated: return xs_;
    }
    return {};
}

bool potential::constant_on(double a, double b, double& w) const {
    switch (kind_) {
        case kind::zero: w = 0.0; return true;
        case kind::step:
            if (b <= edge_) { w = height_; return true; }
            if (a >= edge_) { w = 0.0; return true; }
            return false;
        case kind::tabulated: {
            if (b <= xs_.front() || a >= xs_.back()) { w = 0.0; return true; }
            return false;
        }
    }
    return false;
}

std::string potential::describe() const {
    std::ostringstream ss;
    switch (kind_) {
        case kind::zero: ss << "zero"; break;
        case kind::step: ss << "step(B=" << height_ << ",edge=" << edge_ << ")"; break;
        case kind::tabulated: ss << "tabulated(" << xs_.size() << " points)"; break;
    }
    return ss.str();
}

}  // namespace branchlab
