#pragma once

#include <stdexcept>
#include <string>

namespace branchlab {

// Every failure mode the library reports deliberately.  The names are part of
// the interface: callers and tests match on the code, not the message.
enum class errc {
    validation,
    domain,
    solver_bracket,
    resolution,
    regime,
    quadrature,
    degenerate_wronskian,
    singular_argument,
    green_argument_too_large,
    asymmetry,
    nonzero_diagonal,
    planar_violation,
    nesting,
    no_extinction,
    truncation,
    empty_population,
    unsupported_functional,
    combinatorial_blowup,
    explosion,
    boundary_singularity,
    horizon_too_short,
    insufficient_statistics,
    unknown_experiment,
};

const char* errc_name(errc c);

class error : public std::runtime_error {
  public:
    error(errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
    errc code() const { return code_; }

  private:
    errc code_;
};

inline const char* errc_name(errc c) {
    switch (c) {
        case errc::validation: return "validation";
        case errc::domain: return "domain";
        case errc::solver_bracket: return "solver-bracket";
        case errc::resolution: return "resolution";
        case errc::regime: return "regime";
        case errc::quadrature: return "quadrature";
        case errc::degenerate_wronskian: return "degenerate-Wronskian";
        case errc::singular_argument: return "singular-argument";
        case errc::green_argument_too_large: return "green-argument-too-large";
        case errc::asymmetry: return "asymmetry";
        case errc::nonzero_diagonal: return "nonzero-diagonal";
        case errc::planar_violation: return "planar-violation";
        case errc::nesting: return "nesting";
        case errc::no_extinction: return "no-extinction";
        case errc::truncation: return "truncation";
        case errc::empty_population: return "empty-population";
        case errc::unsupported_functional: return "unsupported-functional";
        case errc::combinatorial_blowup: return "combinatorial-blowup";
        case errc::explosion: return "explosion";
        case errc::boundary_singularity: return "boundary-singularity";
        case errc::horizon_too_short: return "horizon-too-short";
        case errc::insufficient_statistics: return "insufficient-statistics";
        case errc::unknown_experiment: return "unknown-experiment";
    }
    return "unknown";
}

}  // namespace branchlab
