#pragma once

#include <json.hpp>

#include <optional>
#include <stdexcept>
#include <string>

#include "stochdual/certify.hpp"
#include "stochdual/core.hpp"
#include "stochdual/solve.hpp"

namespace stochdual {

// On-disk formats. Problems and certificates are canonical JSON: keys in
// lexicographic order, two-space indentation, shortest-round-trip number
// rendering. Serializing a parsed canonical file reproduces it byte for
// byte, and the problem hash binds certificates to problem files.

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kFormatVersion = 1;

struct ProblemIoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string canonical_text(const nlohmann::json& j);
std::string content_hash(const std::string& text);

struct LoadedProblem {
  nlohmann::json raw;
  std::string mode;  // "float" or "rational"
  std::string kind;  // spec tag
  std::string hash;
  StochasticProgram<double> program;

  // exact build of the same file (rational scalars)
  StochasticProgram<Rational> exact_program() const;
};

LoadedProblem load_problem(const std::string& path);
LoadedProblem parse_problem(const std::string& text);

std::string certificate_text(const LoadedProblem& prob, const Certificate<double>& cert,
                             const SolveOptions& opts);
std::string certificate_text(const LoadedProblem& prob, const Certificate<Rational>& cert,
                             const SolveOptions& opts);

struct LoadedCertificate {
  nlohmann::json raw;
  std::string mode;
  std::string problem_hash;
  std::string status;
  double tol_gap = 0;
  double tol_feas = 0;
};

LoadedCertificate load_certificate(const std::string& path);

// Reconstructs the certificate processes against the problem's tree/dims.
AdaptedProcess<double> certificate_x(const LoadedCertificate& c, const StochasticProgram<double>& sp);
DualPoint<double> certificate_dual(const LoadedCertificate& c, const StochasticProgram<double>& sp);
AdaptedProcess<Rational> certificate_x(const LoadedCertificate& c,
                                       const StochasticProgram<Rational>& sp);
DualPoint<Rational> certificate_dual(const LoadedCertificate& c,
                                     const StochasticProgram<Rational>& sp);

// Human-readable rendering of the dual problem (per application class the
// reduced dual is printed too).
std::string render_dual(const LoadedProblem& prob);

}  // namespace stochdual
