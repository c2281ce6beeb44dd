// Command-line surface: parse problems, solve, dualize, verify and report.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "stochdual/io.hpp"

using namespace stochdual;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNotOptimal = 1;
constexpr int kExitGap = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitUnbounded = 4;
constexpr int kExitUsage = 64;
constexpr int kExitHashMismatch = 65;
constexpr int kExitNumeric = 70;

double default_tol() {
  if (const char* env = std::getenv("STOCHDUAL_TOL")) {
    try {
      return std::stod(env);
    } catch (...) {
      return 1e-8;
    }
  }
  return 1e-8;
}

int status_exit(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal:
      return kExitOk;
    case SolveStatus::GapAboveTol:
    case SolveStatus::DualInfeasible:
      return kExitGap;
    case SolveStatus::PrimalInfeasible:
      return kExitInfeasible;
    case SolveStatus::Unbounded:
      return kExitUnbounded;
  }
  return kExitNumeric;
}

std::string default_out(const std::string& in) {
  auto dot = in.rfind(".json");
  if (dot != std::string::npos && dot == in.size() - 5)
    return in.substr(0, dot) + ".cert.json";
  return in + ".cert.json";
}

int cmd_solve(const std::string& path, double tol, const std::string& backend,
              const std::string& out, bool exact) {
  auto prob = load_problem(path);
  SolveOptions opts;
  opts.tol_gap = tol;
  opts.tol_feas = std::min(tol, 1e-9);
  if (backend == "qp-interior-point")
    opts.backend = Backend::QpInteriorPoint;
  else if (backend == "proximal-gradient")
    opts.backend = Backend::ProximalGradient;
  else if (backend != "auto")
    throw CLI::ValidationError("--backend must be auto, qp-interior-point or proximal-gradient");

  std::string text;
  SolveStatus status;
  if (exact || prob.mode == "rational") {
    auto sp = prob.exact_program();
    auto cert = solve(sp, opts);
    status = cert.status;
    text = certificate_text(prob, cert, opts);
    std::cout << "status: " << to_string(cert.status)
              << "  primal: " << format_rational(cert.value_primal)
              << "  dual: " << format_rational(cert.value_dual) << "\n";
  } else {
    auto cert = solve(prob.program, opts);
    status = cert.status;
    text = certificate_text(prob, cert, opts);
    std::cout << "status: " << to_string(cert.status) << "  primal: " << cert.value_primal
              << "  dual: " << cert.value_dual << "  gap: " << cert.gap << "\n";
  }
  const std::string dest = out.empty() ? default_out(path) : out;
  std::ofstream of(dest, std::ios::binary);
  if (!of) throw ProblemIoError("cannot write " + dest);
  of << text;
  std::cout << "certificate: " << dest << "\n";
  return status_exit(status);
}

template <class S>
int run_verify(const StochasticProgram<S>& sp, const LoadedCertificate& cert, double tol) {
  auto x = certificate_x(cert, sp);
  auto d = certificate_dual(cert, sp);
  auto rep = verify(sp, x, d, S(tol));
  std::cout << "verdict: " << to_string(rep.verdict) << "\n";
  std::cout << "primal feasible: " << (rep.primal_feasible ? "yes" : "no")
            << ", dual feasible: " << (rep.dual_feasible ? "yes" : "no") << "\n";
  std::cout << "gap: " << rep.gap << "\n";
  S worst(0);
  int worst_leaf = 0;
  for (int l = 0; l < sp.tree->num_leaves(); ++l)
    if (rep.fenchel_residuals.at(l, 0) > worst) {
      worst = rep.fenchel_residuals.at(l, 0);
      worst_leaf = l;
    }
  std::cout << "max scenario residual: " << worst << " (leaf " << worst_leaf << ")\n";
  for (const auto& n : rep.notes) std::cout << "note: " << n << "\n";
  if (rep.verdict != Verdict::OptimalPair) {
    for (int l = 0; l < sp.tree->num_leaves(); ++l)
      if (rep.fenchel_residuals.at(l, 0) > S(tol))
        std::cout << "failing leaf " << l << ": residual " << rep.fenchel_residuals.at(l, 0)
                  << "\n";
  }
  return rep.verdict == Verdict::OptimalPair ? kExitOk : kExitNotOptimal;
}

int cmd_verify(const std::string& ppath, const std::string& cpath, double tol) {
  auto prob = load_problem(ppath);
  auto cert = load_certificate(cpath);
  if (cert.problem_hash != prob.hash) {
    std::cerr << "certificate does not match this problem (hash " << cert.problem_hash
              << " vs " << prob.hash << ")\n";
    return kExitHashMismatch;
  }
  if (cert.mode == "rational") {
    auto sp = prob.exact_program();
    return run_verify<Rational>(sp, cert, tol);
  }
  return run_verify<double>(prob.program, cert, tol);
}

int cmd_dualize(const std::string& path) {
  auto prob = load_problem(path);
  std::cout << render_dual(prob);
  return kExitOk;
}

int cmd_report(const std::string& path, double tol) {
  auto prob = load_problem(path);
  SolveOptions opts;
  opts.tol_gap = tol;
  auto rep = gap_report(prob.program, opts);
  std::cout << "status: " << to_string(rep.status) << "\n";
  std::cout << "primal: " << rep.primal << "  dual: " << rep.dual << "  gap: " << rep.gap << "\n";
  if (rep.linearity.supported) {
    std::cout << "recession linearity: " << (rep.linearity.is_linear ? "holds" : "FAILS") << "\n";
    if (!rep.linearity.is_linear && rep.linearity.witness) {
      std::cout << "witness ray:";
      for (const auto& stage : rep.linearity.witness->values)
        for (double v : stage) std::cout << " " << v;
      std::cout << "\n";
    }
  } else {
    std::cout << "recession linearity: unsupported\n";
  }
  std::cout << "dual neighborhood: "
            << (rep.neighborhood_supported ? (rep.neighborhood_holds ? "holds" : "fails")
                                           : "unsupported")
            << "\n";
  if (rep.predicted)
    std::cout << "zero gap predicted by the recession conditions\n";
  for (const auto& n : rep.notes) std::cout << "note: " << n << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scenario-tree convex duality toolkit"};
  app.require_subcommand(1);

  std::string path, cert_path, out, backend = "auto";
  double tol = default_tol();
  bool exact = false;

  auto* s = app.add_subcommand("solve", "solve a problem and write a certificate");
  s->add_option("file", path)->required();
  s->add_option("--tol", tol, "gap tolerance");
  s->add_option("--backend", backend, "auto | qp-interior-point | proximal-gradient");
  s->add_option("--out", out, "certificate path");
  s->add_flag("--exact", exact, "rational arithmetic (polyhedral problems)");

  auto* v = app.add_subcommand("verify", "verify a certificate against a problem");
  v->add_option("problem", path)->required();
  v->add_option("certificate", cert_path)->required();
  v->add_option("--tol", tol, "residual tolerance");

  auto* d = app.add_subcommand("dualize", "print the dual problem");
  d->add_option("file", path)->required();

  auto* r = app.add_subcommand("report", "duality-gap diagnosis");
  r->add_option("file", path)->required();
  r->add_option("--tol", tol, "gap tolerance");

  try {
    app.parse(argc, argv);
    if (s->parsed()) return cmd_solve(path, tol, backend, out, exact);
    if (v->parsed()) return cmd_verify(path, cert_path, tol);
    if (d->parsed()) return cmd_dualize(path);
    if (r->parsed()) return cmd_report(path, tol);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? kExitUsage : kExitOk;
  } catch (const ProblemIoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitUsage;
}
