#include "stochdual/io.hpp"

#include <sstream>

namespace stochdual {

namespace {

void render_header(std::ostringstream& os, const StochasticProgram<double>& sp) {
  os << "dual problem\n";
  os << "  maximize  <ubar, y> - E f*(p, y)\n";
  os << "  over      p in the orthogonal complement of the adapted space, y per scenario\n";
  os << "  subject to E_t p_t = 0 for t = 0.." << sp.tree->horizon() << "\n";
  os << "  scenarios: " << sp.tree->num_leaves() << ", nodes: " << sp.tree->num_nodes() << "\n";
}

}  // namespace

std::string render_dual(const LoadedProblem& prob) {
  std::ostringstream os;
  const auto& sp = prob.program;
  render_header(os, sp);

  if (prob.kind == "stopping") {
    os << "\nreduced dual (martingale dominance form)\n";
    os << "  minimize  E[y_0]  over nonnegative martingales y\n";
    os << "  subject to R_t <= y_t for every stage and node\n";
    os << "  an optimal stopping time tau satisfies R_tau = y_tau scenariowise\n";
    return os.str();
  }
  if (prob.kind == "mathprog") {
    os << "\nper-scenario multiplier system\n";
    os << "  c + A*y = p,  y in K*  (componentwise; K* has nonnegative\n";
    os << "  entries for the inequality rows, free entries for equalities)\n";
    const auto& spec = prob.raw.at("spec");
    os << "  inequality rows: " << spec.at("num_ineq").get<int>() << ", total rows: "
       << (spec.at("constraints").size() > 0 ? spec.at("constraints")[0].size() : 0) << "\n";
    return os.str();
  }
  if (prob.kind == "hedging") {
    os << "\nreduced dual over scenario densities y >= 0\n";
    os << "  maximize  E[c y - V*(y)] - sum_t E sigma_{D_t}(E_t[y ds_{t+1}])\n";
    os << "            - (E[y] S0)*(E[y cbar])\n";
    os << "  martingale constraint: E_t[y ds_{t+1}] in the polar of D_t\n";
    if (prob.raw.at("spec").at("static_dim").get<int>() > 0)
      os << "  calibration: E^Q cbar must lie in dom S0*\n";
    return os.str();
  }
  if (prob.kind == "control") {
    os << "\nreduced dual over adapted costates y_t (t = 1..T)\n";
    os << "  maximize  E[sum_t W_t.y_t - sum_t L_t*(-E_t(dy_{t+1} + A*_{t+1} y_{t+1}),\n";
    os << "            -E_t(B*_{t+1} y_{t+1}))]\n";
    return os.str();
  }
  if (prob.kind == "lagrange") {
    os << "\nreduced dual over adapted y\n";
    os << "  maximize  -E sum_t K_t*(E_t dy_{t+1}, y_t)\n";
    os << "  (Doob split y = m + a: the predictable drift enters the first slot)\n";
    return os.str();
  }
  os << "\nper-scenario conjugates f*(p, y) from the catalogue closed forms\n";
  return os.str();
}

}  // namespace stochdual
