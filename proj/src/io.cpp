#include "stochdual/io.hpp"

#include <fstream>
#include <sstream>

namespace stochdual {

using nlohmann::json;

std::string canonical_text(const json& j) { return j.dump(2) + "\n"; }

// FNV-1a, 64 bit; enough to bind certificates to problem files.
std::string content_hash(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

template <class S>
json num_out(const S& v) {
  if constexpr (std::is_same_v<S, double>) {
    return json(v);
  } else {
    return json(format_rational(v));
  }
}

template <class S>
S num_in(const json& j) {
  if constexpr (std::is_same_v<S, double>) {
    if (j.is_string()) return to_double(parse_rational(j.get<std::string>()));
    return j.get<double>();
  } else {
    if (j.is_string()) return parse_rational(j.get<std::string>());
    return to_rational(j.get<double>());
  }
}

template <class S>
json vec_out(const VecX<S>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num_out<S>(v[i]));
  return a;
}

template <class S>
VecX<S> vec_in(const json& j) {
  VecX<S> v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = num_in<S>(j[i]);
  return v;
}

template <class S>
json mat_out(const MatX<S>& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j2 = 0; j2 < m.cols(); ++j2) row.push_back(num_out<S>(m(i, j2)));
    a.push_back(row);
  }
  return a;
}

template <class S>
MatX<S> mat_in(const json& j, int cols_hint = 0) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows > 0 ? static_cast<int>(j[0].size()) : cols_hint;
  MatX<S> m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int c = 0; c < cols; ++c) m(i, c) = num_in<S>(j[i][c]);
  return m;
}

const char* loss_name(LossKind k) {
  switch (k) {
    case LossKind::Square:
      return "square";
    case LossKind::Exponential:
      return "exponential";
    case LossKind::Hinge:
      return "hinge";
    case LossKind::LinearIndicator:
      return "linear-indicator";
  }
  return "?";
}

LossKind loss_from(const std::string& s) {
  if (s == "square") return LossKind::Square;
  if (s == "exponential") return LossKind::Exponential;
  if (s == "hinge") return LossKind::Hinge;
  if (s == "linear-indicator") return LossKind::LinearIndicator;
  throw ProblemIoError("unknown loss kind: " + s);
}

template <class S>
ConvexFunction<S> fn_in(const json& j);

template <class S>
ConvexFunction<S> fn_in(const json& j) {
  const std::string tag = j.at("tag").get<std::string>();
  using Fn = ConvexFunction<S>;
  if (tag == "affine") return Fn::affine(vec_in<S>(j.at("a")), num_in<S>(j.at("b")));
  if (tag == "quadratic")
    return Fn::quadratic(mat_in<S>(j.at("Q")), vec_in<S>(j.at("a")), num_in<S>(j.at("b")));
  if (tag == "indicator-polyhedron") {
    int dim = j.at("dim").get<int>();
    return Fn::indicator_polyhedron(mat_in<S>(j.at("A"), dim), vec_in<S>(j.at("b")),
                                    mat_in<S>(j.at("C"), dim), vec_in<S>(j.at("d")));
  }
  if (tag == "max-affine") return Fn::max_affine(mat_in<S>(j.at("A")), vec_in<S>(j.at("b")));
  if (tag == "support-box") {
    const auto& lo = j.at("lo");
    const auto& hi = j.at("hi");
    const int n = static_cast<int>(lo.size());
    VecX<S> l = VecX<S>::Zero(n), h = VecX<S>::Zero(n);
    std::vector<bool> lf(n), hf(n);
    for (int i = 0; i < n; ++i) {
      lf[i] = !lo[i].is_null();
      hf[i] = !hi[i].is_null();
      if (lf[i]) l[i] = num_in<S>(lo[i]);
      if (hf[i]) h[i] = num_in<S>(hi[i]);
    }
    return Fn::support_box(l, h, lf, hf);
  }
  if (tag == "scalar-loss")
    return Fn::scalar_loss(loss_from(j.at("kind").get<std::string>()), num_in<S>(j.at("scale")),
                           num_in<S>(j.at("shift")), j.value("bounded", false));
  if (tag == "sum") {
    std::vector<ConvexFunction<S>> parts;
    for (const auto& p : j.at("parts")) parts.push_back(fn_in<S>(p));
    return Fn::sum(std::move(parts));
  }
  if (tag == "affine-pre")
    return Fn::affine_pre(mat_in<S>(j.at("M")), vec_in<S>(j.at("c")), fn_in<S>(j.at("inner")));
  if (tag == "separable") {
    std::vector<ConvexFunction<S>> parts;
    for (const auto& p : j.at("parts")) parts.push_back(fn_in<S>(p));
    return Fn::separable(std::move(parts));
  }
  throw ProblemIoError("unknown function tag: " + tag);
}

template <class S>
TreePtr<S> tree_in(const json& j) {
  std::vector<int> parent = j.at("parent").get<std::vector<int>>();
  std::vector<int> stage = j.at("stage").get<std::vector<int>>();
  std::vector<S> prob;
  for (const auto& p : j.at("prob")) prob.push_back(num_in<S>(p));
  try {
    return std::make_shared<ScenarioTree<S>>(parent, stage, prob);
  } catch (const std::invalid_argument& e) {
    throw ProblemIoError(e.what());
  }
}

template <class S>
AdaptedProcess<S> adapted_in(const json& j, TreePtr<S> tree, const std::vector<int>& dims) {
  AdaptedProcess<S> x(tree, dims);
  for (int t = 0; t <= tree->horizon(); ++t) {
    const auto& stage = j.at(t);
    if (stage.size() != x.values[t].size()) throw ProblemIoError("stage array length mismatch");
    for (std::size_t i = 0; i < stage.size(); ++i) x.values[t][i] = num_in<S>(stage[i]);
  }
  return x;
}

template <class S>
RandomVariable<S> rv_in(const json& j, TreePtr<S> tree, int dim) {
  RandomVariable<S> v(tree, dim);
  if (static_cast<int>(j.size()) != tree->num_leaves())
    throw ProblemIoError("leaf array length mismatch");
  for (int l = 0; l < tree->num_leaves(); ++l) {
    if (static_cast<int>(j[l].size()) != dim) throw ProblemIoError("leaf vector length mismatch");
    for (int i = 0; i < dim; ++i) v.at(l, i) = num_in<S>(j[l][i]);
  }
  return v;
}

template <class S>
StochasticProgram<S> build_from_json(const json& root) {
  auto tree = tree_in<S>(root.at("tree"));
  const json& spec = root.at("spec");
  const std::string kind = spec.at("kind").get<std::string>();
  try {
    if (kind == "generic") {
      StochasticProgram<S> sp;
      sp.tree = tree;
      sp.dims = spec.at("dims").get<std::vector<int>>();
      sp.param_dim = spec.at("param_dim").get<int>();
      sp.ubar = rv_in<S>(spec.at("ubar"), tree, sp.param_dim);
      for (const auto& g : spec.at("integrands"))
        sp.leaf_integrands.push_back(Integrand<S>::generic(fn_in<S>(g), sp.param_dim, sp.dims));
      sp.validate();
      return sp;
    }
    if (kind == "mathprog") {
      MathProgSpec<S> ms;
      ms.dims = spec.at("dims").get<std::vector<int>>();
      ms.num_ineq = spec.at("num_ineq").get<int>();
      for (const auto& f : spec.at("objective")) ms.objective.push_back(fn_in<S>(f));
      for (const auto& row : spec.at("constraints")) {
        std::vector<ConvexFunction<S>> cs;
        for (const auto& f : row) cs.push_back(fn_in<S>(f));
        ms.constraints.push_back(std::move(cs));
      }
      return build_mathprog(tree, ms);
    }
    if (kind == "stopping") {
      StoppingSpec<S> st;
      st.reward = adapted_in<S>(spec.at("reward"), tree, std::vector<int>(tree->horizon() + 1, 1));
      return build_stopping(tree, st);
    }
    if (kind == "control") {
      ControlSpec<S> cs;
      cs.state_dim = spec.at("state_dim").get<int>();
      cs.control_dims = spec.at("control_dims").get<std::vector<int>>();
      for (const auto& stage : spec.at("A")) {
        std::vector<MatX<S>> ms;
        for (const auto& m : stage) ms.push_back(mat_in<S>(m, cs.state_dim));
        cs.A.push_back(std::move(ms));
      }
      for (const auto& stage : spec.at("B")) {
        std::vector<MatX<S>> ms;
        for (const auto& m : stage) ms.push_back(mat_in<S>(m));
        cs.B.push_back(std::move(ms));
      }
      cs.noise = adapted_in<S>(spec.at("noise"), tree,
                               std::vector<int>(tree->horizon() + 1, cs.state_dim));
      for (const auto& stage : spec.at("cost")) {
        std::vector<ConvexFunction<S>> fs;
        for (const auto& f : stage) fs.push_back(fn_in<S>(f));
        cs.cost.push_back(std::move(fs));
      }
      if (spec.contains("x0_pin")) cs.x0_pin = vec_in<S>(spec.at("x0_pin"));
      return build_control(tree, cs);
    }
    if (kind == "lagrange") {
      LagrangeSpec<S> ls;
      ls.dim = spec.at("dim").get<int>();
      for (const auto& stage : spec.at("running")) {
        std::vector<ConvexFunction<S>> fs;
        for (const auto& f : stage) fs.push_back(fn_in<S>(f));
        ls.running.push_back(std::move(fs));
      }
      return build_lagrange(tree, ls);
    }
    if (kind == "hedging") {
      HedgingSpec<S> hs;
      const int J = spec.at("assets").get<int>();
      hs.price = adapted_in<S>(spec.at("price"), tree, std::vector<int>(tree->horizon() + 1, J));
      hs.claim = rv_in<S>(spec.at("claim"), tree, 1);
      const int jbar = spec.at("static_dim").get<int>();
      hs.static_payoff = rv_in<S>(spec.at("static_payoff"), tree, jbar);
      hs.static_cost = jbar > 0 ? fn_in<S>(spec.at("static_cost")) : ConvexFunction<S>::zero(0);
      hs.loss = fn_in<S>(spec.at("loss"));
      if (spec.contains("constraints")) {
        for (const auto& stage : spec.at("constraints")) {
          std::vector<ConvexFunction<S>> fs;
          for (const auto& f : stage) fs.push_back(fn_in<S>(f));
          hs.constraints.push_back(std::move(fs));
        }
      }
      return build_hedging(tree, hs);
    }
  } catch (const std::invalid_argument& e) {
    throw ProblemIoError(e.what());
  }
  throw ProblemIoError("unknown spec kind: " + kind);
}

template <class S>
json certificate_json(const LoadedProblem& prob, const Certificate<S>& cert,
                      const SolveOptions& opts) {
  json j;
  j["format_version"] = kFormatVersion;
  j["tool_version"] = kToolVersion;
  j["mode"] = std::is_same_v<S, double> ? "float" : "rational";
  j["problem_hash"] = prob.hash;
  j["status"] = to_string(cert.status);
  j["tolerances"] = {{"gap", opts.tol_gap}, {"feas", opts.tol_feas}};
  j["gap"] = num_out<S>(cert.gap);
  j["value_primal"] = num_out<S>(cert.value_primal);
  j["value_dual"] = num_out<S>(cert.value_dual);
  json xs = json::array();
  for (const auto& stage : cert.x.values) {
    json a = json::array();
    for (const auto& v : stage) a.push_back(num_out<S>(v));
    xs.push_back(a);
  }
  j["x"] = xs;
  json ps = json::array();
  for (const auto& stage : cert.d.p.values) {
    json a = json::array();
    for (const auto& v : stage) a.push_back(num_out<S>(v));
    ps.push_back(a);
  }
  j["p"] = ps;
  json ys = json::array();
  for (const auto& v : cert.d.y.values) ys.push_back(num_out<S>(v));
  j["y"] = ys;
  return j;
}

template <class S>
AdaptedProcess<S> certificate_x_impl(const LoadedCertificate& c, const StochasticProgram<S>& sp) {
  AdaptedProcess<S> x(sp.tree, sp.dims);
  const auto& xs = c.raw.at("x");
  for (int t = 0; t <= sp.tree->horizon(); ++t) {
    if (xs[t].size() != x.values[t].size()) throw ProblemIoError("certificate x shape mismatch");
    for (std::size_t i = 0; i < x.values[t].size(); ++i) x.values[t][i] = num_in<S>(xs[t][i]);
  }
  return x;
}

template <class S>
DualPoint<S> certificate_dual_impl(const LoadedCertificate& c, const StochasticProgram<S>& sp) {
  DualPoint<S> d;
  d.p = LeafProcess<S>(sp.tree, sp.dims);
  const auto& ps = c.raw.at("p");
  for (int t = 0; t <= sp.tree->horizon(); ++t) {
    if (ps[t].size() != d.p.values[t].size()) throw ProblemIoError("certificate p shape mismatch");
    for (std::size_t i = 0; i < d.p.values[t].size(); ++i) d.p.values[t][i] = num_in<S>(ps[t][i]);
  }
  d.y = RandomVariable<S>(sp.tree, sp.param_dim);
  const auto& ys = c.raw.at("y");
  if (ys.size() != d.y.values.size()) throw ProblemIoError("certificate y shape mismatch");
  for (std::size_t i = 0; i < d.y.values.size(); ++i) d.y.values[i] = num_in<S>(ys[i]);
  return d;
}

}  // namespace

LoadedProblem parse_problem(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ProblemIoError(std::string("parse error: ") + e.what());
  }
  LoadedProblem out;
  out.raw = j;
  try {
    if (j.at("format_version").get<int>() != kFormatVersion)
      throw ProblemIoError("unsupported format_version");
    out.mode = j.at("mode").get<std::string>();
    if (out.mode != "float" && out.mode != "rational")
      throw ProblemIoError("mode must be float or rational");
    out.kind = j.at("spec").at("kind").get<std::string>();
  } catch (const json::exception& e) {
    throw ProblemIoError(std::string("malformed problem: ") + e.what());
  }
  out.hash = content_hash(canonical_text(j));
  try {
    out.program = build_from_json<double>(j);
  } catch (const json::exception& e) {
    throw ProblemIoError(std::string("malformed problem: ") + e.what());
  }
  return out;
}

LoadedProblem load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ProblemIoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_problem(ss.str());
}

StochasticProgram<Rational> LoadedProblem::exact_program() const {
  return build_from_json<Rational>(raw);
}

std::string certificate_text(const LoadedProblem& prob, const Certificate<double>& cert,
                             const SolveOptions& opts) {
  return canonical_text(certificate_json<double>(prob, cert, opts));
}
std::string certificate_text(const LoadedProblem& prob, const Certificate<Rational>& cert,
                             const SolveOptions& opts) {
  return canonical_text(certificate_json<Rational>(prob, cert, opts));
}

LoadedCertificate load_certificate(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ProblemIoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  LoadedCertificate out;
  try {
    out.raw = json::parse(ss.str());
    out.mode = out.raw.at("mode").get<std::string>();
    out.problem_hash = out.raw.at("problem_hash").get<std::string>();
    out.status = out.raw.at("status").get<std::string>();
    out.tol_gap = out.raw.at("tolerances").at("gap").get<double>();
    out.tol_feas = out.raw.at("tolerances").at("feas").get<double>();
  } catch (const json::exception& e) {
    throw ProblemIoError(std::string("malformed certificate: ") + e.what());
  }
  return out;
}

AdaptedProcess<double> certificate_x(const LoadedCertificate& c,
                                     const StochasticProgram<double>& sp) {
  return certificate_x_impl<double>(c, sp);
}
DualPoint<double> certificate_dual(const LoadedCertificate& c,
                                   const StochasticProgram<double>& sp) {
  return certificate_dual_impl<double>(c, sp);
}
AdaptedProcess<Rational> certificate_x(const LoadedCertificate& c,
                                       const StochasticProgram<Rational>& sp) {
  return certificate_x_impl<Rational>(c, sp);
}
DualPoint<Rational> certificate_dual(const LoadedCertificate& c,
                                     const StochasticProgram<Rational>& sp) {
  return certificate_dual_impl<Rational>(c, sp);
}

}  // namespace stochdual
