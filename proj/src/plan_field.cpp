#include "mmpt/plan_field.hpp"

#include <cstdio>
#include <fstream>

namespace mmpt {

namespace {

void check_shape(const TestPlan& plan, const PlanField& f, const char* who) {
  require(static_cast<Index>(f.values.size()) == plan.n_curves(), who);
  for (const auto& m : f.values)
    require(m.rows() == plan.dim() && m.cols() == plan.grid.n_nodes(), who);
}

}  // namespace

PlanField operator+(const PlanField& a, const PlanField& b) {
  PlanField out = a;
  for (std::size_t k = 0; k < out.values.size(); ++k) out.values[k] += b.values[k];
  return out;
}

PlanField operator-(const PlanField& a, const PlanField& b) {
  PlanField out = a;
  for (std::size_t k = 0; k < out.values.size(); ++k) out.values[k] -= b.values[k];
  return out;
}

PlanField operator*(double s, const PlanField& a) {
  PlanField out = a;
  for (auto& m : out.values) m *= s;
  return out;
}

PlanField materialize(const ChartSpace& space, const TestPlan& plan, const TestFieldSpec& spec) {
  PlanField out = PlanField::zero(plan);
  for (const auto& term : spec.terms) {
    require(term.phi.size() == plan.grid.n_nodes(), "materialize: phi sample count mismatch");
    for (Index k : term.curve_set) {
      require(k >= 0 && k < plan.n_curves(), "materialize: curve index out of range");
      Mat& dst = out.values[static_cast<std::size_t>(k)];
      for (Index t = 0; t < plan.grid.n_nodes(); ++t) {
        const Vec x = plan.position(k, t);
        require(space.domain(x), "materialize: field evaluated outside the domain");
        dst.col(t) += term.phi[t] * term.v.value(x);
      }
    }
  }
  return out;
}

double plan_norm(const ChartSpace& space, const TestPlan& plan, const PlanField& field,
                 Index node) {
  check_shape(plan, field, "plan_norm: field/plan shape mismatch");
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(plan.n_curves()));
  for (Index k = 0; k < plan.n_curves(); ++k) {
    const Vec x = plan.position(k, node);
    const Vec v = field.at(k, node);
    terms.push_back(plan.weights[k] * metric_inner(space, x, v, v));
  }
  return std::sqrt(std::max(0.0, stable_sum(terms)));
}

double l2_norm(const ChartSpace& space, const TestPlan& plan, const PlanField& field) {
  const Index n = plan.grid.n_nodes();
  double acc = 0.0;
  double prev = 0.0;
  for (Index t = 0; t < n; ++t) {
    const double sq = plan_norm(space, plan, field, t);
    const double cur = sq * sq;
    if (t > 0) acc += 0.5 * plan.grid.dt() * (prev + cur);
    prev = cur;
  }
  return std::sqrt(std::max(0.0, acc));
}

double sup_norm(const ChartSpace& space, const TestPlan& plan, const PlanField& field) {
  double best = 0.0;
  for (Index t = 0; t < plan.grid.n_nodes(); ++t)
    best = std::max(best, plan_norm(space, plan, field, t));
  return best;
}

PlanField convective_derivative(const ChartSpace& space, const TestPlan& plan,
                                const PlanField& field) {
  check_shape(plan, field, "convective_derivative: field/plan shape mismatch");
  require(plan.grid.n_nodes() >= 3, "convective_derivative: need at least three nodes");
  PlanField out = PlanField::zero(plan);
  const double dt = plan.grid.dt();
  const Index last = plan.grid.n_nodes() - 1;
  for (Index k = 0; k < plan.n_curves(); ++k) {
    const Mat& vals = field.values[static_cast<std::size_t>(k)];
    Mat& dst = out.values[static_cast<std::size_t>(k)];
    dst.col(0) = (-3.0 * vals.col(0) + 4.0 * vals.col(1) - vals.col(2)) / (2.0 * dt);
    for (Index t = 1; t < last; ++t) dst.col(t) = (vals.col(t + 1) - vals.col(t - 1)) / (2.0 * dt);
    dst.col(last) =
        (3.0 * vals.col(last) - 4.0 * vals.col(last - 1) + vals.col(last - 2)) / (2.0 * dt);
    for (Index t = 0; t <= last; ++t) {
      const Vec x = plan.position(k, t);
      const Vec vel = plan.velocity(k, t);
      const std::vector<Mat> gamma = space.christoffel(x);
      const Vec f = vals.col(t);
      for (Index c = 0; c < plan.dim(); ++c)
        dst(c, t) += vel.dot(gamma[static_cast<std::size_t>(c)] * f);
    }
  }
  return out;
}

PlanField convective_derivative_test(const ChartSpace& space, const TestPlan& plan,
                                     const TestFieldSpec& spec) {
  PlanField out = PlanField::zero(plan);
  for (const auto& term : spec.terms) {
    require(term.phi.size() == plan.grid.n_nodes(),
            "convective_derivative_test: phi sample count mismatch");
    // phi' by the same second-order stencils used everywhere else.
    SampledCurve phi_curve(plan.grid, term.phi.transpose());
    const Mat phi_dot = weak_derivative(phi_curve).values;
    for (Index k : term.curve_set) {
      Mat& dst = out.values[static_cast<std::size_t>(k)];
      for (Index t = 0; t < plan.grid.n_nodes(); ++t) {
        const Vec x = plan.position(k, t);
        const Vec vel = plan.velocity(k, t);
        dst.col(t) += phi_dot(0, t) * term.v.value(x) +
                      term.phi[t] * covariant_derivative(space, term.v, x, vel);
      }
    }
  }
  return out;
}

namespace {

// s(t) = sum_k w_k <V, W>_g at each node.
Vec pairing_trace(const ChartSpace& space, const TestPlan& plan, const PlanField& v,
                  const PlanField& w) {
  Vec s(plan.grid.n_nodes());
  for (Index t = 0; t < plan.grid.n_nodes(); ++t) {
    std::vector<double> terms;
    terms.reserve(static_cast<std::size_t>(plan.n_curves()));
    for (Index k = 0; k < plan.n_curves(); ++k)
      terms.push_back(plan.weights[k] *
                      metric_inner(space, plan.position(k, t), v.at(k, t), w.at(k, t)));
    s[t] = stable_sum(terms);
  }
  return s;
}

}  // namespace

double leibniz_defect(const ChartSpace& space, const TestPlan& plan, const PlanField& v,
                      const PlanField& w, const PlanField& dv, const PlanField& dw) {
  const Vec s = pairing_trace(space, plan, v, w);
  const Mat ds = weak_derivative(SampledCurve(plan.grid, s.transpose())).values;
  const Vec lhs = ds.row(0).transpose();
  const Vec rhs = pairing_trace(space, plan, dv, w) + pairing_trace(space, plan, v, dw);
  return (lhs - rhs).cwiseAbs().maxCoeff();
}

double leibniz_defect(const ChartSpace& space, const TestPlan& plan, const PlanField& v,
                      const PlanField& w) {
  return leibniz_defect(space, plan, v, w, convective_derivative(space, plan, v),
                        convective_derivative(space, plan, w));
}

double product_rule_defect(const ChartSpace& space, const TestPlan& plan, const Mat& a,
                           const PlanField& w) {
  require(a.rows() == plan.n_curves() && a.cols() == plan.grid.n_nodes(),
          "product_rule_defect: scalar family shape mismatch");
  PlanField aw = w;
  for (Index k = 0; k < plan.n_curves(); ++k)
    for (Index t = 0; t < plan.grid.n_nodes(); ++t)
      aw.values[static_cast<std::size_t>(k)].col(t) *= a(k, t);
  const PlanField lhs = convective_derivative(space, plan, aw);

  const Mat a_dot = weak_derivative(SampledCurve(plan.grid, a)).values;
  PlanField rhs = convective_derivative(space, plan, w);
  for (Index k = 0; k < plan.n_curves(); ++k)
    for (Index t = 0; t < plan.grid.n_nodes(); ++t) {
      auto& col = rhs.values[static_cast<std::size_t>(k)];
      col.col(t) = a_dot(k, t) * w.at(k, t) + a(k, t) * col.col(t);
    }
  return sup_norm(space, plan, lhs - rhs);
}

double ibp_defect(const ChartSpace& space, const TestPlan& plan, const PlanField& v,
                  const PlanField& z, const std::vector<TestFieldSpec>& specs) {
  double worst = 0.0;
  for (const auto& spec : specs) {
    for (const auto& term : spec.terms) {
      const double scale = 1.0 + term.phi.cwiseAbs().maxCoeff();
      require(std::abs(term.phi[0]) <= 1e-12 * scale &&
                  std::abs(term.phi[term.phi.size() - 1]) <= 1e-12 * scale,
              "ibp_defect: test fields must be compactly supported in time");
    }
    const PlanField w = materialize(space, plan, spec);
    const PlanField dw = convective_derivative_test(space, plan, spec);
    const Vec a = pairing_trace(space, plan, v, dw);
    const Vec b = pairing_trace(space, plan, z, w);
    // trapezoidal time integrals
    double acc = 0.0;
    for (Index t = 0; t + 1 < plan.grid.n_nodes(); ++t)
      acc += 0.5 * plan.grid.dt() * ((a[t] + b[t]) + (a[t + 1] + b[t + 1]));
    worst = std::max(worst, std::abs(acc));
  }
  return worst;
}

EmbeddingCheck embedding_check(const ChartSpace& space, const TestPlan& plan, const PlanField& v,
                               const PlanField& dv) {
  EmbeddingCheck out;
  out.lhs = sup_norm(space, plan, v);
  const double a = l2_norm(space, plan, v);
  const double b = l2_norm(space, plan, dv);
  out.rhs = std::sqrt(2.0) * std::sqrt(a * a + b * b);
  return out;
}

void write_norm_trace_csv(const std::string& path, const ChartSpace& space, const TestPlan& plan,
                          const PlanField& field) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_norm_trace_csv: cannot open " + path);
  out << "node,time,plan_norm\n";
  char tbuf[40], nbuf[40];
  for (Index t = 0; t < plan.grid.n_nodes(); ++t) {
    std::snprintf(tbuf, sizeof(tbuf), "%.17g", plan.grid.node(t));
    std::snprintf(nbuf, sizeof(nbuf), "%.17g", plan_norm(space, plan, field, t));
    out << t << ',' << tbuf << ',' << nbuf << '\n';
  }
}

void write_field_csv(const std::string& path, const TestPlan& plan, const PlanField& field) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_field_csv: cannot open " + path);
  out << "curve,node";
  for (Index c = 0; c < plan.dim(); ++c) out << ",v" << c + 1;
  out << '\n';
  char buf[64];
  for (Index k = 0; k < plan.n_curves(); ++k)
    for (Index t = 0; t < plan.grid.n_nodes(); ++t) {
      out << k << ',' << t;
      for (Index c = 0; c < plan.dim(); ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", field.values[static_cast<std::size_t>(k)](c, t));
        out << ',' << buf;
      }
      out << '\n';
    }
}

}  // namespace mmpt
