#pragma once

#include "mmpt/ode.hpp"
#include "mmpt/test_plan.hpp"

#include <vector>

namespace mmpt {

// Vector field along a plan: one chart value per (curve, node).
struct PlanField {
  std::vector<Mat> values;  // per curve, dim x n_nodes

  static PlanField zero(const TestPlan& plan) {
    PlanField f;
    f.values.assign(static_cast<std::size_t>(plan.n_curves()),
                    Mat::Zero(plan.dim(), plan.grid.n_nodes()));
    return f;
  }

  Vec at(Index curve, Index node) const { return values[static_cast<std::size_t>(curve)].col(node); }
};

PlanField operator+(const PlanField& a, const PlanField& b);
PlanField operator-(const PlanField& a, const PlanField& b);
PlanField operator*(double s, const PlanField& a);

// One term phi(t) * chi_A * (v along the curves) of a test field.
struct TestFieldTerm {
  Vec phi;                       // sampled on the grid nodes
  std::vector<Index> curve_set;  // indices into the plan's curves
  VectorField v;
};

struct TestFieldSpec {
  std::vector<TestFieldTerm> terms;
};

PlanField materialize(const ChartSpace& space, const TestPlan& plan, const TestFieldSpec& spec);

// [[V]]_t: weighted metric norm across curves at one node.
double plan_norm(const ChartSpace& space, const TestPlan& plan, const PlanField& field,
                 Index node);
// Time-L2 norm of t -> [[V]]_t (trapezoidal).
double l2_norm(const ChartSpace& space, const TestPlan& plan, const PlanField& field);
// sup_t [[V]]_t.
double sup_norm(const ChartSpace& space, const TestPlan& plan, const PlanField& field);

// Convective derivative along each curve: time difference quotient of the
// components plus the Christoffel correction Gamma(velocity, field).
PlanField convective_derivative(const ChartSpace& space, const TestPlan& plan,
                                const PlanField& field);

// Same object computed from a test-field decomposition: phi' v + phi
// nabla_velocity v, term by term.
PlanField convective_derivative_test(const ChartSpace& space, const TestPlan& plan,
                                     const TestFieldSpec& spec);

// max_t | d/dt <V, W>_plan - (<DV, W> + <V, DW>)_plan | with supplied
// derivatives.
double leibniz_defect(const ChartSpace& space, const TestPlan& plan, const PlanField& v,
                      const PlanField& w, const PlanField& dv, const PlanField& dw);
double leibniz_defect(const ChartSpace& space, const TestPlan& plan, const PlanField& v,
                      const PlanField& w);

// sup-norm defect of D(aW) = a'W + a DW for a scalar curve family a(k, t).
double product_rule_defect(const ChartSpace& space, const TestPlan& plan, const Mat& a,
                           const PlanField& w);

// | int int <V, DW> + int int <Z, W> | maximized over the supplied
// compactly-supported test specs (phi vanishing at both ends).
double ibp_defect(const ChartSpace& space, const TestPlan& plan, const PlanField& v,
                  const PlanField& z, const std::vector<TestFieldSpec>& specs);

struct EmbeddingCheck {
  double lhs = 0.0;  // sup_t [[V]]_t
  double rhs = 0.0;  // sqrt(2) * W^{1,2} norm
  bool holds(double slack = 1e-6) const { return lhs <= rhs * (1.0 + slack); }
};

EmbeddingCheck embedding_check(const ChartSpace& space, const TestPlan& plan, const PlanField& v,
                               const PlanField& dv);

// CSV exports: one row per node with [[V]]_t, and one row per (curve, node)
// with the chart components.
void write_norm_trace_csv(const std::string& path, const ChartSpace& space, const TestPlan& plan,
                          const PlanField& field);
void write_field_csv(const std::string& path, const TestPlan& plan, const PlanField& field);

}  // namespace mmpt
