#pragma once

#include "mmpt/common.hpp"
#include "mmpt/time_grid.hpp"

#include <functional>
#include <limits>

namespace mmpt {

// Finite-dimensional stand-in for the Banach space carrying the ODE state:
// R^dim with a nonnegative diagonal weight in the inner product. Reductions
// run through stable_sum so norms do not depend on coordinate ordering.
template <typename Scalar>
class WeightedSpaceT {
 public:
  using VecS = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  explicit WeightedSpaceT(VecS weights) : weights_(std::move(weights)) {
    require(weights_.size() >= 1, "WeightedSpace: empty weight vector");
    bool any_positive = false;
    for (Index i = 0; i < weights_.size(); ++i) {
      require(weights_[i] >= Scalar(0), "WeightedSpace: negative weight");
      any_positive = any_positive || weights_[i] > Scalar(0);
    }
    require(any_positive, "WeightedSpace: all weights vanish");
  }

  static WeightedSpaceT uniform(Index dim) { return WeightedSpaceT(VecS::Ones(dim)); }

  Index dim() const { return weights_.size(); }
  const VecS& weights() const { return weights_; }

  Scalar inner(const VecS& u, const VecS& v) const {
    require(u.size() == dim() && v.size() == dim(), "WeightedSpace: dimension mismatch");
    std::vector<double> terms(static_cast<std::size_t>(dim()));
    for (Index i = 0; i < dim(); ++i)
      terms[static_cast<std::size_t>(i)] = static_cast<double>(weights_[i] * u[i] * v[i]);
    return static_cast<Scalar>(stable_sum(terms));
  }

  Scalar squared_norm(const VecS& v) const { return inner(v, v); }
  Scalar norm(const VecS& v) const { return std::sqrt(squared_norm(v)); }

 private:
  VecS weights_;
};

// Curve [0,1] -> R^dim sampled at the grid nodes; column k holds the value
// at node k.
template <typename Scalar>
struct SampledCurveT {
  using MatS = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  TimeGrid grid;
  MatS values;

  SampledCurveT(TimeGrid g, MatS vals) : grid(g), values(std::move(vals)) {
    require(values.cols() == grid.n_nodes(), "SampledCurve: node count mismatch");
    require(values.allFinite(), "SampledCurve: non-finite sample");
  }

  static SampledCurveT zero(TimeGrid g, Index dim) {
    return SampledCurveT(g, MatS::Zero(dim, g.n_nodes()));
  }

  static SampledCurveT constant(TimeGrid g, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& v) {
    MatS vals(v.size(), g.n_nodes());
    vals.colwise() = v;
    return SampledCurveT(g, std::move(vals));
  }

  Index dim() const { return values.rows(); }
};

// Time-dependent bounded operator t -> lambda_t given by its action on node
// values, together with a declared bound c >= sup_t ||lambda_t||.
template <typename Scalar>
struct OperatorPathT {
  using VecS = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  TimeGrid grid;
  std::function<VecS(Index, const VecS&)> apply;
  Scalar bound_c = Scalar(0);
};

using WeightedSpace = WeightedSpaceT<double>;
using SampledCurve = SampledCurveT<double>;
using OperatorPath = OperatorPathT<double>;

// sup over nodes of the weighted norm, i.e. the Gamma-norm of the sampled
// curve.
template <typename Scalar>
Scalar sup_norm(const WeightedSpaceT<Scalar>& space, const SampledCurveT<Scalar>& y) {
  require(y.dim() == space.dim(), "sup_norm: dimension mismatch");
  Scalar best = Scalar(0);
  for (Index k = 0; k < y.grid.n_nodes(); ++k) best = std::max(best, space.norm(y.values.col(k)));
  return best;
}

// Trapezoidal integral of y over [node_a, node_b].
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> bochner_integral(const SampledCurveT<Scalar>& y,
                                                          Index node_a, Index node_b) {
  require(0 <= node_a && node_a <= node_b && node_b < y.grid.n_nodes(),
          "bochner_integral: node range out of bounds");
  using VecS = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  VecS acc = VecS::Zero(y.dim());
  if (node_a == node_b) return acc;
  const Scalar dt = static_cast<Scalar>(y.grid.dt());
  acc = Scalar(0.5) * (y.values.col(node_a) + y.values.col(node_b));
  for (Index k = node_a + 1; k < node_b; ++k) acc += y.values.col(k);
  return (dt * acc).eval();
}

// Running trapezoidal integral: node k holds the integral of y over [0, t_k].
template <typename Scalar>
SampledCurveT<Scalar> antiderivative(const SampledCurveT<Scalar>& y) {
  using MatS = typename SampledCurveT<Scalar>::MatS;
  const Scalar dt = static_cast<Scalar>(y.grid.dt());
  MatS out(y.dim(), y.grid.n_nodes());
  out.col(0).setZero();
  for (Index k = 1; k < y.grid.n_nodes(); ++k)
    out.col(k) = out.col(k - 1) + Scalar(0.5) * dt * (y.values.col(k - 1) + y.values.col(k));
  return SampledCurveT<Scalar>(y.grid, std::move(out));
}

// Second-order difference quotient: central in the interior, one-sided
// three-point stencils at the endpoints.
template <typename Scalar>
SampledCurveT<Scalar> weak_derivative(const SampledCurveT<Scalar>& y) {
  require(y.grid.n_nodes() >= 3, "weak_derivative: need at least three nodes");
  using MatS = typename SampledCurveT<Scalar>::MatS;
  const Scalar dt = static_cast<Scalar>(y.grid.dt());
  const Index last = y.grid.n_nodes() - 1;
  MatS out(y.dim(), y.grid.n_nodes());
  out.col(0) =
      (Scalar(-3) * y.values.col(0) + Scalar(4) * y.values.col(1) - y.values.col(2)) / (Scalar(2) * dt);
  for (Index k = 1; k < last; ++k)
    out.col(k) = (y.values.col(k + 1) - y.values.col(k - 1)) / (Scalar(2) * dt);
  out.col(last) = (Scalar(3) * y.values.col(last) - Scalar(4) * y.values.col(last - 1) +
                   y.values.col(last - 2)) /
                  (Scalar(2) * dt);
  return SampledCurveT<Scalar>(y.grid, std::move(out));
}

template <typename Scalar>
struct OdeSolutionT {
  SampledCurveT<Scalar> y;
  int iterations = 0;
  Scalar residual = Scalar(0);
};

using OdeSolution = OdeSolutionT<double>;

namespace detail {

// One application of the Volterra operator (Lambda y)(t) = int_0^t lambda y.
template <typename Scalar>
SampledCurveT<Scalar> apply_volterra(const OperatorPathT<Scalar>& lam,
                                     const SampledCurveT<Scalar>& y) {
  using MatS = typename SampledCurveT<Scalar>::MatS;
  MatS w(y.dim(), y.grid.n_nodes());
  for (Index k = 0; k < y.grid.n_nodes(); ++k) w.col(k) = lam.apply(k, y.values.col(k));
  return antiderivative(SampledCurveT<Scalar>(y.grid, std::move(w)));
}

}  // namespace detail

// Picard iteration for y = z + int_0^t lambda_s y_s ds. Converges because the
// iterated Volterra operator has norm <= c^n / n!.
template <typename Scalar>
OdeSolutionT<Scalar> solve_integral_equation(const WeightedSpaceT<Scalar>& space,
                                             const SampledCurveT<Scalar>& z,
                                             const OperatorPathT<Scalar>& lam,
                                             Scalar tol = Scalar(1e-12), int max_iter = 200) {
  require(space.dim() == z.dim(), "solve_integral_equation: space/state mismatch");
  require(z.grid == lam.grid, "solve_integral_equation: grid mismatch");
  require(tol > Scalar(0), "solve_integral_equation: tolerance must be positive");

  SampledCurveT<Scalar> y = z;
  for (int it = 1; it <= max_iter; ++it) {
    SampledCurveT<Scalar> ly = detail::apply_volterra(lam, y);
    SampledCurveT<Scalar> next(z.grid, z.values + ly.values);
    const Scalar change = sup_norm(space, SampledCurveT<Scalar>(z.grid, next.values - y.values));
    y = std::move(next);
    if (change < tol) {
      SampledCurveT<Scalar> check = detail::apply_volterra(lam, y);
      const Scalar residual =
          sup_norm(space, SampledCurveT<Scalar>(z.grid, y.values - z.values - check.values));
      return {std::move(y), it, residual};
    }
  }
  throw std::runtime_error("solve_integral_equation: Picard iteration did not converge");
}

// y' = lambda_t y with y(0) = y0, solved through the integral form with the
// constant inhomogeneity z(t) := y0.
template <typename Scalar>
OdeSolutionT<Scalar> solve_linear_ode(const WeightedSpaceT<Scalar>& space,
                                      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& y0,
                                      const OperatorPathT<Scalar>& lam, Scalar tol = Scalar(1e-12),
                                      int max_iter = 200) {
  return solve_integral_equation(space, SampledCurveT<Scalar>::constant(lam.grid, y0), lam, tol,
                                 max_iter);
}

// Empirical bound on ||Lambda^n|| from a basket of random unit-sup-norm
// curves. The true value is <= c^n / n! up to quadrature slack.
template <typename Scalar>
Scalar neumann_tail_bound(const WeightedSpaceT<Scalar>& space, const OperatorPathT<Scalar>& lam,
                          int n, int probes = 8, std::uint64_t seed = 31u) {
  require(n >= 1, "neumann_tail_bound: power must be >= 1");
  Rng rng(seed);
  Scalar best = Scalar(0);
  for (int p = 0; p < probes; ++p) {
    typename SampledCurveT<Scalar>::MatS vals(space.dim(), lam.grid.n_nodes());
    for (Index k = 0; k < lam.grid.n_nodes(); ++k)
      vals.col(k) = rng.normal_vector(space.dim()).template cast<Scalar>();
    SampledCurveT<Scalar> y(lam.grid, std::move(vals));
    const Scalar scale = sup_norm(space, y);
    if (scale <= Scalar(0)) continue;
    y.values /= scale;
    for (int j = 0; j < n; ++j) y = detail::apply_volterra(lam, y);
    best = std::max(best, sup_norm(space, y));
  }
  return best;
}

// Probes lam with random vectors: returns the largest observed norm ratio and
// the largest additivity defect, for validating declared bounds.
template <typename Scalar>
struct OperatorProbeT {
  Scalar max_norm_ratio = Scalar(0);
  Scalar max_linearity_defect = Scalar(0);
};

template <typename Scalar>
OperatorProbeT<Scalar> probe_operator(const WeightedSpaceT<Scalar>& space,
                                      const OperatorPathT<Scalar>& lam, int probes = 32,
                                      std::uint64_t seed = 127u) {
  Rng rng(seed);
  OperatorProbeT<Scalar> out;
  for (int p = 0; p < probes; ++p) {
    const Index k = static_cast<Index>(rng.uniform_int(0, lam.grid.n_nodes() - 1));
    const auto u = rng.normal_vector(space.dim()).template cast<Scalar>().eval();
    const auto v = rng.normal_vector(space.dim()).template cast<Scalar>().eval();
    const Scalar a = static_cast<Scalar>(rng.uniform(-2.0, 2.0));
    const Scalar nu = space.norm(u);
    if (nu > Scalar(0)) out.max_norm_ratio = std::max(out.max_norm_ratio, space.norm(lam.apply(k, u)) / nu);
    const auto lhs = lam.apply(k, (u + a * v).eval());
    const auto rhs = (lam.apply(k, u) + a * lam.apply(k, v)).eval();
    out.max_linearity_defect = std::max(out.max_linearity_defect, space.norm((lhs - rhs).eval()));
  }
  return out;
}

}  // namespace mmpt
