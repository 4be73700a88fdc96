#include "mmpt/test_plan.hpp"

#include <numeric>

namespace mmpt {

namespace {

Mat difference_velocity(const Mat& curve, double dt) {
  const Index n = curve.cols();
  Mat v(curve.rows(), n);
  v.col(0) = (-3.0 * curve.col(0) + 4.0 * curve.col(1) - curve.col(2)) / (2.0 * dt);
  for (Index k = 1; k + 1 < n; ++k) v.col(k) = (curve.col(k + 1) - curve.col(k - 1)) / (2.0 * dt);
  v.col(n - 1) =
      (3.0 * curve.col(n - 1) - 4.0 * curve.col(n - 2) + curve.col(n - 3)) / (2.0 * dt);
  return v;
}

void finalize_plan(const ChartSpace& space, TestPlan& plan) {
  const Index k_curves = plan.n_curves();
  require(k_curves >= 1, "make_test_plan: need at least one curve");
  require(plan.weights.size() == k_curves, "make_test_plan: one weight per curve");
  std::vector<double> wt;
  for (Index k = 0; k < k_curves; ++k) {
    require(plan.weights[k] > 0.0, "make_test_plan: weights must be positive");
    wt.push_back(plan.weights[k]);
  }
  require(std::abs(stable_sum(wt) - 1.0) < 1e-12, "make_test_plan: weights must sum to one");

  plan.speed_norms.resize(k_curves, plan.grid.n_nodes());
  for (Index k = 0; k < k_curves; ++k) {
    const Mat& curve = plan.curves[static_cast<std::size_t>(k)];
    require(curve.rows() == space.dim, "make_test_plan: curve dimension mismatch");
    require(curve.cols() == plan.grid.n_nodes(), "make_test_plan: curve node count mismatch");
    const Mat& vel = plan.velocities[static_cast<std::size_t>(k)];
    require(vel.rows() == curve.rows() && vel.cols() == curve.cols(),
            "make_test_plan: velocity layout mismatch");
    for (Index t = 0; t < plan.grid.n_nodes(); ++t) {
      const Vec x = curve.col(t);
      require(space.domain(x), "make_test_plan: curve leaves the chart domain");
      plan.speed_norms(k, t) = metric_norm(space, x, vel.col(t));
    }
  }
  plan.lip_constant = plan.speed_norms.maxCoeff();
}

}  // namespace

TestPlan make_test_plan(const ChartSpace& space, TimeGrid grid, std::vector<Mat> curves,
                        Vec weights) {
  require(grid.n_nodes() >= 3, "make_test_plan: need at least three nodes");
  std::vector<Mat> velocities;
  velocities.reserve(curves.size());
  for (const Mat& c : curves) velocities.push_back(difference_velocity(c, grid.dt()));
  return make_test_plan(space, grid, std::move(curves), std::move(velocities), std::move(weights));
}

TestPlan make_test_plan(const ChartSpace& space, TimeGrid grid, std::vector<Mat> curves,
                        std::vector<Mat> velocities, Vec weights) {
  TestPlan plan;
  plan.grid = grid;
  plan.curves = std::move(curves);
  plan.velocities = std::move(velocities);
  plan.weights = std::move(weights);
  require(plan.curves.size() == plan.velocities.size(),
          "make_test_plan: curve/velocity count mismatch");
  finalize_plan(space, plan);
  return plan;
}

Vec plan_speed(const TestPlan& plan, Index node) {
  require(node >= 0 && node < plan.grid.n_nodes(), "plan_speed: node out of range");
  return plan.speed_norms.col(node);
}

double lipschitz_constant(const TestPlan& plan) { return plan.lip_constant; }

Index BinGrid::n_bins() const {
  Index n = 1;
  for (Index i = 0; i < counts.size(); ++i) n *= counts[i];
  return n;
}

Index BinGrid::flat_index(const Vec& x) const {
  Index flat = 0;
  for (Index i = 0; i < counts.size(); ++i) {
    if (x[i] < lo[i] || x[i] > hi[i]) return -1;
    const double u = (x[i] - lo[i]) / (hi[i] - lo[i]);
    Index c = static_cast<Index>(std::floor(u * static_cast<double>(counts[i])));
    c = std::min(c, static_cast<Index>(counts[i] - 1));
    flat = flat * counts[i] + c;
  }
  return flat;
}

BinGrid default_bins(const ChartSpace& space) {
  require(!space.sample_points.empty(), "default_bins: space carries no samples");
  BinGrid bins;
  bins.lo = Vec::Constant(space.dim, std::numeric_limits<double>::infinity());
  bins.hi = Vec::Constant(space.dim, -std::numeric_limits<double>::infinity());
  for (const auto& s : space.sample_points) {
    const Vec x = space.canonicalize(s.x);
    bins.lo = bins.lo.cwiseMin(x);
    bins.hi = bins.hi.cwiseMax(x);
  }
  // Pad by a full lattice cell: samples sit strictly inside, and on periodic
  // axes the padding closes the gap between the last lattice row and the end
  // of the fundamental period.
  bins.counts.resize(space.dim);
  for (Index i = 0; i < space.dim; ++i) {
    std::vector<double> coords;
    coords.reserve(space.sample_points.size());
    for (const auto& s : space.sample_points) coords.push_back(space.canonicalize(s.x)[i]);
    std::sort(coords.begin(), coords.end());
    coords.erase(std::unique(coords.begin(), coords.end(),
                             [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                 coords.end());
    const auto distinct = static_cast<Index>(coords.size());
    double pad = distinct > 1 ? (bins.hi[i] - bins.lo[i]) / static_cast<double>(distinct - 1)
                              : 0.5;
    bins.lo[i] -= pad;
    bins.hi[i] += pad;
    bins.counts[i] = static_cast<int>(std::min<Index>(distinct, 24));
  }
  return bins;
}

double compression_constant(const ChartSpace& space, const TestPlan& plan, const BinGrid& bins) {
  const Index n_bins = bins.n_bins();
  std::vector<std::vector<double>> bin_mass_terms(static_cast<std::size_t>(n_bins));
  for (const auto& s : space.sample_points) {
    const Index b = bins.flat_index(space.canonicalize(s.x));
    if (b >= 0) bin_mass_terms[static_cast<std::size_t>(b)].push_back(s.mass);
  }
  std::vector<double> bin_mass(static_cast<std::size_t>(n_bins));
  for (std::size_t b = 0; b < bin_mass.size(); ++b) bin_mass[b] = stable_sum(bin_mass_terms[b]);

  double worst = 0.0;
  std::vector<std::vector<double>> hit(static_cast<std::size_t>(n_bins));
  for (Index t = 0; t < plan.grid.n_nodes(); ++t) {
    for (auto& h : hit) h.clear();
    for (Index k = 0; k < plan.n_curves(); ++k) {
      const Index b = bins.flat_index(space.canonicalize(plan.position(k, t)));
      require(b >= 0, "compression_constant: curve leaves the binned region");
      hit[static_cast<std::size_t>(b)].push_back(plan.weights[k]);
    }
    for (std::size_t b = 0; b < hit.size(); ++b) {
      if (hit[b].empty()) continue;
      if (bin_mass[b] <= 0.0)
        throw std::runtime_error(
            "compression_constant: curves occupy a zero-mass bin; the plan escapes the measure");
      worst = std::max(worst, stable_sum(hit[b]) / bin_mass[b]);
    }
  }
  return worst;
}

double compression_constant(const ChartSpace& space, const TestPlan& plan) {
  return compression_constant(space, plan, default_bins(space));
}

TestPlan reverse_plan(const ChartSpace& space, const TestPlan& plan) {
  std::vector<Mat> curves, velocities;
  curves.reserve(plan.curves.size());
  velocities.reserve(plan.curves.size());
  for (std::size_t k = 0; k < plan.curves.size(); ++k) {
    curves.push_back(plan.curves[k].rowwise().reverse());
    velocities.push_back(-plan.velocities[k].rowwise().reverse());
  }
  return make_test_plan(space, plan.grid, std::move(curves), std::move(velocities), plan.weights);
}

TestPlan permute_plan(const ChartSpace& space, const TestPlan& plan,
                      const std::vector<Index>& order) {
  require(static_cast<Index>(order.size()) == plan.n_curves(), "permute_plan: bad permutation");
  std::vector<bool> seen(order.size(), false);
  for (Index idx : order) {
    require(idx >= 0 && idx < plan.n_curves() && !seen[static_cast<std::size_t>(idx)],
            "permute_plan: order is not a permutation");
    seen[static_cast<std::size_t>(idx)] = true;
  }
  std::vector<Mat> curves, velocities;
  Vec weights(plan.n_curves());
  for (std::size_t j = 0; j < order.size(); ++j) {
    curves.push_back(plan.curves[static_cast<std::size_t>(order[j])]);
    velocities.push_back(plan.velocities[static_cast<std::size_t>(order[j])]);
    weights[static_cast<Index>(j)] = plan.weights[order[j]];
  }
  return make_test_plan(space, plan.grid, std::move(curves), std::move(velocities),
                        std::move(weights));
}

namespace {

struct GeodesicState {
  Vec x;
  Vec v;
};

GeodesicState geodesic_rhs(const ChartSpace& space, const GeodesicState& s) {
  const std::vector<Mat> gamma = space.christoffel(s.x);
  Vec a(space.dim);
  for (Index k = 0; k < space.dim; ++k)
    a[k] = -s.v.dot(gamma[static_cast<std::size_t>(k)] * s.v);
  return {s.v, a};
}

// Integrates the geodesic equation from (x0, v0), filling node positions and
// velocities.
void integrate_geodesic(const ChartSpace& space, const Vec& x0, const Vec& v0, TimeGrid grid,
                        Mat* nodes, Mat* velocities) {
  const double h = grid.dt();
  GeodesicState s{x0, v0};
  nodes->col(0) = x0;
  velocities->col(0) = v0;
  for (Index k = 0; k < grid.n_steps(); ++k) {
    if (!space.domain(s.x)) throw std::runtime_error("shoot_geodesic: left the chart domain");
    const GeodesicState k1 = geodesic_rhs(space, s);
    const GeodesicState k2 = geodesic_rhs(space, {s.x + 0.5 * h * k1.x, s.v + 0.5 * h * k1.v});
    const GeodesicState k3 = geodesic_rhs(space, {s.x + 0.5 * h * k2.x, s.v + 0.5 * h * k2.v});
    const GeodesicState k4 = geodesic_rhs(space, {s.x + h * k3.x, s.v + h * k3.v});
    s.x += (h / 6.0) * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x);
    s.v += (h / 6.0) * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v);
    nodes->col(k + 1) = s.x;
    velocities->col(k + 1) = s.v;
  }
}

}  // namespace

GeodesicResult shoot_geodesic(const ChartSpace& space, const Vec& x0, const Vec& x1, TimeGrid grid,
                              double tol, int max_newton) {
  require(space.domain(x0) && space.domain(x1), "shoot_geodesic: endpoints outside the domain");
  const Index d = space.dim;
  GeodesicResult res;
  res.nodes.resize(d, grid.n_nodes());
  res.velocities.resize(d, grid.n_nodes());

  Vec v0 = x1 - x0;
  auto miss = [&](const Vec& v, Mat* n, Mat* vel) {
    integrate_geodesic(space, x0, v, grid, n, vel);
    return (n->col(grid.n_nodes() - 1) - x1).eval();
  };

  Mat n_buf(d, grid.n_nodes()), v_buf(d, grid.n_nodes());
  Vec f = miss(v0, &res.nodes, &res.velocities);
  int it = 0;
  for (; it < max_newton && f.norm() > tol; ++it) {
    Mat jac(d, d);
    const double delta = 1e-6 * (1.0 + v0.norm());
    for (Index i = 0; i < d; ++i) {
      Vec vp = v0, vm = v0;
      vp[i] += delta;
      vm[i] -= delta;
      const Vec fp = miss(vp, &n_buf, &v_buf);
      const Vec fm = miss(vm, &n_buf, &v_buf);
      jac.col(i) = (fp - fm) / (2.0 * delta);
    }
    Vec step = jac.fullPivLu().solve(f);
    double damping = 1.0;
    for (int half = 0; half < 8; ++half) {
      const Vec trial = v0 - damping * step;
      const Vec ft = miss(trial, &n_buf, &v_buf);
      if (ft.norm() < f.norm()) {
        v0 = trial;
        f = ft;
        res.nodes = n_buf;
        res.velocities = v_buf;
        break;
      }
      damping *= 0.5;
      if (half == 7) throw std::runtime_error("shoot_geodesic: Newton update stalled");
    }
  }
  if (f.norm() > tol) throw std::runtime_error("shoot_geodesic: endpoint miss above tolerance");
  res.endpoint_miss = f.norm();
  res.newton_iterations = it;

  std::vector<double> seg;
  seg.reserve(static_cast<std::size_t>(grid.n_nodes()));
  const double dt = grid.dt();
  for (Index k = 0; k < grid.n_nodes(); ++k) {
    const double s = metric_norm(space, res.nodes.col(k), res.velocities.col(k));
    seg.push_back((k == 0 || k == grid.n_nodes() - 1 ? 0.5 : 1.0) * s * dt);
  }
  res.length = stable_sum(seg);
  return res;
}

TestPlan build_geodesic_plan(const ChartSpace& space, const RegionPredicate& source,
                             const RegionPredicate& target, Index n_curves, TimeGrid grid,
                             std::uint64_t seed) {
  require(n_curves >= 1, "build_geodesic_plan: need curves");
  std::vector<const SamplePoint*> src, dst;
  for (const auto& s : space.sample_points) {
    if (source(s.x)) src.push_back(&s);
    if (target(s.x)) dst.push_back(&s);
  }
  require(!src.empty() && !dst.empty(), "build_geodesic_plan: empty endpoint region");

  Rng rng(seed);
  auto pick = [&rng](const std::vector<const SamplePoint*>& pool) {
    std::vector<double> masses;
    masses.reserve(pool.size());
    for (const auto* p : pool) masses.push_back(p->mass);
    double total = 0.0;
    for (double m : masses) total += m;
    double u = rng.uniform() * total;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      u -= masses[i];
      if (u <= 0.0) return pool[i]->x;
    }
    return pool.back()->x;
  };

  std::vector<Mat> curves, velocities;
  for (Index k = 0; k < n_curves; ++k) {
    const Vec a = pick(src);
    const Vec b = pick(dst);
    GeodesicResult g = shoot_geodesic(space, a, b, grid);
    curves.push_back(std::move(g.nodes));
    velocities.push_back(std::move(g.velocities));
  }
  Vec weights = Vec::Constant(n_curves, 1.0 / static_cast<double>(n_curves));
  return make_test_plan(space, grid, std::move(curves), std::move(velocities),
                        std::move(weights));
}

TestPlan latitude_circle_plan(const ChartSpace& space, double theta0, Index n_curves,
                              TimeGrid grid) {
  require(n_curves >= 1, "latitude_circle_plan: need curves");
  std::vector<Mat> curves;
  for (Index k = 0; k < n_curves; ++k) {
    const double phi0 = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n_curves);
    Mat c(2, grid.n_nodes());
    for (Index t = 0; t < grid.n_nodes(); ++t) {
      c(0, t) = theta0;
      c(1, t) = phi0 + 2.0 * M_PI * grid.node(t);
    }
    curves.push_back(std::move(c));
  }
  Vec weights = Vec::Constant(n_curves, 1.0 / static_cast<double>(n_curves));
  return make_test_plan(space, grid, std::move(curves), std::move(weights));
}

TestPlan segment_bundle_plan(const ChartSpace& space, Index n_curves, TimeGrid grid) {
  require(n_curves >= 1, "segment_bundle_plan: need curves");
  Vec lo = Vec::Constant(space.dim, std::numeric_limits<double>::infinity());
  Vec hi = Vec::Constant(space.dim, -std::numeric_limits<double>::infinity());
  for (const auto& s : space.sample_points) {
    lo = lo.cwiseMin(s.x);
    hi = hi.cwiseMax(s.x);
  }
  std::vector<Mat> curves;
  for (Index k = 0; k < n_curves; ++k) {
    const double frac = n_curves == 1 ? 0.5
                                      : static_cast<double>(k) / static_cast<double>(n_curves - 1);
    const double y = lo[1] + frac * (hi[1] - lo[1]);
    Mat c(2, grid.n_nodes());
    for (Index t = 0; t < grid.n_nodes(); ++t) {
      c(0, t) = lo[0] + (hi[0] - lo[0]) * grid.node(t);
      c(1, t) = y;
    }
    curves.push_back(std::move(c));
  }
  Vec weights = Vec::Constant(n_curves, 1.0 / static_cast<double>(n_curves));
  return make_test_plan(space, grid, std::move(curves), std::move(weights));
}

TestPlan custom_waypoints_plan(const ChartSpace& space, const std::vector<Mat>& waypoints,
                               Vec weights, TimeGrid grid) {
  std::vector<Mat> curves;
  for (const Mat& w : waypoints) {
    require(w.cols() >= 2, "custom_waypoints_plan: need at least two waypoints");
    const Index m = w.cols();
    std::vector<double> cumulative(static_cast<std::size_t>(m), 0.0);
    for (Index j = 1; j < m; ++j)
      cumulative[static_cast<std::size_t>(j)] =
          cumulative[static_cast<std::size_t>(j - 1)] + (w.col(j) - w.col(j - 1)).norm();
    const double total = cumulative.back();
    require(total > 0.0, "custom_waypoints_plan: degenerate waypoint list");
    Mat c(w.rows(), grid.n_nodes());
    for (Index t = 0; t < grid.n_nodes(); ++t) {
      const double s = grid.node(t) * total;
      Index j = 1;
      while (j < m - 1 && cumulative[static_cast<std::size_t>(j)] < s) ++j;
      const double s0 = cumulative[static_cast<std::size_t>(j - 1)];
      const double s1 = cumulative[static_cast<std::size_t>(j)];
      const double u = s1 > s0 ? (s - s0) / (s1 - s0) : 0.0;
      c.col(t) = (1.0 - u) * w.col(j - 1) + u * w.col(j);
    }
    curves.push_back(std::move(c));
  }
  return make_test_plan(space, grid, std::move(curves), std::move(weights));
}

TestPlan spherical_triangle_plan(const ChartSpace& space, Index n_steps) {
  require(n_steps % 3 == 0 && n_steps >= 6, "spherical_triangle_plan: steps must be 3m");
  // Orthonormal triad rotated so its triangle surrounds the north pole at a
  // safe colatitude; every vertex direction has z-component 1/sqrt(3).
  Mat rot(3, 3);
  const double s2 = 1.0 / std::sqrt(2.0), s3 = 1.0 / std::sqrt(3.0), s6 = 1.0 / std::sqrt(6.0);
  rot << s2, -s2, 0.0, s6, s6, -2.0 * s6, s3, s3, s3;
  std::vector<Vec> verts;
  for (Index i = 0; i < 3; ++i) verts.push_back(rot.col(i));

  const Index per_edge = n_steps / 3;
  Mat curve(2, n_steps + 1);
  Mat velocity(2, n_steps + 1);
  double phi_prev = 0.0;
  for (Index edge = 0; edge < 3; ++edge) {
    const Vec a = verts[static_cast<std::size_t>(edge)];
    const Vec b = verts[static_cast<std::size_t>((edge + 1) % 3)];
    for (Index j = 0; j <= per_edge; ++j) {
      const Index node = edge * per_edge + j;
      if (edge > 0 && j == 0) continue;  // corner already written
      const double s = (M_PI / 2.0) * static_cast<double>(j) / static_cast<double>(per_edge);
      const Vec p = std::cos(s) * a + std::sin(s) * b;    // unit vector
      const Vec dp = (M_PI / 2.0) * 3.0 * (std::cos(s) * b - std::sin(s) * a);  // d/dt, t in [0,1]
      const double theta = std::acos(std::min(1.0, std::max(-1.0, p[2])));
      double phi = std::atan2(p[1], p[0]);
      if (node > 0) {
        while (phi - phi_prev > M_PI) phi -= 2.0 * M_PI;
        while (phi - phi_prev < -M_PI) phi += 2.0 * M_PI;
      }
      phi_prev = phi;
      const double st = std::sin(theta);
      const double theta_dot = -dp[2] / st;
      const double phi_dot = (p[0] * dp[1] - p[1] * dp[0]) / (p[0] * p[0] + p[1] * p[1]);
      curve(0, node) = theta;
      curve(1, node) = phi;
      Vec v(2);
      v << theta_dot, phi_dot;
      velocity.col(node) = v;
      // Interior corners get the mean of incoming and outgoing tangents so
      // the trapezoidal transport integral keeps second-order accuracy.
      if (j == per_edge && edge < 2) {
        const Vec b_next = verts[static_cast<std::size_t>((edge + 2) % 3)];
        const Vec dp_out = (M_PI / 2.0) * 3.0 * b_next;  // s = 0 on the next edge: cos0*b_next - sin0*a
        // outgoing tangent at the corner (next edge starts at point b)
        const double theta_dot_out = -dp_out[2] / st;
        const double phi_dot_out =
            (p[0] * dp_out[1] - p[1] * dp_out[0]) / (p[0] * p[0] + p[1] * p[1]);
        velocity(0, node) = 0.5 * (theta_dot + theta_dot_out);
        velocity(1, node) = 0.5 * (phi_dot + phi_dot_out);
      }
    }
  }
  std::vector<Mat> curves{curve};
  std::vector<Mat> velocities{velocity};
  Vec weights = Vec::Ones(1);
  return make_test_plan(space, TimeGrid(n_steps), std::move(curves), std::move(velocities),
                        std::move(weights));
}

}  // namespace mmpt
