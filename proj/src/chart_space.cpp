#include "mmpt/chart_space.hpp"

namespace mmpt {

double metric_inner(const ChartSpace& space, const Vec& x, const Vec& u, const Vec& v) {
  require(u.size() == space.dim && v.size() == space.dim, "metric_inner: dimension mismatch");
  const Mat g = space.metric(x);
  return u.dot(g * v);
}

double metric_norm(const ChartSpace& space, const Vec& x, const Vec& v) {
  return std::sqrt(std::max(0.0, metric_inner(space, x, v, v)));
}

Mat field_jacobian(const ChartSpace& space, const VectorField& v, const Vec& x,
                   double fd_step_scale) {
  if (v.jacobian && !(v.mask && !v.mask(x))) return v.jacobian(x);
  const Index d = space.dim;
  Mat jac(d, d);
  double h = fd_step_scale * (1.0 + x.norm());
  for (int attempt = 0;; ++attempt) {
    bool inside = true;
    for (Index i = 0; i < d && inside; ++i) {
      Vec xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      if (!space.domain(xp) || !space.domain(xm)) {
        inside = false;
        break;
      }
      jac.col(i) = (v.value(xp) - v.value(xm)) / (2.0 * h);
    }
    if (inside) return jac;
    if (attempt >= 3)
      throw std::runtime_error(
          "field_jacobian: difference stencil leaves the chart domain; shrink the step or supply "
          "a jacobian");
    h *= 0.1;
  }
}

Vec covariant_derivative(const ChartSpace& space, const VectorField& v, const Vec& x,
                         const Vec& w) {
  require(w.size() == space.dim, "covariant_derivative: direction dimension mismatch");
  const Mat jac = field_jacobian(space, v, x);
  const Vec vx = v.value(x);
  const std::vector<Mat> gamma = space.christoffel(x);
  Vec out = jac * w;
  for (Index k = 0; k < space.dim; ++k) out[k] += w.dot(gamma[static_cast<std::size_t>(k)] * vx);
  return out;
}

double hs_norm(const ChartSpace& space, const VectorField& v, const Vec& x) {
  const Mat jac = field_jacobian(space, v, x);
  const Vec vx = v.value(x);
  const std::vector<Mat> gamma = space.christoffel(x);
  // T^k_i = d_i v^k + Gamma^k_{ij} v^j
  Mat t = jac;
  for (Index k = 0; k < space.dim; ++k)
    t.row(k) += (gamma[static_cast<std::size_t>(k)] * vx).transpose();
  const Mat g = space.metric(x);
  const Mat ginv = g.inverse();
  // |T|^2 = g_{kl} g^{ij} T^k_i T^l_j
  return std::sqrt(std::max(0.0, (ginv * t.transpose() * g * t).trace()));
}

int stratum_label(const ChartSpace& space, const Vec& x) {
  for (const auto& s : space.strata)
    if (s.region(x)) return s.label;
  throw std::runtime_error("stratum_label: point lies in no stratum");
}

DimensionProfile dimension_profile(const ChartSpace& space) {
  DimensionProfile out;
  out.labels.reserve(space.sample_points.size());
  for (const auto& s : space.sample_points) out.labels.push_back(stratum_label(space, s.x));
  out.constant = true;
  for (int l : out.labels) {
    out.max_label = std::max(out.max_label, l);
    if (l != out.labels.front()) out.constant = false;
  }
  return out;
}

namespace {

std::vector<Mat> zero_christoffel(Index d) {
  return std::vector<Mat>(static_cast<std::size_t>(d), Mat::Zero(d, d));
}

std::vector<SamplePoint> lattice_samples(double x_lo, double x_hi, double y_lo, double y_hi,
                                         Index nx, Index ny, bool half_open_x, bool half_open_y,
                                         const std::function<double(const Vec&)>& density) {
  std::vector<SamplePoint> pts;
  pts.reserve(static_cast<std::size_t>(nx * ny));
  const double dx = (x_hi - x_lo) / static_cast<double>(half_open_x ? nx : nx - 1);
  const double dy = (y_hi - y_lo) / static_cast<double>(half_open_y ? ny : ny - 1);
  for (Index i = 0; i < nx; ++i) {
    for (Index j = 0; j < ny; ++j) {
      Vec x(2);
      x << x_lo + dx * static_cast<double>(i), y_lo + dy * static_cast<double>(j);
      pts.push_back({x, density(x) * dx * dy});
    }
  }
  return pts;
}

}  // namespace

ChartSpace flat_plane(double half_extent, Index lattice_n) {
  require(half_extent > 0 && lattice_n >= 2, "flat_plane: bad parameters");
  ChartSpace s;
  s.dim = 2;
  s.name = "flat_plane";
  s.domain = [](const Vec&) { return true; };
  s.metric = [](const Vec&) { return Mat::Identity(2, 2); };
  s.christoffel = [](const Vec&) { return zero_christoffel(2); };
  s.density = [](const Vec&) { return 1.0; };
  s.canonicalize = [](const Vec& x) { return x; };
  s.strata = {{2, [](const Vec&) { return true; }}};
  s.sample_points = lattice_samples(-half_extent, half_extent, -half_extent, half_extent,
                                    lattice_n, lattice_n, false, false, s.density);
  return s;
}

ChartSpace round_sphere(double radius, double band_lo, double band_hi, Index lattice_n_theta,
                        Index lattice_n_phi) {
  require(radius > 0, "round_sphere: radius must be positive");
  require(0 < band_lo && band_lo < band_hi && band_hi < M_PI, "round_sphere: bad band");
  ChartSpace s;
  s.dim = 2;
  s.name = "round_sphere";
  const double eps = 1e-3;
  s.domain = [eps](const Vec& x) { return x[0] > eps && x[0] < M_PI - eps; };
  s.metric = [radius](const Vec& x) {
    Mat g = Mat::Zero(2, 2);
    const double st = std::sin(x[0]);
    g(0, 0) = radius * radius;
    g(1, 1) = radius * radius * st * st;
    return g;
  };
  s.christoffel = [](const Vec& x) {
    const double st = std::sin(x[0]);
    const double ct = std::cos(x[0]);
    std::vector<Mat> gamma = zero_christoffel(2);
    gamma[0](1, 1) = -st * ct;         // Gamma^theta_{phi phi}
    gamma[1](0, 1) = ct / st;          // Gamma^phi_{theta phi}
    gamma[1](1, 0) = ct / st;
    return gamma;
  };
  s.density = [radius](const Vec& x) { return radius * radius * std::sin(x[0]); };
  s.canonicalize = [](const Vec& x) {
    Vec y = x;
    y[1] = std::fmod(y[1], 2.0 * M_PI);
    if (y[1] < 0) y[1] += 2.0 * M_PI;
    return y;
  };
  s.strata = {{2, [](const Vec&) { return true; }}};
  s.sample_points = lattice_samples(band_lo, band_hi, 0.0, 2.0 * M_PI, lattice_n_theta,
                                    lattice_n_phi, false, true, s.density);
  return s;
}

ChartSpace flat_torus(double period_x, double period_y, Index lattice_n) {
  require(period_x > 0 && period_y > 0 && lattice_n >= 2, "flat_torus: bad parameters");
  ChartSpace s;
  s.dim = 2;
  s.name = "flat_torus";
  s.domain = [](const Vec&) { return true; };
  s.metric = [](const Vec&) { return Mat::Identity(2, 2); };
  s.christoffel = [](const Vec&) { return zero_christoffel(2); };
  s.density = [](const Vec&) { return 1.0; };
  s.canonicalize = [period_x, period_y](const Vec& x) {
    Vec y = x;
    y[0] = std::fmod(y[0], period_x);
    if (y[0] < 0) y[0] += period_x;
    y[1] = std::fmod(y[1], period_y);
    if (y[1] < 0) y[1] += period_y;
    return y;
  };
  s.strata = {{2, [](const Vec&) { return true; }}};
  s.sample_points =
      lattice_samples(0.0, period_x, 0.0, period_y, lattice_n, lattice_n, true, true, s.density);
  return s;
}

ChartSpace cone(double apex_factor, double r_lo, double r_hi, Index lattice_n_r,
                Index lattice_n_phi) {
  require(apex_factor > 0 && apex_factor <= 1, "cone: apex factor must lie in (0, 1]");
  require(0 < r_lo && r_lo < r_hi, "cone: bad radial range");
  ChartSpace s;
  s.dim = 2;
  s.name = "cone";
  const double k = apex_factor;
  s.domain = [](const Vec& x) { return x[0] > 0.05; };
  s.metric = [k](const Vec& x) {
    Mat g = Mat::Zero(2, 2);
    g(0, 0) = 1.0;
    g(1, 1) = k * k * x[0] * x[0];
    return g;
  };
  s.christoffel = [k](const Vec& x) {
    std::vector<Mat> gamma = zero_christoffel(2);
    gamma[0](1, 1) = -k * k * x[0];  // Gamma^r_{phi phi}
    gamma[1](0, 1) = 1.0 / x[0];     // Gamma^phi_{r phi}
    gamma[1](1, 0) = 1.0 / x[0];
    return gamma;
  };
  s.density = [k](const Vec& x) { return k * x[0]; };
  s.canonicalize = [](const Vec& x) {
    Vec y = x;
    y[1] = std::fmod(y[1], 2.0 * M_PI);
    if (y[1] < 0) y[1] += 2.0 * M_PI;
    return y;
  };
  s.strata = {{2, [](const Vec&) { return true; }}};
  s.sample_points = lattice_samples(r_lo, r_hi, 0.0, 2.0 * M_PI, lattice_n_r, lattice_n_phi,
                                    false, true, s.density);
  return s;
}

ChartSpace two_strata_strip(double half_extent, Index lattice_n) {
  ChartSpace s = flat_plane(half_extent, lattice_n);
  s.name = "two_strata_strip";
  s.strata = {{1, [](const Vec& x) { return x[0] < 0.0; }},
              {2, [](const Vec& x) { return x[0] >= 0.0; }}};
  // Keep lattice columns off x == 0 so the strata split is unambiguous.
  for (auto& p : s.sample_points)
    if (std::abs(p.x[0]) < 1e-12) p.x[0] = 1e-9;
  return s;
}

}  // namespace mmpt
