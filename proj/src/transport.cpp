#include "mmpt/transport.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <memory>

namespace mmpt {

namespace {

Index active_fields(const ChartSpace& space, const FrameField& frame, const Vec& x) {
  const int label = stratum_label(space, x);
  require(label >= 1 && label <= frame.size(),
          "frame_coefficients: stratum dimension exceeds the frame");
  return label;
}

Mat frame_gram(const ChartSpace& space, const FrameField& frame, const Vec& x, Index n) {
  const Mat g = space.metric(x);
  Mat vals(x.size(), n);
  for (Index i = 0; i < n; ++i) vals.col(i) = frame.fields[static_cast<std::size_t>(i)].value(x);
  return vals.transpose() * g * vals;
}

}  // namespace

GoodBaseReport validate_good_base(const ChartSpace& space, const FrameField& frame) {
  GoodBaseReport report;
  const double m = frame.m_constant;
  require(m > 1.0, "validate_good_base: M must exceed one");
  double lo = std::numeric_limits<double>::infinity();
  double up = lo, off = lo, hs = lo;

  for (std::size_t s = 0; s < space.sample_points.size(); ++s) {
    const Vec& x = space.sample_points[s].x;
    const int label = stratum_label(space, x);
    require(label <= frame.size(), "validate_good_base: stratum dimension exceeds the frame");
    const double off_bound = 1.0 / (m * m * static_cast<double>(label));
    for (int i = 0; i < label; ++i) {
      const auto& wi = frame.fields[static_cast<std::size_t>(i)];
      const double norm_i = metric_norm(space, x, wi.value(x));
      const double m_lo = norm_i - 1.0 / m;
      const double m_up = m - norm_i;
      if (m_lo < lo) lo = m_lo;
      if (m_up < up) up = m_up;
      if (m_lo <= 0.0)
        report.violations.push_back({static_cast<Index>(s), i, -1, "norm_lower", norm_i});
      if (m_up <= 0.0)
        report.violations.push_back({static_cast<Index>(s), i, -1, "norm_upper", norm_i});
      const double hs_i = m - hs_norm(space, wi, x);
      if (hs_i < hs) hs = hs_i;
      if (hs_i < 0.0)
        report.violations.push_back({static_cast<Index>(s), i, -1, "hs", m - hs_i});
      for (int j = i + 1; j < label; ++j) {
        const auto& wj = frame.fields[static_cast<std::size_t>(j)];
        const double pair = std::abs(metric_inner(space, x, wi.value(x), wj.value(x)));
        const double m_off = off_bound - pair;
        if (m_off < off) off = m_off;
        if (m_off <= 0.0)
          report.violations.push_back({static_cast<Index>(s), i, j, "offdiag", pair});
      }
    }
  }
  report.margin_norm_lower = lo;
  report.margin_norm_upper = up;
  report.margin_offdiag = off;
  report.margin_hs = hs;
  report.passes = report.violations.empty() && lo > 0.0 && up > 0.0 && off > 0.0 && hs >= 0.0;
  return report;
}

Vec solve_coefficients(const Mat& gram, const Vec& rhs) {
  Eigen::FullPivLU<Mat> lu(gram);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible())
    throw std::runtime_error("solve_coefficients: degenerate frame Gram matrix");
  return lu.solve(rhs);
}

Vec frame_coefficients(const ChartSpace& space, const FrameField& frame, const Vec& x,
                       const Vec& w) {
  const Index n = active_fields(space, frame, x);
  const Mat g = space.metric(x);
  Vec rhs(n);
  for (Index i = 0; i < n; ++i)
    rhs[i] = frame.fields[static_cast<std::size_t>(i)].value(x).dot(g * w);
  return solve_coefficients(frame_gram(space, frame, x, n), rhs);
}

ConnectionPath connection_matrix(const ChartSpace& space, const TestPlan& plan,
                                 const FrameField& frame) {
  ConnectionPath path;
  require(plan.n_curves() >= 1, "connection_matrix: empty plan");
  const Index n = active_fields(space, frame, plan.position(0, 0));
  path.n_fields = n;
  path.h.resize(static_cast<std::size_t>(plan.n_curves()));
  for (Index k = 0; k < plan.n_curves(); ++k) {
    auto& row = path.h[static_cast<std::size_t>(k)];
    row.reserve(static_cast<std::size_t>(plan.grid.n_nodes()));
    for (Index t = 0; t < plan.grid.n_nodes(); ++t) {
      const Vec x = plan.position(k, t);
      require(active_fields(space, frame, x) == n,
              "connection_matrix: plan crosses strata of different dimension");
      const Vec vel = plan.velocity(k, t);
      const Mat g = space.metric(x);
      const Mat gram = frame_gram(space, frame, x, n);
      Eigen::FullPivLU<Mat> lu(gram);
      lu.setThreshold(1e-12);
      if (!lu.isInvertible())
        throw std::runtime_error("connection_matrix: degenerate frame Gram matrix");
      Mat h(n, n);
      for (Index i = 0; i < n; ++i) {
        const Vec dwi =
            covariant_derivative(space, frame.fields[static_cast<std::size_t>(i)], x, vel);
        Vec rhs(n);
        for (Index j = 0; j < n; ++j)
          rhs[j] = frame.fields[static_cast<std::size_t>(j)].value(x).dot(g * dwi);
        h.row(i) = lu.solve(rhs).transpose();
      }
      path.sup_entry = std::max(path.sup_entry, h.cwiseAbs().maxCoeff());
      row.push_back(std::move(h));
    }
  }
  return path;
}

namespace {

// Transport generator B(c, j) = sum_i vel^i Gamma^c_{ij}; the classical
// equation reads V' = -B V.
Mat transport_generator(const ChartSpace& space, const Vec& x, const Vec& vel) {
  const std::vector<Mat> gamma = space.christoffel(x);
  Mat b(x.size(), x.size());
  for (Index c = 0; c < x.size(); ++c)
    b.row(c) = (gamma[static_cast<std::size_t>(c)].transpose() * vel).transpose();
  return b;
}

// Cubic interpolation of node data at panel midpoints; exact at nodes.
Vec half_node(const Mat& data, Index k) {
  const Index n = data.cols();
  if (k == 0) return (5.0 * data.col(0) + 15.0 * data.col(1) - 5.0 * data.col(2) + data.col(3)) / 16.0;
  if (k >= n - 2)
    return (data.col(n - 4) - 5.0 * data.col(n - 3) + 15.0 * data.col(n - 2) +
            5.0 * data.col(n - 1)) /
           16.0;
  return (-data.col(k - 1) + 9.0 * data.col(k) + 9.0 * data.col(k + 1) - data.col(k + 2)) / 16.0;
}

struct CorePath {
  std::vector<Mat> g;  // per curve n x nodes
  PlanField field;
  int iterations = 0;
  double residual = 0.0;
  Index n_fields = 0;
  double sup_entry = 0.0;
};

CorePath transport_core(const ChartSpace& space, const TestPlan& plan, const FrameField& frame,
                        const std::vector<Vec>& initial, double tol, int max_iter) {
  require(static_cast<Index>(initial.size()) == plan.n_curves(),
          "parallel_transport: one initial vector per curve");
  const ConnectionPath conn = connection_matrix(space, plan, frame);
  const Index n = conn.n_fields;
  const Index k_curves = plan.n_curves();

  // Frame values along the plan, cached for reconstruction and coefficients.
  std::vector<std::vector<Mat>> frame_vals(static_cast<std::size_t>(k_curves));
  for (Index k = 0; k < k_curves; ++k) {
    auto& per_field = frame_vals[static_cast<std::size_t>(k)];
    per_field.assign(static_cast<std::size_t>(n), Mat(plan.dim(), plan.grid.n_nodes()));
    for (Index t = 0; t < plan.grid.n_nodes(); ++t) {
      const Vec x = plan.position(k, t);
      for (Index i = 0; i < n; ++i)
        per_field[static_cast<std::size_t>(i)].col(t) =
            frame.fields[static_cast<std::size_t>(i)].value(x);
    }
  }

  Vec weights(n * k_curves);
  Vec g0(n * k_curves);
  for (Index k = 0; k < k_curves; ++k) {
    require(initial[static_cast<std::size_t>(k)].size() == plan.dim(),
            "parallel_transport: initial vector dimension mismatch");
    const Vec h = frame_coefficients(space, frame, plan.position(k, 0),
                                     initial[static_cast<std::size_t>(k)]);
    for (Index i = 0; i < n; ++i) {
      weights[k * n + i] = plan.weights[k];
      g0[k * n + i] = h[i];
    }
  }

  const WeightedSpace product_space{weights};
  auto h_ptr = std::make_shared<std::vector<std::vector<Mat>>>(conn.h);
  OperatorPath lam{plan.grid, {}, static_cast<double>(n) * conn.sup_entry};
  lam.apply = [h_ptr, n, k_curves](Index t, const Vec& f) {
    Vec out(f.size());
    for (Index k = 0; k < k_curves; ++k) {
      const Mat& h = (*h_ptr)[static_cast<std::size_t>(k)][static_cast<std::size_t>(t)];
      out.segment(k * n, n) = -h.transpose() * f.segment(k * n, n);
    }
    return out;
  };

  OdeSolution sol = [&] {
    try {
      return solve_linear_ode(product_space, g0, lam, tol, max_iter);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error(std::string("parallel_transport: ") + e.what());
    }
  }();

  CorePath core;
  core.iterations = sol.iterations;
  core.residual = sol.residual;
  core.n_fields = n;
  core.sup_entry = conn.sup_entry;
  core.g.reserve(static_cast<std::size_t>(k_curves));
  core.field = PlanField::zero(plan);
  for (Index k = 0; k < k_curves; ++k) {
    Mat gk(n, plan.grid.n_nodes());
    for (Index i = 0; i < n; ++i) gk.row(i) = sol.y.values.row(k * n + i);
    Mat& vk = core.field.values[static_cast<std::size_t>(k)];
    for (Index t = 0; t < plan.grid.n_nodes(); ++t) {
      Vec v = Vec::Zero(plan.dim());
      for (Index i = 0; i < n; ++i)
        v += gk(i, t) * frame_vals[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)].col(t);
      vk.col(t) = v;
    }
    core.g.push_back(std::move(gk));
  }
  return core;
}

// Orthonormal pair from the first two frame fields at a point (2d charts).
Mat orthonormal_pair(const ChartSpace& space, const FrameField& frame, const Vec& x) {
  const Mat g = space.metric(x);
  Vec b1 = frame.fields[0].value(x);
  b1 /= std::sqrt(b1.dot(g * b1));
  Vec b2 = frame.fields[1].value(x);
  b2 -= b1.dot(g * b2) * b1;
  b2 /= std::sqrt(b2.dot(g * b2));
  Mat out(x.size(), 2);
  out.col(0) = b1;
  out.col(1) = b2;
  return out;
}

double wrap_angle(double a) {
  while (a > M_PI) a -= 2.0 * M_PI;
  while (a <= -M_PI) a += 2.0 * M_PI;
  return a;
}

}  // namespace

PlanField transport_oracle(const ChartSpace& space, const TestPlan& plan,
                           const std::vector<Vec>& initial) {
  require(static_cast<Index>(initial.size()) == plan.n_curves(),
          "transport_oracle: one initial vector per curve");
  require(plan.grid.n_nodes() >= 4, "transport_oracle: need at least four nodes");
  PlanField out = PlanField::zero(plan);
  const double h = plan.grid.dt();
  for (Index k = 0; k < plan.n_curves(); ++k) {
    const Mat& curve = plan.curves[static_cast<std::size_t>(k)];
    const Mat& vel = plan.velocities[static_cast<std::size_t>(k)];
    Vec v = initial[static_cast<std::size_t>(k)];
    Mat& dst = out.values[static_cast<std::size_t>(k)];
    dst.col(0) = v;
    for (Index t = 0; t + 1 < plan.grid.n_nodes(); ++t) {
      const Mat b0 = transport_generator(space, curve.col(t), vel.col(t));
      const Mat bh = transport_generator(space, half_node(curve, t), half_node(vel, t));
      const Mat b1 = transport_generator(space, curve.col(t + 1), vel.col(t + 1));
      const Vec k1 = -(b0 * v);
      const Vec k2 = -(bh * (v + 0.5 * h * k1));
      const Vec k3 = -(bh * (v + 0.5 * h * k2));
      const Vec k4 = -(b1 * (v + h * k3));
      v += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      dst.col(t + 1) = v;
    }
  }
  return out;
}

TransportResult parallel_transport(const ChartSpace& space, const TestPlan& plan,
                                   const FrameField& frame, const std::vector<Vec>& initial,
                                   double tol, int max_iter) {
  CorePath core = transport_core(space, plan, frame, initial, tol, max_iter);
  TransportResult result;
  result.g = std::move(core.g);
  result.field = std::move(core.field);
  result.diag.picard_iterations = core.iterations;
  result.diag.residual = core.residual;

  const double s0 = plan_norm(space, plan, result.field, 0);
  double drift = 0.0;
  for (Index t = 0; t < plan.grid.n_nodes(); ++t) {
    const double st = plan_norm(space, plan, result.field, t);
    drift = std::max(drift, std::abs(st * st - s0 * s0));
  }
  result.diag.norm_drift = drift;
  result.diag.leibniz_defect = leibniz_defect(space, plan, result.field, result.field);

  const PlanField reference = transport_oracle(space, plan, initial);
  double gap = 0.0;
  for (Index k = 0; k < plan.n_curves(); ++k)
    for (Index t = 0; t < plan.grid.n_nodes(); ++t)
      gap = std::max(gap, metric_norm(space, plan.position(k, t),
                                      result.field.at(k, t) - reference.at(k, t)));
  result.diag.oracle_gap = gap;

  // Loop holonomy: the angle from V_0 to V_end, each expressed in the fixed
  // orthonormal frame at its own chart point. For a closed curve the two
  // points coincide geometrically (periodic coordinates may differ by a full
  // period), so this is the rotation picked up around the loop.
  result.holonomy = Vec::Constant(plan.n_curves(), std::numeric_limits<double>::quiet_NaN());
  if (plan.dim() == 2 && frame.size() >= 2) {
    const Index last = plan.grid.n_nodes() - 1;
    for (Index k = 0; k < plan.n_curves(); ++k) {
      const Vec x0 = plan.position(k, 0);
      const Vec x1 = plan.position(k, last);
      const Mat pair0 = orthonormal_pair(space, frame, x0);
      const Mat pair1 = orthonormal_pair(space, frame, x1);
      const Mat g0 = space.metric(x0);
      const Mat g1 = space.metric(x1);
      const Vec v0 = result.field.at(k, 0);
      const Vec v1 = result.field.at(k, last);
      const double a1 = v0.dot(g0 * pair0.col(0));
      const double a2 = v0.dot(g0 * pair0.col(1));
      const double c1 = v1.dot(g1 * pair1.col(0));
      const double c2 = v1.dot(g1 * pair1.col(1));
      if (std::hypot(a1, a2) > 0.0 && std::hypot(c1, c2) > 0.0)
        result.holonomy[k] = wrap_angle(std::atan2(c2, c1) - std::atan2(a2, a1));
    }
  }
  return result;
}

TransportCertificates transport_certificates(const ChartSpace& space, const TestPlan& plan,
                                             const FrameField& frame, double tol,
                                             int max_iter) {
  TransportCertificates cert;
  const Index n = active_fields(space, frame, plan.position(0, 0));
  const Index last = plan.grid.n_nodes() - 1;

  std::vector<std::vector<Vec>> initials(static_cast<std::size_t>(n));
  for (Index k = 0; k < plan.n_curves(); ++k) {
    // Orthonormalize the active frame at the curve start.
    const Vec x = plan.position(k, 0);
    const Mat g = space.metric(x);
    Mat basis(plan.dim(), n);
    for (Index i = 0; i < n; ++i) {
      Vec b = frame.fields[static_cast<std::size_t>(i)].value(x);
      for (Index j = 0; j < i; ++j) b -= basis.col(j).dot(g * b) * basis.col(j);
      const double norm = std::sqrt(b.dot(g * b));
      require(norm > 1e-12, "transport_certificates: frame degenerate at a curve start");
      basis.col(i) = b / norm;
    }
    for (Index i = 0; i < n; ++i) initials[static_cast<std::size_t>(i)].push_back(basis.col(i));
  }

  std::vector<CorePath> forward;
  forward.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    forward.push_back(
        transport_core(space, plan, frame, initials[static_cast<std::size_t>(i)], tol, max_iter));

  auto gram_at = [&](Index t) {
    Mat g(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = i; j < n; ++j) {
        std::vector<double> terms;
        terms.reserve(static_cast<std::size_t>(plan.n_curves()));
        for (Index k = 0; k < plan.n_curves(); ++k)
          terms.push_back(plan.weights[k] *
                          metric_inner(space, plan.position(k, t),
                                       forward[static_cast<std::size_t>(i)].field.at(k, t),
                                       forward[static_cast<std::size_t>(j)].field.at(k, t)));
        g(i, j) = stable_sum(terms);
        g(j, i) = g(i, j);
      }
    return g;
  };

  const Mat g_start = gram_at(0);
  for (Index t = 0; t < plan.grid.n_nodes(); ++t) {
    const Mat gt = gram_at(t);
    cert.isometry_defect = std::max(cert.isometry_defect, (gt - g_start).cwiseAbs().maxCoeff());
    for (Index i = 0; i < n; ++i)
      cert.norm_drift =
          std::max(cert.norm_drift, std::abs(gt(i, i) - g_start(i, i)));
  }

  const TestPlan reversed = reverse_plan(space, plan);
  for (Index i = 0; i < n; ++i) {
    std::vector<Vec> back_init;
    for (Index k = 0; k < plan.n_curves(); ++k)
      back_init.push_back(forward[static_cast<std::size_t>(i)].field.at(k, last));
    const CorePath back = transport_core(space, reversed, frame, back_init, tol, max_iter);
    for (Index k = 0; k < plan.n_curves(); ++k) {
      const Vec diff = back.field.at(k, last) - initials[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
      cert.roundtrip_defect = std::max(
          cert.roundtrip_defect, metric_norm(space, plan.position(k, 0), diff));
    }
  }
  return cert;
}

void write_transport_json(const std::string& path, const ChartSpace& space, const TestPlan& plan,
                          const FrameField& frame, const TransportResult& result) {
  nlohmann::json j;
  j["space"] = space.name;
  j["n_curves"] = plan.n_curves();
  j["n_steps"] = plan.grid.n_steps();
  j["lip_constant"] = plan.lip_constant;
  j["frame_m"] = frame.m_constant;
  j["diagnostics"] = {{"norm_drift", result.diag.norm_drift},
                      {"leibniz_defect", result.diag.leibniz_defect},
                      {"oracle_gap", result.diag.oracle_gap},
                      {"residual", result.diag.residual},
                      {"picard_iterations", result.diag.picard_iterations}};
  std::vector<double> hol(result.holonomy.data(), result.holonomy.data() + result.holonomy.size());
  j["holonomy"] = hol;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_transport_json: cannot open " + path);
  out << j.dump(2) << '\n';
}

void write_coefficients_csv(const std::string& path, const TestPlan& plan,
                            const TransportResult& result) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_coefficients_csv: cannot open " + path);
  const Index n = result.g.empty() ? 0 : result.g.front().rows();
  out << "curve,node";
  for (Index i = 0; i < n; ++i) out << ",g" << i + 1;
  out << '\n';
  char buf[40];
  for (Index k = 0; k < plan.n_curves(); ++k)
    for (Index t = 0; t < plan.grid.n_nodes(); ++t) {
      out << k << ',' << t;
      for (Index i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", result.g[static_cast<std::size_t>(k)](i, t));
        out << ',' << buf;
      }
      out << '\n';
    }
}

void write_holonomy_csv(const std::string& path, const TransportResult& result) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_holonomy_csv: cannot open " + path);
  out << "curve,angle_radians\n";
  char buf[40];
  for (Index k = 0; k < result.holonomy.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.17g", result.holonomy[k]);
    out << k << ',' << buf << '\n';
  }
}

FrameField cartesian_frame(double m_constant) {
  FrameField f;
  f.m_constant = m_constant;
  for (Index i = 0; i < 2; ++i) {
    VectorField w;
    w.eval = [i](const Vec& x) {
      Vec v = Vec::Zero(x.size());
      v[i] = 1.0;
      return v;
    };
    w.jacobian = [](const Vec& x) { return Mat::Zero(x.size(), x.size()); };
    f.fields.push_back(std::move(w));
  }
  return f;
}

FrameField sphere_orthonormal_frame(double m_constant) {
  FrameField f;
  f.m_constant = m_constant;
  VectorField w1;
  w1.eval = [](const Vec&) {
    Vec v(2);
    v << 1.0, 0.0;
    return v;
  };
  w1.jacobian = [](const Vec&) { return Mat::Zero(2, 2); };
  VectorField w2;
  w2.eval = [](const Vec& x) {
    Vec v(2);
    v << 0.0, 1.0 / std::sin(x[0]);
    return v;
  };
  w2.jacobian = [](const Vec& x) {
    Mat j = Mat::Zero(2, 2);
    j(1, 0) = -std::cos(x[0]) / (std::sin(x[0]) * std::sin(x[0]));
    return j;
  };
  f.fields = {std::move(w1), std::move(w2)};
  return f;
}

FrameField cone_orthonormal_frame(double apex_factor, double m_constant) {
  FrameField f;
  f.m_constant = m_constant;
  const double k = apex_factor;
  VectorField w1;
  w1.eval = [](const Vec&) {
    Vec v(2);
    v << 1.0, 0.0;
    return v;
  };
  w1.jacobian = [](const Vec&) { return Mat::Zero(2, 2); };
  VectorField w2;
  w2.eval = [k](const Vec& x) {
    Vec v(2);
    v << 0.0, 1.0 / (k * x[0]);
    return v;
  };
  w2.jacobian = [k](const Vec& x) {
    Mat j = Mat::Zero(2, 2);
    j(1, 0) = -1.0 / (k * x[0] * x[0]);
    return j;
  };
  f.fields = {std::move(w1), std::move(w2)};
  return f;
}

FrameField two_strata_frame(double m_constant) {
  FrameField f = cartesian_frame(m_constant);
  f.fields[1].mask = [](const Vec& x) { return x[0] >= 0.0; };
  return f;
}

}  // namespace mmpt
