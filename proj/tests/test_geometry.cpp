#include <doctest.h>

#include "mmpt/chart_space.hpp"

#include <cmath>

using namespace mmpt;

namespace {

// Independent route to the connection: Gamma^k_{ij} = g^{kl}(d_i g_{lj} +
// d_j g_{li} - d_l g_{ij}) / 2 with central differences on the declared
// metric. Validates that each builder's symbols belong to its metric.
std::vector<Mat> christoffel_from_metric(const ChartSpace& space, const Vec& x, double h) {
  std::vector<Mat> dg(2, Mat::Zero(2, 2));
  for (Index i = 0; i < 2; ++i) {
    Vec xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    dg[static_cast<std::size_t>(i)] = (space.metric(xp) - space.metric(xm)) / (2.0 * h);
  }
  const Mat ginv = space.metric(x).inverse();
  std::vector<Mat> gamma(2, Mat::Zero(2, 2));
  for (Index k = 0; k < 2; ++k)
    for (Index i = 0; i < 2; ++i)
      for (Index j = 0; j < 2; ++j) {
        double sum = 0.0;
        for (Index l = 0; l < 2; ++l)
          sum += ginv(k, l) *
                 (dg[static_cast<std::size_t>(i)](l, j) + dg[static_cast<std::size_t>(j)](l, i) -
                  dg[static_cast<std::size_t>(l)](i, j));
        gamma[static_cast<std::size_t>(k)](i, j) = 0.5 * sum;
      }
  return gamma;
}

Vec pt(double a, double b) {
  Vec x(2);
  x << a, b;
  return x;
}

}  // namespace

TEST_CASE("flat plane is Euclidean") {
  const ChartSpace s = flat_plane();
  const Vec x = pt(0.3, -0.7);
  CHECK((s.metric(x) - Mat::Identity(2, 2)).norm() == 0.0);
  for (const Mat& g : s.christoffel(x)) CHECK(g.norm() == 0.0);
  CHECK(s.density(x) == 1.0);
  // 12x12 closed lattice on [-1,1]^2 with cell weights (2/11)^2
  CHECK(s.total_mass() == doctest::Approx(144.0 * (2.0 / 11.0) * (2.0 / 11.0)).epsilon(1e-14));
  CHECK(metric_inner(s, x, pt(3.0, 0.0), pt(0.0, 4.0)) == 0.0);
  CHECK(metric_norm(s, x, pt(3.0, 4.0)) == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("declared symbols match the ones derived from the metric") {
  struct Probe {
    ChartSpace space;
    Vec x;
  };
  const std::vector<Probe> probes = {
      {flat_plane(), pt(0.2, 0.4)},
      {round_sphere(), pt(M_PI / 3.0, 1.1)},
      {round_sphere(2.0), pt(2.0, 4.0)},
      {flat_torus(), pt(0.3, 0.6)},
      {cone(), pt(0.9, 2.0)},
      {cone(0.5, 0.3, 2.0), pt(1.2, -1.0)},
      {two_strata_strip(), pt(-0.4, 0.1)},
  };
  for (const auto& p : probes) {
    const auto derived = christoffel_from_metric(p.space, p.x, 1e-5);
    const auto declared = p.space.christoffel(p.x);
    REQUIRE(declared.size() == 2);
    for (std::size_t k = 0; k < 2; ++k) {
      CHECK((declared[k] - derived[k]).cwiseAbs().maxCoeff() < 1e-6);
      // symmetry in the lower indices
      CHECK((declared[k] - declared[k].transpose()).norm() == 0.0);
    }
  }
}

TEST_CASE("metric is symmetric positive definite on every builder") {
  const std::vector<ChartSpace> spaces = {flat_plane(), round_sphere(), flat_torus(), cone(),
                                          two_strata_strip()};
  for (const auto& s : spaces) {
    for (std::size_t i = 0; i < s.sample_points.size(); i += 7) {
      const Mat g = s.metric(s.sample_points[i].x);
      CHECK((g - g.transpose()).norm() == 0.0);
      const Eigen::SelfAdjointEigenSolver<Mat> es(g);
      CHECK(es.eigenvalues().minCoeff() > 0.0);
      CHECK(s.sample_points[i].mass > 0.0);
      CHECK(s.domain(s.sample_points[i].x));
    }
  }
}

TEST_CASE("identity field on the plane has Hilbert-Schmidt norm sqrt(2)") {
  const ChartSpace s = flat_plane();
  VectorField ident;
  ident.eval = [](const Vec& x) { return x; };
  ident.jacobian = [](const Vec&) { return Mat::Identity(2, 2).eval(); };
  CHECK(hs_norm(s, ident, pt(0.1, 0.9)) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  // same through the finite-difference fallback
  VectorField no_jac;
  no_jac.eval = ident.eval;
  CHECK(hs_norm(s, no_jac, pt(0.1, 0.9)) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-6));
}

TEST_CASE("sphere: colatitude frame field has Hilbert-Schmidt norm |cot theta|") {
  // w = d_theta in chart components; nabla w = cot(theta) d_phi ox d_phi^b,
  // whose HS norm is |cot theta| independent of the radius.
  for (double radius : {1.0, 2.0}) {
    const ChartSpace s = round_sphere(radius);
    VectorField w;
    w.eval = [](const Vec&) { return pt(1.0, 0.0); };
    w.jacobian = [](const Vec&) { return Mat::Zero(2, 2).eval(); };
    CHECK(hs_norm(s, w, pt(M_PI / 4.0, 0.3)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(hs_norm(s, w, pt(M_PI / 3.0, 2.0)) ==
          doctest::Approx(1.0 / std::tan(M_PI / 3.0)).epsilon(1e-12));
  }
}

TEST_CASE("sphere covariant derivative of the azimuth field") {
  const ChartSpace s = round_sphere();
  VectorField v;
  v.eval = [](const Vec&) { return pt(0.0, 1.0); };
  v.jacobian = [](const Vec&) { return Mat::Zero(2, 2).eval(); };
  const Vec x = pt(M_PI / 4.0, 1.0);
  // (nabla_{d_phi} d_phi)^k = Gamma^k_{phi phi} = (-sin cos, 0)
  const Vec d = covariant_derivative(s, v, x, pt(0.0, 1.0));
  CHECK(d[0] == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(d[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("covariant differentiation is metric compatible") {
  // u (g(v, w)) = g(nabla_u v, w) + g(v, nabla_u w) checked against a central
  // difference of the inner product, on curved builders.
  struct Probe {
    ChartSpace space;
    Vec x;
  };
  const std::vector<Probe> probes = {{round_sphere(), pt(1.1, 0.7)}, {cone(), pt(1.0, 1.5)}};
  VectorField v;
  v.eval = [](const Vec& x) { return pt(std::sin(x[1]), std::cos(x[0])); };
  VectorField w;
  w.eval = [](const Vec& x) { return pt(x[0] * x[1], 1.0 + x[0]); };
  for (const auto& p : probes) {
    for (Index dir = 0; dir < 2; ++dir) {
      const Vec u = Vec::Unit(2, dir);
      const double h = 1e-5;
      Vec xp = p.x, xm = p.x;
      xp[dir] += h;
      xm[dir] -= h;
      const double lhs = (metric_inner(p.space, xp, v.eval(xp), w.eval(xp)) -
                          metric_inner(p.space, xm, v.eval(xm), w.eval(xm))) /
                         (2.0 * h);
      const double rhs = metric_inner(p.space, p.x, covariant_derivative(p.space, v, p.x, u),
                                      w.eval(p.x)) +
                         metric_inner(p.space, p.x, v.eval(p.x),
                                      covariant_derivative(p.space, w, p.x, u));
      CHECK(std::abs(lhs - rhs) < 1e-5);
    }
  }
}

TEST_CASE("field jacobian prefers the declared matrix and falls back to differences") {
  const ChartSpace s = flat_plane();
  const Vec x = pt(0.25, -0.5);
  Mat truth(2, 2);
  truth << std::cos(x[0]), 0.0, 0.0, -std::sin(x[1]);
  VectorField analytic;
  analytic.eval = [](const Vec& y) { return pt(std::sin(y[0]), std::cos(y[1])); };
  analytic.jacobian = [truth](const Vec&) { return truth; };
  CHECK((field_jacobian(s, analytic, x) - truth).norm() == 0.0);
  VectorField numeric;
  numeric.eval = analytic.eval;
  CHECK((field_jacobian(s, numeric, x) - truth).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("dimension profile distinguishes constant and stratified spaces") {
  const DimensionProfile flat = dimension_profile(flat_plane());
  CHECK(flat.constant);
  CHECK(flat.max_label == 2);

  const ChartSpace strip = two_strata_strip();
  const DimensionProfile prof = dimension_profile(strip);
  CHECK_FALSE(prof.constant);
  CHECK(prof.max_label == 2);
  CHECK(stratum_label(strip, pt(-0.5, 0.0)) == 1);
  CHECK(stratum_label(strip, pt(0.5, 0.0)) == 2);
  bool saw1 = false, saw2 = false;
  for (int l : prof.labels) {
    if (l == 1) saw1 = true;
    if (l == 2) saw2 = true;
  }
  CHECK(saw1);
  CHECK(saw2);
}

TEST_CASE("canonicalize folds periodic coordinates") {
  const ChartSpace sph = round_sphere();
  const Vec folded = sph.canonicalize(pt(1.0, 2.0 * M_PI + 0.3));
  CHECK(folded[0] == 1.0);
  CHECK(folded[1] == doctest::Approx(0.3).epsilon(1e-12));
  const Vec neg = sph.canonicalize(pt(1.0, -0.5));
  CHECK(neg[1] == doctest::Approx(2.0 * M_PI - 0.5).epsilon(1e-12));

  const ChartSpace torus = flat_torus(1.0, 2.0);
  const Vec t = torus.canonicalize(pt(1.25, -0.25));
  CHECK(t[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(t[1] == doctest::Approx(1.75).epsilon(1e-12));
}

TEST_CASE("masked fields vanish off their stratum") {
  VectorField half;
  half.eval = [](const Vec&) { return pt(1.0, 2.0); };
  half.mask = [](const Vec& x) { return x[0] < 0.0; };
  CHECK((half.value(pt(-0.5, 0.0)) - pt(1.0, 2.0)).norm() == 0.0);
  CHECK(half.value(pt(0.5, 0.0)).norm() == 0.0);
}

TEST_CASE("builders reject bad parameters") {
  CHECK_THROWS(flat_plane(-1.0));
  CHECK_THROWS(round_sphere(0.0));
  CHECK_THROWS(round_sphere(1.0, 0.0, M_PI));  // band must avoid the poles
  CHECK_THROWS(cone(0.0));
  CHECK_THROWS(flat_torus(0.0, 1.0));
}

TEST_CASE("stratum lookup rejects points in no stratum") {
  ChartSpace s = flat_plane();
  s.strata = {{2, [](const Vec& x) { return x[0] > 0.0; }}};
  CHECK(stratum_label(s, pt(0.5, 0.0)) == 2);
  CHECK_THROWS(stratum_label(s, pt(-0.5, 0.0)));
}
