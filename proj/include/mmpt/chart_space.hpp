#pragma once

#include "mmpt/common.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mmpt {

// One weighted sample of the reference measure.
struct SamplePoint {
  Vec x;
  double mass = 0.0;
};

// A piece of the dimensional decomposition: `label` is the pointwise module
// dimension on the region.
using RegionPredicate = std::function<bool(const Vec&)>;

struct Stratum {
  int label = 0;
  std::function<bool(const Vec&)> region;
};

// Discretized metric measure space presented in a single chart. Callbacks
// must be valid on `domain`; the measure lives on the weighted sample set.
struct ChartSpace {
  Index dim = 0;
  std::function<bool(const Vec&)> domain;
  std::function<Mat(const Vec&)> metric;                 // SPD dim x dim
  std::function<std::vector<Mat>(const Vec&)> christoffel;  // [k](i,j), symmetric in (i,j)
  std::function<double(const Vec&)> density;
  // Folds periodic coordinates back into the fundamental domain; identity for
  // charts without periods. Used when binning positions against the measure.
  std::function<Vec(const Vec&)> canonicalize;
  std::vector<Stratum> strata;
  std::vector<SamplePoint> sample_points;
  std::string name;

  double total_mass() const {
    std::vector<double> m;
    m.reserve(sample_points.size());
    for (const auto& s : sample_points) m.push_back(s.mass);
    return stable_sum(m);
  }
};

struct TangentVector {
  Vec base;
  Vec components;
};

// Vector field in chart components. `jacobian`, when present, returns the
// matrix J(k, i) = d_i v^k; otherwise central differences are used. An
// optional mask confines the field to a stratum: it evaluates to zero
// outside.
struct VectorField {
  std::function<Vec(const Vec&)> eval;
  std::function<Mat(const Vec&)> jacobian;
  std::function<bool(const Vec&)> mask;

  Vec value(const Vec& x) const {
    if (mask && !mask(x)) return Vec::Zero(x.size());
    return eval(x);
  }
};

double metric_inner(const ChartSpace& space, const Vec& x, const Vec& u, const Vec& v);
double metric_norm(const ChartSpace& space, const Vec& x, const Vec& v);

// J(k, i) = d_i v^k by the field's own jacobian or central differences with
// h = fd_step_scale * (1 + |x|). Stencils that would leave the domain shrink
// h a few times before giving up.
Mat field_jacobian(const ChartSpace& space, const VectorField& v, const Vec& x,
                   double fd_step_scale = 1e-5);

// (nabla_w v)^k = w^i d_i v^k + Gamma^k_{ij} w^i v^j.
Vec covariant_derivative(const ChartSpace& space, const VectorField& v, const Vec& x,
                         const Vec& w);

// Pointwise Hilbert-Schmidt norm of nabla v, indices raised and lowered with
// the metric.
double hs_norm(const ChartSpace& space, const VectorField& v, const Vec& x);

struct DimensionProfile {
  std::vector<int> labels;  // per sample point
  bool constant = false;
  int max_label = 0;
};

// Assigns every sample point to the first stratum containing it; errors if a
// sample point lies in none.
DimensionProfile dimension_profile(const ChartSpace& space);

int stratum_label(const ChartSpace& space, const Vec& x);

// Builders. All charts are two-dimensional.
ChartSpace flat_plane(double half_extent = 1.0, Index lattice_n = 12);
// Colatitude band theta in [band_lo, band_hi], azimuth unwrapped on the
// universal cover (the metric is phi-independent).
ChartSpace round_sphere(double radius = 1.0, double band_lo = M_PI / 6.0,
                        double band_hi = 5.0 * M_PI / 6.0, Index lattice_n_theta = 25,
                        Index lattice_n_phi = 48);
ChartSpace flat_torus(double period_x = 1.0, double period_y = 1.0, Index lattice_n = 16);
// Flat cone of apex factor k in (0, 1]: ds^2 = dr^2 + (k r)^2 dphi^2 on an
// annulus away from the apex.
ChartSpace cone(double apex_factor = 0.75, double r_lo = 0.4, double r_hi = 1.6,
                Index lattice_n_r = 13, Index lattice_n_phi = 40);
// Flat strip carrying two strata: module dimension 1 for x < 0, dimension 2
// for x >= 0.
ChartSpace two_strata_strip(double half_extent = 1.0, Index lattice_n = 12);

}  // namespace mmpt
