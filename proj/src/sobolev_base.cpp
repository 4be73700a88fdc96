#include "mmpt/sobolev_base.hpp"

#include "mmpt/common.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace mmpt {

namespace {

// Normalized sample masses; the discrete surrogate of the reference measure.
std::vector<double> normalized_masses(const ChartSpace& space) {
  const double total = space.total_mass();
  require(total > 0.0, "space has no sample mass");
  std::vector<double> m(space.sample_points.size());
  for (std::size_t s = 0; s < m.size(); ++s) m[s] = space.sample_points[s].mass / total;
  return m;
}

double mass_of(const std::vector<Index>& idx, const std::vector<double>& m) {
  std::vector<double> parts;
  parts.reserve(idx.size());
  for (Index s : idx) parts.push_back(m[static_cast<std::size_t>(s)]);
  return stable_sum(parts);
}

}  // namespace

ApproximantSequence make_approximants(const ChartSpace& space, std::vector<VectorField> fields) {
  require(!fields.empty(), "make_approximants: empty field list");
  const auto masses = normalized_masses(space);
  ApproximantSequence seq;
  seq.alpha = Vec::Zero(static_cast<Index>(fields.size()));
  for (std::size_t j = 0; j < fields.size(); ++j) {
    const VectorField& w = fields[j];
    double sup = 0.0;
    std::vector<double> energy;
    energy.reserve(space.sample_points.size());
    for (std::size_t s = 0; s < space.sample_points.size(); ++s) {
      const Vec& x = space.sample_points[s].x;
      if (w.mask && !w.mask(x)) continue;  // field vanishes there, derivative too
      const Vec val = w.value(x);
      const double nrm = metric_norm(space, x, val);
      sup = std::max(sup, nrm);
      const double hs = hs_norm(space, w, x);
      energy.push_back(masses[s] * (nrm * nrm + hs * hs));
    }
    const double w12 = std::sqrt(std::max(0.0, stable_sum(energy)));
    require(sup > 0.0, "make_approximants: an approximant vanishes identically on the samples");
    seq.alpha[static_cast<Index>(j)] = sup + w12;
  }
  seq.fields = std::move(fields);
  return seq;
}

PairingFieldResult nonvanishing_pairing_field(const ChartSpace& space, const VectorField& target,
                                              const ApproximantSequence& approx, double eps) {
  require(!approx.fields.empty(), "nonvanishing_pairing_field: no approximants");
  require(eps > 0.0, "nonvanishing_pairing_field: eps must be positive");
  const auto masses = normalized_masses(space);
  const std::size_t n_samples = space.sample_points.size();

  // Normalize the target so pairings live on a unit scale.
  double sup_target = 0.0;
  std::vector<Vec> target_vals(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) {
    target_vals[s] = target.value(space.sample_points[s].x);
    sup_target = std::max(sup_target, metric_norm(space, space.sample_points[s].x, target_vals[s]));
  }
  const double scale = std::max(1.0, sup_target);

  PairingFieldResult res;
  res.certificate.target_scale = scale;

  // Support of the normalized target above the threshold.
  std::vector<Index> support;
  for (std::size_t s = 0; s < n_samples; ++s) {
    const double nrm = metric_norm(space, space.sample_points[s].x, target_vals[s]) / scale;
    if (nrm > eps) support.push_back(static_cast<Index>(s));
  }
  res.certificate.support_mass = mass_of(support, masses);
  res.certificate.has_support = !support.empty();

  auto assemble = [&](int terms, const std::vector<double>& beta) {
    std::vector<double> coeff(static_cast<std::size_t>(terms));
    for (int i = 0; i < terms; ++i)
      coeff[static_cast<std::size_t>(i)] = beta[static_cast<std::size_t>(i)] / approx.alpha[i];
    auto fields = std::make_shared<std::vector<VectorField>>(
        approx.fields.begin(), approx.fields.begin() + terms);
    auto coeffs = std::make_shared<std::vector<double>>(coeff);
    const Index dim = space.dim;
    VectorField v;
    v.eval = [fields, coeffs, dim](const Vec& x) {
      Vec out = Vec::Zero(dim);
      for (std::size_t i = 0; i < coeffs->size(); ++i) out += (*coeffs)[i] * (*fields)[i].value(x);
      return out;
    };
    bool all_jac = true;
    for (const VectorField& f : *fields)
      if (!f.jacobian || f.mask) all_jac = false;
    if (all_jac) {
      v.jacobian = [fields, coeffs, dim](const Vec& x) {
        Mat out = Mat::Zero(dim, dim);
        for (std::size_t i = 0; i < coeffs->size(); ++i)
          out += (*coeffs)[i] * (*fields)[i].jacobian(x);
        return out;
      };
    }
    res.v = std::move(v);
    res.coefficients = coeff;
    res.certificate.terms = terms;
  };

  if (support.empty()) {
    // Nothing to pair against; return the first term alone for definiteness.
    res.certificate.beta = {1.0};
    assemble(1, res.certificate.beta);
    return res;
  }

  // Pairings of each approximant against the normalized target on the support.
  auto pairings_of = [&](const VectorField& w) {
    std::vector<double> p(support.size());
    for (std::size_t i = 0; i < support.size(); ++i) {
      const std::size_t s = static_cast<std::size_t>(support[i]);
      const Vec& x = space.sample_points[s].x;
      p[i] = metric_inner(space, x, w.value(x), target_vals[s]) / scale;
    }
    return p;
  };

  const double kMassSlack = 1e-15;
  std::vector<double> beta;                 // beta_1..beta_n
  std::vector<double> running(support.size(), 0.0);  // sum_i (beta_i/alpha_i) pair_i
  double gamma_prev = 0.0;                  // gamma_{n+1} of the previous step
  const int n_max = static_cast<int>(approx.fields.size());

  for (int n = 1; n <= n_max; ++n) {
    const std::vector<double> pair_n = pairings_of(approx.fields[static_cast<std::size_t>(n - 1)]);
    double b;
    if (n == 1) {
      b = 1.0;
    } else {
      // Start at gamma/6 and halve away from the finite set of values that
      // would annihilate the running pairing at some support point.
      b = gamma_prev / 6.0;
      const double alpha_n = approx.alpha[n - 1];
      for (int guard = 0; guard < 128; ++guard) {
        bool collides = false;
        for (std::size_t i = 0; i < support.size(); ++i) {
          if (pair_n[i] == 0.0) continue;
          const double forbidden = -running[i] * alpha_n / pair_n[i];
          if (std::abs(b - forbidden) <= 1e-12 * std::max(1.0, std::abs(forbidden))) {
            collides = true;
            break;
          }
        }
        if (!collides) break;
        b *= 0.5;
      }
    }
    beta.push_back(b);
    const double alpha_n = approx.alpha[n - 1];
    for (std::size_t i = 0; i < support.size(); ++i) running[i] += (b / alpha_n) * pair_n[i];

    // Coverage target: where the fresh pairing is active.
    std::vector<Index> active;
    for (std::size_t i = 0; i < support.size(); ++i)
      if (pair_n[i] != 0.0) active.push_back(support[i]);
    const double target_mass = mass_of(active, masses);

    // Largest threshold on the halving grid below beta_n whose superlevel set
    // carries at least the active mass.
    double gamma = 0.0;
    std::vector<Index> covered;
    bool found = false;
    for (int j = 0; j <= 64 && !found; ++j) {
      const double cand = b * std::ldexp(1.0, -j);
      std::vector<Index> e;
      for (std::size_t i = 0; i < support.size(); ++i)
        if (std::abs(running[i]) >= cand) e.push_back(support[i]);
      if (mass_of(e, masses) >= target_mass - kMassSlack) {
        gamma = cand;
        covered = std::move(e);
        found = true;
      }
    }
    if (!found) {
      std::vector<Index> e;
      for (std::size_t i = 0; i < support.size(); ++i)
        if (running[i] != 0.0) e.push_back(support[i]);
      std::ostringstream msg;
      msg << "nonvanishing_pairing_field: stalled at term " << n << "; covered mass "
          << mass_of(e, masses) << " of target " << target_mass;
      throw std::runtime_error(msg.str());
    }
    gamma_prev = gamma;
    res.certificate.gamma.push_back(gamma);
    res.certificate.coverage.push_back(covered);
    res.certificate.coverage_mass.push_back(mass_of(covered, masses));

    if (res.certificate.coverage_mass.back() >= res.certificate.support_mass - kMassSlack) {
      // The superlevel set exhausts the support; later terms only shrink the
      // remaining budget, so the series truncates here.
      double min_abs = std::numeric_limits<double>::infinity();
      for (double r : running) min_abs = std::min(min_abs, std::abs(r));
      res.certificate.min_pairing = min_abs;
      res.certificate.beta = beta;
      assemble(n, beta);
      return res;
    }
  }

  std::ostringstream msg;
  msg << "nonvanishing_pairing_field: approximants exhausted with coverage "
      << (res.certificate.coverage_mass.empty() ? 0.0 : res.certificate.coverage_mass.back())
      << " of support mass " << res.certificate.support_mass;
  throw std::runtime_error(msg.str());
}

VectorField orthogonal_witness(const ChartSpace& space, const std::vector<VectorField>& span,
                               const RegionPredicate& region) {
  std::vector<Index> region_samples;
  for (std::size_t s = 0; s < space.sample_points.size(); ++s)
    if (region(space.sample_points[s].x)) region_samples.push_back(static_cast<Index>(s));
  require(!region_samples.empty(), "orthogonal_witness: region carries no sample points");

  const Index dim = space.dim;
  auto span_ptr = std::make_shared<std::vector<VectorField>>(span);

  // Residual of a constant probe against the span, metric Gram-Schmidt at x.
  auto residual_at = [span_ptr, &space, dim](const Vec& probe, const Vec& x) {
    std::vector<Vec> basis;
    for (const VectorField& f : *span_ptr) {
      Vec u = f.value(x);
      for (const Vec& e : basis) u -= metric_inner(space, x, u, e) * e;
      const double nrm = metric_norm(space, x, u);
      if (nrm > 1e-10) basis.push_back(u / nrm);
    }
    Vec r = probe;
    for (const Vec& e : basis) r -= metric_inner(space, x, r, e) * e;
    return r;
  };

  // Deterministic probe list: coordinate directions, pair sums, then a few
  // pseudo-random directions; keep the probe whose worst-case residual over
  // the region is largest.
  std::vector<Vec> probes;
  for (Index i = 0; i < dim; ++i) probes.push_back(Vec::Unit(dim, i));
  for (Index i = 0; i < dim; ++i)
    for (Index j = i + 1; j < dim; ++j) {
      Vec p = Vec::Unit(dim, i) + Vec::Unit(dim, j);
      probes.push_back(p / p.norm());
    }
  Rng rng(1234);
  for (int t = 0; t < 4; ++t) {
    Vec p = rng.normal_vector(dim);
    probes.push_back(p / p.norm());
  }

  double best_score = -1.0;
  Vec best_probe = probes.front();
  for (const Vec& probe : probes) {
    double worst = std::numeric_limits<double>::infinity();
    for (Index s : region_samples) {
      const Vec& x = space.sample_points[static_cast<std::size_t>(s)].x;
      worst = std::min(worst, metric_norm(space, x, residual_at(probe, x)));
    }
    if (worst > best_score) {
      best_score = worst;
      best_probe = probe;
    }
  }
  if (best_score <= 1e-8)
    throw std::runtime_error("orthogonal_witness: span already fills the tangent space on the region");

  double sup = 0.0;
  for (Index s : region_samples) {
    const Vec& x = space.sample_points[static_cast<std::size_t>(s)].x;
    sup = std::max(sup, metric_norm(space, x, residual_at(best_probe, x)));
  }
  const double clamp = std::max(1.0, sup);

  auto space_ptr = &space;
  Vec probe = best_probe;
  VectorField w;
  w.eval = [span_ptr, space_ptr, probe, clamp, dim](const Vec& x) -> Vec {
    std::vector<Vec> basis;
    for (const VectorField& f : *span_ptr) {
      Vec u = f.value(x);
      for (const Vec& e : basis) u -= metric_inner(*space_ptr, x, u, e) * e;
      const double nrm = metric_norm(*space_ptr, x, u);
      if (nrm > 1e-10) basis.push_back(u / nrm);
    }
    Vec r = probe;
    for (const Vec& e : basis) r -= metric_inner(*space_ptr, x, r, e) * e;
    return r / clamp;
  };
  w.mask = region;
  return w;
}

SobolevBaseResult build_sobolev_base(const ChartSpace& space, const ApproximantGenerator& gen,
                                     double eps) {
  require(!space.strata.empty(), "build_sobolev_base: space declares no strata");
  const DimensionProfile profile = dimension_profile(space);
  const Index max_label = profile.max_label;
  require(max_label >= 1, "build_sobolev_base: no strata to cover");

  SobolevBaseResult out;
  for (Index level = 1; level <= max_label; ++level) {
    const ChartSpace* space_ptr = &space;
    RegionPredicate region = [space_ptr, level](const Vec& x) {
      return stratum_label(*space_ptr, x) >= level;
    };
    bool any = false;
    for (const SamplePoint& sp : space.sample_points)
      if (region(sp.x)) {
        any = true;
        break;
      }
    require(any, "build_sobolev_base: a stratum level has no sample points");

    VectorField witness = orthogonal_witness(space, out.base, region);
    ApproximantSequence approx = gen(witness, region);
    PairingFieldResult res = nonvanishing_pairing_field(space, witness, approx, eps);
    require(res.certificate.has_support,
            "build_sobolev_base: witness support vanished below the threshold");
    out.base.push_back(res.v);
    out.certificates.push_back(res.certificate);
  }

  // Independence audit: Gram determinants of the first n base fields at every
  // sample whose stratum admits n of them.
  double min_det = std::numeric_limits<double>::infinity();
  for (const SamplePoint& sp : space.sample_points) {
    const Index label = stratum_label(space, sp.x);
    const Index depth = std::min<Index>(label, static_cast<Index>(out.base.size()));
    if (depth < 1) continue;
    std::vector<Vec> vals;
    for (Index n = 0; n < depth; ++n) vals.push_back(out.base[static_cast<std::size_t>(n)].value(sp.x));
    const Mat g = space.metric(sp.x);
    for (Index n = 1; n <= depth; ++n) {
      Mat gram(n, n);
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j)
          gram(i, j) = vals[static_cast<std::size_t>(i)].dot(g * vals[static_cast<std::size_t>(j)]);
      min_det = std::min(min_det, gram.determinant());
    }
  }
  out.min_gram_det = min_det;
  return out;
}

ApproximantGenerator mollifier_generator(const ChartSpace& space, int count) {
  require(count >= 1, "mollifier_generator: count must be positive");
  const ChartSpace* space_ptr = &space;
  return [space_ptr, count](const VectorField& target, const RegionPredicate& region) {
    const ChartSpace& sp = *space_ptr;
    std::vector<Vec> xs;
    std::vector<double> ms;
    std::vector<Vec> vals;
    Vec lo = Vec::Constant(sp.dim, std::numeric_limits<double>::infinity());
    Vec hi = Vec::Constant(sp.dim, -std::numeric_limits<double>::infinity());
    for (const SamplePoint& s : sp.sample_points) {
      if (!region(s.x)) continue;
      xs.push_back(s.x);
      ms.push_back(s.mass);
      vals.push_back(target.value(s.x));
      lo = lo.cwiseMin(s.x);
      hi = hi.cwiseMax(s.x);
    }
    require(!xs.empty(), "mollifier_generator: region carries no sample points");
    const double diam = std::max((hi - lo).norm(), 1e-6);
    const double spacing = diam / std::sqrt(static_cast<double>(std::max<std::size_t>(xs.size(), 2)));
    const Index dim = sp.dim;

    auto xs_ptr = std::make_shared<std::vector<Vec>>(std::move(xs));
    auto ms_ptr = std::make_shared<std::vector<double>>(std::move(ms));
    auto vals_ptr = std::make_shared<std::vector<Vec>>(std::move(vals));

    std::vector<VectorField> fields;
    for (int j = 0; j < count; ++j) {
      const double h = 2.0 * spacing / (1.0 + static_cast<double>(j));
      VectorField f;
      f.eval = [xs_ptr, ms_ptr, vals_ptr, h, dim](const Vec& x) -> Vec {
        Vec num = Vec::Zero(dim);
        double den = 0.0;
        for (std::size_t s = 0; s < xs_ptr->size(); ++s) {
          const double d2 = (x - (*xs_ptr)[s]).squaredNorm();
          const double k = (*ms_ptr)[s] * std::exp(-0.5 * d2 / (h * h));
          num += k * (*vals_ptr)[s];
          den += k;
        }
        if (den <= 0.0) return Vec::Zero(dim);
        return num / den;
      };
      f.jacobian = [xs_ptr, ms_ptr, vals_ptr, h, dim](const Vec& x) -> Mat {
        Vec num = Vec::Zero(dim);
        double den = 0.0;
        Mat dnum = Mat::Zero(dim, dim);
        Vec dden = Vec::Zero(dim);
        for (std::size_t s = 0; s < xs_ptr->size(); ++s) {
          const Vec diff = x - (*xs_ptr)[s];
          const double k = (*ms_ptr)[s] * std::exp(-0.5 * diff.squaredNorm() / (h * h));
          num += k * (*vals_ptr)[s];
          den += k;
          const Vec dk = -(k / (h * h)) * diff;  // gradient of the kernel weight
          dnum += (*vals_ptr)[s] * dk.transpose();
          dden += dk;
        }
        if (den <= 0.0) return Mat::Zero(dim, dim);
        return dnum / den - (num / (den * den)) * dden.transpose();
      };
      f.mask = region;
      fields.push_back(std::move(f));
    }
    return make_approximants(sp, std::move(fields));
  };
}

void write_pairing_certificate_json(const std::string& path, const PairingCertificate& cert) {
  nlohmann::json j;
  j["terms"] = cert.terms;
  j["beta"] = cert.beta;
  j["gamma"] = cert.gamma;
  j["coverage_mass"] = cert.coverage_mass;
  j["min_pairing"] = cert.min_pairing;
  j["support_mass"] = cert.support_mass;
  j["has_support"] = cert.has_support;
  j["target_scale"] = cert.target_scale;
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot open certificate output file");
  out << j.dump(2) << "\n";
}

}  // namespace mmpt
