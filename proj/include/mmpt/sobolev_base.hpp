#pragma once

#include "mmpt/chart_space.hpp"

#include <functional>

namespace mmpt {

// Smooth fields approximating a target, with per-field normalizers
// alpha_n = sup |w_n| + (L2 norm of |w_n| and |nabla w_n|_HS).
struct ApproximantSequence {
  std::vector<VectorField> fields;
  Vec alpha;
};

ApproximantSequence make_approximants(const ChartSpace& space, std::vector<VectorField> fields);

// Records of the greedy series: coefficients beta_i / alpha_i, thresholds
// gamma, nested coverage sets of sample indices, and the achieved margin.
struct PairingCertificate {
  std::vector<double> beta;                    // beta_1 .. beta_n, beta_1 = 1
  std::vector<double> gamma;                   // gamma_2 .. gamma_{n+1}
  std::vector<std::vector<Index>> coverage;    // E_n per step
  std::vector<double> coverage_mass;           // normalized mass of each E_n
  double min_pairing = 0.0;                    // min over the support of |<v, w>|
  double support_mass = 0.0;
  bool has_support = false;
  double target_scale = 1.0;                   // normalization applied to the target
  int terms = 0;
};

struct PairingFieldResult {
  VectorField v;
  std::vector<double> coefficients;  // beta_i / alpha_i per used approximant
  PairingCertificate certificate;
};

// Builds v = sum_i (beta_i / alpha_i) w_i with |<v, w>| bounded below on the
// eps-support of w, by the beta/gamma recursion: beta_1 = 1,
// 3 beta_{n+1} <= gamma_{n+1} <= beta_n, gamma chosen maximal on a geometric
// grid subject to coverage, beta_{n+1} = gamma_{n+1}/6 nudged off the finite
// set of zero-pairing collisions. The series truncates once the coverage set
// exhausts the support.
PairingFieldResult nonvanishing_pairing_field(const ChartSpace& space, const VectorField& target,
                                              const ApproximantSequence& approx, double eps);

// A field of norm in (0, 1] on the region's samples, orthogonal to the given
// span there; clamped by w <- w / max(1, sup |w|). Errors when the span
// already fills the tangent space.
VectorField orthogonal_witness(const ChartSpace& space, const std::vector<VectorField>& span,
                               const RegionPredicate& region);

using ApproximantGenerator =
    std::function<ApproximantSequence(const VectorField& target, const RegionPredicate& region)>;

struct SobolevBaseResult {
  std::vector<VectorField> base;
  std::vector<PairingCertificate> certificates;
  // min over sample points x and levels n <= label(x) of det Gram(v_1..v_n)(x)
  double min_gram_det = 0.0;
};

// Recursive construction: at level n a witness orthogonal to v_1..v_{n-1} on
// the strata of dimension >= n seeds a pairing field v_n. Levels run to the
// largest stratum label.
SobolevBaseResult build_sobolev_base(const ChartSpace& space, const ApproximantGenerator& gen,
                                     double eps);

// Default generator: Gaussian kernel smoothing of the target's sample values
// with shrinking bandwidths, masked to the region.
ApproximantGenerator mollifier_generator(const ChartSpace& space, int count = 8);

void write_pairing_certificate_json(const std::string& path, const PairingCertificate& cert);

}  // namespace mmpt
