#pragma once

#include "mmpt/plan_field.hpp"

#include <string>

namespace mmpt {

// Finite family of vector fields meant to behave as a good base with
// constant M: norms inside (1/M, M), mutual inner products below 1/(M^2 k)
// on the stratum of dimension k, covariant derivative bounded by M.
struct FrameField {
  std::vector<VectorField> fields;
  double m_constant = 2.0;

  Index size() const { return static_cast<Index>(fields.size()); }
};

struct GoodBaseReport {
  bool passes = false;
  double margin_norm_lower = 0.0;  // min of |w_i| - 1/M
  double margin_norm_upper = 0.0;  // min of M - |w_i|
  double margin_offdiag = 0.0;     // min of 1/(M^2 k) - |<w_i, w_j>|
  double margin_hs = 0.0;          // min of M - |nabla w_i|_HS

  struct Witness {
    Index sample = -1;
    int field_i = -1;
    int field_j = -1;
    std::string kind;
    double value = 0.0;
  };
  std::vector<Witness> violations;
};

GoodBaseReport validate_good_base(const ChartSpace& space, const FrameField& frame);

// Coefficients of w in the frame at x through the Gram system; only the
// first `label(x)` fields are active.
Vec frame_coefficients(const ChartSpace& space, const FrameField& frame, const Vec& x,
                       const Vec& w);
// Pointwise variant for a prepared Gram matrix.
Vec solve_coefficients(const Mat& gram, const Vec& rhs);

// H[curve][node](i, j): expansion of the convective derivative of frame
// field i in the frame, D W_i = sum_j H_ij W_j along each curve.
struct ConnectionPath {
  std::vector<std::vector<Mat>> h;
  double sup_entry = 0.0;
  Index n_fields = 0;
};

ConnectionPath connection_matrix(const ChartSpace& space, const TestPlan& plan,
                                 const FrameField& frame);

struct TransportDiagnostics {
  double norm_drift = 0.0;      // max_t |[[V]]_t^2 - [[V]]_0^2|
  double leibniz_defect = 0.0;  // defect of d/dt<V,V> = 2<DV,V>
  double oracle_gap = 0.0;      // sup node gap to the per-curve reference run
  double residual = 0.0;        // integral-equation residual
  int picard_iterations = 0;
};

struct TransportResult {
  PlanField field;     // reconstructed transported field
  std::vector<Mat> g;  // per curve, n_fields x n_nodes coefficient paths
  Vec holonomy;        // per curve signed angle start vs end (2d charts)
  TransportDiagnostics diag;
};

// Solves the coefficient system g'_i + sum_j H_ji g_j = 0 through the
// integral-equation Picard solver on the weighted product space, then
// reconstructs the field in the frame.
TransportResult parallel_transport(const ChartSpace& space, const TestPlan& plan,
                                   const FrameField& frame, const std::vector<Vec>& initial,
                                   double tol = 1e-12, int max_iter = 200);

// Classical per-curve transport V' + Gamma(velocity, V) = 0 by fourth-order
// integration with cubic interpolation of the curve between nodes.
PlanField transport_oracle(const ChartSpace& space, const TestPlan& plan,
                           const std::vector<Vec>& initial);

struct TransportCertificates {
  double norm_drift = 0.0;
  double isometry_defect = 0.0;   // Gram drift of a transported orthonormal set
  double roundtrip_defect = 0.0;  // forward then backward vs identity
};

TransportCertificates transport_certificates(const ChartSpace& space, const TestPlan& plan,
                                             const FrameField& frame, double tol = 1e-12,
                                             int max_iter = 200);

// JSON + CSV exports of a transport run.
void write_transport_json(const std::string& path, const ChartSpace& space, const TestPlan& plan,
                          const FrameField& frame, const TransportResult& result);
void write_coefficients_csv(const std::string& path, const TestPlan& plan,
                            const TransportResult& result);
void write_holonomy_csv(const std::string& path, const TransportResult& result);

// Constant-coefficient frames for the builders.
FrameField cartesian_frame(double m_constant = 2.0);
FrameField sphere_orthonormal_frame(double m_constant = 8.0);
FrameField cone_orthonormal_frame(double apex_factor, double m_constant = 8.0);
// Frame adapted to the two-strata strip: first field everywhere, second field
// masked to the dimension-2 stratum.
FrameField two_strata_frame(double m_constant = 2.0);

}  // namespace mmpt
