#include "hsk/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hsk {

double SpectralEstimates::ratio() const {
  if (!(z1_hat > 0.0)) return std::numeric_limits<double>::infinity();
  return z2_hat / z1_hat;
}

Index embedding_rows(Index d, double eta, double constant) {
  const double rows = std::ceil(constant * static_cast<double>(d) * static_cast<double>(d) / (eta * eta));
  if (rows > 1e15) return std::numeric_limits<Index>::max();
  return std::max<Index>(1, static_cast<Index>(rows));
}

Vector leverage_scores(const Matrix& A) {
  const Matrix U = orthonormal_basis(A);
  return U.rowwise().squaredNorm();
}

namespace {

void check_eta(double eta) {
  if (!(eta > 0.0 && eta < 1.0 / 3.0)) throw ValidationError("estimator: eta must lie in (0, 1/3)");
}

// T*A for a fresh sparse embedding, or A itself when T would not compress.
Matrix embed(const Matrix& A, double eta, Rng& rng, const EstimatorOptions& options, bool& exact) {
  const Index rows = embedding_rows(A.cols(), eta, options.embedding_constant);
  exact = options.exact || rows >= A.rows();
  if (exact) return A;
  return make_countsketch(rows, A.rows(), rng).apply(A);
}

}  // namespace

double operator_norm_symmetric(const Matrix& M, double eta, Rng& rng, double power_constant) {
  if (M.rows() != M.cols()) throw DimensionError("operator_norm_symmetric: matrix must be square");
  const Index d = M.rows();
  if (d == 0 || M.cwiseAbs().maxCoeff() == 0.0) return 0.0;
  const double logs = std::log(static_cast<double>(d) / eta);
  const int iterations = std::max(1, static_cast<int>(std::ceil(power_constant * std::max(logs, 1.0))));

  std::normal_distribution<double> normal;
  Vector x(d);
  for (Index i = 0; i < d; ++i) x(i) = normal(rng);
  x.normalize();

  double best = 0.0;
  for (int k = 0; k < iterations; ++k) {
    Vector y = M * x;
    const double norm = y.norm();
    best = std::max(best, norm);
    if (norm == 0.0) break;
    x = y / norm;
  }
  return best;
}

SpectralEstimates estimate_z(const SketchMatrix& S, const Matrix& A, double eta, Rng& rng,
                             const EstimatorOptions& options) {
  check_eta(eta);
  if (S.cols() != A.rows()) throw DimensionError("estimate_z: sketch and matrix disagree in n");
  const Index d = A.cols();

  SpectralEstimates out;
  out.eta = eta;
  const Matrix TA = embed(A, eta, rng, options, out.exact_basis);
  const Matrix R = qr_r_factor(TA);
  const Vector rs = singular_values(R);
  if (TA.rows() < d || rs(d - 1) <= kRankTolerance * rs(0)) {
    if (out.exact_basis) throw RankDeficientError("estimate_z: A is not of full column rank");
    return out;  // succeeded == false
  }

  const Matrix B = right_solve_upper(S.apply(A), R);
  const Vector bs = singular_values(B);
  const double smin = B.rows() < d ? 0.0 : bs(d - 1);
  out.z1_hat = smin * smin;

  Matrix M = B.transpose() * B;
  M.diagonal().array() -= 1.0;
  out.z2_hat = operator_norm_symmetric(M, eta, rng, options.power_constant);
  out.succeeded = true;
  return out;
}

EigEstimates eig_via_sketch(const Matrix& A, const Matrix& Rinv, double eta, Rng& rng,
                            const EstimatorOptions& options) {
  check_eta(eta);
  if (Rinv.rows() != A.cols() || Rinv.cols() != A.cols())
    throw DimensionError("eig_via_sketch: Rinv must be d x d");
  bool exact = false;
  const Matrix TB = embed(A, eta, rng, options, exact) * Rinv;
  const Vector s = singular_values(TB);
  if (TB.rows() < A.cols() || s(s.size() - 1) <= kRankTolerance * s(0))
    throw RankDeficientError("eig_via_sketch: degenerate product");
  return EigEstimates{s(0), s(s.size() - 1)};
}

}  // namespace hsk
