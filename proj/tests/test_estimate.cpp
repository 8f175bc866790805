#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hsk/estimate.hpp"
#include "oracles.hpp"

using namespace hsk;

namespace {

bool within(double estimate, double exact, double eta) {
  return estimate >= (1.0 - eta) * exact && estimate <= (1.0 + eta) * exact;
}

// Forces the sketched T path on moderately tall inputs.
EstimatorOptions sketched(double constant) {
  EstimatorOptions o;
  o.embedding_constant = constant;
  return o;
}

}  // namespace

TEST_CASE("leverage scores of simple matrices") {
  CHECK((leverage_scores(Matrix::Identity(4, 4)).array() - 1.0).abs().maxCoeff() <= 1e-14);
  Rng rng(1);
  const Matrix Q = oracle::orthonormal_columns(gaussian_matrix(9, 3, rng));
  CHECK((leverage_scores(Q) - Q.rowwise().squaredNorm()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("leverage scores match the normal-equations formula") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix A = gaussian_matrix(8, 3, rng);
    const Matrix G = (A.transpose() * A).inverse();
    const Vector tau = leverage_scores(A);
    for (Index i = 0; i < 8; ++i) CHECK(std::abs(tau(i) - A.row(i).dot(G * A.row(i).transpose())) <= 1e-10);
    CHECK(tau.sum() == doctest::Approx(3.0).epsilon(1e-8));
    CHECK(tau.minCoeff() >= 0.0);
    CHECK(tau.maxCoeff() <= 1.0 + 1e-12);
  }
}

TEST_CASE("leverage scores reject rank-deficient input") {
  Matrix A = Matrix::Ones(6, 2);
  CHECK_THROWS_AS(leverage_scores(A), RankDeficientError);
}

TEST_CASE("estimates for the identity sketch") {
  const double eta = 0.1;
  int good = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng rng(s);
    const Matrix A = gaussian_matrix(6000, 2, rng);
    SpectralEstimates e = estimate_z(SketchMatrix::identity(6000), A, eta, rng, sketched(5.0));
    REQUIRE(e.succeeded);
    CHECK_FALSE(e.exact_basis);
    if (e.z1_hat >= 1.0 / (1.0 + eta) && e.z1_hat <= 1.0 / (1.0 - eta) &&
        e.z2_hat <= 3.0 * eta / ((1.0 - eta) * (1.0 - eta)))
      ++good;
  }
  CHECK(good >= 95);
}

TEST_CASE("estimates for a scaled identity") {
  Rng rng(3);
  const Matrix A = gaussian_matrix(200, 5, rng);
  SpectralEstimates e = estimate_z(SketchMatrix::identity(200, 2.0), A, 0.1, rng);
  CHECK(e.exact_basis);
  CHECK(e.z1_hat == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(within(e.z2_hat, 3.0, 0.1));
  CHECK(e.ratio() == doctest::Approx(e.z2_hat / e.z1_hat));
}

TEST_CASE("estimates for a random countsketch fall in the stated intervals") {
  const double eta = 0.1;
  int good = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng rng(100 + s);
    const Matrix A = gaussian_matrix(200, 5, rng);
    SketchMatrix S = make_countsketch(25, 200, rng);
    const auto z = oracle::exact_z(S, A);
    const SpectralEstimates e = estimate_z(S, A, eta, rng);
    const bool z1_ok = e.z1_hat >= z.z1 / (1 + eta) && e.z1_hat <= z.z1 / (1 - eta);
    const bool z2_ok = e.z2_hat >= z.z2 / ((1 + eta) * (1 + eta)) - 3 * eta &&
                       e.z2_hat <= z.z2 / ((1 - eta) * (1 - eta)) + 3 * eta;
    if (z1_ok && z2_ok) ++good;
  }
  CHECK(good >= 95);
}

TEST_CASE("zero sketch has an infinite ratio") {
  Rng rng(4);
  const Matrix A = gaussian_matrix(50, 3, rng);
  SpectralEstimates e = estimate_z(SketchMatrix::identity(50, 0.0), A, 0.1, rng);
  CHECK(e.z1_hat == 0.0);
  CHECK(std::isinf(e.ratio()));
}

TEST_CASE("estimates depend only on the column space") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng rng(200 + s);
    const Matrix A = gaussian_matrix(3000, 4, rng);
    const Matrix M = gaussian_matrix(4, 4, rng) + 3.0 * Matrix::Identity(4, 4);
    SketchMatrix S = make_countsketch(40, 3000, rng);
    Rng r1(s), r2(s);
    EstimatorOptions o = sketched(1.0);
    o.power_constant = 200.0;  // run the power method to convergence
    const SpectralEstimates a = estimate_z(S, A, 0.1, r1, o);
    const SpectralEstimates b = estimate_z(S, A * M, 0.1, r2, o);
    REQUIRE(a.succeeded);
    REQUIRE(b.succeeded);
    CHECK_FALSE(a.exact_basis);
    CHECK(std::abs(a.z1_hat - b.z1_hat) <= 1e-6 * std::max(1.0, a.z1_hat));
    CHECK(std::abs(a.z2_hat - b.z2_hat) <= 1e-6 * std::max(1.0, a.z2_hat));
  }
}

TEST_CASE("eta outside (0, 1/3) is rejected") {
  Rng rng(5);
  const Matrix A = gaussian_matrix(20, 2, rng);
  CHECK_THROWS_AS(estimate_z(SketchMatrix::identity(20), A, 0.4, rng), ValidationError);
  CHECK_THROWS_AS(eig_via_sketch(A, Matrix::Identity(2, 2), 0.0, rng), ValidationError);
}

TEST_CASE("singular value estimates for orthonormal columns") {
  const double eta = 0.1;
  int good = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng rng(300 + s);
    const Matrix Q = oracle::orthonormal_columns(gaussian_matrix(6000, 2, rng));
    const EigEstimates e = eig_via_sketch(Q, Matrix::Identity(2, 2), eta, rng, sketched(5.0));
    if (within(e.sigma_max, 1.0, eta) && within(e.sigma_min, 1.0, eta)) ++good;
  }
  CHECK(good >= 95);
}

TEST_CASE("singular value estimates for a padded diagonal") {
  Matrix A = Matrix::Zero(50, 2);
  A(0, 0) = 3.0;
  A(1, 1) = 1.0;
  Rng rng(6);
  const EigEstimates e = eig_via_sketch(A, Matrix::Identity(2, 2), 0.1, rng);
  CHECK(within(e.sigma_max, 3.0, 0.1));
  CHECK(within(e.sigma_min, 1.0, 0.1));
}

TEST_CASE("exact mode returns the dense singular values") {
  Rng rng(7);
  const Matrix A = gaussian_matrix(80, 4, rng);
  const Matrix Rinv = gaussian_matrix(4, 4, rng) + 2.0 * Matrix::Identity(4, 4);
  EstimatorOptions exact;
  exact.exact = true;
  const EigEstimates e = eig_via_sketch(A, Rinv, 0.1, rng, exact);
  const Vector s = Eigen::JacobiSVD<Matrix>(A * Rinv).singularValues();
  CHECK(e.sigma_max == doctest::Approx(s(0)).epsilon(1e-12));
  CHECK(e.sigma_min == doctest::Approx(s(3)).epsilon(1e-12));
}

TEST_CASE("inverse R factor whitens A") {
  const double eta = 0.1;
  int good = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    Rng rng(400 + s);
    const Matrix A = gaussian_matrix(6000, 2, rng, 3.0);
    const Matrix Rinv = upper_inverse(qr_r_factor(A));
    const EigEstimates e = eig_via_sketch(A, Rinv, eta, rng, sketched(5.0));
    if (within(e.sigma_max, 1.0, eta) && within(e.sigma_min, 1.0, eta)) ++good;
  }
  CHECK(good >= 47);
}

TEST_CASE("degenerate product is an error") {
  Rng rng(8);
  Matrix A = Matrix::Zero(30, 2);
  A.col(0).setOnes();
  CHECK_THROWS_AS(eig_via_sketch(A, Matrix::Identity(2, 2), 0.1, rng), RankDeficientError);
}

TEST_CASE("operator norm of small symmetric matrices") {
  Rng rng(9);
  CHECK(operator_norm_symmetric(Matrix::Zero(3, 3), 0.1, rng) == 0.0);
  Matrix D = Matrix::Zero(2, 2);
  D(0, 0) = 3.0;
  D(1, 1) = -5.0;
  CHECK(within(operator_norm_symmetric(D, 0.1, rng), 5.0, 0.1));
}

TEST_CASE("operator norm matches a dense eigensolver") {
  int good = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng rng(500 + s);
    Matrix G = gaussian_matrix(6, 6, rng);
    const Matrix M = 0.5 * (G + G.transpose());
    const double exact = Eigen::SelfAdjointEigenSolver<Matrix>(M).eigenvalues().cwiseAbs().maxCoeff();
    if (within(operator_norm_symmetric(M, 0.1, rng), exact, 0.1)) ++good;
  }
  CHECK(good >= 99);
}

TEST_CASE("operator norm with a separated top eigenvalue") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    Rng rng(600 + s);
    const Matrix Q = oracle::orthonormal_columns(gaussian_matrix(8, 8, rng));
    Vector lambda = Vector::LinSpaced(8, -4.0, 4.0);
    lambda(7) = 6.0;  // gap 2 against a norm of 6
    const Matrix M = Q * lambda.asDiagonal() * Q.transpose();
    CHECK(within(operator_norm_symmetric(M, 0.1, rng), 6.0, 0.1));
  }
}
