#include <cmath>
#include <numbers>
#include <random>

#include <doctest.h>

#include "oracles.hpp"
#include "phylofunc/source_sep.hpp"

using namespace phylofunc;

namespace {

// Orthonormal rows spanning `count` smooth directions over m points.
Eigen::MatrixXd OrthonormalRows(Eigen::Index count, Eigen::Index m) {
  Eigen::MatrixXd raw(m, count);
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(m, 0.0, 1.0);
  for (Eigen::Index j = 0; j < count; ++j) raw.col(j) = (x.array() * (j + 1) * std::numbers::pi).sin();
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
  return (qr.householderQ() * Eigen::MatrixXd::Identity(m, count)).transpose();
}

Eigen::MatrixXd UniformSources(Eigen::Index n, Eigen::Index k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-std::sqrt(3.0), std::sqrt(3.0));
  Eigen::MatrixXd s(n, k);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < k; ++j) s(i, j) = u(rng);
  return s;
}

// Best |correlation| of each true source with any recovered column, requiring
// a one-to-one match.
double WorstMatchedCorrelation(const Eigen::MatrixXd& recovered, const Eigen::MatrixXd& truth) {
  REQUIRE(recovered.cols() == truth.cols());
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(truth.cols()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = 0.0;
  do {
    double worst = 1.0;
    for (Eigen::Index j = 0; j < truth.cols(); ++j) {
      worst = std::min(worst, std::abs(oracle::PearsonCorrelation(recovered.col(perm[static_cast<std::size_t>(j)]), truth.col(j))));
    }
    best = std::max(best, worst);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Eigen::MatrixXd Rotation2(double angle) {
  Eigen::MatrixXd r(2, 2);
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}

}  // namespace

TEST_CASE("dimension method names") {
  CHECK(ParseDimensionMethod("laplace") == DimensionMethod::kLaplace);
  CHECK(ParseDimensionMethod("gap") == DimensionMethod::kGap);
  CHECK(ToString(DimensionMethod::kGap) == "gap");
  CHECK_THROWS_AS(ParseDimensionMethod("bic"), Error);
}

TEST_CASE("run_pca: exact rank one") {
  const Eigen::VectorXd w = Eigen::VectorXd::LinSpaced(20, -3.0, 5.0);
  const Eigen::RowVectorXd curve = OrthonormalRows(1, 50).row(0) * 2.0;
  const Eigen::MatrixXd data = w * curve;
  for (const auto method : {DimensionMethod::kLaplace, DimensionMethod::kGap}) {
    const PCAResult pca = RunPca(data, method);
    CHECK(pca.estimated_k == 1);
    CHECK(pca.numerical_rank == 1);
  }
}

TEST_CASE("run_pca: rank three plus a tiny perturbation") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  const BasisSet basis = MakeDefaultBasis(200);
  Eigen::MatrixXd weights(60, 3);
  for (Eigen::Index i = 0; i < weights.size(); ++i) weights.data()[i] = normal(rng);
  Eigen::MatrixXd data = weights * basis.curves;
  const double scale = data.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < data.size(); ++i) data.data()[i] += 1e-6 * scale * normal(rng);
  for (const auto method : {DimensionMethod::kLaplace, DimensionMethod::kGap}) {
    const PCAResult pca = RunPca(data, method);
    CHECK(pca.estimated_k == 3);
    // 99.9% of variance explained by the selected components.
    CHECK(pca.eigenvalues.head(3).sum() / pca.eigenvalues.sum() >= 0.999);
  }
}

TEST_CASE("run_pca invariants on default scenario data") {
  const Scenario s = PaperScenario(21);
  const Eigen::MatrixXd curves = s.dataset.TrainCurves(s.tree);
  const PCAResult pca = RunPca(curves);
  CHECK(pca.estimated_k == 3);
  CHECK(pca.estimated_k <= curves.rows() - 1);
  const Eigen::MatrixXd gram = pca.components * pca.components.transpose();
  CHECK((gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() < 1e-10);
  for (Eigen::Index i = 1; i < pca.eigenvalues.size(); ++i) CHECK(pca.eigenvalues(i) <= pca.eigenvalues(i - 1));
  CHECK((pca.eigenvalues.array() >= 0.0).all());
  CHECK((pca.mean_curve - curves.colwise().mean()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("run_pca rejects degenerate input") {
  CHECK_THROWS_AS(RunPca(Eigen::MatrixXd::Ones(2, 10)), Error);
  CHECK_THROWS_AS(RunPca(Eigen::MatrixXd::Ones(10, 10)), Error);
}

TEST_CASE("Laplace evidence prefers the true dimension") {
  Eigen::VectorXd spectrum(6);
  spectrum << 10, 6, 3, 1e-3, 1e-3, 1e-3;
  const double at3 = LaplaceLogEvidence(spectrum, 3, 6, 100);
  CHECK(at3 > LaplaceLogEvidence(spectrum, 2, 6, 100));
  CHECK(at3 > LaplaceLogEvidence(spectrum, 4, 6, 100));
  CHECK_THROWS_AS(LaplaceLogEvidence(spectrum, 6, 6, 100), Error);
}

TEST_CASE("ICA recovers 45-degree mixed uniform sources") {
  const Eigen::MatrixXd sources = UniformSources(500, 2, 1);
  const Eigen::MatrixXd curves = sources * Rotation2(std::numbers::pi / 4) * OrthonormalRows(2, 40);
  const PCAResult pca = RunPca(curves);
  REQUIRE(pca.estimated_k == 2);
  const ICAResult ica = RunIca(pca, curves);
  CHECK(WorstMatchedCorrelation(ica.tip_weights, sources) > 0.99);
  CHECK_FALSE(ica.low_cumulant);
  CHECK(ReconstructionError(ica, curves) < 1e-6);
}

TEST_CASE("ICA leaves already independent scores in place") {
  Eigen::MatrixXd sources = UniformSources(500, 2, 2);
  sources.col(1) *= 0.5;  // distinct variances fix the PCA axes
  const Eigen::MatrixXd curves = sources * OrthonormalRows(2, 40);
  const PCAResult pca = RunPca(curves);
  const ICAResult ica = RunIca(pca, curves);
  CHECK(std::abs(oracle::PearsonCorrelation(ica.tip_weights.col(0), sources.col(0))) > 0.99);
  CHECK(std::abs(oracle::PearsonCorrelation(ica.tip_weights.col(1), sources.col(1))) > 0.99);
}

TEST_CASE("ICA flags jointly Gaussian scores") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd sources(500, 3);
  for (Eigen::Index i = 0; i < sources.size(); ++i) sources.data()[i] = normal(rng);
  const Eigen::MatrixXd curves = sources * OrthonormalRows(3, 30);
  const PCAResult pca = RunPca(curves);
  REQUIRE(pca.estimated_k == 3);
  const ICAResult ica = RunIca(pca, curves);
  CHECK(ica.low_cumulant);
}

TEST_CASE("ICA invariants: reconstruction, span, decorrelation, gauge") {
  const Scenario s = PaperScenario(5);
  const Eigen::MatrixXd curves = s.dataset.TrainCurves(s.tree);
  const PCAResult pca = RunPca(curves);
  REQUIRE(pca.estimated_k == 3);
  const ICAResult ica = RunIca(pca, curves);

  CHECK(ReconstructionError(ica, curves) <= 1e-6);

  // Largest principal angle between the estimated rows and the top PCA rows.
  const Eigen::MatrixXd top = pca.components.topRows(3);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(ica.estimated_basis.curves.transpose());
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(top.cols(), 3);
  const Eigen::MatrixXd residual = q - top.transpose() * (top * q);
  CHECK(Eigen::JacobiSVD<Eigen::MatrixXd>(residual).singularValues()(0) < 1e-8);

  for (Eigen::Index i = 0; i < 3; ++i) {
    for (Eigen::Index j = i + 1; j < 3; ++j) {
      CHECK(std::abs(oracle::PearsonCorrelation(ica.tip_weights.col(i), ica.tip_weights.col(j))) <= 1e-8);
    }
    const Eigen::RowVectorXd row = ica.estimated_basis.curves.row(i);
    CHECK(row.norm() == doctest::Approx(1.0).epsilon(1e-12));
    Eigen::Index at = 0;
    row.cwiseAbs().maxCoeff(&at);
    CHECK(row(at) > 0.0);
  }
  const Eigen::VectorXd variance = ica.tip_weights.colwise().squaredNorm();
  CHECK(variance(0) >= variance(1));
  CHECK(variance(1) >= variance(2));

  const Eigen::MatrixXd centred = curves.rowwise() - pca.mean_curve;
  const Eigen::MatrixXd scores = centred * pca.components.topRows(3).transpose();
  CHECK((scores * ica.unmixing - ica.tip_weights).cwiseAbs().maxCoeff() < 1e-8);

  const auto diag = IcaDiagnostics(pca, ica, ReconstructionError(ica, curves));
  CHECK(diag["estimated_k"] == 3);
  CHECK(diag.contains("eigenvalues"));
  CHECK(diag.contains("cumulant_objective_trace"));
}

TEST_CASE("ICA with one component returns the PCA direction") {
  const Eigen::VectorXd w = Eigen::VectorXd::LinSpaced(20, -3.0, 5.0);
  const Eigen::MatrixXd data = w * OrthonormalRows(1, 30).row(0);
  const PCAResult pca = RunPca(data);
  const ICAResult ica = RunIca(pca, data);
  CHECK(ica.estimated_basis.k() == 1);
  CHECK(std::abs(ica.estimated_basis.curves.row(0).dot(pca.components.row(0))) == doctest::Approx(1.0));
  CHECK(ReconstructionError(ica, data) < 1e-12);
}

TEST_CASE("Jacobi rotation reports non-convergence with the best rotation so far") {
  const Eigen::MatrixXd sources = UniformSources(500, 2, 3);
  Eigen::MatrixXd whitened = sources * Rotation2(0.6);
  whitened = whitened.rowwise() - whitened.colwise().mean();
  const Eigen::LLT<Eigen::MatrixXd> llt(whitened.transpose() * whitened / 500.0);
  whitened = whitened * llt.matrixU().solve(Eigen::MatrixXd::Identity(2, 2));
  try {
    CumulantJacobiRotation(whitened, {1, 1e-8});
    FAIL("expected IcaConvergenceError");
  } catch (const IcaConvergenceError& e) {
    CHECK(e.best_so_far().sweeps == 1);
    const Eigen::MatrixXd r = e.best_so_far().rotation;
    CHECK((r.transpose() * r - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
  }
  const RotationResult full = CumulantJacobiRotation(whitened);
  CHECK(full.sweeps <= 200);
  for (std::size_t i = 1; i < full.objective_trace.size(); ++i) {
    CHECK(full.objective_trace[i] >= full.objective_trace[i - 1] - 1e-12);
  }
}

TEST_CASE("align_components constructed cases") {
  const BasisSet truth = MakeDefaultBasis(64);

  const AlignmentReport same = AlignComponents(truth, truth);
  CHECK(same.permutation == std::vector<Eigen::Index>{0, 1, 2});
  CHECK(same.signs == std::vector<int>{1, 1, 1});
  for (const double c : same.correlations) CHECK(c == doctest::Approx(1.0));

  BasisSet swapped = truth;
  swapped.curves.row(0) = truth.curves.row(1);
  swapped.curves.row(1) = -truth.curves.row(0);
  const AlignmentReport sw = AlignComponents(swapped, truth);
  CHECK(sw.permutation == std::vector<Eigen::Index>{1, 0, 2});
  CHECK(sw.signs == std::vector<int>{1, -1, 1});
  CHECK(sw.correlations[1] == doctest::Approx(-1.0));

  BasisSet scaled = truth;
  scaled.curves.row(0) *= 2.0;
  scaled.curves.row(1) *= 0.5;
  const AlignmentReport sc = AlignComponents(scaled, truth);
  CHECK(sc.scales[0] == doctest::Approx(2.0));
  CHECK(sc.scales[1] == doctest::Approx(0.5));
  CHECK(sc.scales[2] == doctest::Approx(1.0));
  for (const double c : sc.correlations) CHECK(std::abs(c) <= 1.0);

  BasisSet fewer{truth.curves.topRows(2), truth.grid};
  CHECK_THROWS_AS(AlignComponents(fewer, truth), Error);
}
