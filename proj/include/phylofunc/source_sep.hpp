#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "phylofunc/error.hpp"
#include "phylofunc/trait_sim.hpp"

namespace phylofunc {

enum class DimensionMethod {
  kLaplace,  // Laplace approximation to the probabilistic-PCA evidence
  kGap,      // largest gap in log-eigenvalues
};

DimensionMethod ParseDimensionMethod(const std::string& name);
std::string ToString(DimensionMethod method);

struct PCAResult {
  Eigen::RowVectorXd mean_curve;  // m
  Eigen::MatrixXd components;     // rank x m, orthonormal rows
  Eigen::VectorXd eigenvalues;    // non-increasing, sample covariance (1/(n-1))
  Eigen::MatrixXd scores;         // n x rank, centred curves projected onto components
  Eigen::Index numerical_rank = 0;
  Eigen::Index estimated_k = 0;
  DimensionMethod method = DimensionMethod::kLaplace;
};

/// Eigenvalues at or below this fraction of the largest are treated as noise
/// by dimension selection.
inline constexpr double kSelectionThreshold = 1e-10;

/// Centred PCA of the rows of `curves` (n curves x m grid points) via SVD,
/// with the intrinsic dimension chosen by `method` among 1..numerical rank.
PCAResult RunPca(const Eigen::MatrixXd& curves, DimensionMethod method = DimensionMethod::kLaplace);

/// Log evidence of a k-dimensional probabilistic PCA model for the given
/// covariance spectrum (Laplace approximation). `dimension` is the ambient
/// dimension, `n_samples` the number of curves.
double LaplaceLogEvidence(const Eigen::VectorXd& spectrum, Eigen::Index k, Eigen::Index dimension,
                          Eigen::Index n_samples);

struct CumulantIcaOptions {
  int max_sweeps = 200;
  double angle_tolerance = 1e-8;
};

/// Outcome of the cumulant-based rotation on whitened data.
struct RotationResult {
  Eigen::MatrixXd rotation;             // k x k orthogonal; sources = whitened * rotation
  std::vector<double> objective_trace;  // contrast after each sweep
  std::vector<double> component_contrast;
  int sweeps = 0;
};

/// Finds the orthogonal rotation of whitened, centred data (n x k, identity
/// sample covariance) that maximises the CuBICA contrast
/// sum_i kappa3_i^2 / 3! + kappa4_i^2 / 4! over the rotated columns, by Jacobi
/// sweeps over all component pairs with the exact per-pair optimum angle.
RotationResult CumulantJacobiRotation(const Eigen::MatrixXd& whitened, const CumulantIcaOptions& options = {});

/// Thrown when the Jacobi sweeps hit the iteration cap.
class IcaConvergenceError : public Error {
 public:
  IcaConvergenceError(const std::string& what, RotationResult best)
      : Error(ErrorKind::kNumerical, what), best_(std::move(best)) {}
  const RotationResult& best_so_far() const { return best_; }

 private:
  RotationResult best_;
};

struct ICAResult {
  BasisSet estimated_basis;       // k x m, unit-norm rows, positive at max |value|
  Eigen::MatrixXd tip_weights;    // n x k
  Eigen::MatrixXd unmixing;       // k x k: tip_weights = pca scores[:, :k] * unmixing
  Eigen::RowVectorXd mean_curve;  // m
  std::vector<double> objective_trace;
  /// n * (kappa3^2/6 + kappa4^2/24) / 2 per component; about 1 for Gaussian
  /// series of length n.
  std::vector<double> non_gaussianity;
  /// Set when fewer than k-1 components are clearly non-Gaussian, in which
  /// case the rotation is not identifiable.
  bool low_cumulant = false;
  int sweeps = 0;
};

/// Threshold on ICAResult::non_gaussianity below which a component is treated
/// as indistinguishable from Gaussian.
inline constexpr double kNonGaussianityThreshold = 5.0;

/// Whitens the top-k PCA scores and rotates them with CumulantJacobiRotation.
/// For k = 1 the PCA solution is returned (gauge-fixed).
ICAResult RunIca(const PCAResult& pca, const Eigen::MatrixXd& curves, const CumulantIcaOptions& options = {});

/// Relative Frobenius error of tip_weights * basis + mean against `curves`.
double ReconstructionError(const ICAResult& ica, const Eigen::MatrixXd& curves);

struct AlignmentReport {
  std::vector<Eigen::Index> permutation;  // estimated row i matches truth row permutation[i]
  std::vector<int> signs;
  std::vector<double> scales;        // estimated_i ~ sign * scale * truth_perm(i)
  std::vector<double> correlations;  // Pearson correlation, sign included
};

/// Matches estimated rows to truth rows maximising the total absolute Pearson
/// correlation (exhaustive for k <= 8, greedy above).
AlignmentReport AlignComponents(const BasisSet& estimated, const BasisSet& truth);

nlohmann::json IcaDiagnostics(const PCAResult& pca, const ICAResult& ica, double reconstruction_error);

}  // namespace phylofunc
