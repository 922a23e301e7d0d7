#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "phylofunc/phylo_tree.hpp"

namespace phylofunc {

/// Hyperparameters of one phylogenetic Ornstein-Uhlenbeck component.
///
/// sigma_f scales inherited variation, lambda is the length-scale in
/// patristic-distance units, sigma_n scales specific (per-node) variation.
/// When sigma_f is zero the length-scale has no effect and may be absent.
struct OUHyperParams {
  double sigma_f = 0.0;
  std::optional<double> lambda;
  double sigma_n = 0.0;

  bool lambda_applicable() const { return sigma_f > 0.0; }
  /// Throws Error(kInvalidInput) unless sigma_f, sigma_n >= 0 and lambda > 0
  /// wherever it is present or needed.
  void Validate() const;

  friend bool operator==(const OUHyperParams&, const OUHyperParams&) = default;
};

/// {"sigma_f": .., "lambda": .. | null, "sigma_n": ..}
nlohmann::json ToJson(const OUHyperParams& params);
OUHyperParams OUHyperParamsFromJson(const nlohmann::json& j);

/// sigma_f^2 exp(-distance / lambda) + sigma_n^2 [same_node].
///
/// The delta term is tied to node identity: two distinct nodes at distance
/// zero share only the inherited part.
double OUCov(const OUHyperParams& params, double distance, bool same_node);

struct CovarianceMatrix {
  std::vector<NodeId> node_order;
  Eigen::MatrixXd entries;
};

/// Applies OUCov entrywise. With include_self_delta the diagonal (same node)
/// gains sigma_n^2; off-diagonal entries never do.
CovarianceMatrix BuildCovMatrix(const OUHyperParams& params, const DistanceMatrix& distances,
                                bool include_self_delta);

/// Inherited-only covariance over a rectangular distance block. Used for
/// cross-covariances between distinct node identities.
Eigen::MatrixXd CrossCovariance(const OUHyperParams& params, const Eigen::MatrixXd& distances);

struct PsdReport {
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  bool is_psd = false;
};

/// Minimum eigenvalue and whether it is >= -tolerance. Rejects input whose
/// asymmetry exceeds 1e-12.
PsdReport ValidatePsd(const Eigen::MatrixXd& matrix, double tolerance);

/// Lower Cholesky factor of a covariance matrix, retried with diagonal jitter
/// of 1e-12, 1e-11, ... 1e-8 times the mean diagonal when the plain
/// factorization fails.
class JitteredCholesky {
 public:
  explicit JitteredCholesky(const Eigen::MatrixXd& covariance);

  const Eigen::LLT<Eigen::MatrixXd>& llt() const { return llt_; }
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const { return llt_.solve(rhs); }
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const { return llt_.solve(rhs); }
  double log_determinant() const;
  double jitter() const { return jitter_; }

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double jitter_ = 0.0;
};

CovarianceMatrix CovarianceFromCsv(const PhyloTree& tree, const std::string& text);
std::string CovarianceToCsv(const PhyloTree& tree, const CovarianceMatrix& matrix);

}  // namespace phylofunc
