#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "phylofunc/error.hpp"
#include "phylofunc/ou_kernel.hpp"
#include "phylofunc/phylo_tree.hpp"

namespace phylofunc {

enum class FreeParam { kSigmaF, kSigmaN, kLambda };

FreeParam ParseFreeParam(const std::string& name);
std::string ToString(FreeParam param);

/// Zero-mean GP log marginal likelihood of tip weights:
/// -1/2 y^T K^-1 y - 1/2 log det K - n/2 log 2 pi, with K the OU covariance
/// over the tips including the specific-variation diagonal.
double LogMarginalLikelihood(const PhyloTree& tree, const Eigen::VectorXd& tip_weights, const OUHyperParams& params);

/// Same quantity with the tip distance matrix precomputed.
double LogMarginalLikelihood(const Eigen::MatrixXd& tip_distances, const Eigen::VectorXd& tip_weights,
                             const OUHyperParams& params);

struct LikelihoodProfile {
  std::string parameter_name;
  std::vector<double> grid;
  std::vector<double> log_likelihoods;
  double argmax = 0.0;
};

struct MLEResult {
  std::string parameter_name;
  double estimate = 0.0;
  double log_likelihood_at_estimate = 0.0;
  OUHyperParams fixed_params;  // full parameter set with the free entry at the estimate
  int iterations = 0;
  std::pair<double, double> bracket;
  std::pair<double, double> bounds;
  bool at_lower_bound = false;
  bool at_upper_bound = false;
  LikelihoodProfile profile;

  bool on_boundary() const { return at_lower_bound || at_upper_bound; }
};

/// Raised when the likelihood varies by less than 1e-10 across the scan.
class NonIdentifiableError : public Error {
 public:
  NonIdentifiableError(const std::string& what, LikelihoodProfile profile)
      : Error(ErrorKind::kNonIdentifiable, what), profile_(std::move(profile)) {}
  const LikelihoodProfile& profile() const { return profile_; }

 private:
  LikelihoodProfile profile_;
};

struct ProfileOptions {
  int grid_points = 64;
  double relative_width = 1e-6;
  int max_iterations = 200;
};

/// Default search interval: [1e-4, 100] for the sigmas, and
/// [1e-3, 100] times the mean tip-to-tip distance for lambda.
std::pair<double, double> DefaultBounds(const PhyloTree& tree, FreeParam param);

/// Maximises the likelihood over one parameter with the other two held at
/// `fixed`: log-spaced scan, then golden-section refinement (in log space)
/// inside the cells adjacent to the best scan point.
MLEResult ProfileMle(const PhyloTree& tree, const Eigen::VectorXd& tip_weights, FreeParam free_param,
                     const OUHyperParams& fixed, std::pair<double, double> bounds, const ProfileOptions& options = {});

/// One-dimensional maximisation over sigma_f with sigma_n = ratio * sigma_f
/// and lambda known.
MLEResult RatioMle(const PhyloTree& tree, const Eigen::VectorXd& tip_weights, double lambda_known, double ratio,
                   std::pair<double, double> bounds, const ProfileOptions& options = {});

/// Closed-form sigma_f for the ratio family: K = sigma_f^2 M, so the
/// likelihood peaks at sigma_f^2 = y^T M^-1 y / n.
double RatioClosedFormSigmaF(const PhyloTree& tree, const Eigen::VectorXd& tip_weights, double lambda_known,
                             double ratio);

std::string ProfileToCsv(const LikelihoodProfile& profile);
nlohmann::json ToJson(const MLEResult& result);

}  // namespace phylofunc
