#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phylofunc/ou_kernel.hpp"
#include "phylofunc/phylo_tree.hpp"
#include "phylofunc/source_sep.hpp"
#include "phylofunc/trait_sim.hpp"

namespace phylofunc {

struct PosteriorWeight {
  NodeId node;
  Eigen::Index component = 0;
  double mean = 0.0;
  double total_variance = 0.0;
  double inherited_variance = 0.0;
  double specific_variance = 0.0;
};

struct FunctionalPosterior {
  NodeId node;
  Eigen::RowVectorXd mean_curve;
  Eigen::RowVectorXd inherited_sd_curve;
  Eigen::RowVectorXd total_sd_curve;
};

/// Zero-mean GP conditioning of one component on its tip weights
/// (`tip_weights` in tree.tips() order).
///
/// Training covariance carries the specific-variation delta; the
/// cross-covariance to queries does not, so a query at an observed tip is a
/// new organism at that point of the tree and keeps the full sigma_n^2.
std::vector<PosteriorWeight> GpPosterior(const PhyloTree& tree, const Eigen::VectorXd& tip_weights,
                                         const OUHyperParams& params, const std::vector<NodeId>& query_nodes,
                                         Eigen::Index component = 0);

/// Splits total variance into specific (sigma_n^2) and inherited (the rest,
/// clamped at zero) parts.
PosteriorWeight DecomposeVariance(PosteriorWeight post, const OUHyperParams& params);

/// Maps independent per-component weight posteriors at one node through the
/// basis: mean = mean_curve + sum_i mean_i phi_i, variance = sum_i var_i phi_i^2.
FunctionalPosterior MakeFunctionalPosterior(const std::vector<PosteriorWeight>& per_component,
                                            const BasisSet& basis, const Eigen::RowVectorXd& mean_curve);

/// Basis, tip weights and mean curve describing the tip data, either the
/// simulation truth or an ICA estimate.
struct Decomposition {
  BasisSet basis;
  Eigen::MatrixXd tip_weights;    // tips x k, tree.tips() order
  Eigen::RowVectorXd mean_curve;  // m
};

Decomposition FromIca(const ICAResult& ica);

/// Functional posteriors at every node of the tree, indexed by node.
std::vector<FunctionalPosterior> ReconstructAll(const PhyloTree& tree, const Decomposition& decomposition,
                                                const std::vector<OUHyperParams>& params);

/// Fraction of (node, grid point) pairs whose true value lies within
/// `n_sd` total posterior standard deviations of the posterior mean.
double Coverage(const std::vector<FunctionalPosterior>& posteriors, const Eigen::MatrixXd& truth_curves,
                const std::vector<NodeId>& nodes, double n_sd);

/// Long-format CSV: node_id, grid_index, mean, inherited_sd, total_sd.
std::string PosteriorsToCsv(const PhyloTree& tree, const std::vector<FunctionalPosterior>& posteriors);

}  // namespace phylofunc
