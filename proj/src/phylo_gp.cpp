#include "phylofunc/phylo_gp.hpp"

#include <algorithm>
#include <cmath>

#include "phylofunc/csv.hpp"
#include "phylofunc/error.hpp"

namespace phylofunc {

namespace {

// Inherited part clamped to [0, sigma_f^2]; total rebuilt so the two parts
// always sum exactly.
void SplitVariance(PosteriorWeight& post, const OUHyperParams& params) {
  const double specific = params.sigma_n * params.sigma_n;
  const double prior_inherited = params.sigma_f * params.sigma_f;
  post.specific_variance = specific;
  post.inherited_variance = std::clamp(post.total_variance - specific, 0.0, prior_inherited);
  post.total_variance = post.inherited_variance + post.specific_variance;
}

}  // namespace

std::vector<PosteriorWeight> GpPosterior(const PhyloTree& tree, const Eigen::VectorXd& tip_weights,
                                         const OUHyperParams& params, const std::vector<NodeId>& query_nodes,
                                         Eigen::Index component) {
  params.Validate();
  const auto& tips = tree.tips();
  if (tip_weights.size() != static_cast<Eigen::Index>(tips.size())) {
    throw InvalidInput("expected " + std::to_string(tips.size()) + " tip weights, got " +
                       std::to_string(tip_weights.size()));
  }
  const double prior = params.sigma_f * params.sigma_f + params.sigma_n * params.sigma_n;
  std::vector<PosteriorWeight> out(query_nodes.size());
  for (std::size_t q = 0; q < query_nodes.size(); ++q) {
    out[q].node = query_nodes[q];
    out[q].component = component;
    out[q].total_variance = prior;
  }
  if (params.sigma_f == 0.0) {
    // No inherited signal: every query reverts to the prior.
    for (auto& post : out) SplitVariance(post, params);
    return out;
  }

  const DistanceMatrix tip_distances = PatristicDistances(tree, std::span<const NodeId>(tips));
  const CovarianceMatrix train = BuildCovMatrix(params, tip_distances, true);
  const JitteredCholesky chol(train.entries);
  const Eigen::MatrixXd cross = CrossCovariance(params, PatristicBlock(tree, tips, query_nodes));
  const Eigen::VectorXd alpha = chol.solve(tip_weights);
  const Eigen::MatrixXd v = chol.llt().matrixL().solve(cross);
  const Eigen::VectorXd mean = cross.transpose() * alpha;
  const Eigen::VectorXd reduction = v.colwise().squaredNorm().transpose();
  for (std::size_t q = 0; q < query_nodes.size(); ++q) {
    const auto qi = static_cast<Eigen::Index>(q);
    out[q].mean = mean(qi);
    out[q].total_variance = prior - reduction(qi);
    SplitVariance(out[q], params);
  }
  return out;
}

PosteriorWeight DecomposeVariance(PosteriorWeight post, const OUHyperParams& params) {
  const double specific = params.sigma_n * params.sigma_n;
  if (post.total_variance < specific - 1e-12) {
    throw NumericalFailure("total posterior variance is below the specific variance");
  }
  post.specific_variance = specific;
  post.inherited_variance = std::max(post.total_variance - specific, 0.0);
  post.total_variance = post.inherited_variance + post.specific_variance;
  return post;
}

FunctionalPosterior MakeFunctionalPosterior(const std::vector<PosteriorWeight>& per_component,
                                            const BasisSet& basis, const Eigen::RowVectorXd& mean_curve) {
  if (static_cast<Eigen::Index>(per_component.size()) != basis.k()) {
    throw InvalidInput("one posterior per basis curve is required");
  }
  if (mean_curve.size() != basis.m()) throw InvalidInput("mean curve length differs from basis");
  FunctionalPosterior out;
  out.node = per_component.empty() ? NodeId{} : per_component.front().node;
  out.mean_curve = mean_curve;
  Eigen::RowVectorXd total = Eigen::RowVectorXd::Zero(basis.m());
  Eigen::RowVectorXd inherited = Eigen::RowVectorXd::Zero(basis.m());
  for (Eigen::Index i = 0; i < basis.k(); ++i) {
    const PosteriorWeight& post = per_component[static_cast<std::size_t>(i)];
    const Eigen::RowVectorXd squared = basis.curves.row(i).array().square();
    out.mean_curve += post.mean * basis.curves.row(i);
    total += post.total_variance * squared;
    inherited += post.inherited_variance * squared;
  }
  out.total_sd_curve = total.cwiseSqrt();
  out.inherited_sd_curve = inherited.cwiseSqrt().cwiseMin(out.total_sd_curve);
  return out;
}

Decomposition FromIca(const ICAResult& ica) {
  return {ica.estimated_basis, ica.tip_weights, ica.mean_curve};
}

std::vector<FunctionalPosterior> ReconstructAll(const PhyloTree& tree, const Decomposition& decomposition,
                                                const std::vector<OUHyperParams>& params) {
  const Eigen::Index k = decomposition.basis.k();
  if (static_cast<Eigen::Index>(params.size()) != k) throw InvalidInput("one parameter set per component is required");
  if (decomposition.tip_weights.cols() != k) throw InvalidInput("tip weights and basis differ in component count");

  const std::vector<NodeId> nodes = tree.all_nodes();
  std::vector<std::vector<PosteriorWeight>> by_component;
  for (Eigen::Index i = 0; i < k; ++i) {
    by_component.push_back(GpPosterior(tree, decomposition.tip_weights.col(i), params[static_cast<std::size_t>(i)], nodes, i));
  }
  std::vector<FunctionalPosterior> out;
  out.reserve(nodes.size());
  std::vector<PosteriorWeight> at_node(static_cast<std::size_t>(k));
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    for (Eigen::Index i = 0; i < k; ++i) at_node[static_cast<std::size_t>(i)] = by_component[static_cast<std::size_t>(i)][n];
    out.push_back(MakeFunctionalPosterior(at_node, decomposition.basis, decomposition.mean_curve));
  }
  return out;
}

double Coverage(const std::vector<FunctionalPosterior>& posteriors, const Eigen::MatrixXd& truth_curves,
                const std::vector<NodeId>& nodes, double n_sd) {
  std::size_t inside = 0;
  std::size_t total = 0;
  for (const NodeId node : nodes) {
    const FunctionalPosterior& post = posteriors.at(node.value);
    const auto truth = truth_curves.row(static_cast<Eigen::Index>(node.value));
    for (Eigen::Index x = 0; x < truth.size(); ++x) {
      if (std::abs(truth(x) - post.mean_curve(x)) <= n_sd * post.total_sd_curve(x)) ++inside;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(inside) / static_cast<double>(total);
}

std::string PosteriorsToCsv(const PhyloTree& tree, const std::vector<FunctionalPosterior>& posteriors) {
  std::string out = "node_id,grid_index,mean,inherited_sd,total_sd\n";
  for (const auto& post : posteriors) {
    const std::string name = tree.name(post.node);
    for (Eigen::Index x = 0; x < post.mean_curve.size(); ++x) {
      out += name;
      out += ',';
      out += std::to_string(x);
      out += ',';
      out += csv::FormatDouble(post.mean_curve(x));
      out += ',';
      out += csv::FormatDouble(post.inherited_sd_curve(x));
      out += ',';
      out += csv::FormatDouble(post.total_sd_curve(x));
      out += '\n';
    }
  }
  return out;
}

}  // namespace phylofunc
