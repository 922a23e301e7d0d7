#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "phylofunc/ou_kernel.hpp"
#include "phylofunc/phylo_tree.hpp"

namespace phylofunc {

/// k discretised curves (rows) sampled on a shared grid.
struct BasisSet {
  Eigen::MatrixXd curves;  // k x m
  Eigen::VectorXd grid;    // m

  Eigen::Index k() const { return curves.rows(); }
  Eigen::Index m() const { return curves.cols(); }
  void Validate() const;
};

/// Per-node weight vectors; row i belongs to NodeId{i}.
struct WeightAssignment {
  Eigen::MatrixXd weights;  // nodes x k
};

enum class Split { kTrain, kValidate };

struct TraitDataset {
  Eigen::MatrixXd curves;  // nodes x m, row i belongs to NodeId{i}
  std::vector<Split> split;
  Eigen::VectorXd grid;
  std::uint64_t seed = 0;
  std::vector<OUHyperParams> params;

  /// Rows of the training (tip) curves, in tree.tips() order.
  Eigen::MatrixXd TrainCurves(const PhyloTree& tree) const;
};

/// Three smooth, mutually non-orthogonal curves on a uniform grid over [0, 1]:
/// two overlapping Gaussian bumps and a rising quadratic trend.
BasisSet MakeDefaultBasis(Eigen::Index m);

/// Symmetric square root of a covariance for joint Gaussian sampling: the
/// Cholesky factor, or an eigen-decomposition with negative eigenvalues
/// clipped to zero when Cholesky fails even with jitter.
Eigen::MatrixXd CovarianceSquareRoot(const Eigen::MatrixXd& covariance);

/// One joint draw of every component over all tree nodes. Components are
/// independent zero-mean OU processes, each with covariance
/// BuildCovMatrix(params[i], all-node distances, self-delta on).
WeightAssignment SampleWeights(const PhyloTree& tree, const std::vector<OUHyperParams>& params,
                               std::uint64_t seed);

/// Curve at every node is w_t^T phi. Tips are tagged kTrain, internal nodes
/// kValidate.
TraitDataset AssembleTraits(const PhyloTree& tree, const WeightAssignment& weights,
                            const BasisSet& basis);

/// The published simulation hyperparameters: inherited 4.5 / 0 / 3.0,
/// length-scale 17.9 / none / 8.95, specific 0.45 / 1 / 0.45.
std::vector<OUHyperParams> PaperHyperParams();

struct ScenarioConfig {
  std::size_t n_tips = 128;
  double ig_mu = 0.5;
  double ig_shape = 0.5;
  Eigen::Index grid_size = 1024;
  std::vector<OUHyperParams> params = PaperHyperParams();
};

struct Scenario {
  PhyloTree tree;
  BasisSet basis;
  WeightAssignment weights;
  TraitDataset dataset;
};

/// Named RNG sub-streams derived from one top-level seed.
std::uint64_t SubSeed(std::uint64_t seed, std::string_view stream);

/// Tree from SubSeed(seed, "tree"), weights from SubSeed(seed, "weights").
Scenario SimulateScenario(std::uint64_t seed, const ScenarioConfig& config = {});
/// 128-tip IG(0.5, 0.5) tree, default 1024-point basis, published parameters.
inline Scenario PaperScenario(std::uint64_t seed) { return SimulateScenario(seed); }

// File formats.
std::string BasisToCsv(const BasisSet& basis);
BasisSet BasisFromCsv(const std::string& text);
std::string WeightsToCsv(const PhyloTree& tree, const Eigen::MatrixXd& weights,
                         const std::vector<NodeId>& rows);
/// Reads a weights CSV; returns rows in the order of `wanted`, which must all
/// be present in the file.
Eigen::MatrixXd WeightsFromCsv(const PhyloTree& tree, const std::string& text,
                               const std::vector<NodeId>& wanted);
std::string TraitsToCsv(const PhyloTree& tree, const TraitDataset& dataset);
/// Parses a traits CSV; rows keyed by node name are placed at their tree index.
TraitDataset TraitsFromCsv(const PhyloTree& tree, const std::string& text);
/// Training curves straight from a traits CSV, without a tree.
Eigen::MatrixXd TrainCurvesFromCsv(const std::string& text, std::vector<std::string>* names = nullptr);
nlohmann::json TraitsSidecar(const TraitDataset& dataset);

}  // namespace phylofunc
