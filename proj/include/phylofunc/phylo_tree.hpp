#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace phylofunc {

/// Index of a node inside a PhyloTree.
struct NodeId {
  std::size_t value = 0;

  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

struct TreeNode {
  std::optional<NodeId> parent;
  double branch_length = 0.0;
  std::string label;
  std::vector<NodeId> children;
};

/// Rooted tree with branch lengths. Immutable once built; construct through
/// ParseNewick, RandomTree or FromParents, all of which validate the
/// single-root / acyclic / connected invariants.
class PhyloTree {
 public:
  /// Builds a tree from a parent table. Exactly one entry may be empty (the
  /// root); children are ordered by node index.
  static PhyloTree FromParents(std::vector<std::optional<NodeId>> parents,
                               std::vector<double> branch_lengths,
                               std::vector<std::string> labels);

  std::size_t size() const { return nodes_.size(); }
  NodeId root() const { return root_; }
  const TreeNode& node(NodeId id) const { return nodes_.at(id.value); }
  std::span<const TreeNode> nodes() const { return nodes_; }

  bool is_tip(NodeId id) const { return node(id).children.empty(); }
  /// Tips in increasing index order. This order is the row order of every
  /// per-tip vector in the library.
  const std::vector<NodeId>& tips() const { return tips_; }
  std::vector<NodeId> internal_nodes() const;
  std::vector<NodeId> all_nodes() const;

  /// Label, or "#<index>" when the node is unlabeled.
  std::string name(NodeId id) const;
  std::optional<NodeId> find(std::string_view label) const;

  /// Sum of branch lengths from the root.
  double depth(NodeId id) const { return depths_.at(id.value); }
  NodeId lowest_common_ancestor(NodeId a, NodeId b) const;

  /// Set by ParseNewick when at least one non-root branch had no length.
  bool missing_branch_lengths() const { return missing_branch_lengths_; }

 private:
  friend PhyloTree ParseNewick(std::string_view text);

  std::vector<TreeNode> nodes_;
  NodeId root_;
  std::vector<NodeId> tips_;
  std::vector<double> depths_;
  std::vector<std::size_t> levels_;
  bool missing_branch_lengths_ = false;
};

/// Parses a single Newick tree. Branch lengths follow ':'; labels are
/// optional everywhere. Throws Error(kInvalidInput) naming the byte offset of
/// the first problem.
PhyloTree ParseNewick(std::string_view text);

/// Newick with branch lengths at 12 significant digits, children in index
/// order, terminated by ';'.
std::string SerializeNewick(const PhyloTree& tree);

/// One draw from the inverse Gaussian distribution IG(mu, shape) using the
/// Michael-Schucany-Haas transformation with one rejection step.
double SampleInverseGaussian(double mu, double shape, std::mt19937_64& rng);

enum class TopologyModel {
  kYule,     // split a uniformly chosen tip (random clade-size splitting)
  kUniform,  // attach to a uniformly chosen edge, stem included; uniform labeled topologies
};

/// Random rooted binary tree grown one tip at a time under `topology`; every
/// non-root branch length is an independent IG(ig_mu, ig_shape) draw.
///
/// Tips are numbered 0..n_tips-1 and labeled t1..tn; internal nodes follow
/// in preorder (root first) labeled n1..n(n_tips-1).
PhyloTree RandomTree(std::size_t n_tips, double ig_mu, double ig_shape, std::uint64_t seed,
                     TopologyModel topology = TopologyModel::kYule);

struct DistanceMatrix {
  std::vector<NodeId> node_order;
  Eigen::MatrixXd entries;
};

/// Patristic (path-length) distances. With no subset, covers every node in
/// index order.
DistanceMatrix PatristicDistances(const PhyloTree& tree,
                                  std::optional<std::span<const NodeId>> node_subset = std::nullopt);

/// Rectangular block of patristic distances, rows = `from`, cols = `to`.
Eigen::MatrixXd PatristicBlock(const PhyloTree& tree, std::span<const NodeId> from,
                               std::span<const NodeId> to);

struct TipDistanceStats {
  double max = 0.0;
  double mean = 0.0;
};

/// Max and mean distance over unordered pairs of distinct tips.
TipDistanceStats TipDistanceSummary(const PhyloTree& tree);

/// CSV: header row of node names, then one row per node (name, distances).
std::string DistanceMatrixToCsv(const PhyloTree& tree, const DistanceMatrix& distances);

}  // namespace phylofunc
