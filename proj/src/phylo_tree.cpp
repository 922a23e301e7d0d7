#include "phylofunc/phylo_tree.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <deque>

#include "phylofunc/csv.hpp"
#include "phylofunc/error.hpp"

namespace phylofunc {

PhyloTree PhyloTree::FromParents(std::vector<std::optional<NodeId>> parents,
                                 std::vector<double> branch_lengths,
                                 std::vector<std::string> labels) {
  const std::size_t n = parents.size();
  if (n == 0) throw InvalidInput("tree has no nodes");
  if (branch_lengths.size() != n || labels.size() != n) {
    throw InvalidInput("parent, branch length and label tables differ in size");
  }

  PhyloTree tree;
  tree.nodes_.resize(n);
  std::optional<NodeId> root;
  for (std::size_t i = 0; i < n; ++i) {
    TreeNode& node = tree.nodes_[i];
    node.parent = parents[i];
    node.label = std::move(labels[i]);
    node.branch_length = branch_lengths[i];
    if (!std::isfinite(node.branch_length) || node.branch_length < 0.0) {
      throw InvalidInput("branch length of node " + std::to_string(i) + " is negative or not finite");
    }
    if (!node.parent) {
      if (root) throw InvalidInput("tree has more than one root");
      root = NodeId{i};
      node.branch_length = 0.0;
    } else if (node.parent->value >= n || node.parent->value == i) {
      throw InvalidInput("node " + std::to_string(i) + " has an invalid parent");
    }
  }
  if (!root) throw InvalidInput("tree has no root");
  tree.root_ = *root;
  for (std::size_t i = 0; i < n; ++i) {
    if (parents[i]) tree.nodes_[parents[i]->value].children.push_back(NodeId{i});
  }

  // Breadth-first from the root; anything unreached sits on a cycle or in a
  // separate component.
  tree.depths_.assign(n, 0.0);
  tree.levels_.assign(n, 0);
  std::vector<bool> seen(n, false);
  std::deque<NodeId> queue{tree.root_};
  seen[tree.root_.value] = true;
  std::size_t reached = 0;
  while (!queue.empty()) {
    const NodeId id = queue.front();
    queue.pop_front();
    ++reached;
    for (const NodeId child : tree.nodes_[id.value].children) {
      if (seen[child.value]) throw InvalidInput("parent relation is not a tree");
      seen[child.value] = true;
      tree.depths_[child.value] = tree.depths_[id.value] + tree.nodes_[child.value].branch_length;
      tree.levels_[child.value] = tree.levels_[id.value] + 1;
      queue.push_back(child);
    }
  }
  if (reached != n) throw InvalidInput("parent relation is cyclic or disconnected");

  for (std::size_t i = 0; i < n; ++i) {
    if (tree.nodes_[i].children.empty()) tree.tips_.push_back(NodeId{i});
  }
  return tree;
}

std::vector<NodeId> PhyloTree::internal_nodes() const {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].children.empty()) out.push_back(NodeId{i});
  }
  return out;
}

std::vector<NodeId> PhyloTree::all_nodes() const {
  std::vector<NodeId> out(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) out[i] = NodeId{i};
  return out;
}

std::string PhyloTree::name(NodeId id) const {
  const std::string& label = node(id).label;
  return label.empty() ? "#" + std::to_string(id.value) : label;
}

std::optional<NodeId> PhyloTree::find(std::string_view label) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (name(NodeId{i}) == label) return NodeId{i};
  }
  return std::nullopt;
}

NodeId PhyloTree::lowest_common_ancestor(NodeId a, NodeId b) const {
  if (a.value >= size() || b.value >= size()) throw InvalidInput("unknown node id");
  while (levels_[a.value] > levels_[b.value]) a = *nodes_[a.value].parent;
  while (levels_[b.value] > levels_[a.value]) b = *nodes_[b.value].parent;
  while (a != b) {
    a = *nodes_[a.value].parent;
    b = *nodes_[b.value].parent;
  }
  return a;
}

// ---------------------------------------------------------------------------
// Newick

namespace {

bool IsLabelChar(char c) {
  return c != '(' && c != ')' && c != ',' && c != ':' && c != ';' &&
         !std::isspace(static_cast<unsigned char>(c));
}

class NewickParser {
 public:
  explicit NewickParser(std::string_view text) : text_(text) {}

  void ParseTree() {
    SkipSpace();
    if (pos_ >= text_.size()) Fail("empty tree");
    ParseSubtree(std::nullopt);
    SkipSpace();
    if (pos_ >= text_.size()) Fail("missing terminating ';'");
    if (text_[pos_] == ')') Fail("unbalanced parentheses: unexpected ')'");
    if (text_[pos_] != ';') Fail("dangling token");
    ++pos_;
    SkipSpace();
    if (pos_ != text_.size()) Fail("dangling token after ';'");
  }

  std::vector<std::optional<NodeId>> parents;
  std::vector<double> lengths;
  std::vector<std::string> labels;
  bool missing_length = false;

 private:
  [[noreturn]] void Fail(const std::string& message) const {
    throw InvalidInput("newick parse error at byte " + std::to_string(pos_) + ": " + message);
  }

  void SkipSpace() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  void ParseSubtree(std::optional<NodeId> parent) {
    const NodeId id{parents.size()};
    parents.push_back(parent);
    lengths.push_back(0.0);
    labels.emplace_back();

    SkipSpace();
    if (pos_ < text_.size() && text_[pos_] == '(') {
      ++pos_;
      while (true) {
        ParseSubtree(id);
        SkipSpace();
        if (pos_ >= text_.size()) Fail("unbalanced parentheses: expected ',' or ')'");
        if (text_[pos_] == ',') {
          ++pos_;
          continue;
        }
        if (text_[pos_] == ')') {
          ++pos_;
          break;
        }
        Fail("unbalanced parentheses: expected ',' or ')'");
      }
    }
    SkipSpace();
    const std::size_t label_start = pos_;
    while (pos_ < text_.size() && IsLabelChar(text_[pos_])) ++pos_;
    labels[id.value] = std::string(text_.substr(label_start, pos_ - label_start));

    SkipSpace();
    if (pos_ < text_.size() && text_[pos_] == ':') {
      ++pos_;
      SkipSpace();
      const std::size_t number_start = pos_;
      while (pos_ < text_.size() && IsLabelChar(text_[pos_])) ++pos_;
      const std::string_view token = text_.substr(number_start, pos_ - number_start);
      double value = 0.0;
      auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
      if (token.empty() || ec != std::errc{} || end != token.data() + token.size() ||
          !std::isfinite(value)) {
        pos_ = number_start;
        Fail("malformed branch length");
      }
      if (value < 0.0) {
        pos_ = number_start;
        Fail("negative branch length");
      }
      lengths[id.value] = value;
    } else if (parent) {
      missing_length = true;
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

void AppendNewick(const PhyloTree& tree, NodeId id, std::string& out) {
  const TreeNode& node = tree.node(id);
  if (!node.children.empty()) {
    out += '(';
    for (std::size_t i = 0; i < node.children.size(); ++i) {
      if (i > 0) out += ',';
      AppendNewick(tree, node.children[i], out);
    }
    out += ')';
  }
  out += node.label;
  if (node.parent) {
    char buffer[40];
    std::snprintf(buffer, sizeof buffer, ":%.12g", node.branch_length);
    out += buffer;
  }
}

}  // namespace

PhyloTree ParseNewick(std::string_view text) {
  NewickParser parser(text);
  parser.ParseTree();
  PhyloTree tree = PhyloTree::FromParents(std::move(parser.parents), std::move(parser.lengths),
                                          std::move(parser.labels));
  tree.missing_branch_lengths_ = parser.missing_length;
  return tree;
}

std::string SerializeNewick(const PhyloTree& tree) {
  std::string out;
  AppendNewick(tree, tree.root(), out);
  out += ';';
  return out;
}

// ---------------------------------------------------------------------------
// Random trees

double SampleInverseGaussian(double mu, double shape, std::mt19937_64& rng) {
  if (!(mu > 0.0) || !(shape > 0.0) || !std::isfinite(mu) || !std::isfinite(shape)) {
    throw InvalidInput("inverse Gaussian parameters must be positive and finite");
  }
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform;
  const double nu = normal(rng);
  const double y = nu * nu;
  // The two roots of the transformation multiply to mu^2. Computing the
  // larger root directly and dividing avoids cancellation in the smaller one.
  const double larger =
      mu + mu * mu * y / (2.0 * shape) + mu / (2.0 * shape) * std::sqrt(4.0 * mu * shape * y + mu * mu * y * y);
  const double smaller = mu * mu / larger;
  const double u = uniform(rng);
  return u <= mu / (mu + smaller) ? smaller : larger;
}

PhyloTree RandomTree(std::size_t n_tips, double ig_mu, double ig_shape, std::uint64_t seed,
                     TopologyModel topology) {
  if (n_tips < 2) throw InvalidInput("random tree needs at least 2 tips");
  if (!(ig_mu > 0.0) || !(ig_shape > 0.0)) {
    throw InvalidInput("inverse Gaussian parameters must be positive");
  }
  std::mt19937_64 rng(seed);

  // Scratch topology: tips occupy 0..n-1, internal nodes are appended.
  const std::size_t total = 2 * n_tips - 1;
  std::vector<std::optional<std::size_t>> parent(total);
  std::vector<std::vector<std::size_t>> children(total);
  std::vector<std::size_t> present{0, 1};
  std::size_t next_internal = n_tips;
  std::size_t root = next_internal++;
  parent[0] = root;
  parent[1] = root;
  children[root] = {0, 1};
  present.push_back(root);

  auto replace_child = [&](std::size_t of, std::size_t old_child, std::size_t new_child) {
    std::replace(children[of].begin(), children[of].end(), old_child, new_child);
  };

  for (std::size_t tip = 2; tip < n_tips; ++tip) {
    std::size_t below = 0;
    if (topology == TopologyModel::kYule) {
      std::uniform_int_distribution<std::size_t> pick(0, tip - 1);
      below = pick(rng);
    } else {
      // Each present node stands for the edge above it; the root's is the stem.
      std::uniform_int_distribution<std::size_t> pick(0, present.size() - 1);
      below = present[pick(rng)];
    }
    const std::size_t joint = next_internal++;
    parent[joint] = parent[below];
    if (parent[below]) {
      replace_child(*parent[below], below, joint);
    } else {
      root = joint;
    }
    parent[below] = joint;
    parent[tip] = joint;
    children[joint] = {below, tip};
    present.push_back(tip);
    present.push_back(joint);
  }

  // Renumber internal nodes in preorder from the root.
  std::vector<std::size_t> new_index(total);
  for (std::size_t i = 0; i < n_tips; ++i) new_index[i] = i;
  std::size_t counter = n_tips;
  std::vector<std::size_t> stack{root};
  while (!stack.empty()) {
    const std::size_t id = stack.back();
    stack.pop_back();
    if (id >= n_tips) new_index[id] = counter++;
    for (auto it = children[id].rbegin(); it != children[id].rend(); ++it) stack.push_back(*it);
  }

  std::vector<std::optional<NodeId>> parents(total);
  std::vector<std::string> labels(total);
  for (std::size_t old = 0; old < total; ++old) {
    const std::size_t idx = new_index[old];
    if (parent[old]) parents[idx] = NodeId{new_index[*parent[old]]};
    labels[idx] = idx < n_tips ? "t" + std::to_string(idx + 1) : "n" + std::to_string(idx - n_tips + 1);
  }
  std::vector<double> lengths(total, 0.0);
  for (std::size_t i = 0; i < total; ++i) {
    if (parents[i]) lengths[i] = SampleInverseGaussian(ig_mu, ig_shape, rng);
  }
  return PhyloTree::FromParents(std::move(parents), std::move(lengths), std::move(labels));
}

// ---------------------------------------------------------------------------
// Distances

namespace {

double PathLength(const PhyloTree& tree, NodeId a, NodeId b) {
  if (a == b) return 0.0;
  const NodeId lca = tree.lowest_common_ancestor(a, b);
  const double d = tree.depth(a) + tree.depth(b) - 2.0 * tree.depth(lca);
  return std::max(d, 0.0);
}

void CheckIds(const PhyloTree& tree, std::span<const NodeId> ids) {
  for (const NodeId id : ids) {
    if (id.value >= tree.size()) throw InvalidInput("unknown node id " + std::to_string(id.value));
  }
}

}  // namespace

DistanceMatrix PatristicDistances(const PhyloTree& tree,
                                  std::optional<std::span<const NodeId>> node_subset) {
  DistanceMatrix out;
  if (node_subset) {
    CheckIds(tree, *node_subset);
    out.node_order.assign(node_subset->begin(), node_subset->end());
  } else {
    out.node_order = tree.all_nodes();
  }
  const auto n = static_cast<Eigen::Index>(out.node_order.size());
  out.entries = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = PathLength(tree, out.node_order[i], out.node_order[j]);
      out.entries(i, j) = d;
      out.entries(j, i) = d;
    }
  }
  return out;
}

Eigen::MatrixXd PatristicBlock(const PhyloTree& tree, std::span<const NodeId> from,
                               std::span<const NodeId> to) {
  CheckIds(tree, from);
  CheckIds(tree, to);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(from.size()), static_cast<Eigen::Index>(to.size()));
  for (std::size_t i = 0; i < from.size(); ++i) {
    for (std::size_t j = 0; j < to.size(); ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = PathLength(tree, from[i], to[j]);
    }
  }
  return out;
}

TipDistanceStats TipDistanceSummary(const PhyloTree& tree) {
  const auto& tips = tree.tips();
  TipDistanceStats stats;
  if (tips.size() < 2) return stats;
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < tips.size(); ++i) {
    for (std::size_t j = i + 1; j < tips.size(); ++j) {
      const double d = PathLength(tree, tips[i], tips[j]);
      stats.max = std::max(stats.max, d);
      sum += d;
      ++pairs;
    }
  }
  stats.mean = sum / static_cast<double>(pairs);
  return stats;
}

std::string DistanceMatrixToCsv(const PhyloTree& tree, const DistanceMatrix& distances) {
  csv::Row header{"node"};
  for (const NodeId id : distances.node_order) header.push_back(tree.name(id));
  std::string out = csv::JoinRow(header);
  for (std::size_t i = 0; i < distances.node_order.size(); ++i) {
    csv::Row row{tree.name(distances.node_order[i])};
    for (std::size_t j = 0; j < distances.node_order.size(); ++j) {
      row.push_back(csv::FormatDouble(distances.entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
    }
    out += csv::JoinRow(row);
  }
  return out;
}

}  // namespace phylofunc
