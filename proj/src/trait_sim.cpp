#include "phylofunc/trait_sim.hpp"

#include <array>
#include <cmath>
#include <random>

#include "phylofunc/csv.hpp"
#include "phylofunc/error.hpp"

namespace phylofunc {

void BasisSet::Validate() const {
  if (k() < 1) throw InvalidInput("basis needs at least one curve");
  if (m() < 2) throw InvalidInput("basis curves need at least two grid points");
  if (grid.size() != m()) throw InvalidInput("basis grid length differs from curve length");
  if (!curves.allFinite() || !grid.allFinite()) throw InvalidInput("basis contains non-finite values");
}

Eigen::MatrixXd TraitDataset::TrainCurves(const PhyloTree& tree) const {
  const auto& tips = tree.tips();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(tips.size()), curves.cols());
  for (std::size_t i = 0; i < tips.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = curves.row(static_cast<Eigen::Index>(tips[i].value));
  }
  return out;
}

BasisSet MakeDefaultBasis(Eigen::Index m) {
  if (m < 16) throw InvalidInput("default basis needs at least 16 grid points");
  BasisSet basis;
  basis.grid = Eigen::VectorXd::LinSpaced(m, 0.0, 1.0);
  basis.curves.resize(3, m);
  const auto bump = [](double x, double centre, double width) {
    const double z = (x - centre) / width;
    return std::exp(-0.5 * z * z);
  };
  for (Eigen::Index j = 0; j < m; ++j) {
    const double x = basis.grid(j);
    basis.curves(0, j) = bump(x, 0.3, 0.1);
    basis.curves(1, j) = bump(x, 0.6, 0.18);
    basis.curves(2, j) = 0.2 + 0.8 * x * x;
  }
  return basis;
}

Eigen::MatrixXd CovarianceSquareRoot(const Eigen::MatrixXd& covariance) {
  try {
    const JitteredCholesky chol(covariance);
    return chol.llt().matrixL();
  } catch (const Error&) {
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(covariance);
  if (solver.info() != Eigen::Success) throw NumericalFailure("eigen-decomposition failed");
  const Eigen::VectorXd values = solver.eigenvalues();
  const double scale = std::max(values.cwiseAbs().maxCoeff(), 1e-300);
  if (values.minCoeff() < -1e-8 * scale) throw NumericalFailure("covariance matrix is not positive semi-definite");
  return solver.eigenvectors() * values.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

std::uint64_t SubSeed(std::uint64_t seed, std::string_view stream) {
  // FNV-1a of the stream name, mixed with the seed through seed_seq.
  std::uint64_t hash = 1469598103934665603ULL;
  for (const char c : stream) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 1099511628211ULL;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(hash), static_cast<std::uint32_t>(hash >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

WeightAssignment SampleWeights(const PhyloTree& tree, const std::vector<OUHyperParams>& params,
                               std::uint64_t seed) {
  if (params.empty()) throw InvalidInput("at least one component is required");
  const DistanceMatrix distances = PatristicDistances(tree);
  const auto n = static_cast<Eigen::Index>(tree.size());
  WeightAssignment out{Eigen::MatrixXd(n, static_cast<Eigen::Index>(params.size()))};
  for (std::size_t i = 0; i < params.size(); ++i) {
    const CovarianceMatrix cov = BuildCovMatrix(params[i], distances, true);
    const Eigen::MatrixXd root = CovarianceSquareRoot(cov.entries);
    std::mt19937_64 rng(SubSeed(seed, "component" + std::to_string(i)));
    std::normal_distribution<double> normal;
    Eigen::VectorXd z(n);
    for (Eigen::Index j = 0; j < n; ++j) z(j) = normal(rng);
    out.weights.col(static_cast<Eigen::Index>(i)) = root * z;
  }
  return out;
}

TraitDataset AssembleTraits(const PhyloTree& tree, const WeightAssignment& weights,
                            const BasisSet& basis) {
  basis.Validate();
  if (weights.weights.cols() != basis.k()) {
    throw InvalidInput("weight dimension " + std::to_string(weights.weights.cols()) +
                       " differs from basis size " + std::to_string(basis.k()));
  }
  if (weights.weights.rows() != static_cast<Eigen::Index>(tree.size())) {
    throw InvalidInput("one weight vector per tree node is required");
  }
  TraitDataset out;
  out.curves = weights.weights * basis.curves;
  out.grid = basis.grid;
  out.split.resize(tree.size());
  for (std::size_t i = 0; i < tree.size(); ++i) {
    out.split[i] = tree.is_tip(NodeId{i}) ? Split::kTrain : Split::kValidate;
  }
  return out;
}

std::vector<OUHyperParams> PaperHyperParams() {
  return {
      OUHyperParams{4.5, 17.9, 0.45},
      OUHyperParams{0.0, std::nullopt, 1.0},
      OUHyperParams{3.0, 8.95, 0.45},
  };
}

Scenario SimulateScenario(std::uint64_t seed, const ScenarioConfig& config) {
  for (const auto& p : config.params) p.Validate();
  PhyloTree tree = RandomTree(config.n_tips, config.ig_mu, config.ig_shape, SubSeed(seed, "tree"));
  BasisSet basis = MakeDefaultBasis(config.grid_size);
  if (static_cast<Eigen::Index>(config.params.size()) != basis.k()) {
    throw InvalidInput("the default basis has 3 curves; 3 parameter sets are required");
  }
  WeightAssignment weights = SampleWeights(tree, config.params, SubSeed(seed, "weights"));
  TraitDataset dataset = AssembleTraits(tree, weights, basis);
  dataset.seed = seed;
  dataset.params = config.params;
  return {std::move(tree), std::move(basis), std::move(weights), std::move(dataset)};
}

// ---------------------------------------------------------------------------
// Files

namespace {

csv::Row NumberRow(const Eigen::Ref<const Eigen::RowVectorXd>& values) {
  csv::Row row;
  row.reserve(static_cast<std::size_t>(values.size()));
  for (Eigen::Index j = 0; j < values.size(); ++j) row.push_back(csv::FormatDouble(values(j)));
  return row;
}

Eigen::RowVectorXd ParseNumbers(const csv::Row& row, std::size_t skip) {
  Eigen::RowVectorXd out(static_cast<Eigen::Index>(row.size() - skip));
  for (std::size_t j = skip; j < row.size(); ++j) {
    out(static_cast<Eigen::Index>(j - skip)) = csv::ParseDouble(row[j]);
  }
  return out;
}

}  // namespace

std::string BasisToCsv(const BasisSet& basis) {
  std::string out = csv::JoinRow(NumberRow(basis.grid.transpose()));
  for (Eigen::Index i = 0; i < basis.k(); ++i) out += csv::JoinRow(NumberRow(basis.curves.row(i)));
  return out;
}

BasisSet BasisFromCsv(const std::string& text) {
  const auto rows = csv::Parse(text);
  if (rows.size() < 2) throw InvalidInput("basis file needs a grid row and at least one curve");
  BasisSet basis;
  basis.grid = ParseNumbers(rows[0], 0).transpose();
  basis.curves.resize(static_cast<Eigen::Index>(rows.size() - 1), basis.grid.size());
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) throw InvalidInput("basis row length differs from grid");
    basis.curves.row(static_cast<Eigen::Index>(i - 1)) = ParseNumbers(rows[i], 0);
  }
  basis.Validate();
  return basis;
}

std::string WeightsToCsv(const PhyloTree& tree, const Eigen::MatrixXd& weights,
                         const std::vector<NodeId>& rows) {
  if (static_cast<Eigen::Index>(rows.size()) != weights.rows()) {
    throw InvalidInput("weights and node list differ in length");
  }
  csv::Row header{"node"};
  for (Eigen::Index i = 0; i < weights.cols(); ++i) header.push_back("w" + std::to_string(i + 1));
  std::string out = csv::JoinRow(header);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    csv::Row row{tree.name(rows[r])};
    const csv::Row values = NumberRow(weights.row(static_cast<Eigen::Index>(r)));
    row.insert(row.end(), values.begin(), values.end());
    out += csv::JoinRow(row);
  }
  return out;
}

Eigen::MatrixXd WeightsFromCsv(const PhyloTree& tree, const std::string& text,
                               const std::vector<NodeId>& wanted) {
  const auto rows = csv::Parse(text);
  if (rows.size() < 2 || rows[0].size() < 2) throw InvalidInput("weights file is empty");
  const auto k = static_cast<Eigen::Index>(rows[0].size() - 1);
  std::vector<std::optional<Eigen::RowVectorXd>> by_node(tree.size());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (static_cast<Eigen::Index>(rows[r].size()) != k + 1) throw InvalidInput("ragged weights row");
    const auto id = tree.find(rows[r][0]);
    if (!id) throw InvalidInput("weights file names unknown node '" + rows[r][0] + "'");
    by_node[id->value] = ParseNumbers(rows[r], 1);
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(wanted.size()), k);
  for (std::size_t i = 0; i < wanted.size(); ++i) {
    if (!by_node.at(wanted[i].value)) {
      throw InvalidInput("weights file has no row for node '" + tree.name(wanted[i]) + "'");
    }
    out.row(static_cast<Eigen::Index>(i)) = *by_node[wanted[i].value];
  }
  return out;
}

std::string TraitsToCsv(const PhyloTree& tree, const TraitDataset& dataset) {
  csv::Row header{"node", "split"};
  const csv::Row grid = NumberRow(dataset.grid.transpose());
  header.insert(header.end(), grid.begin(), grid.end());
  std::string out = csv::JoinRow(header);
  for (std::size_t i = 0; i < tree.size(); ++i) {
    csv::Row row{tree.name(NodeId{i}), dataset.split[i] == Split::kTrain ? "TRAIN" : "VALIDATE"};
    const csv::Row values = NumberRow(dataset.curves.row(static_cast<Eigen::Index>(i)));
    row.insert(row.end(), values.begin(), values.end());
    out += csv::JoinRow(row);
  }
  return out;
}

namespace {

Split ParseSplit(const std::string& tag) {
  if (tag == "TRAIN") return Split::kTrain;
  if (tag == "VALIDATE") return Split::kValidate;
  throw InvalidInput("split tag must be TRAIN or VALIDATE, got '" + tag + "'");
}

}  // namespace

TraitDataset TraitsFromCsv(const PhyloTree& tree, const std::string& text) {
  const auto rows = csv::Parse(text);
  if (rows.size() < 2 || rows[0].size() < 4) throw InvalidInput("traits file is empty");
  TraitDataset out;
  out.grid = ParseNumbers(rows[0], 2).transpose();
  out.curves = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(tree.size()), out.grid.size());
  out.split.assign(tree.size(), Split::kValidate);
  std::vector<bool> seen(tree.size(), false);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size()) throw InvalidInput("ragged traits row");
    const auto id = tree.find(rows[r][0]);
    if (!id) throw InvalidInput("traits file names unknown node '" + rows[r][0] + "'");
    seen[id->value] = true;
    out.split[id->value] = ParseSplit(rows[r][1]);
    out.curves.row(static_cast<Eigen::Index>(id->value)) = ParseNumbers(rows[r], 2);
  }
  for (std::size_t i = 0; i < tree.size(); ++i) {
    if (!seen[i]) throw InvalidInput("traits file has no row for node '" + tree.name(NodeId{i}) + "'");
  }
  return out;
}

Eigen::MatrixXd TrainCurvesFromCsv(const std::string& text, std::vector<std::string>* names) {
  const auto rows = csv::Parse(text);
  if (rows.size() < 2 || rows[0].size() < 4) throw InvalidInput("traits file is empty");
  std::vector<Eigen::RowVectorXd> train;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size()) throw InvalidInput("ragged traits row");
    if (ParseSplit(rows[r][1]) != Split::kTrain) continue;
    train.push_back(ParseNumbers(rows[r], 2));
    if (names) names->push_back(rows[r][0]);
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(train.size()), static_cast<Eigen::Index>(rows[0].size() - 2));
  for (std::size_t i = 0; i < train.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = train[i];
  return out;
}

nlohmann::json TraitsSidecar(const TraitDataset& dataset) {
  nlohmann::json j;
  j["seed"] = dataset.seed;
  j["grid"] = std::vector<double>(dataset.grid.data(), dataset.grid.data() + dataset.grid.size());
  j["params"] = nlohmann::json::array();
  for (const auto& p : dataset.params) j["params"].push_back(ToJson(p));
  return j;
}

}  // namespace phylofunc
