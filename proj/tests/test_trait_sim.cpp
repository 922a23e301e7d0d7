#include <cmath>

#include <doctest.h>

#include "phylofunc/error.hpp"
#include "phylofunc/trait_sim.hpp"

using namespace phylofunc;

namespace {

const OUHyperParams kComponent1{4.5, 17.9, 0.45};
const OUHyperParams kComponent2{0.0, std::nullopt, 1.0};
const OUHyperParams kComponent3{3.0, 8.95, 0.45};

struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  Eigen::MatrixXd standard_error;  // of each covariance entry
};

// Sample moments of rows of `draws`, with normal-theory standard errors.
Moments SampleMoments(const Eigen::MatrixXd& draws) {
  const double n = static_cast<double>(draws.rows());
  Moments out;
  out.mean = draws.colwise().mean();
  const Eigen::MatrixXd centred = draws.rowwise() - out.mean.transpose();
  out.cov = centred.transpose() * centred / (n - 1.0);
  const Eigen::VectorXd var = out.cov.diagonal();
  out.standard_error = ((var * var.transpose()).array() + out.cov.array().square()).sqrt() / std::sqrt(n);
  return out;
}

double CosineSimilarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return a.dot(b) / (a.norm() * b.norm()); }

}  // namespace

TEST_CASE("default basis shape") {
  const BasisSet basis = MakeDefaultBasis(1024);
  CHECK(basis.k() == 3);
  CHECK(basis.m() == 1024);
  CHECK(basis.grid(0) == 0.0);
  CHECK(basis.grid(1023) == 1.0);
  CHECK(Eigen::FullPivLU<Eigen::MatrixXd>(basis.curves).rank() == 3);
  double largest = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      const double c = std::abs(CosineSimilarity(basis.curves.row(i), basis.curves.row(j)));
      CHECK(c < 1.0 - 1e-6);
      largest = std::max(largest, c);
    }
  }
  CHECK(largest >= 0.2);
  CHECK(MakeDefaultBasis(16).curves.allFinite());
  CHECK(MakeDefaultBasis(1024).curves == basis.curves);
  CHECK_THROWS_AS(MakeDefaultBasis(15), Error);
}

TEST_CASE("covariance square root reproduces singular matrices") {
  Eigen::MatrixXd v(3, 2);
  v << 1, 0, 1, 1, 0, 2;
  const Eigen::MatrixXd c = v * v.transpose();  // rank 2
  const Eigen::MatrixXd root = CovarianceSquareRoot(c);
  CHECK((root * root.transpose() - c).cwiseAbs().maxCoeff() < 1e-7);
  Eigen::MatrixXd indefinite(2, 2);
  indefinite << 1, 2, 2, 1;
  CHECK_THROWS_AS(CovarianceSquareRoot(indefinite), Error);
}

TEST_CASE("sub-seeds are distinct per stream and stable") {
  CHECK(SubSeed(1, "tree") != SubSeed(1, "weights"));
  CHECK(SubSeed(1, "tree") != SubSeed(2, "tree"));
  CHECK(SubSeed(1, "tree") == SubSeed(1, "tree"));
}

TEST_CASE("sample_weights: specific-only component is white noise") {
  const PhyloTree tree = RandomTree(3, 0.5, 0.5, 1);  // 5 nodes
  const Eigen::Index nodes = static_cast<Eigen::Index>(tree.size());
  constexpr int kSeeds = 2000;
  Eigen::MatrixXd draws(kSeeds, nodes);
  for (int s = 0; s < kSeeds; ++s) draws.row(s) = SampleWeights(tree, {kComponent2}, s).weights.col(0).transpose();
  const Moments m = SampleMoments(draws);
  for (Eigen::Index i = 0; i < nodes; ++i) {
    CHECK(std::abs(m.cov(i, i) - 1.0) < 0.07);
    CHECK(std::abs(m.mean(i)) < 3.0 / std::sqrt(double{kSeeds}));
    for (Eigen::Index j = i + 1; j < nodes; ++j) {
      CHECK(std::abs(m.cov(i, j) / std::sqrt(m.cov(i, i) * m.cov(j, j))) < 0.05);
    }
  }
}

TEST_CASE("sample_weights: inherited covariance follows the kernel") {
  const PhyloTree tree = ParseNewick("((A:3,B:1.5):2,C:4);");
  const NodeId a = *tree.find("A"), c = *tree.find("C");
  const double d = PatristicDistances(tree).entries(static_cast<Eigen::Index>(a.value), static_cast<Eigen::Index>(c.value));
  constexpr int kSeeds = 2000;
  Eigen::MatrixXd draws(kSeeds, 2);
  for (int s = 0; s < kSeeds; ++s) {
    const Eigen::MatrixXd w = SampleWeights(tree, {kComponent1}, 1000 + s).weights;
    draws(s, 0) = w(static_cast<Eigen::Index>(a.value), 0);
    draws(s, 1) = w(static_cast<Eigen::Index>(c.value), 0);
  }
  const Moments m = SampleMoments(draws);
  CHECK(std::abs(m.cov(0, 1) - 20.25 * std::exp(-d / 17.9)) < 3.0 * m.standard_error(0, 1));
  CHECK(std::abs(m.mean(0)) < 3.0 * std::sqrt(m.cov(0, 0) / kSeeds));
  CHECK(std::abs(m.mean(1)) < 3.0 * std::sqrt(m.cov(1, 1) / kSeeds));
}

TEST_CASE("joint sampling matches the covariance on a small tree") {
  const PhyloTree tree = ParseNewick("((A:0.7,B:0.2):0.4,C:1.1);");  // 5 nodes
  const Eigen::MatrixXd expected1 = BuildCovMatrix(kComponent1, PatristicDistances(tree), true).entries;
  const Eigen::MatrixXd expected3 = BuildCovMatrix(kComponent3, PatristicDistances(tree), true).entries;
  const auto nodes = static_cast<Eigen::Index>(tree.size());
  constexpr int kDraws = 100000;
  Eigen::MatrixXd draws1(kDraws, nodes), draws3(kDraws, nodes);
  for (int s = 0; s < kDraws; ++s) {
    const Eigen::MatrixXd w = SampleWeights(tree, {kComponent1, kComponent3}, s).weights;
    draws1.row(s) = w.col(0).transpose();
    draws3.row(s) = w.col(1).transpose();
  }
  const Moments m1 = SampleMoments(draws1);
  const Moments m3 = SampleMoments(draws3);
  for (Eigen::Index i = 0; i < nodes; ++i) {
    for (Eigen::Index j = 0; j < nodes; ++j) {
      CHECK(std::abs(m1.cov(i, j) - expected1(i, j)) < 4.0 * m1.standard_error(i, j));
      CHECK(std::abs(m3.cov(i, j) - expected3(i, j)) < 4.0 * m3.standard_error(i, j));
    }
    // Components are independent processes.
    const Eigen::VectorXd x = draws1.col(i).array() - m1.mean(i);
    const Eigen::VectorXd y = draws3.col(i).array() - m3.mean(i);
    const double cross = x.dot(y) / (kDraws - 1.0);
    const double se = std::sqrt(m1.cov(i, i) * m3.cov(i, i) / kDraws);
    CHECK(std::abs(cross) < 4.0 * se);
  }
}

TEST_CASE("sample_weights is deterministic and validates input") {
  const PhyloTree tree = RandomTree(10, 0.5, 0.5, 2);
  CHECK(SampleWeights(tree, PaperHyperParams(), 5).weights == SampleWeights(tree, PaperHyperParams(), 5).weights);
  CHECK(SampleWeights(tree, PaperHyperParams(), 5).weights != SampleWeights(tree, PaperHyperParams(), 6).weights);
  CHECK_THROWS_AS(SampleWeights(tree, {}, 5), Error);
}

TEST_CASE("assemble_traits follows the linear mixing model") {
  const PhyloTree tree = ParseNewick("((A:1,B:1):0.5,C:2);");
  const BasisSet basis = MakeDefaultBasis(32);
  WeightAssignment w{Eigen::MatrixXd::Zero(5, 3)};
  const auto a = static_cast<Eigen::Index>(tree.find("A")->value);
  const auto b = static_cast<Eigen::Index>(tree.find("B")->value);
  const auto c = static_cast<Eigen::Index>(tree.find("C")->value);
  w.weights.row(a) << 1, 0, 0;
  w.weights.row(b) << 0.3, -1.2, 2.5;
  w.weights.row(c) = 2.0 * w.weights.row(b);
  const TraitDataset data = AssembleTraits(tree, w, basis);
  CHECK(data.curves.row(a) == basis.curves.row(0));
  CHECK(data.curves.row(static_cast<Eigen::Index>(tree.root().value)).isZero(0.0));
  CHECK((data.curves.row(c) - 2.0 * data.curves.row(b)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(data.split[static_cast<std::size_t>(a)] == Split::kTrain);
  CHECK(data.split[tree.root().value] == Split::kValidate);
  CHECK(data.TrainCurves(tree).rows() == 3);

  WeightAssignment wrong{Eigen::MatrixXd::Zero(5, 2)};
  CHECK_THROWS_AS(AssembleTraits(tree, wrong, basis), Error);
}

TEST_CASE("default scenario shape and provenance") {
  const Scenario s = PaperScenario(3);
  CHECK(s.tree.size() == 255);
  CHECK(s.dataset.curves.rows() == 255);
  CHECK(s.dataset.curves.cols() == 1024);
  CHECK(std::count(s.dataset.split.begin(), s.dataset.split.end(), Split::kTrain) == 128);
  CHECK(std::count(s.dataset.split.begin(), s.dataset.split.end(), Split::kValidate) == 127);
  REQUIRE(s.dataset.params.size() == 3);
  CHECK(s.dataset.params[0] == kComponent1);
  CHECK(s.dataset.params[1] == kComponent2);
  CHECK(s.dataset.params[2] == kComponent3);
  CHECK(s.dataset.seed == 3);

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(s.dataset.curves);
  const Eigen::VectorXd sv = svd.singularValues();
  CHECK(sv(3) < 1e-10 * sv(0));  // rank <= 3

  const Scenario again = PaperScenario(3);
  CHECK(again.dataset.curves == s.dataset.curves);
  CHECK(SerializeNewick(again.tree) == SerializeNewick(s.tree));
}

TEST_CASE("file formats round trip exactly") {
  ScenarioConfig config;
  config.n_tips = 6;
  config.grid_size = 20;
  const Scenario s = SimulateScenario(8, config);

  const BasisSet basis = BasisFromCsv(BasisToCsv(s.basis));
  CHECK(basis.curves == s.basis.curves);
  CHECK(basis.grid == s.basis.grid);

  const std::vector<NodeId> all = s.tree.all_nodes();
  CHECK(WeightsFromCsv(s.tree, WeightsToCsv(s.tree, s.weights.weights, all), all) == s.weights.weights);
  const std::vector<NodeId> reversed(all.rbegin(), all.rend());
  const Eigen::MatrixXd back = WeightsFromCsv(s.tree, WeightsToCsv(s.tree, s.weights.weights, all), reversed);
  CHECK(back.row(0) == s.weights.weights.row(static_cast<Eigen::Index>(all.size()) - 1));

  const std::string traits = TraitsToCsv(s.tree, s.dataset);
  CHECK(traits.find("t1,TRAIN,") != std::string::npos);
  const TraitDataset parsed = TraitsFromCsv(s.tree, traits);
  CHECK(parsed.curves == s.dataset.curves);
  CHECK(parsed.split == s.dataset.split);
  CHECK(parsed.grid == s.dataset.grid);

  std::vector<std::string> names;
  const Eigen::MatrixXd train = TrainCurvesFromCsv(traits, &names);
  CHECK(train == s.dataset.TrainCurves(s.tree));
  CHECK(names.size() == 6);

  const nlohmann::json sidecar = TraitsSidecar(s.dataset);
  CHECK(sidecar["seed"] == 8);
  CHECK(sidecar["params"].size() == 3);
  CHECK(sidecar["params"][1]["lambda"].is_null());

  CHECK_THROWS_AS(TraitsFromCsv(s.tree, "node,split,0,1\nzz,TRAIN,1,2\n"), Error);
}
