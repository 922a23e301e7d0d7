#include <cmath>
#include <numbers>
#include <random>

#include <doctest.h>

#include "oracles.hpp"
#include "phylofunc/hyperfit.hpp"
#include "phylofunc/trait_sim.hpp"

using namespace phylofunc;

namespace {

const OUHyperParams kComponent1{4.5, 17.9, 0.45};
const OUHyperParams kComponent2{0.0, std::nullopt, 1.0};

Eigen::VectorXd RandomVector(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 2.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

// Tip weights of one component drawn from its own OU prior.
Eigen::VectorXd SimulatedTipWeights(const PhyloTree& tree, const OUHyperParams& p, std::uint64_t seed) {
  const Eigen::MatrixXd w = SampleWeights(tree, {p}, seed).weights;
  Eigen::VectorXd y(static_cast<Eigen::Index>(tree.tips().size()));
  for (std::size_t i = 0; i < tree.tips().size(); ++i) y(static_cast<Eigen::Index>(i)) = w(static_cast<Eigen::Index>(tree.tips()[i].value), 0);
  return y;
}

}  // namespace

TEST_CASE("free parameter names") {
  CHECK(ParseFreeParam("lambda") == FreeParam::kLambda);
  CHECK(ToString(FreeParam::kSigmaN) == "sigma_n");
  CHECK_THROWS_AS(ParseFreeParam("mu"), Error);
}

TEST_CASE("log marginal likelihood of a single tip") {
  const PhyloTree tree = ParseNewick("(A:1)R;");
  const double v = 20.4525;
  Eigen::VectorXd y(1);
  y << 0.0;
  CHECK(LogMarginalLikelihood(tree, y, kComponent1) == doctest::Approx(-0.5 * std::log(2 * std::numbers::pi * v)).epsilon(1e-14));
  CHECK(LogMarginalLikelihood(tree, y, kComponent1) == doctest::Approx(-2.4279910954075308).epsilon(1e-14));
  y << std::sqrt(v);
  CHECK(LogMarginalLikelihood(tree, y, kComponent1) == doctest::Approx(-2.9279910954075308).epsilon(1e-14));
}

TEST_CASE("factorized likelihood equals the dense determinant and inverse") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> sigma(0.0, 4.0), length(0.1, 10.0);
  for (int c = 0; c < 500; ++c) {
    const PhyloTree tree = RandomTree(2 + c % 5, 0.5, 0.5, c);
    const OUHyperParams p{sigma(rng), length(rng), 0.1 + sigma(rng)};
    const Eigen::VectorXd y = RandomVector(static_cast<Eigen::Index>(tree.tips().size()), rng);
    REQUIRE(std::abs(LogMarginalLikelihood(tree, y, p) - oracle::DenseLogLikelihood(tree, y, p)) < 1e-9);
  }
}

TEST_CASE("likelihood is invariant under tip order") {
  const PhyloTree tree = RandomTree(8, 0.5, 0.5, 3);
  std::mt19937_64 rng(4);
  const Eigen::VectorXd y = RandomVector(8, rng);
  const std::vector<NodeId> tips = tree.tips();
  Eigen::MatrixXd d = PatristicDistances(tree, std::span<const NodeId>(tips)).entries;
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(8);
  perm.setIdentity();
  std::shuffle(perm.indices().data(), perm.indices().data() + 8, rng);
  const Eigen::MatrixXd dp = perm * d * perm.transpose();
  const Eigen::VectorXd yp = perm * y;
  CHECK(LogMarginalLikelihood(dp, yp, kComponent1) == doctest::Approx(LogMarginalLikelihood(d, y, kComponent1)).epsilon(1e-12));
}

TEST_CASE("default bounds") {
  const PhyloTree tree = ParseNewick("(A:1,B:2);");
  CHECK(DefaultBounds(tree, FreeParam::kSigmaF) == std::pair{1e-4, 100.0});
  const auto [lo, hi] = DefaultBounds(tree, FreeParam::kLambda);
  CHECK(lo == doctest::Approx(3e-3));
  CHECK(hi == doctest::Approx(300.0));
}

TEST_CASE("profile refinement is consistent with the scan") {
  const PhyloTree tree = RandomTree(64, 0.5, 0.5, 10);
  const Eigen::VectorXd y = SimulatedTipWeights(tree, kComponent1, 10);
  for (const FreeParam free : {FreeParam::kSigmaF, FreeParam::kSigmaN, FreeParam::kLambda}) {
    const auto bounds = DefaultBounds(tree, free);
    const MLEResult mle = ProfileMle(tree, y, free, kComponent1, bounds);
    const auto& grid = mle.profile.grid;
    REQUIRE(grid.size() == 64);
    for (std::size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] > grid[i - 1]);
    CHECK(mle.estimate >= bounds.first);
    CHECK(mle.estimate <= bounds.second);
    // Within one grid cell of the scan argmax.
    const double cell = std::log(grid[1] / grid[0]);
    CHECK(std::abs(std::log(mle.estimate / mle.profile.argmax)) <= cell * (1 + 1e-9));
    const double max_scan = *std::max_element(mle.profile.log_likelihoods.begin(), mle.profile.log_likelihoods.end());
    CHECK(mle.log_likelihood_at_estimate >= max_scan);
    OUHyperParams at = kComponent1;
    if (free == FreeParam::kSigmaF) at.sigma_f = mle.bracket.first;
    if (free == FreeParam::kSigmaN) at.sigma_n = mle.bracket.first;
    if (free == FreeParam::kLambda) at.lambda = mle.bracket.first;
    CHECK(mle.log_likelihood_at_estimate >= LogMarginalLikelihood(tree, y, at));
    CHECK(mle.fixed_params.lambda.has_value());

    const std::string csv = ProfileToCsv(mle.profile);
    CHECK(csv.substr(0, csv.find('\n')) == ToString(free) + ",log_likelihood");
    const auto j = ToJson(mle);
    CHECK(j["parameter"] == ToString(free));
    CHECK(j.contains("at_lower_bound"));
  }
}

TEST_CASE("lambda is non-identifiable without inherited variation") {
  const PhyloTree tree = RandomTree(32, 0.5, 0.5, 5);
  const Eigen::VectorXd y = SimulatedTipWeights(tree, kComponent2, 5);
  try {
    ProfileMle(tree, y, FreeParam::kLambda, kComponent2, DefaultBounds(tree, FreeParam::kLambda));
    FAIL("expected NonIdentifiableError");
  } catch (const NonIdentifiableError& e) {
    CHECK(e.kind() == ErrorKind::kNonIdentifiable);
    CHECK(e.profile().grid.size() == 64);
  }
}

TEST_CASE("sigma_f estimate is small when there is no inherited signal") {
  const PhyloTree tree = RandomTree(128, 0.5, 0.5, 6);
  const Eigen::VectorXd y = SimulatedTipWeights(tree, kComponent2, 6);
  const OUHyperParams fixed{1.0, TipDistanceSummary(tree).mean, 1.0};
  const MLEResult mle = ProfileMle(tree, y, FreeParam::kSigmaF, fixed, DefaultBounds(tree, FreeParam::kSigmaF));
  CHECK(mle.estimate <= 0.5);
}

TEST_CASE("ratio MLE equals the closed-form scale") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const PhyloTree tree = RandomTree(40, 0.5, 0.5, seed);
    const Eigen::VectorXd y = SimulatedTipWeights(tree, kComponent1, seed);
    const MLEResult mle = RatioMle(tree, y, 17.9, 0.1, {1e-4, 100.0});
    const double closed = RatioClosedFormSigmaF(tree, y, 17.9, 0.1);
    CHECK(std::abs(mle.estimate - closed) <= 1e-6 * closed);
    CHECK(mle.fixed_params.sigma_n == doctest::Approx(0.1 * mle.estimate));
    CHECK_FALSE(mle.on_boundary());
  }
}

TEST_CASE("all-zero data drive the scale to its lower bound") {
  const PhyloTree tree = RandomTree(16, 0.5, 0.5, 1);
  const MLEResult mle = RatioMle(tree, Eigen::VectorXd::Zero(16), 17.9, 0.1, {1e-4, 100.0});
  CHECK(mle.at_lower_bound);
  CHECK(mle.estimate == doctest::Approx(1e-4));
}

TEST_CASE("invalid estimation inputs") {
  const PhyloTree tree = RandomTree(8, 0.5, 0.5, 1);
  const Eigen::VectorXd y = Eigen::VectorXd::Ones(8);
  CHECK_THROWS_AS(RatioMle(tree, y, 17.9, 0.0, {1e-4, 100.0}), Error);
  CHECK_THROWS_AS(ProfileMle(tree, y, FreeParam::kSigmaF, kComponent1, {1.0, 0.5}), Error);
  CHECK_THROWS_AS(ProfileMle(tree, Eigen::VectorXd::Ones(3), FreeParam::kSigmaF, kComponent1, {1e-4, 100.0}), Error);
  CHECK_THROWS_AS(ProfileMle(tree, y, FreeParam::kSigmaF, kComponent2, {1e-4, 100.0}), Error);
}
