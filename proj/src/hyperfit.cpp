#include "phylofunc/hyperfit.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

#include "phylofunc/csv.hpp"

namespace phylofunc {

FreeParam ParseFreeParam(const std::string& name) {
  if (name == "sigma_f") return FreeParam::kSigmaF;
  if (name == "sigma_n") return FreeParam::kSigmaN;
  if (name == "lambda") return FreeParam::kLambda;
  throw InvalidInput("free parameter must be sigma_f, sigma_n or lambda, got '" + name + "'");
}

std::string ToString(FreeParam param) {
  switch (param) {
    case FreeParam::kSigmaF:
      return "sigma_f";
    case FreeParam::kSigmaN:
      return "sigma_n";
    case FreeParam::kLambda:
      return "lambda";
  }
  return "";
}

double LogMarginalLikelihood(const Eigen::MatrixXd& tip_distances, const Eigen::VectorXd& tip_weights,
                             const OUHyperParams& params) {
  params.Validate();
  const Eigen::Index n = tip_weights.size();
  if (tip_distances.rows() != n || tip_distances.cols() != n) {
    throw InvalidInput("tip weights do not match the tip distance matrix");
  }
  Eigen::MatrixXd k = CrossCovariance(params, tip_distances);
  k.diagonal().array() += params.sigma_n * params.sigma_n;
  const JitteredCholesky chol(k);
  const double quad = tip_weights.dot(chol.solve(tip_weights));
  return -0.5 * quad - 0.5 * chol.log_determinant() -
         0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

double LogMarginalLikelihood(const PhyloTree& tree, const Eigen::VectorXd& tip_weights, const OUHyperParams& params) {
  if (tip_weights.size() != static_cast<Eigen::Index>(tree.tips().size())) {
    throw InvalidInput("one weight per tip is required");
  }
  const auto& tips = tree.tips();
  return LogMarginalLikelihood(PatristicDistances(tree, std::span<const NodeId>(tips)).entries, tip_weights, params);
}

std::pair<double, double> DefaultBounds(const PhyloTree& tree, FreeParam param) {
  if (param != FreeParam::kLambda) return {1e-4, 100.0};
  const double mean = TipDistanceSummary(tree).mean;
  if (!(mean > 0.0)) throw InvalidInput("tree has no positive tip-to-tip distance");
  return {1e-3 * mean, 100.0 * mean};
}

namespace {

using Objective = std::function<double(double)>;

double SafeEvaluate(const Objective& f, double x) {
  try {
    const double value = f(x);
    return std::isfinite(value) ? value : -std::numeric_limits<double>::infinity();
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kNumerical) throw;
    return -std::numeric_limits<double>::infinity();
  }
}

MLEResult Maximise(const Objective& f, const std::string& name, std::pair<double, double> bounds,
                   const ProfileOptions& options) {
  const auto [lo, hi] = bounds;
  if (!(lo > 0.0) || !(hi > lo) || !std::isfinite(hi)) {
    throw InvalidInput("search bounds must satisfy 0 < lower < upper");
  }
  if (options.grid_points < 3) throw InvalidInput("profile scan needs at least 3 points");

  MLEResult result;
  result.parameter_name = name;
  result.bounds = bounds;
  LikelihoodProfile& profile = result.profile;
  profile.parameter_name = name;
  const double log_lo = std::log(lo), log_hi = std::log(hi);
  const int points = options.grid_points;
  for (int i = 0; i < points; ++i) {
    const double x = i == 0 ? lo : i == points - 1 ? hi : std::exp(log_lo + (log_hi - log_lo) * i / (points - 1));
    profile.grid.push_back(x);
    profile.log_likelihoods.push_back(SafeEvaluate(f, x));
  }

  const auto best_it = std::max_element(profile.log_likelihoods.begin(), profile.log_likelihoods.end());
  if (!std::isfinite(*best_it)) throw NumericalFailure("likelihood could not be evaluated anywhere in the bounds");
  double finite_min = std::numeric_limits<double>::infinity();
  for (const double v : profile.log_likelihoods) {
    if (std::isfinite(v)) finite_min = std::min(finite_min, v);
  }
  const auto j = static_cast<std::size_t>(best_it - profile.log_likelihoods.begin());
  profile.argmax = profile.grid[j];
  if (*best_it - finite_min < 1e-10) {
    throw NonIdentifiableError(name + " is not identifiable: the likelihood is flat over [" +
                                   csv::FormatDouble(lo) + ", " + csv::FormatDouble(hi) + "]",
                               profile);
  }

  const std::size_t left = j == 0 ? 0 : j - 1;
  const std::size_t right = std::min(j + 1, profile.grid.size() - 1);
  result.bracket = {profile.grid[left], profile.grid[right]};

  // Golden-section search on log(x).
  double best_x = profile.grid[j];
  double best_f = *best_it;
  const auto consider = [&](double x, double value) {
    if (value > best_f) {
      best_f = value;
      best_x = x;
    }
  };
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = std::log(profile.grid[left]);
  double b = std::log(profile.grid[right]);
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = SafeEvaluate(f, std::exp(c));
  double fd = SafeEvaluate(f, std::exp(d));
  consider(std::exp(c), fc);
  consider(std::exp(d), fd);
  int iterations = 0;
  while (b - a > options.relative_width && iterations < options.max_iterations) {
    ++iterations;
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = SafeEvaluate(f, std::exp(c));
      consider(std::exp(c), fc);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = SafeEvaluate(f, std::exp(d));
      consider(std::exp(d), fd);
    }
  }
  // Interval endpoints can hold the optimum when it sits on a bound.
  for (const double edge : {a, b}) {
    const double x = std::clamp(std::exp(edge), lo, hi);
    consider(x, SafeEvaluate(f, x));
  }

  result.estimate = best_x;
  result.log_likelihood_at_estimate = best_f;
  result.iterations = iterations;
  const double edge_tolerance = 10.0 * options.relative_width;
  result.at_lower_bound = std::log(best_x) - log_lo <= edge_tolerance;
  result.at_upper_bound = log_hi - std::log(best_x) <= edge_tolerance;
  return result;
}

void SetParam(OUHyperParams& params, FreeParam which, double value) {
  switch (which) {
    case FreeParam::kSigmaF:
      params.sigma_f = value;
      break;
    case FreeParam::kSigmaN:
      params.sigma_n = value;
      break;
    case FreeParam::kLambda:
      params.lambda = value;
      break;
  }
}

Eigen::MatrixXd TipDistances(const PhyloTree& tree, const Eigen::VectorXd& tip_weights) {
  const auto& tips = tree.tips();
  if (tip_weights.size() != static_cast<Eigen::Index>(tips.size())) {
    throw InvalidInput("one weight per tip is required");
  }
  return PatristicDistances(tree, std::span<const NodeId>(tips)).entries;
}

}  // namespace

MLEResult ProfileMle(const PhyloTree& tree, const Eigen::VectorXd& tip_weights, FreeParam free_param,
                     const OUHyperParams& fixed, std::pair<double, double> bounds, const ProfileOptions& options) {
  const Eigen::MatrixXd distances = TipDistances(tree, tip_weights);
  OUHyperParams base = fixed;
  // The free entry may be unset in `fixed`; give it a valid placeholder.
  SetParam(base, free_param, bounds.first > 0.0 ? bounds.first : 1.0);
  if (free_param == FreeParam::kSigmaF && !base.lambda) {
    throw InvalidInput("lambda must be fixed when profiling sigma_f");
  }
  base.Validate();
  const Objective f = [&](double x) {
    OUHyperParams p = base;
    SetParam(p, free_param, x);
    return LogMarginalLikelihood(distances, tip_weights, p);
  };
  MLEResult result = Maximise(f, ToString(free_param), bounds, options);
  result.fixed_params = base;
  SetParam(result.fixed_params, free_param, result.estimate);
  return result;
}

MLEResult RatioMle(const PhyloTree& tree, const Eigen::VectorXd& tip_weights, double lambda_known, double ratio,
                   std::pair<double, double> bounds, const ProfileOptions& options) {
  if (!(ratio > 0.0)) throw InvalidInput("ratio sigma_n / sigma_f must be positive");
  if (!(lambda_known > 0.0)) throw InvalidInput("lambda must be positive");
  const Eigen::MatrixXd distances = TipDistances(tree, tip_weights);
  const Objective f = [&](double sigma_f) {
    return LogMarginalLikelihood(distances, tip_weights, OUHyperParams{sigma_f, lambda_known, ratio * sigma_f});
  };
  MLEResult result = Maximise(f, "sigma_f", bounds, options);
  result.fixed_params = OUHyperParams{result.estimate, lambda_known, ratio * result.estimate};
  return result;
}

double RatioClosedFormSigmaF(const PhyloTree& tree, const Eigen::VectorXd& tip_weights, double lambda_known,
                             double ratio) {
  const Eigen::MatrixXd distances = TipDistances(tree, tip_weights);
  Eigen::MatrixXd m = CrossCovariance(OUHyperParams{1.0, lambda_known, 0.0}, distances);
  m.diagonal().array() += ratio * ratio;
  const JitteredCholesky chol(m);
  return std::sqrt(tip_weights.dot(chol.solve(tip_weights)) / static_cast<double>(tip_weights.size()));
}

std::string ProfileToCsv(const LikelihoodProfile& profile) {
  std::string out = profile.parameter_name + ",log_likelihood\n";
  for (std::size_t i = 0; i < profile.grid.size(); ++i) {
    out += csv::FormatDouble(profile.grid[i]) + "," + csv::FormatDouble(profile.log_likelihoods[i]) + "\n";
  }
  return out;
}

nlohmann::json ToJson(const MLEResult& result) {
  nlohmann::json j;
  j["parameter"] = result.parameter_name;
  j["estimate"] = result.estimate;
  j["log_likelihood"] = result.log_likelihood_at_estimate;
  j["params_at_estimate"] = ToJson(result.fixed_params);
  j["iterations"] = result.iterations;
  j["bracket"] = {result.bracket.first, result.bracket.second};
  j["bounds"] = {result.bounds.first, result.bounds.second};
  j["at_lower_bound"] = result.at_lower_bound;
  j["at_upper_bound"] = result.at_upper_bound;
  j["profile_argmax"] = result.profile.argmax;
  return j;
}

}  // namespace phylofunc
